//! Morlet band-pass and Gaussian low-pass filters sampled on the periodic
//! Fourier grid.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::Fft2d;
use super::ScatterError;

/// Shape parameters of the mother wavelet and the low-pass window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MorletParams {
    /// Centre frequency (radians/sample) of the finest wavelet.
    pub xi0: f64,
    /// Gaussian width of the finest wavelet, in samples.
    pub sigma0: f64,
    /// Ratio of along- to across-orientation bandwidth; `None` means `4/L`.
    pub slant: Option<f64>,
    /// Low-pass width is `sigma_phi0 · 2^(J-1)`.
    pub sigma_phi0: f64,
}

impl Default for MorletParams {
    fn default() -> Self {
        Self {
            xi0: 3.0 * PI / 4.0,
            sigma0: 0.8,
            slant: None,
            sigma_phi0: 0.8,
        }
    }
}

/// Frame bounds of a filter bank: extrema of the Littlewood-Paley sum over
/// the frequency grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameBounds {
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug)]
pub struct FilterBank {
    j: usize,
    l: usize,
    height: usize,
    width: usize,
    params: MorletParams,
    /// `psi_hat[j * L + q]`, real-valued in frequency.
    psi_hat: Vec<Vec<f64>>,
    phi_hat: Vec<f64>,
    fft: Fft2d,
}

/// Signed angular frequency of DFT index `k` on an `n`-point grid, in `[-π, π)`.
fn freq(k: usize, n: usize) -> f64 {
    let k = if 2 * k >= n { k as f64 - n as f64 } else { k as f64 };
    2.0 * PI * k / n as f64
}

/// Anisotropic Gaussian `exp(-σ²/2 · (⟨ω,e₁⟩² + ⟨ω,e₂⟩²/s²))`.
fn gauss(w1: f64, w2: f64, sigma: f64, theta: f64, slant: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let a = c * w1 + s * w2;
    let b = -s * w1 + c * w2;
    (-0.5 * sigma * sigma * (a * a + b * b / (slant * slant))).exp()
}

const ALIASES: i32 = 2;

/// Sum of `f` over the 2π-periodic aliases of `(w1, w2)`.
fn periodize(w1: f64, w2: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for m1 in -ALIASES..=ALIASES {
        for m2 in -ALIASES..=ALIASES {
            acc += f(w1 + 2.0 * PI * m1 as f64, w2 + 2.0 * PI * m2 as f64);
        }
    }
    acc
}

fn morlet_hat(h: usize, w: usize, sigma: f64, theta: f64, xi: f64, slant: f64) -> Vec<f64> {
    let (c1, c2) = (xi * theta.cos(), xi * theta.sin());
    let gabor = |w1: f64, w2: f64| gauss(w1 - c1, w2 - c2, sigma, theta, slant);
    let env = |w1: f64, w2: f64| gauss(w1, w2, sigma, theta, slant);
    // correction weight chosen on the periodized grid so the DC term vanishes
    let k = periodize(0.0, 0.0, gabor) / periodize(0.0, 0.0, env);
    let mut out = vec![0.0; h * w];
    for ky in 0..h {
        let w1 = freq(ky, h);
        for kx in 0..w {
            let w2 = freq(kx, w);
            out[ky * w + kx] = periodize(w1, w2, gabor) - k * periodize(w1, w2, env);
        }
    }
    out[0] = 0.0;
    out
}

fn gaussian_hat(h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for ky in 0..h {
        let w1 = freq(ky, h);
        for kx in 0..w {
            let w2 = freq(kx, w);
            out[ky * w + kx] = periodize(w1, w2, |a, b| (-0.5 * sigma * sigma * (a * a + b * b)).exp());
        }
    }
    out
}

impl FilterBank {
    /// Builds `J·L` Morlet wavelets (scale `2^j`, angle `qπ/L`) and one
    /// Gaussian low-pass, then rescales the bank so its Littlewood-Paley sum
    /// peaks at exactly 1.
    pub fn new(j: usize, l: usize, height: usize, width: usize) -> Result<Self, ScatterError> {
        Self::with_params(j, l, height, width, MorletParams::default())
    }

    pub fn with_params(
        j: usize,
        l: usize,
        height: usize,
        width: usize,
        params: MorletParams,
    ) -> Result<Self, ScatterError> {
        if j == 0 || l == 0 {
            return Err(ScatterError::InvalidParams(format!(
                "J and L must be at least 1 (got J={j}, L={l})"
            )));
        }
        let factor = 1usize << j;
        if height == 0 || width == 0 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
            return Err(ScatterError::NotDivisible { height, width, factor });
        }
        let slant = params.slant.unwrap_or(4.0 / l as f64);
        if !(slant > 0.0 && params.sigma0 > 0.0 && params.sigma_phi0 > 0.0) {
            return Err(ScatterError::InvalidParams("slant and widths must be positive".into()));
        }
        let mut psi_hat = Vec::with_capacity(j * l);
        for scale in 0..j {
            let dil = (1u64 << scale) as f64;
            for q in 0..l {
                let theta = q as f64 * PI / l as f64;
                psi_hat.push(morlet_hat(
                    height,
                    width,
                    params.sigma0 * dil,
                    theta,
                    params.xi0 / dil,
                    slant,
                ));
            }
        }
        let sigma_phi = params.sigma_phi0 * (1u64 << (j - 1)) as f64;
        let phi_hat = gaussian_hat(height, width, sigma_phi);
        let mut bank = Self {
            j,
            l,
            height,
            width,
            params,
            psi_hat,
            phi_hat,
            fft: Fft2d::new(height, width),
        };
        let peak = bank.littlewood_paley().max;
        bank.scale(1.0 / peak.sqrt());
        Ok(bank)
    }

    /// Multiplies every filter by `factor`.
    pub fn scale(&mut self, factor: f64) {
        for f in self.psi_hat.iter_mut().chain(std::iter::once(&mut self.phi_hat)) {
            f.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> &MorletParams {
        &self.params
    }

    /// Spatial subsampling factor `2^J` of the output maps.
    pub fn stride(&self) -> usize {
        1 << self.j
    }

    pub fn psi(&self, j: usize, q: usize) -> &[f64] {
        &self.psi_hat[j * self.l + q]
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi_hat
    }

    pub fn bandpass_count(&self) -> usize {
        self.psi_hat.len()
    }

    pub(crate) fn fft(&self) -> &Fft2d {
        &self.fft
    }

    /// Response of the low-pass filter to a constant image.
    pub fn lowpass_dc_gain(&self) -> f64 {
        self.phi_hat[0]
    }

    /// Littlewood-Paley sum `|φ̂(ω)|² + Σ (|ψ̂(ω)|² + |ψ̂(−ω)|²)/2` on the grid.
    pub fn littlewood_paley_sum(&self) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut lp: Vec<f64> = self.phi_hat.iter().map(|v| v * v).collect();
        for f in &self.psi_hat {
            for ky in 0..h {
                let ny = (h - ky) % h;
                for kx in 0..w {
                    let nx = (w - kx) % w;
                    let a = f[ky * w + kx];
                    let b = f[ny * w + nx];
                    lp[ky * w + kx] += 0.5 * (a * a + b * b);
                }
            }
        }
        lp
    }

    pub fn littlewood_paley(&self) -> FrameBounds {
        let lp = self.littlewood_paley_sum();
        FrameBounds {
            min: lp.iter().copied().fold(f64::INFINITY, f64::min),
            max: lp.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Spatial-domain impulse response of a frequency-domain filter.
    pub fn to_spatial(&self, filter_hat: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = filter_hat.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.inverse(&mut buf);
        buf
    }
}

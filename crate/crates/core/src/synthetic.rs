//! Spectral response projection to four-channel images, and a seeded
//! generator of paired scenes with skin masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{hsi_wavelengths, CubeError, MsiImage, SkinMask, SpectralCube, HSI_BANDS, MSI_BANDS};
use crate::stack::BandStack;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("scene size {0} must be a positive multiple of 4")]
    InvalidSize(usize),
    #[error(transparent)]
    Cube(#[from] CubeError),
}

/// Gaussian channel responses, each normalized to unit sum over the bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResponse {
    /// R, G, B, NIR centers in nm.
    pub centers: [f64; MSI_BANDS],
    pub sigma: f64,
}

impl Default for SpectralResponse {
    fn default() -> Self {
        Self {
            centers: [620.0, 540.0, 460.0, 850.0],
            sigma: 40.0,
        }
    }
}

impl SpectralResponse {
    pub fn weights(&self) -> [[f64; HSI_BANDS]; MSI_BANDS] {
        let lambda = hsi_wavelengths();
        let mut w = [[0.0; HSI_BANDS]; MSI_BANDS];
        for (c, row) in w.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                let d = (lambda[b] - self.centers[c]) / self.sigma;
                *v = (-0.5 * d * d).exp();
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        w
    }

    /// Linear projection of any 61-band stack.
    pub fn project_stack(&self, stack: &BandStack) -> Result<BandStack, CubeError> {
        if stack.bands() != HSI_BANDS {
            return Err(CubeError::BandCount {
                expected: HSI_BANDS,
                got: stack.bands(),
            });
        }
        let w = self.weights();
        let mut out = BandStack::zeros(MSI_BANDS, stack.height(), stack.width());
        for (c, row) in w.iter().enumerate() {
            let dst = out.plane_mut(c);
            for (b, &wb) in row.iter().enumerate() {
                for (d, s) in dst.iter_mut().zip(stack.plane(b)) {
                    *d += wb * s;
                }
            }
        }
        Ok(out)
    }

    pub fn project(&self, cube: &SpectralCube) -> MsiImage {
        let stack = self.project_stack(cube.stack()).expect("cube has 61 bands");
        MsiImage::new(stack, self.centers).expect("finite projection")
    }
}

/// Projects with the default responses (620/540/460/850 nm, σ = 40 nm).
pub fn msi_from_cube(cube: &SpectralCube) -> MsiImage {
    SpectralResponse::default().project(cube)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    /// Seeds the skin and background basis spectra shared by every scene.
    pub family_seed: u64,
    /// Standard deviation of the per-pixel additive noise.
    pub noise: f64,
    /// Range of the target ellipse area as a fraction of the image.
    pub skin_fraction: (f64, f64),
    pub response: SpectralResponse,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            family_seed: 0x5ca7_5bec,
            noise: 0.005,
            skin_fraction: (0.25, 0.5),
            response: SpectralResponse::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub cube: SpectralCube,
    pub msi: MsiImage,
    pub mask: SkinMask,
    pub seed: u64,
}

/// Baseline plus up to five Gaussian bumps, sampled at the cube bands.
fn smooth_spectrum(rng: &mut ChaCha8Rng, base: (f64, f64), amp: (f64, f64), slope: (f64, f64)) -> Vec<f64> {
    let lambda = hsi_wavelengths();
    let b = rng.gen_range(base.0..base.1);
    let t = rng.gen_range(slope.0..slope.1);
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=5))
        .map(|_| {
            (
                rng.gen_range(400.0..1000.0),
                rng.gen_range(40.0..160.0),
                rng.gen_range(amp.0..amp.1),
            )
        })
        .collect();
    lambda
        .iter()
        .map(|&l| {
            let s: f64 = bumps
                .iter()
                .map(|&(c, w, a)| a * (-0.5 * ((l - c) / w).powi(2)).exp())
                .sum();
            (b + t * (l - 400.0) / 600.0 + s).clamp(0.02, 0.95)
        })
        .collect()
}

fn families(seed: u64) -> ([Vec<f64>; 3], [Vec<f64>; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skin = std::array::from_fn(|_| smooth_spectrum(&mut rng, (0.12, 0.3), (-0.08, 0.3), (0.1, 0.35)));
    let bg = std::array::from_fn(|_| smooth_spectrum(&mut rng, (0.05, 0.6), (-0.25, 0.25), (-0.2, 0.2)));
    (skin, bg)
}

/// Three smooth fields turned into per-pixel convex weights.
fn mixing_weights(rng: &mut ChaCha8Rng, size: usize) -> Vec<[f64; 3]> {
    let waves: Vec<[(f64, f64, f64, f64); 3]> = (0..3)
        .map(|_| {
            std::array::from_fn(|_| {
                (
                    rng.gen_range(0.5..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.5..1.5),
                )
            })
        })
        .collect();
    let s = size as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let f: [f64; 3] = std::array::from_fn(|k| {
                waves[k]
                    .iter()
                    .map(|&(fx, fy, ph, a)| {
                        a * (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) / s + ph).sin()
                    })
                    .sum()
            });
            let m = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e = f.map(|v| (v - m).exp());
            let z: f64 = e.iter().sum();
            out.push(e.map(|v| v / z));
        }
    }
    out
}

/// One scene from its own seed. `size` must be a positive multiple of 4.
pub fn gen_scene(size: usize, seed: u64, params: &SyntheticParams) -> Result<SyntheticScene, SyntheticError> {
    if size == 0 || !size.is_multiple_of(4) {
        return Err(SyntheticError::InvalidSize(size));
    }
    let (skin, bg) = families(params.family_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;

    let frac = rng.gen_range(params.skin_fraction.0..params.skin_fraction.1);
    let aspect: f64 = rng.gen_range(0.7..1.4);
    let a = (frac * s * s / (std::f64::consts::PI * aspect)).sqrt();
    let b = aspect * a;
    let (cy, cx) = (rng.gen_range(0.4..0.6) * s, rng.gen_range(0.4..0.6) * s);
    let rot: f64 = rng.gen_range(0.0..std::f64::consts::PI);
    let (sin, cos) = rot.sin_cos();
    let gain = rng.gen_range(0.85..1.05);

    let skin_w = mixing_weights(&mut rng, size);
    let bg_w = mixing_weights(&mut rng, size);
    let noise = Normal::new(0.0, params.noise).expect("valid noise level");

    let mut mask = Vec::with_capacity(size * size);
    let mut stack = BandStack::zeros(HSI_BANDS, size, size);
    let n = size * size;
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            let u = cos * dx + sin * dy;
            let v = -sin * dx + cos * dy;
            let inside = (u / a).powi(2) + (v / b).powi(2) <= 1.0;
            mask.push(inside);
            let i = y * size + x;
            let (basis, w) = if inside { (&skin, skin_w[i]) } else { (&bg, bg_w[i]) };
            let e = noise.sample(&mut rng);
            let data = stack.data_mut();
            for band in 0..HSI_BANDS {
                let r = w[0] * basis[0][band] + w[1] * basis[1][band] + w[2] * basis[2][band];
                data[band * n + i] = (gain * r + e).clamp(0.0, 1.0);
            }
        }
    }
    let cube = SpectralCube::new(stack)?;
    let msi = params.response.project(&cube);
    Ok(SyntheticScene {
        cube,
        msi,
        mask: SkinMask::new(size, size, mask)?,
        seed,
    })
}

/// `count` scenes; scene `i` is generated from `seed + i`.
pub fn gen_synthetic(count: usize, size: usize, seed: u64) -> Result<Vec<SyntheticScene>, SyntheticError> {
    gen_synthetic_with(count, size, seed, &SyntheticParams::default())
}

pub fn gen_synthetic_with(
    count: usize,
    size: usize,
    seed: u64,
    params: &SyntheticParams,
) -> Result<Vec<SyntheticScene>, SyntheticError> {
    if size == 0 || !size.is_multiple_of(4) {
        return Err(SyntheticError::InvalidSize(size));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| gen_scene(size, seed.wrapping_add(i), params))
        .collect()
}

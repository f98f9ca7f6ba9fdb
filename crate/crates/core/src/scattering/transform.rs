use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::filters::FilterBank;
use super::ScatterError;
use crate::stack::BandStack;

/// One scattering path. Scales and orientations are zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Path {
    Order0,
    Order1 { j: usize, q: usize },
    Order2 { j1: usize, q1: usize, j2: usize, q2: usize },
}

impl Path {
    pub fn order(&self) -> usize {
        match self {
            Path::Order0 => 0,
            Path::Order1 { .. } => 1,
            Path::Order2 { .. } => 2,
        }
    }
}

/// Number of paths per input channel: `1 + J·L + L²·J(J−1)/2`.
pub fn path_count(j: usize, l: usize) -> usize {
    1 + j * l + l * l * j * (j.saturating_sub(1)) / 2
}

/// Paths in output order: order 0, then order 1 by `(j, q)`, then order 2 by
/// `(j1, q1, j2, q2)` with `j1 < j2`.
pub fn paths(j: usize, l: usize) -> Vec<Path> {
    let mut out = vec![Path::Order0];
    for j1 in 0..j {
        for q in 0..l {
            out.push(Path::Order1 { j: j1, q });
        }
    }
    for j1 in 0..j {
        for q1 in 0..l {
            for j2 in j1 + 1..j {
                for q2 in 0..l {
                    out.push(Path::Order2 { j1, q1, j2, q2 });
                }
            }
        }
    }
    out
}

/// Scattering coefficient maps, channel-major: all paths of channel 0 first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringCoeffs {
    paths: Vec<Path>,
    channels: usize,
    height: usize,
    width: usize,
    maps: Vec<f64>,
}

impl ScatteringCoeffs {
    pub fn new(
        paths: Vec<Path>,
        channels: usize,
        height: usize,
        width: usize,
        maps: Vec<f64>,
    ) -> Result<Self, ScatterError> {
        let expected = paths.len() * channels * height * width;
        if maps.len() != expected {
            return Err(ScatterError::SizeMismatch {
                expected,
                got: maps.len(),
            });
        }
        Ok(Self {
            paths,
            channels,
            height,
            width,
            maps,
        })
    }

    /// Per-channel path list.
    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Total number of maps, `channels × paths`.
    pub fn map_count(&self) -> usize {
        self.channels * self.paths.len()
    }

    pub fn map(&self, channel: usize, path: usize) -> &[f64] {
        let n = self.height * self.width;
        let i = channel * self.paths.len() + path;
        &self.maps[i * n..(i + 1) * n]
    }

    pub fn maps(&self) -> &[f64] {
        &self.maps
    }

    pub fn maps_mut(&mut self) -> &mut [f64] {
        &mut self.maps
    }

    pub fn into_maps(self) -> Vec<f64> {
        self.maps
    }

    /// Concatenates along the channel axis; path lists and sizes must agree.
    pub fn concat(parts: Vec<ScatteringCoeffs>) -> Result<Self, ScatterError> {
        let mut iter = parts.into_iter();
        let Some(mut first) = iter.next() else {
            return Err(ScatterError::InvalidParams("no coefficients to concatenate".into()));
        };
        for p in iter {
            if p.paths != first.paths || p.height != first.height || p.width != first.width {
                return Err(ScatterError::SizeMismatch {
                    expected: first.height * first.width * first.paths.len(),
                    got: p.height * p.width * p.paths.len(),
                });
            }
            first.channels += p.channels;
            first.maps.extend(p.maps);
        }
        Ok(first)
    }
}

fn lowpass_decimated(bank: &FilterBank, spectrum: &[Complex64], out: &mut Vec<f64>) {
    let fft = bank.fft();
    let mut buf: Vec<Complex64> = spectrum.iter().zip(bank.phi()).map(|(s, p)| s * p).collect();
    fft.inverse(&mut buf);
    let stride = bank.stride();
    let w = bank.width();
    for y in (0..bank.height()).step_by(stride) {
        for x in (0..w).step_by(stride) {
            out.push(buf[y * w + x].re);
        }
    }
}

/// `|ifft(spectrum · ψ̂)|` as a real image.
fn modulus_band(bank: &FilterBank, spectrum: &[Complex64], psi: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = spectrum.iter().zip(psi).map(|(s, p)| s * p).collect();
    bank.fft().inverse(&mut buf);
    buf.iter().map(|c| c.norm()).collect()
}

/// Two-layer windowed scattering transform of one `H×W` plane, computed with
/// periodic FFT convolutions and subsampled by `2^J`.
pub fn scatter2d(image: &[f64], bank: &FilterBank) -> Result<ScatteringCoeffs, ScatterError> {
    let n = bank.height() * bank.width();
    if image.len() != n {
        return Err(ScatterError::SizeMismatch {
            expected: n,
            got: image.len(),
        });
    }
    let (j, l) = (bank.j(), bank.l());
    let fft = bank.fft();
    let x_hat = fft.forward_real(image);

    let mut order0 = Vec::new();
    lowpass_decimated(bank, &x_hat, &mut order0);

    let mut order1 = Vec::new();
    let mut order2 = Vec::new();
    for j1 in 0..j {
        for q1 in 0..l {
            let u1 = modulus_band(bank, &x_hat, bank.psi(j1, q1));
            let u1_hat = fft.forward_real(&u1);
            lowpass_decimated(bank, &u1_hat, &mut order1);
            for j2 in j1 + 1..j {
                for q2 in 0..l {
                    let u2 = modulus_band(bank, &u1_hat, bank.psi(j2, q2));
                    let u2_hat = fft.forward_real(&u2);
                    lowpass_decimated(bank, &u2_hat, &mut order2);
                }
            }
        }
    }
    let mut maps = order0;
    maps.extend(order1);
    maps.extend(order2);
    let s = bank.stride();
    ScatteringCoeffs::new(paths(j, l), 1, bank.height() / s, bank.width() / s, maps)
}

/// Scatters every band of `stack` independently and concatenates the results
/// channel-major.
pub fn scatter_multichannel(stack: &BandStack, bank: &FilterBank) -> Result<ScatteringCoeffs, ScatterError> {
    if stack.height() != bank.height() || stack.width() != bank.width() {
        return Err(ScatterError::SizeMismatch {
            expected: bank.height() * bank.width(),
            got: stack.plane_len(),
        });
    }
    let parts = (0..stack.bands())
        .into_par_iter()
        .map(|b| scatter2d(stack.plane(b), bank))
        .collect::<Result<Vec<_>, _>>()?;
    ScatteringCoeffs::concat(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_enumeration_matches_formula() {
        for j in 1..=3 {
            for l in [2, 4, 8] {
                let p = paths(j, l);
                assert_eq!(p.len(), path_count(j, l));
                for path in &p {
                    if let Path::Order2 { j1, j2, .. } = path {
                        assert!(j1 < j2);
                    }
                }
            }
        }
        assert_eq!(path_count(2, 4), 25);
    }

    #[test]
    fn zero_image_is_zero() {
        let bank = FilterBank::new(2, 4, 16, 16).unwrap();
        let s = scatter2d(&[0.0; 256], &bank).unwrap();
        assert!(s.maps().iter().all(|&v| v == 0.0));
        assert_eq!((s.height(), s.width(), s.map_count()), (4, 4, 25));
    }

    #[test]
    fn size_mismatch() {
        let bank = FilterBank::new(2, 4, 16, 16).unwrap();
        assert!(matches!(
            scatter2d(&[0.0; 255], &bank),
            Err(ScatterError::SizeMismatch { .. })
        ));
    }
}

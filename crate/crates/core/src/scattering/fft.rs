use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Planned 2D FFTs on a fixed `height × width` periodic grid.
///
/// Forward transforms are unnormalized; inverse transforms divide by the
/// number of samples, so `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct Fft2d {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2d {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fft2d")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2d {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn run(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.len());
        let (h, w) = (self.height, self.width);
        rows.process(buf);
        let mut t = vec![Complex64::new(0.0, 0.0); h * w];
        for y in 0..h {
            for x in 0..w {
                t[x * h + y] = buf[y * w + x];
            }
        }
        cols.process(&mut t);
        for x in 0..w {
            for y in 0..h {
                buf[y * w + x] = t[x * h + y];
            }
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
        let s = 1.0 / self.len() as f64;
        buf.iter_mut().for_each(|v| *v *= s);
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_dc() {
        let f = Fft2d::new(4, 6);
        let x: Vec<f64> = (0..24).map(|v| (v as f64 * 0.7).sin()).collect();
        let mut buf = f.forward_real(&x);
        let dc: f64 = x.iter().sum();
        assert!((buf[0].re - dc).abs() < 1e-12 && buf[0].im.abs() < 1e-12);
        f.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&x) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_dft() {
        let (h, w) = (3, 4);
        let f = Fft2d::new(h, w);
        let x: Vec<f64> = (0..h * w).map(|v| (v as f64).cos() + 0.1 * v as f64).collect();
        let got = f.forward_real(&x);
        for ky in 0..h {
            for kx in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for y in 0..h {
                    for xx in 0..w {
                        let ang = -2.0
                            * std::f64::consts::PI
                            * (ky as f64 * y as f64 / h as f64 + kx as f64 * xx as f64 / w as f64);
                        acc += Complex64::from_polar(x[y * w + xx], ang);
                    }
                }
                assert!((acc - got[ky * w + kx]).norm() < 1e-10);
            }
        }
    }
}

//! Non-learned references: per-pixel spline interpolation of the four
//! channels, and a threshold mask on the NIR channel.

use crate::cube::{hsi_wavelengths, MsiImage, SkinMask, SpectralCube, HSI_BANDS};
use crate::stack::BandStack;

/// Natural cubic spline through strictly increasing knots, extended
/// linearly beyond the end knots.
#[derive(Clone, Debug)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    /// Panics unless there are at least two strictly increasing knots.
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "need at least two knots");
        assert!(x.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for the interior second derivatives
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let f = h[i] / diag[i - 1];
                diag[i] -= f * h[i];
                rhs[i] -= f * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
            }
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn segment(&self, i: usize, t: f64) -> (f64, f64) {
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - t, t - x0);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let c0 = self.y[i] / h - m0 * h / 6.0;
        let c1 = self.y[i + 1] / h - m1 * h / 6.0;
        let value = m0 * a.powi(3) / (6.0 * h) + m1 * b.powi(3) / (6.0 * h) + c0 * a + c1 * b;
        let slope = -m0 * a * a / (2.0 * h) + m1 * b * b / (2.0 * h) - c0 + c1;
        (value, slope)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] {
            let (_, s) = self.segment(0, self.x[0]);
            return self.y[0] + s * (t - self.x[0]);
        }
        if t > self.x[n - 1] {
            let (_, s) = self.segment(n - 2, self.x[n - 1]);
            return self.y[n - 1] + s * (t - self.x[n - 1]);
        }
        let i = self.x.partition_point(|&k| k <= t).clamp(1, n - 1) - 1;
        self.segment(i, t).0
    }
}

/// Each pixel's four values placed at the channel centers and interpolated
/// to the 61 cube bands, clamped to `[0, 1]`.
pub fn spline_baseline(msi: &MsiImage) -> SpectralCube {
    let centers = msi.centers();
    let mut order: Vec<usize> = (0..centers.len()).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let knots: Vec<f64> = order.iter().map(|&c| centers[c]).collect();
    let lambda = hsi_wavelengths();
    let s = msi.stack();
    let n = s.plane_len();
    let mut out = BandStack::zeros(HSI_BANDS, s.height(), s.width());
    let data = out.data_mut();
    for i in 0..n {
        let values: Vec<f64> = order.iter().map(|&c| s.plane(c)[i]).collect();
        let spline = NaturalSpline::new(&knots, &values);
        for (b, &l) in lambda.iter().enumerate() {
            data[b * n + i] = spline.eval(l).clamp(0.0, 1.0);
        }
    }
    SpectralCube::new(out).expect("finite interpolation")
}

/// Otsu threshold over a 256-bin histogram of `values`.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || hi <= lo {
        return lo;
    }
    const BINS: usize = 256;
    let width = (hi - lo) / BINS as f64;
    let mut hist = [0usize; BINS];
    for &v in values {
        hist[(((v - lo) / width) as usize).min(BINS - 1)] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for (k, &c) in hist.iter().enumerate() {
        w0 += c as f64;
        sum0 += k as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let d = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * d * d;
        if between > best {
            best = between;
            best_k = k;
        }
    }
    lo + (best_k + 1) as f64 * width
}

/// Pixels whose NIR value is at or above the Otsu split.
pub fn otsu_mask(msi: &MsiImage) -> SkinMask {
    let nir = msi.stack().plane(3);
    let t = otsu_threshold(nir);
    SkinMask::new(msi.height(), msi.width(), nir.iter().map(|&v| v >= t).collect()).expect("mask layout")
}

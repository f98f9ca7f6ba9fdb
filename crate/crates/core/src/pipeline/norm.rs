//! Per-map standardization of scattering coefficients and the affine map
//! between reflectance and the `[-1, 1]` range of the network outputs.

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::scattering::ScatteringCoeffs;
use crate::stack::BandStack;

pub const MIN_STD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Mean and standard deviation of each coefficient map index, pooled over
/// the pixels of every fitted sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl MapStats {
    /// Population statistics; standard deviations are floored at
    /// [`MIN_STD`].
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a ScatteringCoeffs>) -> Result<Self, PipelineError> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        let mut parts = Vec::new();
        for c in samples {
            if sum.is_empty() {
                sum = vec![0.0; c.map_count()];
            }
            if c.map_count() != sum.len() {
                return Err(PipelineError::Normalization(format!(
                    "{} maps in one sample, {} in another",
                    c.map_count(),
                    sum.len()
                )));
            }
            let n = c.height() * c.width();
            for (m, s) in sum.iter_mut().enumerate() {
                *s += c.maps()[m * n..(m + 1) * n].iter().sum::<f64>();
            }
            count += n;
            parts.push(c);
        }
        if count == 0 {
            return Err(PipelineError::Normalization("no samples to fit".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        sq.resize(mean.len(), 0.0);
        for c in parts {
            let n = c.height() * c.width();
            for (m, acc) in sq.iter_mut().enumerate() {
                *acc += c.maps()[m * n..(m + 1) * n]
                    .iter()
                    .map(|v| (v - mean[m]).powi(2))
                    .sum::<f64>();
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt().max(MIN_STD)).collect();
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn apply(&self, coeffs: &mut ScatteringCoeffs, dir: Direction) -> Result<(), PipelineError> {
        if coeffs.map_count() != self.len() {
            return Err(PipelineError::Normalization(format!(
                "statistics fitted on {} maps, input has {}",
                self.len(),
                coeffs.map_count()
            )));
        }
        let n = coeffs.height() * coeffs.width();
        for (m, chunk) in coeffs.maps_mut().chunks_mut(n.max(1)).enumerate().take(self.len()) {
            let (mu, sd) = (self.mean[m], self.std[m]);
            for v in chunk {
                *v = match dir {
                    Direction::Forward => (*v - mu) / sd,
                    Direction::Inverse => *v * sd + mu,
                };
            }
        }
        Ok(())
    }
}

/// Statistics for the image coefficients and both parity targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub j: usize,
    pub l: usize,
    pub msi: MapStats,
    pub even: MapStats,
    pub odd: MapStats,
}

/// `x · 2 − 1`.
pub fn to_signed(x: f64) -> f64 {
    2.0 * x - 1.0
}

/// `(y + 1) / 2`.
pub fn from_signed(y: f64) -> f64 {
    0.5 * (y + 1.0)
}

pub fn normalize_reflectance(stack: &BandStack, dir: Direction) -> BandStack {
    match dir {
        Direction::Forward => stack.map(to_signed),
        Direction::Inverse => stack.map(from_signed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::{paths, scatter_multichannel, FilterBank};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stack(bands: usize, size: usize, seed: u64) -> BandStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BandStack::new(bands, size, size, (0..bands * size * size).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn reflectance_round_trip() {
        assert_eq!(to_signed(0.5), 0.0);
        assert_eq!(to_signed(0.0), -1.0);
        assert_eq!(to_signed(1.0), 1.0);
        let s = stack(3, 4, 1);
        let back = normalize_reflectance(&normalize_reflectance(&s, Direction::Forward), Direction::Inverse);
        for (a, b) in s.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardized_training_coefficients() {
        let bank = FilterBank::new(2, 4, 16, 16).unwrap();
        let coeffs: Vec<ScatteringCoeffs> = (0..5)
            .map(|i| scatter_multichannel(&stack(2, 16, 10 + i), &bank).unwrap())
            .collect();
        let stats = MapStats::fit(&coeffs).unwrap();
        assert_eq!(stats.len(), 50);
        let mut std_coeffs = coeffs.clone();
        for c in &mut std_coeffs {
            stats.apply(c, Direction::Forward).unwrap();
        }
        // recompute moments of the standardized data directly
        let n = 16;
        for m in 0..50 {
            let vals: Vec<f64> = std_coeffs
                .iter()
                .flat_map(|c| c.maps()[m * n..(m + 1) * n].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            assert!(mean.abs() < 1e-10, "map {m}: mean {mean}");
            assert!((sd - 1.0).abs() < 1e-6, "map {m}: std {sd}");
        }
        for (c, orig) in std_coeffs.iter_mut().zip(&coeffs) {
            stats.apply(c, Direction::Inverse).unwrap();
            for (a, b) in c.maps().iter().zip(orig.maps()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_maps_get_floored_std() {
        let c = ScatteringCoeffs::new(paths(1, 2), 1, 2, 2, vec![3.0; 3 * 4]).unwrap();
        let stats = MapStats::fit([&c]).unwrap();
        assert!(stats.std.iter().all(|&s| s == MIN_STD));
        let mut d = c.clone();
        stats.apply(&mut d, Direction::Forward).unwrap();
        assert!(d.maps().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_or_unfitted() {
        let c = ScatteringCoeffs::new(paths(1, 2), 1, 2, 2, vec![0.0; 12]).unwrap();
        let empty = MapStats {
            mean: vec![],
            std: vec![],
        };
        assert!(empty.apply(&mut c.clone(), Direction::Forward).is_err());
        assert!(MapStats::fit(std::iter::empty()).is_err());
    }
}

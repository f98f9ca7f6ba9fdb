//! Even/odd channel labels. Labels run 0..=61 over the 61 bands, with
//! labels 30 and 31 both naming the 700 nm band, so each parity holds 31
//! bands and the two share exactly that one.

use crate::cube::{CubeError, SpectralCube, HSI_BANDS, SHARED_BAND};
use crate::stack::BandStack;

pub const LABELS: usize = HSI_BANDS + 1;
pub const PARITY_BANDS: usize = LABELS / 2;

pub fn label_to_band(label: usize) -> usize {
    if label <= SHARED_BAND {
        label
    } else {
        label - 1
    }
}

/// Cube band indices of the even labels, in label order.
pub fn even_bands() -> Vec<usize> {
    (0..LABELS).step_by(2).map(label_to_band).collect()
}

pub fn odd_bands() -> Vec<usize> {
    (1..LABELS).step_by(2).map(label_to_band).collect()
}

fn gather(cube: &BandStack, bands: &[usize]) -> BandStack {
    let planes: Vec<&[f64]> = bands.iter().map(|&b| cube.plane(b)).collect();
    BandStack::from_planes(cube.height(), cube.width(), &planes).expect("planes share a size")
}

/// `(even, odd)` stacks of 31 bands each.
pub fn parity_split(cube: &SpectralCube) -> (BandStack, BandStack) {
    split_stack(cube.stack()).expect("cube has 61 bands")
}

pub fn split_stack(stack: &BandStack) -> Result<(BandStack, BandStack), CubeError> {
    if stack.bands() != HSI_BANDS {
        return Err(CubeError::BandCount {
            expected: HSI_BANDS,
            got: stack.bands(),
        });
    }
    Ok((gather(stack, &even_bands()), gather(stack, &odd_bands())))
}

/// Inverse of [`split_stack`]; the shared 700 nm band is the mean of both
/// parities' copies. Values are not clamped.
pub fn merge_stacks(even: &BandStack, odd: &BandStack) -> Result<BandStack, CubeError> {
    for s in [even, odd] {
        if s.bands() != PARITY_BANDS {
            return Err(CubeError::BandCount {
                expected: PARITY_BANDS,
                got: s.bands(),
            });
        }
    }
    if (even.height(), even.width()) != (odd.height(), odd.width()) {
        return Err(CubeError::Dimensions {
            height: even.height(),
            width: even.width(),
            other_height: odd.height(),
            other_width: odd.width(),
        });
    }
    let mut out = BandStack::zeros(HSI_BANDS, even.height(), even.width());
    for (src, bands) in [(even, even_bands()), (odd, odd_bands())] {
        for (i, &b) in bands.iter().enumerate() {
            if b == SHARED_BAND {
                for (d, s) in out.plane_mut(b).iter_mut().zip(src.plane(i)) {
                    *d += 0.5 * s;
                }
            } else {
                out.plane_mut(b).copy_from_slice(src.plane(i));
            }
        }
    }
    Ok(out)
}

pub fn parity_merge(even: &BandStack, odd: &BandStack) -> Result<SpectralCube, CubeError> {
    SpectralCube::new(merge_stacks(even, odd)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn cube(h: usize, w: usize, data: Vec<f64>) -> SpectralCube {
        SpectralCube::new(BandStack::new(HSI_BANDS, h, w, data).unwrap()).unwrap()
    }

    #[test]
    fn band_sets() {
        let even = even_bands();
        let odd = odd_bands();
        assert_eq!((even.len(), odd.len()), (31, 31));
        let e: BTreeSet<_> = even.iter().copied().collect();
        let o: BTreeSet<_> = odd.iter().copied().collect();
        assert_eq!(e.union(&o).count(), 61);
        assert_eq!(e.intersection(&o).copied().collect::<Vec<_>>(), vec![SHARED_BAND]);
        let mut want_even: Vec<usize> = (0..=30).step_by(2).collect();
        want_even.extend((31..=59).step_by(2));
        assert_eq!(even, want_even);
        let mut want_odd: Vec<usize> = (1..=29).step_by(2).collect();
        want_odd.push(30);
        want_odd.extend((32..=60).step_by(2));
        assert_eq!(odd, want_odd);
    }

    #[test]
    fn first_planes() {
        let c = cube(2, 2, (0..61).flat_map(|b| [b as f64 / 60.0; 4]).collect());
        let (e, o) = parity_split(&c);
        assert!(e.plane(0).iter().all(|&v| v == 0.0));
        assert!(o.plane(0).iter().all(|&v| v == 1.0 / 60.0));
        assert!(e.plane(15).iter().all(|&v| v == 0.5));
        assert!(o.plane(15).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn shared_band_is_averaged() {
        let mut even = BandStack::zeros(31, 1, 2);
        let mut odd = BandStack::zeros(31, 1, 2);
        even.plane_mut(15).fill(0.2);
        odd.plane_mut(15).fill(0.4);
        even.plane_mut(3).fill(0.9);
        odd.plane_mut(20).fill(0.7);
        let m = parity_merge(&even, &odd).unwrap();
        assert!(m.stack().plane(30).iter().all(|v| (v - 0.3).abs() < 1e-15));
        assert!(m.stack().plane(6).iter().all(|&v| v == 0.9));
        // odd index 20 is label 41, band 40
        assert!(m.stack().plane(40).iter().all(|&v| v == 0.7));
        assert!(parity_merge(&even, &BandStack::zeros(30, 1, 2)).is_err());
        assert!(parity_merge(&even, &BandStack::zeros(31, 2, 1)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn merge_inverts_split(data in proptest::collection::vec(0.0f64..=1.0, 61 * 6)) {
            let c = cube(2, 3, data);
            let (e, o) = parity_split(&c);
            prop_assert_eq!(parity_merge(&e, &o).unwrap(), c);
        }
    }
}

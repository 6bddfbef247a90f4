//! Dynamic time warping over multivariate subsequences.

use crate::series::Subsequence;
use crate::tscf::TscfError;

/// Classic DTW cost: dynamic program over the |a| x |b| grid with pointwise
/// cost the Euclidean distance between frames. `radius` optionally restricts
/// the alignment to a Sakoe-Chiba band; `None` leaves it unconstrained.
pub fn dtw(a: &Subsequence, b: &Subsequence, radius: Option<usize>) -> Result<f64, TscfError> {
    if a.dim() != b.dim() {
        return Err(TscfError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(dtw_frames(&a.values, &b.values, radius))
}

/// DTW on raw frame slices; callers guarantee equal dimensions.
pub(crate) fn dtw_frames(a: &[Vec<f64>], b: &[Vec<f64>], radius: Option<usize>) -> f64 {
    let (n, m) = (a.len(), b.len());
    // Band wide enough to keep the corners reachable.
    let band = radius
        .map(|r| r.max(n.abs_diff(m)))
        .unwrap_or(n.max(m));
    let dist = |x: &[f64], y: &[f64]| -> f64 {
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    };
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur.fill(f64::INFINITY);
        let lo = i.saturating_sub(band).max(1);
        let hi = (i + band).min(m);
        for j in lo..=hi {
            let c = dist(&a[i - 1], &b[j - 1]);
            let best = prev[j - 1].min(prev[j]).min(cur[j - 1]);
            cur[j] = c + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Subsequence;
    use proptest::prelude::*;

    fn sub(values: &[f64]) -> Subsequence {
        Subsequence::new(
            0,
            0,
            values.len() - 1,
            values.iter().map(|v| vec![*v]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn self_distance_zero() {
        let x = sub(&[0.3, -1.2, 4.5, 4.5, 0.0]);
        assert_eq!(dtw(&x, &x, None).unwrap(), 0.0);
    }

    #[test]
    fn exact_warped_match() {
        let a = sub(&[1.0, 2.0, 3.0]);
        let b = sub(&[1.0, 2.0, 2.0, 3.0]);
        assert_eq!(dtw(&a, &b, None).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_hand_enumerated() {
        // All monotone paths over the 2x2 grid cost at least two unit steps.
        let a = sub(&[0.0, 0.0]);
        let b = sub(&[1.0, 1.0]);
        assert_eq!(dtw(&a, &b, None).unwrap(), 2.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = sub(&[1.0]);
        let b = Subsequence::new(0, 0, 0, vec![vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            dtw(&a, &b, None),
            Err(TscfError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn band_still_reaches_corner() {
        let a = sub(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let b = sub(&[0.0, 5.0]);
        let d = dtw(&a, &b, Some(1)).unwrap();
        assert!(d.is_finite());
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(
            xs in proptest::collection::vec(-5.0..5.0f64, 1..12),
            ys in proptest::collection::vec(-5.0..5.0f64, 1..12),
        ) {
            let a = sub(&xs);
            let b = sub(&ys);
            let ab = dtw(&a, &b, None).unwrap();
            let ba = dtw(&b, &a, None).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
        }
    }
}

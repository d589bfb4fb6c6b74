use super::StatsError;

/// Quantile by linear interpolation at rank `(n - 1) * q` over the sorted
/// samples.
pub fn percentile(samples: &[f64], q: f64) -> Result<f64, StatsError> {
    check_quantile(q)?;
    let sorted = sorted_finite(samples)?;
    Ok(percentile_sorted(&sorted, q))
}

/// Same as [`percentile`] for input already sorted ascending and finite.
///
/// Panics on empty input.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let rank = (sorted.len() - 1) as f64 * q;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub(crate) fn check_quantile(q: f64) -> Result<(), StatsError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(StatsError::BadQuantile(q))
    }
}

/// Sorted copy; rejects empty and non-finite input.
pub(crate) fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn median(samples: &[f64]) -> Result<f64, StatsError> {
    percentile(samples, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent reference: insertion sort, then interpolate between the
    /// two order statistics bracketing rank (n-1)q.
    fn oracle(samples: &[f64], q: f64) -> f64 {
        let mut s: Vec<f64> = Vec::new();
        for &x in samples {
            let pos = s.iter().position(|&y| y > x).unwrap_or(s.len());
            s.insert(pos, x);
        }
        let rank = q * (s.len() as f64 - 1.0);
        let below = rank as usize;
        let above = if (below as f64) < rank { below + 1 } else { below };
        let w = rank - below as f64;
        s[below] + (s[above] - s[below]) * w
    }

    #[test]
    fn midpoint() {
        assert_eq!(percentile(&[0.0, 10.0], 0.5).unwrap(), 5.0);
    }

    #[test]
    fn one_to_hundred_p5() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert!((percentile(&v, 0.05).unwrap() - 5.95).abs() < 1e-12);
        assert_eq!(percentile(&v, 0.05).unwrap(), oracle(&v, 0.05));
    }

    #[test]
    fn q_one_is_max_and_zero_is_min() {
        let v = [3.0, -1.0, 7.5, 2.0];
        assert_eq!(percentile(&v, 1.0).unwrap(), 7.5);
        assert_eq!(percentile(&v, 0.0).unwrap(), -1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(percentile(&[], 0.5), Err(StatsError::Empty));
        assert_eq!(percentile(&[1.0], 1.5), Err(StatsError::BadQuantile(1.5)));
        assert_eq!(percentile(&[f64::NAN], 0.5), Err(StatsError::NonFinite));
    }

    proptest! {
        #[test]
        fn matches_oracle(v in prop::collection::vec(-1e6f64..1e6, 1..100), q in 0.0f64..=1.0) {
            prop_assert_eq!(percentile(&v, q).unwrap(), oracle(&v, q));
        }

        #[test]
        fn monotone_in_q(v in prop::collection::vec(0f64..1e4, 1..60), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(percentile(&v, lo).unwrap() <= percentile(&v, hi).unwrap());
        }
    }
}

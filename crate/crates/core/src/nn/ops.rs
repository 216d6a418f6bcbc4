//! Plain numeric helpers shared by the tape and the samplers.

use crate::error::{Error, Result};

/// Lower clamp applied to probabilities before taking a logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Softmax with the maximum logit subtracted first, so logits such as
/// `[0, 20000]` neither overflow nor lose the dominant entry.
///
/// Returns an empty vector for empty input.
pub fn softmax_stable(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub fn log_clamped(p: f64) -> f64 {
    p.max(LOG_CLAMP).ln()
}

/// `-log p[target]`, clamped at [`LOG_CLAMP`].
pub fn cross_entropy(probabilities: &[f64], target: usize) -> Result<f64> {
    let p = probabilities
        .get(target)
        .ok_or_else(|| Error::Shape(format!("target {target} with {} classes", probabilities.len())))?;
    Ok(-log_clamped(*p))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Draws an index from a discrete distribution given a uniform variate in `[0, 1)`.
///
/// Falls back to the last index with positive mass when rounding leaves `u`
/// above the cumulative total.
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn symmetric_logits_are_uniform() {
        assert_eq!(softmax_stable(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn huge_gap_does_not_overflow() {
        let p = softmax_stable(&[0.0, 20000.0]);
        assert_eq!(p[1], 1.0);
        assert_eq!(p[0], 0.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn matches_direct_evaluation() {
        let direct: Vec<f64> = {
            let e: Vec<f64> = [1.0f64, 2.0, 3.0].iter().map(|x| x.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        };
        for (a, b) in softmax_stable(&[1.0, 2.0, 3.0]).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        assert_eq!(cross_entropy(&[1.0], 0).unwrap(), 0.0);
        let l = cross_entropy(&[0.25; 4], 3).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() - 1e12f64.ln()).abs() < 1e-9);
        assert!(cross_entropy(&[1.0], 1).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            logits in prop::collection::vec(-50.0f64..50.0, 1..20),
            shift in -1000.0f64..1000.0,
        ) {
            let p = softmax_stable(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let q = softmax_stable(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::f_quantile;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FTestVerdict {
    /// `var(a) / var(b)`.
    pub f: f64,
    /// Lower critical value at the requested confidence.
    pub critical: f64,
    /// `a` has significantly smaller residual variance than `b`.
    pub a_better: bool,
}

fn sample_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Left-tailed variance-ratio test on two residual vectors.
pub fn ftest_significance(a: &[f64], b: &[f64], confidence: f64) -> Result<FTestVerdict> {
    if a.len() < 4 || b.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "F-test needs at least 4 residuals per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidParameter(format!("confidence {confidence} outside (0, 1)")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residuals".into()));
    }
    let vb = sample_var(b);
    if vb == 0.0 {
        return Err(Error::Degenerate("F-test with zero denominator variance".into()));
    }
    let f = sample_var(a) / vb;
    let critical = f_quantile(1.0 - confidence, (a.len() - 1) as f64, (b.len() - 1) as f64);
    Ok(FTestVerdict { f, critical, a_better: f < critical })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating(n: usize, amp: f64) -> Vec<f64> {
        (0..n).map(|i| if i % 2 == 0 { amp } else { -amp }).collect()
    }

    #[test]
    fn identical_residuals_are_not_significant() {
        let a = alternating(20, 1.0);
        let v = ftest_significance(&a, &a, 0.95).unwrap();
        assert_eq!(v.f, 1.0);
        assert!(!v.a_better);
    }

    #[test]
    fn hundredfold_variance_gap() {
        let v = ftest_significance(&alternating(100, 0.1), &alternating(100, 1.0), 0.95).unwrap();
        assert!((v.f - 0.01).abs() < 1e-12);
        assert!((v.critical - 0.717_33).abs() < 1e-4);
        assert!(v.a_better);
        let w = ftest_significance(&alternating(100, 1.0), &alternating(100, 0.1), 0.95).unwrap();
        assert!(!w.a_better);
    }

    #[test]
    fn zero_denominator_variance() {
        assert!(matches!(
            ftest_significance(&alternating(5, 1.0), &[2.0; 5], 0.95),
            Err(Error::Degenerate(_))
        ));
    }
}

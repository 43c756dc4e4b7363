//! Student-t and F distribution functions built on the regularized
//! incomplete beta function, with quantiles found by bisection.

use statrs::function::beta::beta_reg;

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

/// `t` with `P(T > t) = p`, for `0 < p < 0.5`, to within `1e-10`.
pub fn student_t_upper_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 0.5 && df > 0.0, "t quantile needs 0 < p < 0.5, df > 0");
    let mut hi = 1.0;
    while student_t_sf(hi, df) > p {
        hi *= 2.0;
    }
    bisect(0.0, hi, |t| student_t_sf(t, df) > p)
}

/// CDF of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    beta_reg(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))
}

/// `x` with `F_cdf(x) = p`, to within `1e-10` relative to the bracket.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0 && d1 > 0.0 && d2 > 0.0, "F quantile needs 0 < p < 1");
    let mut hi = 1.0;
    while f_cdf(hi, d1, d2) < p {
        hi *= 2.0;
    }
    bisect(0.0, hi, |x| f_cdf(x, d1, d2) < p)
}

/// Shrinks `[lo, hi]` around the point where `below` turns false.
fn bisect(mut lo: f64, mut hi: f64, below: impl Fn(f64) -> bool) -> f64 {
    while hi - lo > 1e-11 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantile_reference_values() {
        // Two-sided 95% critical values.
        for (df, t) in [(1.0, 12.706_204_736), (2.0, 4.302_652_730), (10.0, 2.228_138_852), (30.0, 2.042_272_456)] {
            assert!((student_t_upper_quantile(0.025, df) - t).abs() < 1e-8, "df={df}");
        }
    }

    #[test]
    fn t_tails_are_symmetric() {
        for t in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            assert!((student_t_sf(t, 5.0) + student_t_sf(-t, 5.0) - 1.0).abs() < 1e-14);
        }
        assert_eq!(student_t_sf(0.0, 3.0), 0.5);
    }

    #[test]
    fn f_quantile_reference_values() {
        assert!((f_quantile(0.05, 99.0, 99.0) - 0.717_328).abs() < 1e-5);
        assert!((f_quantile(0.95, 5.0, 10.0) - 3.325_834_530).abs() < 1e-8);
        assert!((f_cdf(1.0, 7.0, 7.0) - 0.5).abs() < 1e-12);
    }
}

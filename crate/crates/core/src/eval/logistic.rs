use rand::Rng as _;
use serde::Serialize;

use super::correlation::{check_pair, pearson};
use crate::error::Result;
use crate::rng::{substream, STREAM_EVAL};

/// `f(x) = β₁(½ − 1/(1 + exp(β₂(x − β₃)))) + β₄x + β₅`
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Logistic5Params {
    pub beta: [f64; 5],
}

impl Logistic5Params {
    pub fn eval(&self, x: f64) -> f64 {
        let [b1, b2, b3, b4, b5] = self.beta;
        b1 * (0.5 - 1.0 / (1.0 + (b2 * (x - b3)).exp())) + b4 * x + b5
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogisticFit {
    pub params: Logistic5Params,
    pub rmse: f64,
    /// Whether some simplex run met its tolerance.
    pub converged: bool,
    /// The affine least-squares fit was used instead of the simplex result.
    pub linear_fallback: bool,
}

const RESTARTS: usize = 3;
const MAX_EVALS: usize = 40_000;

fn sse(x: &[f64], y: &[f64], p: &[f64; 5]) -> f64 {
    let f = Logistic5Params { beta: *p };
    let s: f64 = x.iter().zip(y).map(|(&a, &b)| (f.eval(a) - b).powi(2)).sum();
    if s.is_finite() {
        s
    } else {
        f64::INFINITY
    }
}

/// Nelder–Mead with standard coefficients. Returns `(point, value, converged)`.
fn nelder_mead(f: &dyn Fn(&[f64; 5]) -> f64, start: [f64; 5], step: f64) -> ([f64; 5], f64, bool) {
    let mut simplex: Vec<([f64; 5], f64)> = Vec::with_capacity(6);
    simplex.push((start, f(&start)));
    for i in 0..5 {
        let mut p = start;
        p[i] += if p[i].abs() > 1e-8 { step * p[i].abs() } else { step };
        simplex.push((p, f(&p)));
    }
    let mut evals = 6;
    let combine = |a: &[f64; 5], b: &[f64; 5], t: f64| -> [f64; 5] {
        std::array::from_fn(|i| a[i] + t * (b[i] - a[i]))
    };
    while evals < MAX_EVALS {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[5].1);
        let diam = simplex[1..]
            .iter()
            .map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let scale = simplex[0].0.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if (worst - best) <= 1e-15 * best.abs() + 1e-300 || diam <= 1e-13 * scale {
            return (simplex[0].0, best, true);
        }
        let centroid: [f64; 5] = std::array::from_fn(|i| simplex[..5].iter().map(|(p, _)| p[i]).sum::<f64>() / 5.0);
        let w = simplex[5].0;
        let refl = combine(&centroid, &w, -1.0);
        let fr = f(&refl);
        evals += 1;
        if fr < simplex[0].1 {
            let exp = combine(&centroid, &w, -2.0);
            let fe = f(&exp);
            evals += 1;
            simplex[5] = if fe < fr { (exp, fe) } else { (refl, fr) };
        } else if fr < simplex[4].1 {
            simplex[5] = (refl, fr);
        } else {
            let (c, fc) = if fr < worst {
                let c = combine(&centroid, &refl, 0.5);
                (c, f(&c))
            } else {
                let c = combine(&centroid, &w, 0.5);
                (c, f(&c))
            };
            evals += 1;
            if fc < fr.min(worst) {
                simplex[5] = (c, fc);
            } else {
                let b = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = combine(&b, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
                evals += 5;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, simplex[0].1, false)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt())
}

/// Affine least squares `y ≈ a·x + b`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (a, my - a * mx)
}

/// Least-squares fit of the five-parameter logistic by a multi-start
/// simplex search, compared against the affine fit it nests.
pub fn fit_logistic5(x: &[f64], y: &[f64]) -> Result<LogisticFit> {
    check_pair(x, y, 6)?;
    // Sorting makes the fit independent of input order.
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();

    let (mx, sx) = mean_std(&xs);
    let (my, sy) = mean_std(&ys);
    let sx = if sx > 0.0 { sx } else { 1.0 };
    let sy = if sy > 0.0 { sy } else { 1.0 };
    // Fit in standardized coordinates, where the initial guess is
    // β = (range(y)/σy, 1, 0, 0, 0).
    let xn: Vec<f64> = xs.iter().map(|v| (v - mx) / sx).collect();
    let yn: Vec<f64> = ys.iter().map(|v| (v - my) / sy).collect();
    let objective = |p: &[f64; 5]| sse(&xn, &yn, p);
    let y_range = ys.iter().fold(f64::MIN, |a, &b| a.max(b)) - ys.iter().fold(f64::MAX, |a, &b| a.min(b));
    let init = [y_range / sy, 1.0, 0.0, 0.0, 0.0];

    let mut rng = substream(0, &format!("{STREAM_EVAL}/logistic"));
    let mut best: Option<([f64; 5], f64)> = None;
    let mut converged = false;
    for r in 0..RESTARTS {
        let mut start = init;
        if r > 0 {
            for v in start.iter_mut() {
                *v += rng.random_range(-0.5..0.5) * v.abs().max(1.0);
            }
        }
        let (mut p, mut fv, mut ok) = nelder_mead(&objective, start, 0.1);
        // Re-seed the simplex at the optimum until it stops improving.
        for _ in 0..20 {
            let (q, fq, ok2) = nelder_mead(&objective, p, 0.01);
            ok = ok2;
            if fq >= fv {
                break;
            }
            (p, fv) = (q, fq);
        }
        converged |= ok;
        if best.is_none_or(|(_, b)| fv < b) {
            best = Some((p, fv));
        }
    }
    let (p, _) = best.expect("at least one restart");
    let logistic = Logistic5Params {
        beta: {
            let b4 = sy * p[3] / sx;
            [sy * p[0], p[1] / sx, mx + sx * p[2], b4, sy * p[4] + my - b4 * mx]
        },
    };
    let (a, b) = linear_fit(&xs, &ys);
    let linear = Logistic5Params { beta: [0.0, 1.0 / sx, mx, a, b] };
    let rmse = |f: &Logistic5Params| (sse(&xs, &ys, &f.beta) / xs.len() as f64).sqrt();
    let (l_rmse, a_rmse) = (rmse(&logistic), rmse(&linear));
    let use_linear = !converged || !(l_rmse <= a_rmse);
    let (params, rmse) = if use_linear { (linear, a_rmse) } else { (logistic, l_rmse) };
    Ok(LogisticFit { params, rmse, converged, linear_fallback: use_linear })
}

/// Pearson correlation and RMSE between logistic-mapped predictions and
/// the reference scores.
pub fn plcc_rmse(predicted: &[f64], mos: &[f64]) -> Result<(f64, f64, LogisticFit)> {
    let fit = fit_logistic5(predicted, mos)?;
    let mapped: Vec<f64> = predicted.iter().map(|&v| fit.params.eval(v)).collect();
    let rmse = (mapped.iter().zip(mos).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / mos.len() as f64).sqrt();
    Ok((pearson(&mapped, mos)?, rmse, fit))
}

//! Evaluation: rank and linear correlation against subjective scores,
//! binary classification metrics, significance testing and content
//! statistics.

mod classify;
mod correlation;
mod diversity;
mod ftest;
mod logistic;

pub use classify::{accuracy_at, roc_pr, threshold_search, RocPr, ThresholdResult};
pub use correlation::{average_ranks, krcc, pearson, srcc};
pub use diversity::{diversity_metrics, Diversity};
pub use ftest::{ftest_significance, FTestVerdict};
pub use logistic::{fit_logistic5, linear_fit, plcc_rmse, Logistic5Params, LogisticFit};

use crate::error::Result;

/// Ordered `(metric, value)` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<(String, f64)>,
}

impl Report {
    pub fn push(&mut self, metric: &str, value: f64) {
        self.rows.push((metric.to_string(), value));
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.rows.iter().find(|(m, _)| m == metric).map(|r| r.1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        for (m, v) in &self.rows {
            s.push_str(&format!("{m},{v}\n"));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let w = self.rows.iter().map(|(m, _)| m.len()).max().unwrap_or(6).max(6);
        let mut s = format!("{:<w$}  value\n", "metric");
        for (m, v) in &self.rows {
            s.push_str(&format!("{m:<w$}  {v:.6}\n"));
        }
        s
    }
}

/// SRCC, KRCC, and PLCC/RMSE after logistic mapping.
pub fn correlation_report(predicted: &[f64], mos: &[f64]) -> Result<Report> {
    let mut r = Report::default();
    r.push("srcc", srcc(predicted, mos)?);
    r.push("krcc", krcc(predicted, mos)?);
    let (plcc, rmse, fit) = plcc_rmse(predicted, mos)?;
    r.push("plcc", plcc);
    r.push("rmse", rmse);
    r.push("logistic_fallback", f64::from(u8::from(fit.linear_fallback)));
    Ok(r)
}

/// AUROC, AUPRC and the accuracy-optimal threshold.
pub fn classification_report(scores: &[f64], labels: &[bool]) -> Result<(Report, RocPr)> {
    let curves = roc_pr(scores, labels)?;
    let t = threshold_search(scores, labels)?;
    let mut r = Report::default();
    r.push("auroc", curves.auroc);
    r.push("auprc", curves.auprc);
    r.push("threshold", t.threshold);
    r.push("accuracy", t.accuracy);
    Ok((r, curves))
}

/// Point list as CSV with the given two column names.
pub fn curve_csv(points: &[(f64, f64)], columns: (&str, &str)) -> String {
    let mut s = format!("{},{}\n", columns.0, columns.1);
    for (a, b) in points {
        s.push_str(&format!("{a},{b}\n"));
    }
    s
}

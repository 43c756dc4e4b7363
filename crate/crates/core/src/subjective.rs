//! Outlier rejection on per-image opinion scores and MOS aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::csv_error;
use crate::error::{Error, Result};
use crate::stats::student_t_upper_quantile;

/// Rating scale bounds.
pub const SCORE_RANGE: (f64, f64) = (0.0, 100.0);

#[derive(Clone, Debug, PartialEq)]
pub struct RatingSet {
    pub image_id: String,
    pub scores: Vec<f64>,
}

/// When the most extreme score is dropped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierRule {
    /// `G` exceeds the critical value.
    #[default]
    Grubbs,
    /// `G` exceeds the critical value and the deviation exceeds
    /// `sd_multiplier` standard deviations.
    GrubbsAndSd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierConfig {
    pub sig_alpha: f64,
    pub sd_multiplier: f64,
    pub max_removals: usize,
    pub rule: OutlierRule,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            sig_alpha: 0.05,
            sd_multiplier: 2.5,
            max_removals: usize::MAX,
            rule: OutlierRule::Grubbs,
        }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sig_alpha > 0.0 && self.sig_alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("sig_alpha {} outside (0, 1)", self.sig_alpha)));
        }
        if !(self.sd_multiplier.is_finite() && self.sd_multiplier >= 0.0) {
            return Err(Error::InvalidParameter(format!("sd_multiplier {}", self.sd_multiplier)));
        }
        Ok(())
    }
}

fn mean_sd(s: &[f64]) -> (f64, f64) {
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Index of the largest absolute deviation, lowest index on ties.
fn most_extreme(s: &[f64], mean: f64) -> usize {
    let mut best = 0;
    for (i, v) in s.iter().enumerate() {
        if (v - mean).abs() > (s[best] - mean).abs() {
            best = i;
        }
    }
    best
}

/// Maximum absolute deviation from the mean in units of the sample SD
/// (`N − 1` denominator). Zero when all scores agree.
pub fn grubbs_statistic(scores: &[f64]) -> Result<f64> {
    if scores.len() < 3 {
        return Err(Error::InvalidParameter(format!("Grubbs needs N >= 3, got {}", scores.len())));
    }
    let (mean, sd) = mean_sd(scores);
    if sd == 0.0 {
        return Ok(0.0);
    }
    Ok((scores[most_extreme(scores, mean)] - mean).abs() / sd)
}

/// Two-sided critical value of the Grubbs statistic for `n` samples.
pub fn grubbs_threshold(n: usize, sig_alpha: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("Grubbs needs N >= 3, got {n}")));
    }
    if !(sig_alpha > 0.0 && sig_alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("sig_alpha {sig_alpha} outside (0, 1)")));
    }
    let nf = n as f64;
    let t = student_t_upper_quantile(sig_alpha / (2.0 * nf), nf - 2.0);
    Ok((nf - 1.0) / nf.sqrt() * (t * t / (nf - 2.0 + t * t)).sqrt())
}

/// Iteratively drops the most extreme score while it tests as an outlier.
/// Never goes below three scores. Returns `(kept, removed)` with kept scores
/// in input order and removed ones in removal order.
pub fn remove_outliers(scores: &[f64], cfg: &OutlierConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let mut kept = scores.to_vec();
    let mut removed = Vec::new();
    while kept.len() > 3 && removed.len() < cfg.max_removals {
        let (mean, sd) = mean_sd(&kept);
        if sd == 0.0 {
            break;
        }
        let i = most_extreme(&kept, mean);
        let g = (kept[i] - mean).abs() / sd;
        let outlier = g > grubbs_threshold(kept.len(), cfg.sig_alpha)?
            && (cfg.rule == OutlierRule::Grubbs || g > cfg.sd_multiplier);
        if !outlier {
            break;
        }
        removed.push(kept.remove(i));
    }
    Ok((kept, removed))
}

pub fn mos(kept: &[f64]) -> Result<f64> {
    if kept.is_empty() {
        return Err(Error::Degenerate("MOS of an empty score set".into()));
    }
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRow {
    pub image_id: String,
    pub mos: f64,
    pub n_kept: usize,
    pub n_removed: usize,
}

#[derive(Deserialize)]
struct RatingRecord {
    image_id: String,
    #[allow(dead_code)]
    rater_id: String,
    score: f64,
}

/// Reads `image_id,rater_id,score` rows, grouped by image in order of first
/// appearance.
pub fn read_ratings(path: impl AsRef<Path>) -> Result<Vec<RatingSet>> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(&file, e))?;
    let mut sets: Vec<RatingSet> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, rec) in reader.deserialize::<RatingRecord>().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse { file: file.clone(), line, message: e.to_string() })?;
        if !(SCORE_RANGE.0..=SCORE_RANGE.1).contains(&rec.score) {
            return Err(Error::Parse {
                file: file.clone(),
                line,
                message: format!("score {} outside [0, 100]", rec.score),
            });
        }
        let k = *index.entry(rec.image_id.clone()).or_insert_with(|| {
            sets.push(RatingSet { image_id: rec.image_id.clone(), scores: Vec::new() });
            sets.len() - 1
        });
        sets[k].scores.push(rec.score);
    }
    Ok(sets)
}

/// Outlier rejection then MOS, per image. Images with fewer than three
/// ratings skip rejection.
pub fn mos_table(sets: &[RatingSet], cfg: &OutlierConfig) -> Result<Vec<MosRow>> {
    sets.iter()
        .map(|s| {
            let (kept, removed) = if s.scores.len() >= 3 {
                remove_outliers(&s.scores, cfg)?
            } else {
                (s.scores.clone(), Vec::new())
            };
            Ok(MosRow {
                image_id: s.image_id.clone(),
                mos: mos(&kept)?,
                n_kept: kept.len(),
                n_removed: removed.len(),
            })
        })
        .collect()
}

pub fn mos_csv(rows: &[MosRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("UTF-8 CSV")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn statistic_spot_values() {
        assert_eq!(grubbs_statistic(&[10.0, 10.0, 10.0]).unwrap(), 0.0);
        let g = grubbs_statistic(&[0.0, 0.0, 0.0, 0.0, 10.0]).unwrap();
        assert!((g - 8.0 / 20f64.sqrt()).abs() < 1e-12);
        let shifted = grubbs_statistic(&[30.0, 30.0, 30.0, 30.0, 40.0]).unwrap();
        assert!((g - shifted).abs() < 1e-12);
        assert!(grubbs_statistic(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn threshold_is_monotone() {
        let mut prev = 0.0;
        for n in 3..=50 {
            let t = grubbs_threshold(n, 0.05).unwrap();
            assert!(t > prev, "n={n}");
            prev = t;
            assert!(grubbs_threshold(n, 0.01).unwrap() > t);
            assert!(grubbs_threshold(n, 0.10).unwrap() < t);
        }
        assert!(grubbs_threshold(2, 0.05).is_err());
    }

    #[test]
    fn removal_examples() {
        let cfg = OutlierConfig::default();
        let (kept, removed) = remove_outliers(&[50.0, 51.0, 49.0, 52.0, 48.0], &cfg).unwrap();
        assert_eq!((kept.len(), removed.len()), (5, 0));
        let (kept, removed) = remove_outliers(&[1.0, 1.0, 1.0, 1.0, 100.0], &cfg).unwrap();
        assert_eq!(kept, vec![1.0; 4]);
        assert_eq!(removed, vec![100.0]);
        assert_eq!(mos(&kept).unwrap(), 1.0);
    }

    #[test]
    fn conjunctive_rule_needs_a_large_sample() {
        // With N − 1 in the SD, G ≤ (N − 1)/√N, which stays below 2.5 until N = 9.
        let cfg = OutlierConfig { rule: OutlierRule::GrubbsAndSd, ..Default::default() };
        let (_, removed) = remove_outliers(&[1.0, 1.0, 1.0, 1.0, 100.0], &cfg).unwrap();
        assert!(removed.is_empty());
        let mut many = vec![50.0; 11];
        many.push(0.0);
        let (_, removed) = remove_outliers(&many, &cfg).unwrap();
        assert_eq!(removed, vec![0.0]);
    }

    #[test]
    fn ties_break_to_lowest_index() {
        let s = [0.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 50.0, 100.0];
        let cfg = OutlierConfig { max_removals: 1, sig_alpha: 0.5, ..Default::default() };
        let (_, removed) = remove_outliers(&s, &cfg).unwrap();
        assert_eq!(removed, vec![0.0]);
    }

    #[test]
    fn mos_examples() {
        assert_eq!(mos(&[50.0, 60.0, 70.0]).unwrap(), 60.0);
        assert_eq!(mos(&[42.5]).unwrap(), 42.5);
        assert!(mos(&[]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "image_id,rater_id,score\na,r1,1\nb,r1,50\na,r2,1\na,r3,1\na,r4,1\na,r5,100\n").unwrap();
        let sets = read_ratings(&path).unwrap();
        assert_eq!(sets[0].scores, vec![1.0, 1.0, 1.0, 1.0, 100.0]);
        let rows = mos_table(&sets, &OutlierConfig::default()).unwrap();
        assert_eq!(mos_csv(&rows), "image_id,mos,n_kept,n_removed\na,1.0,4,1\nb,50.0,1,0\n");

        std::fs::write(&path, "image_id,rater_id,score\na,r1,1\na,r2,101\n").unwrap();
        assert!(matches!(read_ratings(&path), Err(Error::Parse { line: 3, .. })));
    }

    proptest! {
        #[test]
        fn removal_invariants(scores in prop::collection::vec(0.0f64..100.0, 3..30),
                              outliers in prop::collection::vec(0.0f64..100.0, 0..3),
                              max_removals in 0usize..5, seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut s = scores.clone();
            s.extend(outliers.iter().map(|v| v * 10.0 - 450.0));
            let cfg = OutlierConfig { max_removals, ..Default::default() };
            let (kept, removed) = remove_outliers(&s, &cfg).unwrap();
            prop_assert!(removed.len() <= max_removals);
            prop_assert!(kept.len() >= 3);
            prop_assert_eq!(kept.len() + removed.len(), s.len());

            let unlimited = OutlierConfig::default();
            let (once, _) = remove_outliers(&s, &unlimited).unwrap();
            let (twice, again) = remove_outliers(&once, &unlimited).unwrap();
            prop_assert_eq!(&twice, &once);
            prop_assert!(again.is_empty());

            let mut shuffled = s.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (mut a, _) = remove_outliers(&shuffled, &unlimited).unwrap();
            let mut b = once.clone();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }
    }
}

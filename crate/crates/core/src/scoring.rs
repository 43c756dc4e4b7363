//! Banding map assembly and worst-percentile pooling.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{normalized_gray, HighFreqMap};
use crate::imgcore::{PatchGrid, PatchLabel, PlanarImage};
use crate::sfmask::MaskWeights;

pub const DEFAULT_P_PERCENT: f64 = 80.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchMeta {
    pub index: usize,
    pub x: usize,
    pub y: usize,
    pub label: PatchLabel,
    pub weight: f64,
}

/// Per-pixel banding visibility. Pixels outside banded patches are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BandingMap {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub values: Vec<f64>,
    pub patches: Vec<PatchMeta>,
}

impl BandingMap {
    /// Total patch count `M`, banded or not.
    pub fn patch_count(&self) -> usize {
        self.patches.len()
    }

    pub fn banded_count(&self) -> usize {
        self.patches.iter().filter(|p| p.label.value.is_banded()).count()
    }

    /// Row-major values of one patch.
    pub fn patch_values(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let PatchMeta { x, y, .. } = self.patches[k];
        let n = self.patch_size;
        (y..y + n).flat_map(move |row| self.values[row * self.width + x..row * self.width + x + n].iter().copied())
    }

    /// Min-max normalized 8-bit rendering; all black when nothing is banded.
    pub fn to_image(&self) -> PlanarImage {
        let v: Vec<f32> = self.values.iter().map(|&v| v as f32).collect();
        normalized_gray(self.width, self.height, &v)
    }

    /// Raw dump: row-major little-endian `f32`, no header.
    pub fn write_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::with_capacity(self.values.len() * 4);
        for &v in &self.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }
}

/// `BM_k(i, j) = w_k · P̂_k · |HFM_k(i, j)|`, placed at each patch's position.
pub fn banding_map(
    grid: &PatchGrid,
    labels: &[PatchLabel],
    weights: &MaskWeights,
    hfms: &[HighFreqMap],
) -> Result<BandingMap> {
    let m = grid.len();
    if labels.len() != m || weights.w.len() != m || hfms.len() != m {
        return Err(Error::Misaligned(format!(
            "grid has {m} patches but got {} labels, {} weights, {} maps",
            labels.len(),
            weights.w.len(),
            hfms.len()
        )));
    }
    let n = grid.patch_size;
    let (w, h) = (grid.image_width, grid.image_height);
    let mut values = vec![0.0; w * h];
    let mut patches = Vec::with_capacity(m);
    for (k, &(x, y)) in grid.patches.iter().enumerate() {
        let hfm = &hfms[k];
        if (hfm.width, hfm.height) != (n, n) {
            return Err(Error::Misaligned(format!(
                "map {k} is {}x{}, grid patches are {n}x{n}",
                hfm.width, hfm.height
            )));
        }
        let wk = weights.w[k];
        if labels[k].value.is_banded() {
            for row in 0..n {
                let dst = &mut values[(y + row) * w + x..(y + row) * w + x + n];
                for (d, &s) in dst.iter_mut().zip(&hfm.values[row * n..(row + 1) * n]) {
                    *d = wk * f64::from(s).abs();
                }
            }
        }
        patches.push(PatchMeta { index: k, x, y, label: labels[k], weight: wk });
    }
    Ok(BandingMap { width: w, height: h, patch_size: n, values, patches })
}

/// Where the worst-p% set is drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    /// Mean of each patch's own top set, averaged over all `M` patches.
    #[default]
    PerPatch,
    /// Mean of one top set drawn from every non-zero value in the map.
    Global,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityScore {
    pub q: f64,
    pub p_percent: f64,
    pub per_patch_scores: Vec<f64>,
    pub banded_patches: usize,
    pub patch_count: usize,
}

/// Size of the worst set for `nnz` non-zero values, rounded up.
fn top_count(nnz: usize, p_percent: f64) -> usize {
    ((p_percent * nnz as f64 / 100.0).ceil() as usize).clamp(1, nnz)
}

/// Mean of the largest `⌈p%·nnz⌉` non-zero values, extended with every value
/// tied at the cutoff. Summed largest first.
pub(crate) fn worst_mean(mut nonzero: Vec<f64>, p_percent: f64) -> f64 {
    let nnz = nonzero.len();
    if nnz == 0 {
        return 0.0;
    }
    let k = top_count(nnz, p_percent);
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if k < nnz {
        nonzero.select_nth_unstable_by(k - 1, desc);
    }
    let (top, rest) = nonzero.split_at_mut(k);
    top.sort_unstable_by(desc);
    let cutoff = top[k - 1];
    let ties = rest.iter().filter(|&&v| v == cutoff).count();
    // Tied values equal the cutoff, so they extend the descending sum last.
    let sum = (0..ties).fold(top.iter().sum::<f64>(), |acc, _| acc + cutoff);
    sum / (k + ties) as f64
}

pub fn pool_score(bm: &BandingMap, p_percent: f64) -> Result<QualityScore> {
    pool_score_with(bm, p_percent, PoolMode::PerPatch)
}

pub fn pool_score_with(bm: &BandingMap, p_percent: f64, mode: PoolMode) -> Result<QualityScore> {
    if !(p_percent > 0.0 && p_percent <= 100.0) {
        return Err(Error::InvalidParameter(format!("p_percent must be in (0, 100], got {p_percent}")));
    }
    let m = bm.patch_count();
    let per_patch_scores: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|k| worst_mean(bm.patch_values(k).filter(|&v| v != 0.0).collect(), p_percent))
        .collect();
    let q = match mode {
        _ if m == 0 => 0.0,
        PoolMode::PerPatch => per_patch_scores.iter().sum::<f64>() / m as f64,
        PoolMode::Global => {
            let all = (0..m).flat_map(|k| bm.patch_values(k)).filter(|&v| v != 0.0).collect();
            worst_mean(all, p_percent)
        }
    };
    Ok(QualityScore {
        q,
        p_percent,
        per_patch_scores,
        banded_patches: bm.banded_count(),
        patch_count: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Label;
    use proptest::prelude::*;

    fn lab(b: bool) -> PatchLabel {
        PatchLabel::predicted(if b { Label::Banded } else { Label::NonBanded }, 1.0)
    }

    fn hfm(n: usize, f: impl Fn(usize) -> f32) -> HighFreqMap {
        HighFreqMap { width: n, height: n, values: (0..n * n).map(f).collect() }
    }

    fn build(n: usize, cols: usize, rows: usize, banded: &[bool], w: &[f64], seed: u64) -> BandingMap {
        let grid = PatchGrid::new(cols * n + 3, rows * n + 1, n).unwrap();
        let maps: Vec<_> = (0..grid.len())
            .map(|k| hfm(n, |i| ((i * 31 + k * 7 + seed as usize) % 11) as f32 / 10.0))
            .collect();
        let labels: Vec<_> = banded.iter().map(|&b| lab(b)).collect();
        banding_map(&grid, &labels, &MaskWeights { w: w.to_vec(), gamma: 1.5 }, &maps).unwrap()
    }

    #[test]
    fn non_banded_map_is_zero() {
        let bm = build(8, 2, 2, &[false; 4], &[1.0; 4], 0);
        assert!(bm.values.iter().all(|&v| v == 0.0));
        assert_eq!(pool_score(&bm, 80.0).unwrap().q, 0.0);
    }

    #[test]
    fn single_banded_patch_copies_hfm() {
        let bm = build(8, 2, 1, &[false, true], &[1.0, 1.0], 0);
        let expect = hfm(8, |i| ((i * 31 + 7) % 11) as f32 / 10.0);
        let got: Vec<f64> = bm.patch_values(1).collect();
        let want: Vec<f64> = expect.values.iter().map(|&v| f64::from(v)).collect();
        assert_eq!(got, want);
        let outside: f64 = bm.values.iter().sum::<f64>() - got.iter().sum::<f64>();
        assert_eq!(outside, 0.0);
    }

    #[test]
    fn doubling_weight_doubles_values() {
        let a = build(8, 2, 1, &[true, true], &[1.0, 1.0], 1);
        let b = build(8, 2, 1, &[true, true], &[1.0, 2.0], 1);
        assert!(a.patch_values(1).zip(b.patch_values(1)).all(|(x, y)| y == 2.0 * x));
        assert!(a.patch_values(0).eq(b.patch_values(0)));
    }

    #[test]
    fn misaligned_inputs() {
        let grid = PatchGrid::new(16, 8, 8).unwrap();
        let maps = vec![hfm(8, |_| 1.0); 2];
        let err = banding_map(&grid, &[lab(true)], &MaskWeights { w: vec![1.0; 2], gamma: 1.5 }, &maps);
        assert!(matches!(err, Err(Error::Misaligned(_))));
    }

    #[test]
    fn constant_patch_scores_its_value() {
        let grid = PatchGrid::new(8, 8, 8).unwrap();
        let bm = banding_map(&grid, &[lab(true)], &MaskWeights { w: vec![1.0], gamma: 1.5 }, &[hfm(8, |_| 0.375)]).unwrap();
        for p in [1.0, 33.0, 80.0, 100.0] {
            assert_eq!(pool_score(&bm, p).unwrap().q, 0.375);
        }
    }

    #[test]
    fn cutoff_ties_are_included() {
        // ⌈0.5·4⌉ = 2 picks {4, 2}; the other 2 ties at the cutoff.
        assert_eq!(worst_mean(vec![2.0, 4.0, 2.0, 1.0], 50.0), 8.0 / 3.0);
        assert_eq!(worst_mean(vec![0.5], 1.0), 0.5);
        assert_eq!(top_count(5, 80.0), 4);
        assert_eq!(top_count(1, 0.1), 1);
    }

    #[test]
    fn invalid_percent() {
        let bm = build(8, 1, 1, &[true], &[1.0], 0);
        for p in [0.0, -1.0, 100.5, f64::NAN] {
            assert!(pool_score(&bm, p).is_err());
        }
    }

    #[test]
    fn global_mode_on_a_single_patch_matches() {
        let bm = build(8, 1, 1, &[true], &[1.3], 4);
        let a = pool_score(&bm, 80.0).unwrap().q;
        let b = pool_score_with(&bm, 80.0, PoolMode::Global).unwrap().q;
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn monotone_in_p(seed in 0u64..1000, p1 in 1.0f64..100.0, p2 in 1.0f64..100.0) {
            let bm = build(8, 3, 2, &[true, false, true, true, false, true], &[1.0, 1.0, 1.5, 2.0, 1.0, 1.0], seed);
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            prop_assert!(pool_score(&bm, lo).unwrap().q >= pool_score(&bm, hi).unwrap().q);
        }

        #[test]
        fn linear_in_uniform_weight_scale(seed in 0u64..1000, c in 0.25f64..4.0) {
            let w = [1.0, 1.25, 2.0, 1.0];
            let a = build(8, 2, 2, &[true, true, false, true], &w, seed);
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let b = build(8, 2, 2, &[true, true, false, true], &scaled, seed);
            let (qa, qb) = (pool_score(&a, 80.0).unwrap().q, pool_score(&b, 80.0).unwrap().q);
            prop_assert!((qb - c * qa).abs() <= 1e-12 * qb.abs().max(1.0));
        }

        #[test]
        fn flipping_to_banded_never_lowers_q(seed in 0u64..1000, mask in 0u8..16, flip in 0usize..4) {
            let before: Vec<bool> = (0..4).map(|i| mask & (1 << i) != 0).collect();
            let mut after = before.clone();
            after[flip] = true;
            let a = build(8, 2, 2, &before, &[1.0; 4], seed);
            let b = build(8, 2, 2, &after, &[1.0; 4], seed);
            prop_assert!(pool_score(&b, 80.0).unwrap().q >= pool_score(&a, 80.0).unwrap().q);
        }
    }
}

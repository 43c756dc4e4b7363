//! Whole-image scoring: tile, frequency maps, classification, masking,
//! banding map and pooling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{baseline_predict, predict_maps, BaselineConfig, DualNetParams};
use crate::error::{Error, Result};
use crate::freq::{pws_lfm, sobel_hfm, FreqConfig, HfmMode, HighFreqMap};
use crate::imgcore::{tile, to_luma, PatchLabel, PlanarImage};
use crate::scoring::{banding_map, pool_score_with, BandingMap, PoolMode, QualityScore, DEFAULT_P_PERCENT};
use crate::sfmask::{mask_weights, spatial_freq_stats, spatial_frequency, DEFAULT_GAMMA};

/// Patch size used for scoring unless configured otherwise.
pub const DEFAULT_SCORE_PATCH: usize = 235;

#[derive(Clone, Debug)]
pub enum Classifier {
    Model(Box<DualNetParams>),
    Baseline(BaselineConfig),
}

impl Classifier {
    fn classify(&self, luma_patch: &PlanarImage, hfm: &HighFreqMap, freq: &FreqConfig) -> Result<PatchLabel> {
        match self {
            Classifier::Baseline(cfg) => baseline_predict(luma_patch, cfg),
            Classifier::Model(params) => predict_maps(params, hfm, &pws_lfm(luma_patch, &freq.pws)?),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub patch_size: usize,
    pub p_percent: f64,
    pub gamma: f64,
    pub pool: PoolMode,
    pub freq: FreqConfig,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_SCORE_PATCH,
            p_percent: DEFAULT_P_PERCENT,
            gamma: DEFAULT_GAMMA,
            pool: PoolMode::PerPatch,
            freq: FreqConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScoredImage {
    pub score: QualityScore,
    pub map: BandingMap,
}

pub fn score_image(img: &PlanarImage, cfg: &ScoreConfig, classifier: &Classifier) -> Result<ScoredImage> {
    cfg.freq.pws.validate()?;
    if let Classifier::Model(p) = classifier {
        if p.meta.patch_size != cfg.patch_size {
            return Err(Error::Dimensions(format!(
                "model expects {0}x{0} patches, scoring uses {1}x{1}",
                p.meta.patch_size, cfg.patch_size
            )));
        }
    }
    let luma = to_luma(img);
    let grid = tile(&luma, cfg.patch_size)?;
    let n = cfg.patch_size;
    let full_hfm = match cfg.freq.hfm_mode {
        HfmMode::FullImage => Some(sobel_hfm(&luma)?),
        HfmMode::PerPatch => None,
    };

    let per_patch: Vec<(HighFreqMap, PatchLabel, _)> = grid
        .patches
        .par_iter()
        .map(|&(x, y)| {
            let patch = luma.crop(x, y, n, n)?;
            let hfm = match &full_hfm {
                Some(full) => HighFreqMap {
                    width: n,
                    height: n,
                    values: (y..y + n)
                        .flat_map(|r| full.values[r * full.width + x..r * full.width + x + n].iter().copied())
                        .collect(),
                },
                None => sobel_hfm(&patch)?,
            };
            let label = classifier.classify(&patch, &hfm, &cfg.freq)?;
            Ok((hfm, label, spatial_frequency(&patch)?))
        })
        .collect::<Result<_>>()?;

    let mut hfms = Vec::with_capacity(per_patch.len());
    let mut labels = Vec::with_capacity(per_patch.len());
    let mut sfs = Vec::with_capacity(per_patch.len());
    for (h, l, s) in per_patch {
        hfms.push(h);
        labels.push(l);
        sfs.push(s);
    }
    let weights = mask_weights(&spatial_freq_stats(sfs)?, n, cfg.gamma)?;
    let map = banding_map(&grid, &labels, &weights, &hfms)?;
    let score = pool_score_with(&map, cfg.p_percent, cfg.pool)?;
    Ok(ScoredImage { score, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_base, quantize_bitdepth, SynthKind, SynthSpec};

    fn baseline() -> Classifier {
        Classifier::Baseline(BaselineConfig::default())
    }

    fn cfg(n: usize) -> ScoreConfig {
        ScoreConfig { patch_size: n, ..Default::default() }
    }

    #[test]
    fn constant_image_scores_zero() {
        let img = PlanarImage::gray_u8(128, 96, vec![77; 128 * 96]).unwrap();
        let s = score_image(&img, &cfg(32), &baseline()).unwrap();
        assert_eq!(s.score.q, 0.0);
        assert_eq!(s.score.patch_count, 12);
        assert!(s.map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coarser_ramp_scores_higher() {
        let base = gen_base(&SynthSpec::new(SynthKind::LinearRamp, 256, 8, 0)).unwrap();
        let q = |d| {
            let img = quantize_bitdepth(&base, d).unwrap();
            score_image(&img, &cfg(64), &baseline()).unwrap().score.q
        };
        assert!(q(3) > q(7));
    }

    #[test]
    fn full_image_hfm_mode_runs() {
        let base = gen_base(&SynthSpec::new(SynthKind::LinearRamp, 128, 4, 0)).unwrap();
        let img = quantize_bitdepth(&base, 4).unwrap();
        let mut c = cfg(64);
        c.freq.hfm_mode = HfmMode::FullImage;
        let s = score_image(&img, &c, &baseline()).unwrap();
        assert!(s.score.q > 0.0);
        assert_eq!((s.map.width, s.map.height), (128, 128));
    }

    #[test]
    fn model_patch_size_must_match() {
        let p: DualNetParams = DualNetParams::init(
            &crate::classifier::Architecture { patch_size: 32, ..Default::default() },
            &mut crate::rng::substream(0, "t"),
        );
        let img = PlanarImage::gray_u8(64, 64, vec![0; 64 * 64]).unwrap();
        assert!(score_image(&img, &cfg(64), &Classifier::Model(Box::new(p.clone()))).is_err());
        let s = score_image(&img, &cfg(32), &Classifier::Model(Box::new(p))).unwrap();
        assert_eq!(s.score.patch_count, 4);
    }
}

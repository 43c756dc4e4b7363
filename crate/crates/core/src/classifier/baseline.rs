use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::sobel_hfm;
use crate::imgcore::{to_luma, Label, PatchLabel, PlanarImage, MIN_PATCH_SIZE};
use crate::sfmask::spatial_frequency;

/// Training-free rule: a patch is banded when it carries gradient energy
/// while its overall activity stays low, i.e. thin contours in flat content.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Lower bound on the mean Sobel magnitude (luma in `[0, 1]`).
    pub min_mean_hfm: f64,
    /// Upper bound on the patch spatial frequency.
    pub max_sf: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            min_mean_hfm: 0.005,
            max_sf: 0.1,
        }
    }
}

pub fn baseline_predict(patch: &PlanarImage, cfg: &BaselineConfig) -> Result<PatchLabel> {
    if patch.width() < MIN_PATCH_SIZE || patch.height() != patch.width() {
        return Err(Error::Dimensions(format!(
            "baseline needs a square patch of at least {MIN_PATCH_SIZE}x{MIN_PATCH_SIZE}, got {}x{}",
            patch.width(),
            patch.height()
        )));
    }
    let luma = to_luma(patch);
    let mean_hfm = sobel_hfm(&luma)?.mean();
    let sf = spatial_frequency(&luma)?.sf;
    let banded = mean_hfm > cfg.min_mean_hfm && sf < cfg.max_sf;
    let value = if banded { Label::Banded } else { Label::NonBanded };
    Ok(PatchLabel::predicted(value, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng};

    fn classify(n: usize, f: impl Fn(usize, usize) -> u8) -> Label {
        let data = (0..n * n).map(|i| f(i % n, i / n)).collect();
        let img = PlanarImage::gray_u8(n, n, data).unwrap();
        baseline_predict(&img, &BaselineConfig::default()).unwrap().value
    }

    #[test]
    fn constant_patch() {
        assert_eq!(classify(32, |_, _| 128), Label::NonBanded);
    }

    #[test]
    fn white_noise_patch() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<u8> = (0..64 * 64).map(|_| rng.random()).collect();
        assert_eq!(classify(64, |x, y| noise[y * 64 + x]), Label::NonBanded);
    }

    #[test]
    fn four_level_ramp() {
        // 0..255 over 64 rows reduced to four plateaus.
        assert_eq!(classify(64, |_, y| ((y * 4 / 64) * 85) as u8), Label::Banded);
    }

    #[test]
    fn too_small() {
        let img = PlanarImage::gray_u8(7, 7, vec![0; 49]).unwrap();
        assert!(baseline_predict(&img, &BaselineConfig::default()).is_err());
    }
}

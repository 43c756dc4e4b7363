//! Spatial-frequency statistics and the masking weight that scales banding
//! visibility in high-activity patches.

use crate::error::{Error, Result};
use crate::imgcore::PlanarImage;

/// Default shaping exponent of the masking transfer function.
pub const DEFAULT_GAMMA: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialFrequency {
    /// Column frequency: RMS of horizontal first differences.
    pub cf: f64,
    /// Row frequency: RMS of vertical first differences.
    pub rf: f64,
    pub sf: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialFreqStats {
    pub per_patch: Vec<SpatialFrequency>,
    /// Grid-mean spatial frequency.
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskWeights {
    pub w: Vec<f64>,
    pub gamma: f64,
}

/// Spatial frequency of a square 1-channel patch.
///
/// Both sums are normalized by `N²`, the full pixel count, even though each
/// sum has only `N(N−1)` terms.
pub fn spatial_frequency(patch: &PlanarImage) -> Result<SpatialFrequency> {
    let n = patch.width();
    if patch.height() != n {
        return Err(Error::Dimensions(format!(
            "spatial frequency needs a square patch, got {}x{}",
            n,
            patch.height()
        )));
    }
    if n < 2 {
        return Err(Error::Dimensions("spatial frequency needs N >= 2".into()));
    }
    if patch.channels() != 1 {
        return Err(Error::InvalidParameter("spatial frequency needs 1 channel".into()));
    }
    let f = patch.to_f32();
    let data: Vec<f64> = f.plane_f32(0).unwrap().iter().map(|&v| f64::from(v)).collect();
    Ok(spatial_frequency_of(&data, n))
}

pub(crate) fn spatial_frequency_of(data: &[f64], n: usize) -> SpatialFrequency {
    let mut col = 0.0;
    let mut row = 0.0;
    for y in 0..n {
        for x in 0..n {
            let v = data[y * n + x];
            if x >= 1 {
                col += (v - data[y * n + x - 1]).powi(2);
            }
            if y >= 1 {
                row += (v - data[(y - 1) * n + x]).powi(2);
            }
        }
    }
    let norm = (n * n) as f64;
    let cf = (col / norm).sqrt();
    let rf = (row / norm).sqrt();
    SpatialFrequency {
        cf,
        rf,
        sf: cf.hypot(rf),
    }
}

/// Grid-mean spatial frequency. Summed in patch order.
pub fn sf_threshold(stats: &[SpatialFrequency]) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::Degenerate("spatial-frequency threshold of an empty grid".into()));
    }
    Ok(stats.iter().map(|s| s.sf).sum::<f64>() / stats.len() as f64)
}

pub fn spatial_freq_stats(per_patch: Vec<SpatialFrequency>) -> Result<SpatialFreqStats> {
    let epsilon = sf_threshold(&per_patch)?;
    Ok(SpatialFreqStats { per_patch, epsilon })
}

/// Masking weight: 1 at or below the threshold, `1 + (|sf| − ε)^γ / N` above.
pub fn mask_weight(sf: f64, epsilon: f64, n: usize, gamma: f64) -> f64 {
    let a = sf.abs();
    if a <= epsilon {
        1.0
    } else {
        1.0 + (a - epsilon).powf(gamma) / n as f64
    }
}

pub fn mask_weights(stats: &SpatialFreqStats, n: usize, gamma: f64) -> Result<MaskWeights> {
    if n == 0 || !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mask weight needs N >= 1 and gamma > 0 (N={n}, gamma={gamma})"
        )));
    }
    Ok(MaskWeights {
        w: stats
            .per_patch
            .iter()
            .map(|s| mask_weight(s.sf, stats.epsilon, n, gamma))
            .collect(),
        gamma,
    })
}

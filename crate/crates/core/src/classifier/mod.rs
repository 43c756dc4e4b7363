//! Patch classification: the dual-branch network, its training loop, the
//! weight container, and a training-free baseline rule.

mod baseline;
mod container;
mod net;
mod train;

use rand::Rng as _;
use rayon::prelude::*;

pub use baseline::{baseline_predict, BaselineConfig};
pub use container::{load_params, params_from_bytes, params_to_bytes, save_params};
pub use net::{Activation, Architecture, Branch, ConvLayer, Dense, DualNetParams, ModelMeta, Scalar};
pub(crate) use train::validate_split;
pub use train::{evaluate, train, train_split, EpochStats, TrainConfig, TrainReport, Trained};

use crate::error::{Error, Result};
use crate::freq::{pws_lfm, sobel_hfm, FreqConfig, HighFreqMap, LowFreqMap};
use crate::imgcore::{to_luma, Label, PatchLabel, PlanarImage};
use crate::rng::Rng;

/// Frequency maps of one patch with its ground-truth label.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSample {
    pub hfm: HighFreqMap,
    pub lfm: LowFreqMap,
    pub label: PatchLabel,
}

impl PatchSample {
    pub fn new(hfm: HighFreqMap, lfm: LowFreqMap, label: Label) -> Result<Self> {
        if (hfm.width, hfm.height) != (lfm.width, lfm.height) || hfm.width != hfm.height {
            return Err(Error::Dimensions(format!(
                "HFM {}x{} and LFM {}x{} must be equal squares",
                hfm.width, hfm.height, lfm.width, lfm.height
            )));
        }
        Ok(Self {
            hfm,
            lfm,
            label: PatchLabel::ground_truth(label),
        })
    }

    pub fn patch_size(&self) -> usize {
        self.hfm.width
    }

    pub fn target(&self) -> f32 {
        if self.label.value.is_banded() {
            1.0
        } else {
            0.0
        }
    }
}

fn check_inputs<T: Scalar>(params: &DualNetParams<T>, hfm: &HighFreqMap, lfm: &LowFreqMap) -> Result<()> {
    let n = params.meta.patch_size;
    for (what, w, h) in [("HFM", hfm.width, hfm.height), ("LFM", lfm.width, lfm.height)] {
        if (w, h) != (n, n) {
            return Err(Error::Dimensions(format!(
                "{what} is {w}x{h}, model expects {n}x{n}"
            )));
        }
    }
    Ok(())
}

/// Probability that the patch is banded.
pub fn forward<T: Scalar>(params: &DualNetParams<T>, hfm: &HighFreqMap, lfm: &LowFreqMap) -> Result<f64> {
    check_inputs(params, hfm, lfm)?;
    if !params.all_finite() {
        return Err(Error::NonFinite("model weights".into()));
    }
    Ok(forward_unchecked(params, &hfm.values, &lfm.values))
}

pub(crate) fn forward_unchecked<T: Scalar>(params: &DualNetParams<T>, hfm: &[f32], lfm: &[f32]) -> f64 {
    let cache = net::forward_cached(params, &net::to_scalar::<T>(hfm), &net::to_scalar::<T>(lfm));
    net::sigmoid(cache.logit).to_f64().unwrap_or(f64::NAN)
}

/// Batched [`forward`], evaluated in parallel; output order follows input.
pub fn forward_batch<T: Scalar>(
    params: &DualNetParams<T>,
    inputs: &[(&HighFreqMap, &LowFreqMap)],
) -> Result<Vec<f64>> {
    if !params.all_finite() {
        return Err(Error::NonFinite("model weights".into()));
    }
    for (h, l) in inputs {
        check_inputs(params, h, l)?;
    }
    Ok(inputs
        .par_iter()
        .map(|(h, l)| forward_unchecked(params, &h.values, &l.values))
        .collect())
}

/// BCE loss and its gradient with respect to every parameter, for one sample.
pub fn loss_and_gradient<T: Scalar>(
    params: &DualNetParams<T>,
    hfm: &HighFreqMap,
    lfm: &LowFreqMap,
    banded: bool,
) -> Result<(f64, DualNetParams<T>)> {
    check_inputs(params, hfm, lfm)?;
    let cache = net::forward_cached(params, &net::to_scalar::<T>(&hfm.values), &net::to_scalar::<T>(&lfm.values));
    let mut grads = params.zeros_like();
    let target = if banded { T::one() } else { T::zero() };
    let loss = net::backward(params, &cache, target, &mut grads);
    Ok((loss.to_f64().unwrap_or(f64::NAN), grads))
}

/// On/off state of every ReLU unit for one input. Two parameter settings
/// with the same pattern lie in the same linear region of the network.
pub fn relu_pattern<T: Scalar>(params: &DualNetParams<T>, hfm: &HighFreqMap, lfm: &LowFreqMap) -> Result<Vec<bool>> {
    check_inputs(params, hfm, lfm)?;
    let cache = net::forward_cached(params, &net::to_scalar::<T>(&hfm.values), &net::to_scalar::<T>(&lfm.values));
    Ok(cache.active_units())
}

/// Thresholds a banding probability at 0.5; a tie is non-banded.
pub fn label_from_probability(p: f64) -> PatchLabel {
    let value = if p > 0.5 { Label::Banded } else { Label::NonBanded };
    PatchLabel::predicted(value, p.max(1.0 - p))
}

/// Classifies a patch from precomputed frequency maps.
pub fn predict_maps(params: &DualNetParams, hfm: &HighFreqMap, lfm: &LowFreqMap) -> Result<PatchLabel> {
    forward(params, hfm, lfm).map(label_from_probability)
}

/// Classifies a raw patch; frequency maps are computed on its luma.
pub fn predict(params: &DualNetParams, patch: &PlanarImage, freq: &FreqConfig) -> Result<PatchLabel> {
    let n = params.meta.patch_size;
    if (patch.width(), patch.height()) != (n, n) {
        return Err(Error::Dimensions(format!(
            "patch is {}x{}, model expects {n}x{n}",
            patch.width(),
            patch.height()
        )));
    }
    let luma = to_luma(patch);
    let hfm = sobel_hfm(&luma)?;
    let lfm = pws_lfm(&luma, &freq.pws)?;
    predict_maps(params, &hfm, &lfm)
}

/// Linearly separable toy set: banded samples carry vertical stripes in the
/// HFM, non-banded samples an all-zero HFM. Both use a flat random LFM.
pub fn toy_separable_set(n: usize, patch_size: usize, rng: &mut Rng) -> Vec<PatchSample> {
    (0..n)
        .map(|i| {
            let banded = i % 2 == 0;
            let level: f32 = rng.random_range(0.2..0.8);
            let lfm = LowFreqMap {
                width: patch_size,
                height: patch_size,
                values: vec![level; patch_size * patch_size],
            };
            let values = if banded {
                let period = rng.random_range(4..=8usize);
                let phase = rng.random_range(0..period);
                let amp: f32 = rng.random_range(0.2..0.6);
                (0..patch_size * patch_size)
                    .map(|p| {
                        let x = p % patch_size;
                        if (x + phase).is_multiple_of(period) {
                            amp
                        } else {
                            0.0
                        }
                    })
                    .collect()
            } else {
                vec![0.0; patch_size * patch_size]
            };
            let hfm = HighFreqMap {
                width: patch_size,
                height: patch_size,
                values,
            };
            let label = if banded { Label::Banded } else { Label::NonBanded };
            PatchSample::new(hfm, lfm, label).expect("square maps")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn small_arch(n: usize) -> Architecture {
        Architecture {
            patch_size: n,
            widths: vec![2, 3, 4],
            hidden: 6,
        }
    }

    fn maps(n: usize, f: impl Fn(usize) -> f32, g: impl Fn(usize) -> f32) -> (HighFreqMap, LowFreqMap) {
        (
            HighFreqMap { width: n, height: n, values: (0..n * n).map(f).collect() },
            LowFreqMap { width: n, height: n, values: (0..n * n).map(g).collect() },
        )
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let mut p: DualNetParams = DualNetParams::init(&small_arch(8), &mut substream(1, "t"));
        p = p.zeros_like();
        let (h, l) = maps(8, |i| i as f32 / 64.0, |_| 0.3);
        assert_eq!(forward(&p, &h, &l).unwrap(), 0.5);
        assert_eq!(predict_maps(&p, &h, &l).unwrap().value, Label::NonBanded);
    }

    #[test]
    fn head_bias_only() {
        let mut p: DualNetParams = DualNetParams::init(&small_arch(8), &mut substream(1, "t")).zeros_like();
        p.output.bias[0] = 10.0;
        let (h, l) = maps(8, |i| (i % 3) as f32, |_| 0.3);
        let prob = forward(&p, &h, &l).unwrap();
        assert!((prob - 1.0 / (1.0 + (-10.0f64).exp())).abs() < 1e-7);
        let lab = label_from_probability(prob);
        assert_eq!(lab.value, Label::Banded);
        assert!((lab.confidence - prob).abs() < 1e-12);
    }

    #[test]
    fn tie_is_non_banded() {
        let lab = label_from_probability(0.5);
        assert_eq!(lab.value, Label::NonBanded);
        assert_eq!(lab.confidence, 0.5);
    }

    #[test]
    fn batch_matches_single() {
        let p: DualNetParams = DualNetParams::init(&Architecture { patch_size: 16, ..Default::default() }, &mut substream(3, "t"));
        let samples = toy_separable_set(6, 16, &mut substream(4, "toy"));
        let inputs: Vec<_> = samples.iter().map(|s| (&s.hfm, &s.lfm)).collect();
        let batch = forward_batch(&p, &inputs).unwrap();
        for (s, b) in samples.iter().zip(batch) {
            assert!((forward(&p, &s.hfm, &s.lfm).unwrap() - b).abs() < 1e-6);
        }
    }

    #[test]
    fn dimension_and_finiteness_checked() {
        let mut p: DualNetParams = DualNetParams::init(&small_arch(8), &mut substream(1, "t"));
        let (h, l) = maps(9, |_| 0.0, |_| 0.0);
        assert!(matches!(forward(&p, &h, &l), Err(Error::Dimensions(_))));
        let (h, l) = maps(8, |_| 0.0, |_| 0.0);
        p.hidden.weights[0] = f32::NAN;
        assert!(matches!(forward(&p, &h, &l), Err(Error::NonFinite(_))));
    }

    #[test]
    fn branches_are_independent() {
        let p: DualNetParams = DualNetParams::init(&small_arch(12), &mut substream(9, "t"));
        assert_ne!(p.branch_h, p.branch_l);
        let (h, l) = maps(12, |i| ((i * 7) % 5) as f32 / 4.0, |i| (i % 12) as f32 / 12.0);
        let base = forward(&p, &h, &l).unwrap();

        let mut permuted = p.clone();
        permuted.branch_h.layers[0].weights.reverse();
        assert_ne!(forward(&permuted, &h, &l).unwrap(), base);

        let mut swapped = p.clone();
        std::mem::swap(&mut swapped.branch_h, &mut swapped.branch_l);
        assert_ne!(forward(&swapped, &h, &l).unwrap(), base);
    }

    #[test]
    fn architecture_contract() {
        let p: DualNetParams = DualNetParams::init(&Architecture::default(), &mut substream(1, "t"));
        assert_eq!(p.hidden.outputs, 128);
        assert_eq!(p.hidden.inputs, 2 * (8 + 32));
        assert_eq!(p.output.outputs, 1);
        let widths: Vec<_> = p.branch_h.layers.iter().map(|l| l.out_channels).collect();
        assert_eq!(widths, vec![8, 16, 32]);
        assert!(p.branch_h.layers.iter().all(|l| l.kernel == 3 && l.stride == 2 && l.activation == Activation::Relu));
    }
}

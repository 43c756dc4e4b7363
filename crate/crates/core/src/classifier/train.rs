use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{self, Architecture, DualNetParams};
use super::PatchSample;
use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_TRAIN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Train, validation and test fractions used by [`train`].
    pub split: [f64; 3],
    pub widths: Vec<usize>,
    pub hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        Self {
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 25,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            split: [0.8, 0.1, 0.1],
            widths: arch.widths,
            hidden: arch.hidden,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        validate_split(&self.split)?;
        if self.widths.is_empty() || self.widths.contains(&0) || self.hidden == 0 {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        Ok(())
    }
}

pub(crate) fn validate_split(split: &[f64; 3]) -> Result<()> {
    if split.iter().any(|f| !(0.0..=1.0).contains(f)) || (split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "split fractions {split:?} must be in [0, 1] and sum to 1"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy accumulated over the epoch's minibatches.
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Loss and accuracy on the held-out test portion, when one exists.
    pub test: Option<(f64, f64)>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_acc\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", e.epoch, e.train_loss, e.val_loss, e.val_acc);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn best(&self) -> &EpochStats {
        &self.epochs[self.best_epoch - 1]
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub params: DualNetParams,
    pub report: TrainReport,
}

/// Mean BCE loss and accuracy of `params` on `samples`.
pub fn evaluate(params: &DualNetParams, samples: &[PatchSample]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let stats: Vec<(f64, bool)> = samples
        .par_iter()
        .map(|s| {
            let cache = net::forward_cached(
                params,
                &net::to_scalar::<f32>(&s.hfm.values),
                &net::to_scalar::<f32>(&s.lfm.values),
            );
            let loss = f64::from(net::bce_with_logit(cache.logit, s.target()));
            let predicted = net::sigmoid(cache.logit) > 0.5;
            (loss, predicted == s.label.value.is_banded())
        })
        .collect();
    let n = stats.len() as f64;
    (
        stats.iter().map(|s| s.0).sum::<f64>() / n,
        stats.iter().filter(|s| s.1).count() as f64 / n,
    )
}

fn check_samples(samples: &[PatchSample], what: &str) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidParameter(format!("{what} set is empty")))?;
    let n = first.patch_size();
    if let Some(bad) = samples.iter().find(|s| s.patch_size() != n) {
        return Err(Error::Dimensions(format!(
            "{what} set mixes patch sizes {n} and {}",
            bad.patch_size()
        )));
    }
    Ok(n)
}

/// Splits `dataset` by `cfg.split` (shuffled by the seed) and trains.
pub fn train(dataset: &[PatchSample], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut substream(cfg.seed, "train/split"));
    let n = dataset.len() as f64;
    let n_train = (n * cfg.split[0]).round() as usize;
    let n_val = ((n * cfg.split[1]).round() as usize).min(dataset.len() - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset[i].clone()).collect::<Vec<_>>();
    let train_set = pick(&order[..n_train]);
    let val_set = pick(&order[n_train..n_train + n_val]);
    let test_set = pick(&order[n_train + n_val..]);
    let mut trained = train_split(&train_set, &val_set, cfg)?;
    if !test_set.is_empty() {
        trained.report.test = Some(evaluate(&trained.params, &test_set));
    }
    Ok(trained)
}

/// Trains on `train_set`, selecting the epoch with the best accuracy on
/// `val_set` (ties go to the lower validation loss). An empty validation
/// set falls back to the training set.
pub fn train_split(train_set: &[PatchSample], val_set: &[PatchSample], cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let patch_size = check_samples(train_set, "training")?;
    if !val_set.is_empty() && check_samples(val_set, "validation")? != patch_size {
        return Err(Error::Dimensions("validation patch size differs from training".into()));
    }
    let banded = train_set.iter().filter(|s| s.label.value.is_banded()).count();
    if banded == 0 || banded == train_set.len() {
        return Err(Error::InvalidParameter(
            "training set must contain both banded and non-banded patches".into(),
        ));
    }
    let val_set = if val_set.is_empty() { train_set } else { val_set };

    let arch = Architecture {
        patch_size,
        widths: cfg.widths.clone(),
        hidden: cfg.hidden,
    };
    let mut rng = substream(cfg.seed, STREAM_TRAIN);
    let mut params: DualNetParams = DualNetParams::init(&arch, &mut rng);
    params.meta.seed = cfg.seed;

    let mut adam = Adam::new(&params, cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(DualNetParams, usize, f64, f64)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample: Vec<(DualNetParams, f32, bool)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_set[i];
                    let cache = net::forward_cached(
                        &params,
                        &net::to_scalar::<f32>(&s.hfm.values),
                        &net::to_scalar::<f32>(&s.lfm.values),
                    );
                    let mut g = params.zeros_like();
                    let loss = net::backward(&params, &cache, s.target(), &mut g);
                    let hit = (net::sigmoid(cache.logit) > 0.5) == s.label.value.is_banded();
                    (g, loss, hit)
                })
                .collect();
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for (g, loss, hit) in &per_sample {
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss at epoch {epoch}, batch {b}"
                    )));
                }
                batch_loss += f64::from(*loss);
                correct += usize::from(*hit);
                for (acc, t) in grads.tensors_mut().into_iter().zip(g.tensors()) {
                    for (a, v) in acc.iter_mut().zip(t) {
                        *a += v;
                    }
                }
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f32;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|v| *v *= scale);
            }
            adam.step(&mut params, &grads);
            if !params.all_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite weights after epoch {epoch}, batch {b}"
                )));
            }
        }
        let (val_loss, val_acc) = evaluate(&params, val_set);
        if !val_loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite validation loss at epoch {epoch}")));
        }
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_loss,
            val_acc,
        });
        let improves = match &best {
            None => true,
            Some((_, _, acc, loss)) => val_acc > *acc || (val_acc == *acc && val_loss < *loss),
        };
        if improves {
            best = Some((params.clone(), epoch, val_acc, val_loss));
        }
    }

    let (mut params, best_epoch, _, _) = best.expect("at least one epoch");
    params.meta.epochs = best_epoch;
    Ok(Trained {
        params,
        report: TrainReport {
            epochs: history,
            best_epoch,
            test: None,
        },
    })
}

struct Adam {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    t: i32,
    m: DualNetParams,
    v: DualNetParams,
}

impl Adam {
    fn new(params: &DualNetParams, cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate as f32,
            beta1: cfg.adam_beta1 as f32,
            beta2: cfg.adam_beta2 as f32,
            eps: cfg.adam_eps as f32,
            t: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    fn step(&mut self, params: &mut DualNetParams, grads: &DualNetParams) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

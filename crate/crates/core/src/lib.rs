//! No-reference banding detection and banding quality scoring.
//!
//! An image is tiled into square patches. Each patch gets a high-frequency
//! map (Sobel magnitude) and a low-frequency map (piecewise-smooth fit), a
//! dual-branch classifier decides whether the patch is banded, and banded
//! patches contribute their spatial-frequency-weighted gradient magnitude to
//! a banding map. The map is pooled over its worst values into one score.

pub mod classifier;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod freq;
pub mod imgcore;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod sfmask;
pub mod stats;
pub mod subjective;

pub use error::{Error, Result};

pub use classifier::{DualNetParams, PatchSample, TrainConfig};
pub use freq::{FreqConfig, HighFreqMap, LowFreqMap, PwsConfig};
pub use imgcore::{load_image, save_image, Label, PatchGrid, PatchLabel, PlanarImage};
pub use pipeline::{score_image, Classifier, ScoreConfig, ScoredImage};
pub use scoring::{BandingMap, PoolMode, QualityScore};

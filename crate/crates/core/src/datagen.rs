//! Synthetic labelled banding data: smooth content quantized to reduced
//! bit depths, noise content that stays non-banded, and patch datasets
//! split by image.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::PatchSample;
use crate::error::{Error, Result};
use crate::freq::{pws_lfm, sobel_hfm, PwsConfig};
use crate::imgcore::{
    load_image, rgb_to_ycbcr420, save_image, to_luma, ycbcr420_to_rgb, Label, PatchGrid, PatchLabel, PlanarImage,
    SampleDepth,
};
use crate::rng::{indexed_substream, substream, Rng, STREAM_GEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Vertical 0→255 ramp, constant along each row.
    LinearRamp,
    /// Peak at the centre, lowest at the corners.
    RadialRamp,
    /// Smooth random field.
    SkyGradient,
    NoiseTexture,
    /// Upper half of the linear ramp above a noise texture.
    MixedScene,
}

impl SynthKind {
    pub const ALL: [SynthKind; 5] = [
        SynthKind::LinearRamp,
        SynthKind::RadialRamp,
        SynthKind::SkyGradient,
        SynthKind::NoiseTexture,
        SynthKind::MixedScene,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::LinearRamp => "linear_ramp",
            SynthKind::RadialRamp => "radial_ramp",
            SynthKind::SkyGradient => "sky_gradient",
            SynthKind::NoiseTexture => "noise_texture",
            SynthKind::MixedScene => "mixed_scene",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown image kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    /// Side length in pixels; images are square.
    pub size: usize,
    pub bit_depth: u8,
    /// Standard deviation of the noise kinds, in gray levels.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, size: usize, bit_depth: u8, seed: u64) -> Self {
        Self { kind, size, bit_depth, noise_sigma: 24.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=8).contains(&self.bit_depth) {
            return Err(Error::InvalidParameter(format!("bit depth {} outside 1..=8", self.bit_depth)));
        }
        if self.size < 8 {
            return Err(Error::Dimensions(format!("image size {} below 8", self.size)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise sigma {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// How the ground-truth banded mask is drawn on smooth content.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskRule {
    /// Deepest bit depth that still counts as banded.
    pub max_banded_depth: u8,
    /// A smooth pixel is banded only if a quantization contour lies within
    /// this Chebyshev distance. `0` disables the check.
    pub contour_radius: usize,
}

impl Default for MaskRule {
    fn default() -> Self {
        Self { max_banded_depth: 6, contour_radius: 32 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSample {
    pub image: PlanarImage,
    pub banded_mask: Vec<bool>,
    pub spec: SynthSpec,
}

impl GeneratedSample {
    pub fn mask_fraction(&self) -> f64 {
        self.banded_mask.iter().filter(|&&b| b).count() as f64 / self.banded_mask.len() as f64
    }
}

fn linear_ramp(size: usize) -> Vec<f64> {
    (0..size * size)
        .map(|i| 255.0 * (i / size) as f64 / (size - 1) as f64)
        .collect()
}

fn radial_ramp(size: usize) -> Vec<f64> {
    let c = (size - 1) as f64 / 2.0;
    // Falls to 0 at the corners unless that would need a slope of a full
    // gray level per pixel.
    let slope = (255.0 / (c * std::f64::consts::SQRT_2)).min(0.95);
    (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64, (i / size) as f64);
            255.0 - slope * (x - c).hypot(y - c)
        })
        .collect()
}

/// A tilted plane plus two low-frequency cosines, rescaled so that no
/// neighbouring pixels differ by a full gray level.
fn sky_gradient(size: usize, rng: &mut Rng) -> Vec<f64> {
    let s = size as f64;
    let tilt: f64 = rng.random_range(-0.5..0.5);
    let waves: Vec<(f64, f64, f64, f64)> = (0..2)
        .map(|_| {
            (
                rng.random_range(0.2..0.6),
                rng.random_range(0.3..1.2),
                rng.random_range(0.3..1.2),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let raw: Vec<f64> = (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 / s, (i / size) as f64 / s);
            let mut v = y + tilt * x;
            for &(a, fx, fy, ph) in &waves {
                v += a * (std::f64::consts::PI * (fx * x + fy * y) + ph).cos();
            }
            v
        })
        .collect();
    let (lo, hi) = raw.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let mut max_step: f64 = 0.0;
    for y in 0..size {
        for x in 0..size {
            let v = raw[y * size + x];
            if x + 1 < size {
                max_step = max_step.max((raw[y * size + x + 1] - v).abs());
            }
            if y + 1 < size {
                max_step = max_step.max((raw[(y + 1) * size + x] - v).abs());
            }
        }
    }
    let span = rng.random_range(120.0..240.0f64).min(0.95 / max_step * (hi - lo));
    let offset = rng.random_range(0.0..=255.0 - span);
    raw.iter().map(|v| offset + span * (v - lo) / (hi - lo)).collect()
}

/// Gaussian noise, lightly box-filtered so it reads as texture.
fn noise_texture(size: usize, sigma: f64, rng: &mut Rng) -> Vec<f64> {
    let mean = rng.random_range(64.0..192.0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let white: Vec<f64> = (0..size * size).map(|_| normal.sample(rng)).collect();
    let at = |x: isize, y: isize| {
        let (xc, yc) = (x.clamp(0, size as isize - 1), y.clamp(0, size as isize - 1));
        white[yc as usize * size + xc as usize]
    };
    // A 2x2 box average halves the standard deviation; the factor 2 restores it.
    (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as isize, (i / size) as isize);
            let avg = (at(x, y) + at(x + 1, y) + at(x, y + 1) + at(x + 1, y + 1)) / 4.0;
            mean + sigma * 2.0 * avg
        })
        .collect()
}

fn to_u8(field: &[f64]) -> Vec<u8> {
    field.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
}

/// Base field and its smooth-region mask.
fn base_with_smooth(spec: &SynthSpec) -> Result<(Vec<u8>, Vec<bool>)> {
    spec.validate()?;
    let n = spec.size;
    let mut rng = substream(spec.seed, "gen/base");
    Ok(match spec.kind {
        SynthKind::LinearRamp => (to_u8(&linear_ramp(n)), vec![true; n * n]),
        SynthKind::RadialRamp => (to_u8(&radial_ramp(n)), vec![true; n * n]),
        SynthKind::SkyGradient => (to_u8(&sky_gradient(n, &mut rng)), vec![true; n * n]),
        SynthKind::NoiseTexture => (to_u8(&noise_texture(n, spec.noise_sigma, &mut rng)), vec![false; n * n]),
        SynthKind::MixedScene => {
            let half = n / 2;
            let noise = noise_texture(n, spec.noise_sigma, &mut rng);
            let field: Vec<f64> = (0..n * n)
                .map(|i| {
                    let y = i / n;
                    if y < half {
                        255.0 * y as f64 / (n - 1) as f64
                    } else {
                        noise[i]
                    }
                })
                .collect();
            let smooth = (0..n * n).map(|i| i / n < half).collect();
            (to_u8(&field), smooth)
        }
    })
}

/// Unquantized 8-bit gray source image for `spec`.
pub fn gen_base(spec: &SynthSpec) -> Result<PlanarImage> {
    let (data, _) = base_with_smooth(spec)?;
    PlanarImage::gray_u8(spec.size, spec.size, data)
}

/// Reduces `v` to `d` bits and promotes it back to the middle of its level.
pub fn quantize_value(v: u8, d: u8) -> u8 {
    if d >= 8 {
        return v;
    }
    let shift = 8 - d;
    ((v >> shift) << shift) + (1 << (shift - 1))
}

/// Applies [`quantize_value`] to every sample of an 8-bit image.
pub fn quantize_bitdepth(img: &PlanarImage, d: u8) -> Result<PlanarImage> {
    if !(1..=8).contains(&d) {
        return Err(Error::InvalidParameter(format!("bit depth {d} outside 1..=8")));
    }
    if img.depth() != SampleDepth::U8 {
        return Err(Error::InvalidParameter("bit-depth reduction needs an 8-bit image".into()));
    }
    let planes = (0..img.channels())
        .map(|c| img.plane_u8(c).unwrap().iter().map(|&v| quantize_value(v, d)).collect())
        .collect();
    PlanarImage::from_u8(img.width(), img.height(), planes)
}

/// Quantizes luma and both 4:2:0 chroma planes.
pub fn quantize_ycbcr(img: &PlanarImage, d: u8) -> Result<PlanarImage> {
    let mut ycc = rgb_to_ycbcr420(img)?;
    for plane in [&mut ycc.y, &mut ycc.cb, &mut ycc.cr] {
        plane.iter_mut().for_each(|v| *v = quantize_value(*v, d));
    }
    ycbcr420_to_rgb(&ycc)
}

/// Pixels whose 4-neighbourhood contains a different value.
fn contour_pixels(data: &[u8], n: usize) -> Vec<bool> {
    (0..n * n)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            let v = data[i];
            (x > 0 && data[i - 1] != v)
                || (x + 1 < n && data[i + 1] != v)
                || (y > 0 && data[i - n] != v)
                || (y + 1 < n && data[i + n] != v)
        })
        .collect()
}

/// True where a contour pixel lies within Chebyshev distance `r`.
fn near_contour(contour: &[bool], n: usize, r: usize) -> Vec<bool> {
    let mut sat = vec![0u32; (n + 1) * (n + 1)];
    for y in 0..n {
        for x in 0..n {
            sat[(y + 1) * (n + 1) + x + 1] = u32::from(contour[y * n + x]) + sat[y * (n + 1) + x + 1]
                + sat[(y + 1) * (n + 1) + x]
                - sat[y * (n + 1) + x];
        }
    }
    (0..n * n)
        .map(|i| {
            let (x, y) = (i % n, i / n);
            let (x0, y0) = (x.saturating_sub(r), y.saturating_sub(r));
            let (x1, y1) = ((x + r + 1).min(n), (y + r + 1).min(n));
            sat[y1 * (n + 1) + x1] + sat[y0 * (n + 1) + x0] > sat[y0 * (n + 1) + x1] + sat[y1 * (n + 1) + x0]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleOptions {
    pub mask: MaskRule,
    /// Produce a tinted RGB image and quantize its YCbCr 4:2:0 planes.
    pub chroma: bool,
}

/// Tint applied to gray content in chroma mode.
fn tint(gray: &[u8]) -> Vec<Vec<u8>> {
    let r = gray.iter().map(|&v| (f64::from(v) * 0.55 + 20.0).round() as u8).collect();
    let g = gray.iter().map(|&v| (f64::from(v) * 0.75 + 30.0).round() as u8).collect();
    let b = gray.iter().map(|&v| (f64::from(v) * 0.60 + 100.0).round() as u8).collect();
    vec![r, g, b]
}

pub fn make_sample(spec: &SynthSpec, opts: &SampleOptions) -> Result<GeneratedSample> {
    let (base, smooth) = base_with_smooth(spec)?;
    let n = spec.size;
    let d = spec.bit_depth;
    let image = if opts.chroma {
        let rgb = PlanarImage::from_u8(n, n, tint(&base))?;
        if d == 8 { rgb } else { quantize_ycbcr(&rgb, d)? }
    } else {
        quantize_bitdepth(&PlanarImage::gray_u8(n, n, base)?, d)?
    };
    let banded_mask = if d > opts.mask.max_banded_depth || !smooth.iter().any(|&s| s) {
        vec![false; n * n]
    } else {
        let luma = to_luma(&image).to_u8();
        let levels = luma.plane_u8(0).unwrap();
        let near = if opts.mask.contour_radius == 0 {
            vec![true; n * n]
        } else {
            // Contours between smooth and textured content are not bands.
            let contour: Vec<bool> = contour_pixels(levels, n)
                .into_iter()
                .zip(&smooth)
                .map(|(c, &s)| c && s)
                .collect();
            near_contour(&contour, n, opts.mask.contour_radius)
        };
        smooth.iter().zip(near).map(|(&s, c)| s && c).collect()
    };
    Ok(GeneratedSample { image, banded_mask, spec: *spec })
}

/// Banded iff strictly more than 30% of the patch is inside the mask.
pub fn label_patches(sample: &GeneratedSample, grid: &PatchGrid) -> Result<Vec<PatchLabel>> {
    let w = sample.image.width();
    if (grid.image_width, grid.image_height) != (w, sample.image.height()) {
        return Err(Error::Misaligned("grid does not match the sample image".into()));
    }
    let n = grid.patch_size;
    Ok(grid
        .patches
        .iter()
        .map(|&(x, y)| {
            let inside: usize = (y..y + n)
                .map(|row| sample.banded_mask[row * w + x..row * w + x + n].iter().filter(|&&b| b).count())
                .sum();
            let banded = inside * 10 > n * n * 3;
            PatchLabel::ground_truth(if banded { Label::Banded } else { Label::NonBanded })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_images: usize,
    pub seed: u64,
    pub split: [f64; 3],
    pub image_size: usize,
    pub patch_size: usize,
    pub depths: Vec<u8>,
    /// Image kinds, used in rotation.
    pub kinds: Vec<SynthKind>,
    pub noise_sigma: f64,
    pub options: SampleOptions,
    pub pws: PwsConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_images: 10,
            seed: 0,
            split: [0.8, 0.1, 0.1],
            image_size: 256,
            patch_size: 64,
            depths: vec![2, 3, 4, 5, 6, 7],
            kinds: SynthKind::ALL.to_vec(),
            noise_sigma: 24.0,
            options: SampleOptions::default(),
            pws: PwsConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        crate::classifier::validate_split(&self.split)?;
        if self.n_images < 10 {
            return Err(Error::InvalidParameter(format!("need at least 10 images, got {}", self.n_images)));
        }
        if self.depths.is_empty() || self.depths.iter().any(|d| !(1..=8).contains(d)) {
            return Err(Error::InvalidParameter(format!("bit depths {:?}", self.depths)));
        }
        if self.kinds.is_empty() {
            return Err(Error::InvalidParameter("no image kinds".into()));
        }
        if self.patch_size > self.image_size {
            return Err(Error::Dimensions(format!(
                "patch size {} exceeds image size {}",
                self.patch_size, self.image_size
            )));
        }
        self.pws.validate()
    }

    /// Spec of image `i`: kind by rotation, depth drawn from the image's stream.
    pub fn spec_for(&self, i: usize) -> SynthSpec {
        let mut rng = indexed_substream(self.seed, STREAM_GEN, i as u64);
        let bit_depth = self.depths[rng.random_range(0..self.depths.len())];
        SynthSpec {
            kind: self.kinds[i % self.kinds.len()],
            size: self.image_size,
            bit_depth,
            noise_sigma: self.noise_sigma,
            seed: rng.random(),
        }
    }
}

/// One manifest row: a patch of a stored image.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_path: String,
    pub patch_x: usize,
    pub patch_y: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub label: String,
    pub split: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Vec<GeneratedSample>,
    /// Split of each image.
    pub image_split: Vec<Split>,
    pub manifest: Vec<ManifestRow>,
    pub train: Vec<PatchSample>,
    pub val: Vec<PatchSample>,
    pub test: Vec<PatchSample>,
}

impl Dataset {
    pub fn banded_fraction(&self) -> f64 {
        let all = self.train.iter().chain(&self.val).chain(&self.test);
        let (b, n) = all.fold((0, 0), |(b, n), s| (b + usize::from(s.label.value.is_banded()), n + 1));
        b as f64 / n as f64
    }

    pub fn manifest_csv(&self) -> String {
        manifest_to_csv(&self.manifest)
    }

    /// Writes every image as PNG plus `manifest.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, s) in self.images.iter().enumerate() {
            save_image(&s.image, dir.join(image_name(i)))?;
        }
        let path = dir.join("manifest.csv");
        std::fs::write(&path, self.manifest_csv()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn image_name(i: usize) -> String {
    format!("img_{i:05}.png")
}

pub fn manifest_to_csv(rows: &[ManifestRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory CSV write");
    }
    String::from_utf8(w.into_inner().expect("in-memory CSV flush")).expect("UTF-8 CSV")
}

/// Image counts per split, rounded, with the remainder going to test.
pub fn split_counts(n: usize, split: &[f64; 3]) -> [usize; 3] {
    let train = ((n as f64 * split[0]).round() as usize).min(n);
    let val = ((n as f64 * split[1]).round() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Frequency maps of one luma patch.
pub fn patch_sample(luma_patch: &PlanarImage, label: Label, pws: &PwsConfig) -> Result<PatchSample> {
    PatchSample::new(sobel_hfm(luma_patch)?, pws_lfm(luma_patch, pws)?, label)
}

pub fn make_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.validate()?;
    let images: Vec<GeneratedSample> = (0..cfg.n_images)
        .into_par_iter()
        .map(|i| make_sample(&cfg.spec_for(i), &cfg.options))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..cfg.n_images).collect();
    order.shuffle(&mut substream(cfg.seed, "gen/split"));
    let [n_train, n_val, _] = split_counts(cfg.n_images, &cfg.split);
    let mut image_split = vec![Split::Test; cfg.n_images];
    for (rank, &i) in order.iter().enumerate() {
        image_split[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }

    let per_image: Vec<Vec<(ManifestRow, PatchSample)>> = images
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let grid = PatchGrid::new(cfg.image_size, cfg.image_size, cfg.patch_size)?;
            let labels = label_patches(sample, &grid)?;
            let luma = to_luma(&sample.image);
            grid.patches
                .iter()
                .zip(labels)
                .map(|(&(x, y), label)| {
                    let patch = luma.crop(x, y, cfg.patch_size, cfg.patch_size)?;
                    let row = ManifestRow {
                        image_path: image_name(i),
                        patch_x: x,
                        patch_y: y,
                        n: cfg.patch_size,
                        label: label.value.as_str().to_string(),
                        split: image_split[i].as_str().to_string(),
                    };
                    Ok((row, patch_sample(&patch, label.value, &cfg.pws)?))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let mut ds = Dataset {
        images,
        image_split: image_split.clone(),
        manifest: Vec::new(),
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (i, rows) in per_image.into_iter().enumerate() {
        for (row, sample) in rows {
            ds.manifest.push(row);
            match image_split[i] {
                Split::Train => ds.train.push(sample),
                Split::Val => ds.val.push(sample),
                Split::Test => ds.test.push(sample),
            }
        }
    }
    Ok(ds)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let file = path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(&file, e))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<ManifestRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| Error::Parse { file: file.clone(), line, message: e.to_string() })?;
        let bad = |message: String| Error::Parse { file: file.clone(), line, message };
        if Label::parse(&row.label).is_none() {
            return Err(bad(format!("unknown label {:?}", row.label)));
        }
        if Split::parse(&row.split).is_none() {
            return Err(bad(format!("unknown split {:?}", row.split)));
        }
        if row.n == 0 {
            return Err(bad("patch size 0".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub(crate) fn csv_error(file: &str, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(file, io),
        other => Error::Parse { file: file.to_string(), line, message: format!("{other:?}") },
    }
}

/// Patch samples of a stored manifest, grouped by split. Image paths are
/// relative to the manifest's directory.
pub fn load_manifest_samples(
    path: impl AsRef<Path>,
    pws: &PwsConfig,
) -> Result<[Vec<PatchSample>; 3]> {
    let path = path.as_ref();
    let rows = read_manifest(path)?;
    let root = path.parent().unwrap_or(Path::new("."));
    let mut lumas = std::collections::BTreeMap::new();
    for r in &rows {
        if !lumas.contains_key(&r.image_path) {
            lumas.insert(r.image_path.clone(), to_luma(&load_image(root.join(&r.image_path))?));
        }
    }
    let samples: Vec<(Split, PatchSample)> = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let patch = lumas[&r.image_path].crop(r.patch_x, r.patch_y, r.n, r.n).map_err(|e| Error::Parse {
                file: path.display().to_string(),
                line: i + 2,
                message: e.to_string(),
            })?;
            let label = Label::parse(&r.label).expect("validated");
            Ok((Split::parse(&r.split).expect("validated"), patch_sample(&patch, label, pws)?))
        })
        .collect::<Result<_>>()?;
    let mut out: [Vec<PatchSample>; 3] = Default::default();
    for (split, s) in samples {
        out[split as usize].push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(kind: SynthKind, d: u8) -> SynthSpec {
        SynthSpec::new(kind, 256, d, 11)
    }

    #[test]
    fn linear_ramp_is_row_constant_full_range() {
        let img = gen_base(&spec(SynthKind::LinearRamp, 8)).unwrap();
        let p = img.plane_u8(0).unwrap();
        for row in p.chunks(256) {
            assert!(row.iter().all(|&v| v == row[0]));
        }
        assert_eq!(p.iter().min(), Some(&0));
        assert_eq!(p.iter().max(), Some(&255));
    }

    #[test]
    fn radial_ramp_peaks_at_centre() {
        for size in [65, 256, 601] {
            let img = gen_base(&SynthSpec::new(SynthKind::RadialRamp, size, 8, 0)).unwrap();
            let p = img.plane_u8(0).unwrap();
            let (lo, hi) = (*p.iter().min().unwrap(), *p.iter().max().unwrap());
            assert_eq!(p[size / 2 * size + size / 2], hi);
            for c in [0, size - 1, (size - 1) * size, size * size - 1] {
                assert_eq!(p[c], lo);
            }
        }
        // Large enough to reach 0: 255 / 0.95 ≈ 268 px from centre to corner.
        let p = gen_base(&SynthSpec::new(SynthKind::RadialRamp, 601, 8, 0)).unwrap();
        assert_eq!(p.plane_u8(0).unwrap()[0], 0);
    }

    #[test]
    fn smooth_bases_step_less_than_a_level() {
        for kind in [SynthKind::LinearRamp, SynthKind::RadialRamp, SynthKind::SkyGradient] {
            for seed in 0..4 {
                let (b, _) = base_with_smooth(&SynthSpec::new(kind, 256, 8, seed)).unwrap();
                for y in 0..256 {
                    for x in 0..255 {
                        assert!(b[y * 256 + x].abs_diff(b[y * 256 + x + 1]) <= 1, "{kind}");
                        assert!(b[x * 256 + y].abs_diff(b[(x + 1) * 256 + y]) <= 1, "{kind}");
                    }
                }
            }
        }
    }

    #[test]
    fn same_seed_same_image() {
        for kind in SynthKind::ALL {
            assert_eq!(gen_base(&spec(kind, 8)).unwrap(), gen_base(&spec(kind, 8)).unwrap());
        }
        let a = gen_base(&SynthSpec::new(SynthKind::SkyGradient, 64, 8, 1)).unwrap();
        let b = gen_base(&SynthSpec::new(SynthKind::SkyGradient, 64, 8, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn quantization_spot_values() {
        assert_eq!(quantize_value(200, 4), 200);
        assert_eq!(quantize_value(0, 1), 64);
        assert_eq!(quantize_value(255, 1), 192);
        for v in 0..=255 {
            assert_eq!(quantize_value(v, 8), v);
        }
        let ramp = gen_base(&spec(SynthKind::LinearRamp, 8)).unwrap();
        let q = quantize_bitdepth(&ramp, 3).unwrap();
        let distinct: std::collections::BTreeSet<_> = q.plane_u8(0).unwrap().iter().collect();
        assert_eq!(distinct.len(), 8);
        assert_eq!(quantize_bitdepth(&ramp, 8).unwrap(), ramp);
    }

    #[test]
    fn mask_rules() {
        let opts = SampleOptions::default();
        let noise = make_sample(&spec(SynthKind::NoiseTexture, 3), &opts).unwrap();
        assert!(noise.banded_mask.iter().all(|&b| !b));
        let ramp = make_sample(&spec(SynthKind::LinearRamp, 4), &opts).unwrap();
        assert!(ramp.mask_fraction() > 0.9);
        let fine = make_sample(&spec(SynthKind::LinearRamp, 7), &opts).unwrap();
        assert_eq!(fine.mask_fraction(), 0.0);
        let mixed = make_sample(&spec(SynthKind::MixedScene, 4), &opts).unwrap();
        let lower = &mixed.banded_mask[128 * 256..];
        assert!(lower.iter().all(|&b| !b));
        assert!(mixed.banded_mask[..128 * 256].iter().filter(|&&b| b).count() > 128 * 256 * 9 / 10);
    }

    #[test]
    fn chroma_mode_quantizes_rgb() {
        let opts = SampleOptions { chroma: true, ..Default::default() };
        let s = make_sample(&spec(SynthKind::LinearRamp, 4), &opts).unwrap();
        assert_eq!(s.image.channels(), 3);
        assert!(s.mask_fraction() > 0.9);
    }

    fn with_mask(n: usize, count: usize) -> GeneratedSample {
        let mut banded_mask = vec![false; n * n];
        banded_mask[..count].iter_mut().for_each(|b| *b = true);
        GeneratedSample {
            image: PlanarImage::gray_u8(n, n, vec![0; n * n]).unwrap(),
            banded_mask,
            spec: SynthSpec::new(SynthKind::LinearRamp, n, 8, 0),
        }
    }

    #[test]
    fn thirty_percent_boundary() {
        let grid = PatchGrid::new(10, 10, 10).unwrap();
        assert_eq!(label_patches(&with_mask(10, 0), &grid).unwrap()[0].value, Label::NonBanded);
        assert_eq!(label_patches(&with_mask(10, 30), &grid).unwrap()[0].value, Label::NonBanded);
        assert_eq!(label_patches(&with_mask(10, 31), &grid).unwrap()[0].value, Label::Banded);
    }

    #[test]
    fn split_counts_round() {
        assert_eq!(split_counts(10, &[0.8, 0.1, 0.1]), [8, 1, 1]);
        assert_eq!(split_counts(125, &[0.8, 0.1, 0.1]), [100, 13, 12]);
    }

    #[test]
    fn dataset_is_reproducible_and_leak_free() {
        let cfg = DatasetConfig { n_images: 10, seed: 7, image_size: 64, patch_size: 32, ..Default::default() };
        let a = make_dataset(&cfg).unwrap();
        let b = make_dataset(&cfg).unwrap();
        assert_eq!(a.manifest_csv(), b.manifest_csv());
        let per_split = |s: Split| a.image_split.iter().filter(|&&x| x == s).count();
        assert_eq!((per_split(Split::Train), per_split(Split::Val), per_split(Split::Test)), (8, 1, 1));
        let mut seen = std::collections::HashMap::new();
        for r in &a.manifest {
            let prev = seen.insert((r.image_path.clone(), r.patch_x, r.patch_y), r.split.clone());
            assert!(prev.is_none());
        }
        let by_image: std::collections::HashMap<_, _> =
            a.manifest.iter().map(|r| (r.image_path.clone(), r.split.clone())).collect();
        assert!(a.manifest.iter().all(|r| by_image[&r.image_path] == r.split));
        assert_eq!(a.train.len() + a.val.len() + a.test.len(), 40);
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let cfg = DatasetConfig { n_images: 10, seed: 3, image_size: 32, patch_size: 16, ..Default::default() };
        let ds = make_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = ds.write(dir.path()).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), ds.manifest);
        let [train, val, test] = load_manifest_samples(&path, &cfg.pws).unwrap();
        assert_eq!(train, ds.train);
        assert_eq!((val, test), (ds.val.clone(), ds.test.clone()));

        let bad = dir.path().join("bad.csv");
        let mut text = ds.manifest_csv();
        text.push_str("img_00000.png,0,0,16,striped,train\n");
        std::fs::write(&bad, text).unwrap();
        match read_manifest(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, ds.manifest.len() + 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_dataset_is_roughly_balanced() {
        let cfg = DatasetConfig { n_images: 30, seed: 1, ..Default::default() };
        let specs: Vec<_> = (0..cfg.n_images).map(|i| cfg.spec_for(i)).collect();
        let mut banded = 0;
        let mut total = 0;
        for s in &specs {
            let sample = make_sample(s, &cfg.options).unwrap();
            let grid = PatchGrid::new(256, 256, 64).unwrap();
            let labels = label_patches(&sample, &grid).unwrap();
            banded += labels.iter().filter(|l| l.value.is_banded()).count();
            total += labels.len();
        }
        let frac = banded as f64 / total as f64;
        assert!((0.35..=0.65).contains(&frac), "{frac}");
    }

    proptest! {
        #[test]
        fn quantization_idempotent_and_bounded(v in 0u8..=255, d in 1u8..=8) {
            let q = quantize_value(v, d);
            prop_assert_eq!(quantize_value(q, d), q);
            let bound = if d == 8 { 0.0 } else { f64::from(1u32 << (7 - d)) };
            prop_assert!((f64::from(q) - f64::from(v)).abs() <= bound);
        }
    }
}

//! Planar image representation, raster I/O, color conversion and patch tiling.

use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f32; 3] = [0.299, 0.587, 0.114];

/// Smallest patch edge accepted by [`tile`].
pub const MIN_PATCH_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleDepth {
    U8,
    F32,
}

#[derive(Clone, Debug, PartialEq)]
enum Planes {
    U8(Vec<Vec<u8>>),
    F32(Vec<Vec<f32>>),
}

/// A decoded raster stored as one row-major plane per channel.
///
/// 8-bit samples cover the full `0..=255` range; float samples are
/// normalized to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanarImage {
    width: usize,
    height: usize,
    planes: Planes,
}

fn check_shape<T>(width: usize, height: usize, planes: &[Vec<T>]) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimensions(format!("{width}x{height} image")));
    }
    if planes.len() != 1 && planes.len() != 3 {
        return Err(Error::Dimensions(format!(
            "{} channels, expected 1 or 3",
            planes.len()
        )));
    }
    for (c, p) in planes.iter().enumerate() {
        if p.len() != width * height {
            return Err(Error::Dimensions(format!(
                "plane {c} holds {} samples, expected {}",
                p.len(),
                width * height
            )));
        }
    }
    Ok(())
}

impl PlanarImage {
    pub fn from_u8(width: usize, height: usize, planes: Vec<Vec<u8>>) -> Result<Self> {
        check_shape(width, height, &planes)?;
        Ok(Self {
            width,
            height,
            planes: Planes::U8(planes),
        })
    }

    pub fn from_f32(width: usize, height: usize, planes: Vec<Vec<f32>>) -> Result<Self> {
        check_shape(width, height, &planes)?;
        for p in &planes {
            if let Some(v) = p.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("float sample {v}")));
            }
            if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidParameter(format!(
                    "float sample {v} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            width,
            height,
            planes: Planes::F32(planes),
        })
    }

    /// Single-channel 8-bit image.
    pub fn gray_u8(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        Self::from_u8(width, height, vec![data])
    }

    /// Single-channel float image.
    pub fn gray_f32(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::from_f32(width, height, vec![data])
    }

    /// 3-channel 8-bit image from interleaved RGB bytes.
    pub fn from_rgb_interleaved(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::Dimensions(format!(
                "{} interleaved bytes for {width}x{height} RGB",
                rgb.len()
            )));
        }
        let mut planes = [(); 3].map(|_| Vec::with_capacity(width * height)).to_vec();
        for px in rgb.chunks_exact(3) {
            for c in 0..3 {
                planes[c].push(px[c]);
            }
        }
        Self::from_u8(width, height, planes)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        match &self.planes {
            Planes::U8(p) => p.len(),
            Planes::F32(p) => p.len(),
        }
    }

    pub fn depth(&self) -> SampleDepth {
        match self.planes {
            Planes::U8(_) => SampleDepth::U8,
            Planes::F32(_) => SampleDepth::F32,
        }
    }

    pub fn plane_u8(&self, c: usize) -> Option<&[u8]> {
        match &self.planes {
            Planes::U8(p) => p.get(c).map(Vec::as_slice),
            Planes::F32(_) => None,
        }
    }

    pub fn plane_f32(&self, c: usize) -> Option<&[f32]> {
        match &self.planes {
            Planes::F32(p) => p.get(c).map(Vec::as_slice),
            Planes::U8(_) => None,
        }
    }

    /// Sample at `(x, y)` of channel `c`, normalized to `[0, 1]`.
    pub fn sample(&self, c: usize, x: usize, y: usize) -> f32 {
        let i = y * self.width + x;
        match &self.planes {
            Planes::U8(p) => f32::from(p[c][i]) / 255.0,
            Planes::F32(p) => p[c][i],
        }
    }

    /// Copy of the `w`×`h` region at `(x, y)`; depth and channels are kept.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::Dimensions(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        fn cut<T: Copy>(src: &[T], stride: usize, x: usize, y: usize, w: usize, h: usize) -> Vec<T> {
            let mut out = Vec::with_capacity(w * h);
            for row in y..y + h {
                out.extend_from_slice(&src[row * stride + x..row * stride + x + w]);
            }
            out
        }
        let planes = match &self.planes {
            Planes::U8(p) => Planes::U8(p.iter().map(|s| cut(s, self.width, x, y, w, h)).collect()),
            Planes::F32(p) => {
                Planes::F32(p.iter().map(|s| cut(s, self.width, x, y, w, h)).collect())
            }
        };
        Ok(Self {
            width: w,
            height: h,
            planes,
        })
    }

    /// Float copy with 8-bit samples divided by 255.
    pub fn to_f32(&self) -> Self {
        match &self.planes {
            Planes::F32(_) => self.clone(),
            Planes::U8(p) => Self {
                width: self.width,
                height: self.height,
                planes: Planes::F32(
                    p.iter()
                        .map(|s| s.iter().map(|&v| f32::from(v) / 255.0).collect())
                        .collect(),
                ),
            },
        }
    }

    /// 8-bit copy; float samples are rounded from `v * 255`.
    pub fn to_u8(&self) -> Self {
        match &self.planes {
            Planes::U8(_) => self.clone(),
            Planes::F32(p) => Self {
                width: self.width,
                height: self.height,
                planes: Planes::U8(
                    p.iter()
                        .map(|s| s.iter().map(|&v| float_to_u8(v)).collect())
                        .collect(),
                ),
            },
        }
    }

    fn interleaved_u8(&self) -> Vec<u8> {
        let img = self.to_u8();
        let Planes::U8(p) = &img.planes else {
            unreachable!()
        };
        if p.len() == 1 {
            return p[0].clone();
        }
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for ((&r, &g), &b) in p[0].iter().zip(&p[1]).zip(&p[2]) {
            out.extend([r, g, b]);
        }
        out
    }
}

fn float_to_u8(v: f32) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::UnsupportedFormat(format!(
            "{}: expected .png, .pgm, .ppm or .pnm",
            path.display()
        ))),
    }
}

/// Decodes a PNG or binary PGM/PPM file. Alpha channels are dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: {other:?}",
                path.display()
            )))
        }
        None => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: unrecognized content",
                path.display()
            )))
        }
    }
    let decoded = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => Error::UnsupportedFormat(u.to_string()),
        other => Error::Decode(format!("{}: {other}", path.display())),
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(buf) => PlanarImage::gray_u8(w, h, buf.into_raw()),
        DynamicImage::ImageLumaA8(_) => PlanarImage::gray_u8(w, h, decoded.to_luma8().into_raw()),
        DynamicImage::ImageRgb8(buf) => PlanarImage::from_rgb_interleaved(w, h, buf.as_raw()),
        DynamicImage::ImageRgba8(_) => {
            PlanarImage::from_rgb_interleaved(w, h, decoded.to_rgb8().as_raw())
        }
        other => Err(Error::UnsupportedFormat(format!(
            "{}: sample layout {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Encodes `img` as PNG or binary PGM/PPM, chosen by the file extension.
/// Float images are quantized to 8 bits.
pub fn save_image(img: &PlanarImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let color = if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &img.interleaved_u8(),
        img.width as u32,
        img.height as u32,
        color,
        format,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode(format!("{}: {other}", path.display())),
    })
}

/// Single-channel float luma in `[0, 1]` using BT.601 weights.
pub fn to_luma(img: &PlanarImage) -> PlanarImage {
    let f = img.to_f32();
    let Planes::F32(p) = f.planes else {
        unreachable!()
    };
    let luma = if p.len() == 1 {
        p.into_iter().next().unwrap_or_default()
    } else {
        p[0].iter()
            .zip(&p[1])
            .zip(&p[2])
            .map(|((&r, &g), &b)| {
                (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0)
            })
            .collect()
    };
    PlanarImage {
        width: f.width,
        height: f.height,
        planes: Planes::F32(vec![luma]),
    }
}

/// YCbCr 4:2:0 planes: full-resolution luma, half-resolution chroma.
#[derive(Clone, Debug, PartialEq)]
pub struct Ycbcr420 {
    pub width: usize,
    pub height: usize,
    pub y: Vec<u8>,
    pub cb: Vec<u8>,
    pub cr: Vec<u8>,
}

impl Ycbcr420 {
    pub fn chroma_width(&self) -> usize {
        self.width / 2
    }

    pub fn chroma_height(&self) -> usize {
        self.height / 2
    }
}

fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// BT.601 full-range RGB to YCbCr with 2×2 box-averaged chroma.
pub fn rgb_to_ycbcr420(img: &PlanarImage) -> Result<Ycbcr420> {
    if img.channels() != 3 || img.depth() != SampleDepth::U8 {
        return Err(Error::InvalidParameter(
            "YCbCr conversion needs a 3-channel 8-bit image".into(),
        ));
    }
    let (w, h) = (img.width, img.height);
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::Dimensions(format!(
            "4:2:0 subsampling needs even dimensions, got {w}x{h}"
        )));
    }
    let (r, g, b) = (
        img.plane_u8(0).unwrap(),
        img.plane_u8(1).unwrap(),
        img.plane_u8(2).unwrap(),
    );
    let mut y = Vec::with_capacity(w * h);
    let mut cb_full = Vec::with_capacity(w * h);
    let mut cr_full = Vec::with_capacity(w * h);
    for i in 0..w * h {
        let (rf, gf, bf) = (f64::from(r[i]), f64::from(g[i]), f64::from(b[i]));
        y.push(round_u8(0.299 * rf + 0.587 * gf + 0.114 * bf));
        cb_full.push(128.0 - 0.168_736 * rf - 0.331_264 * gf + 0.5 * bf);
        cr_full.push(128.0 + 0.5 * rf - 0.418_688 * gf - 0.081_312 * bf);
    }
    let (cw, ch) = (w / 2, h / 2);
    let mut cb = Vec::with_capacity(cw * ch);
    let mut cr = Vec::with_capacity(cw * ch);
    for cy in 0..ch {
        for cx in 0..cw {
            let idx = [
                2 * cy * w + 2 * cx,
                2 * cy * w + 2 * cx + 1,
                (2 * cy + 1) * w + 2 * cx,
                (2 * cy + 1) * w + 2 * cx + 1,
            ];
            cb.push(round_u8(idx.iter().map(|&i| cb_full[i]).sum::<f64>() / 4.0));
            cr.push(round_u8(idx.iter().map(|&i| cr_full[i]).sum::<f64>() / 4.0));
        }
    }
    Ok(Ycbcr420 {
        width: w,
        height: h,
        y,
        cb,
        cr,
    })
}

/// Inverse of [`rgb_to_ycbcr420`]; chroma is upsampled by nearest neighbour.
pub fn ycbcr420_to_rgb(planes: &Ycbcr420) -> Result<PlanarImage> {
    let (w, h) = (planes.width, planes.height);
    let cw = planes.chroma_width();
    if planes.y.len() != w * h || planes.cb.len() != cw * (h / 2) || planes.cr.len() != planes.cb.len()
    {
        return Err(Error::Dimensions("YCbCr plane sizes disagree".into()));
    }
    let mut out = [(); 3].map(|_| Vec::with_capacity(w * h)).to_vec();
    for row in 0..h {
        for col in 0..w {
            let yv = f64::from(planes.y[row * w + col]);
            let ci = (row / 2) * cw + col / 2;
            let cb = f64::from(planes.cb[ci]) - 128.0;
            let cr = f64::from(planes.cr[ci]) - 128.0;
            out[0].push(round_u8(yv + 1.402 * cr));
            out[1].push(round_u8(yv - 0.344_136 * cb - 0.714_136 * cr));
            out[2].push(round_u8(yv + 1.772 * cb));
        }
    }
    PlanarImage::from_u8(w, h, out)
}

/// Ground-truth or predicted patch class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Banded,
    NonBanded,
}

impl Label {
    pub fn is_banded(self) -> bool {
        self == Label::Banded
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Banded => "banded",
            Label::NonBanded => "non_banded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "banded" | "1" => Some(Label::Banded),
            "non_banded" | "0" => Some(Label::NonBanded),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatchLabel {
    pub value: Label,
    pub confidence: f64,
}

impl PatchLabel {
    pub fn ground_truth(value: Label) -> Self {
        Self {
            value,
            confidence: 1.0,
        }
    }

    pub fn predicted(value: Label, confidence: f64) -> Self {
        Self {
            value,
            confidence: confidence.clamp(0.0, 1.0),
        }
    }
}

/// Non-overlapping `N`×`N` tiling anchored at the image origin. Remainder
/// rows and columns narrower than `N` are not covered.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub cols: usize,
    pub rows: usize,
    /// Patch origins `(x, y)` in raster order.
    pub patches: Vec<(usize, usize)>,
    pub image_width: usize,
    pub image_height: usize,
}

impl PatchGrid {
    pub fn new(image_width: usize, image_height: usize, patch_size: usize) -> Result<Self> {
        if patch_size < MIN_PATCH_SIZE {
            return Err(Error::InvalidParameter(format!(
                "patch size {patch_size} below minimum {MIN_PATCH_SIZE}"
            )));
        }
        if patch_size > image_width.min(image_height) {
            return Err(Error::Dimensions(format!(
                "patch size {patch_size} larger than {image_width}x{image_height} image"
            )));
        }
        let cols = image_width / patch_size;
        let rows = image_height / patch_size;
        let patches = (0..rows)
            .flat_map(|r| (0..cols).map(move |c| (c * patch_size, r * patch_size)))
            .collect();
        Ok(Self {
            patch_size,
            cols,
            rows,
            patches,
            image_width,
            image_height,
        })
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Index of the patch covering pixel `(x, y)`, if any.
    pub fn patch_at(&self, x: usize, y: usize) -> Option<usize> {
        let (c, r) = (x / self.patch_size, y / self.patch_size);
        (c < self.cols && r < self.rows).then_some(r * self.cols + c)
    }
}

/// Tiles `img` into non-overlapping `n`×`n` patches.
pub fn tile(img: &PlanarImage, n: usize) -> Result<PatchGrid> {
    PatchGrid::new(img.width, img.height, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn luma_spot_values() {
        let white = PlanarImage::from_u8(1, 1, vec![vec![255], vec![255], vec![255]]).unwrap();
        assert_eq!(to_luma(&white).plane_f32(0).unwrap()[0], 1.0);
        let red = PlanarImage::from_u8(1, 1, vec![vec![255], vec![0], vec![0]]).unwrap();
        assert!((to_luma(&red).plane_f32(0).unwrap()[0] - 0.299).abs() < 1e-6);
        for g in 0..=255u8 {
            let gray = PlanarImage::from_u8(1, 1, vec![vec![g], vec![g], vec![g]]).unwrap();
            let l = to_luma(&gray).plane_f32(0).unwrap()[0];
            assert!((l - f32::from(g) / 255.0).abs() < 1e-6, "g={g}");
        }
    }

    #[test]
    fn gray_maps_to_neutral_chroma() {
        for g in [0u8, 17, 128, 200, 255] {
            let img = PlanarImage::from_u8(4, 4, vec![vec![g; 16]; 3]).unwrap();
            let ycc = rgb_to_ycbcr420(&img).unwrap();
            assert!(ycc.y.iter().all(|&v| v == g));
            assert!(ycc.cb.iter().chain(&ycc.cr).all(|&v| v == 128));
        }
    }

    #[test]
    fn luma_only_variation_keeps_chroma_constant() {
        let y = [10u8, 60, 110, 160];
        let planes = vec![y.to_vec(), y.to_vec(), y.to_vec()];
        let img = PlanarImage::from_u8(2, 2, planes).unwrap();
        let ycc = rgb_to_ycbcr420(&img).unwrap();
        assert_eq!(ycc.y, y.to_vec());
        assert_eq!((ycc.cb[0], ycc.cr[0]), (128, 128));
    }

    #[test]
    fn odd_dimensions_rejected() {
        let img = PlanarImage::from_u8(3, 2, vec![vec![0; 6]; 3]).unwrap();
        assert!(matches!(rgb_to_ycbcr420(&img), Err(Error::Dimensions(_))));
    }

    #[test]
    fn constant_color_round_trip_within_one_level() {
        // Every representable constant color on a coarse lattice.
        for r in (0..=255).step_by(15) {
            for g in (0..=255).step_by(15) {
                for b in (0..=255).step_by(15) {
                    let img =
                        PlanarImage::from_u8(2, 2, vec![vec![r as u8; 4], vec![g as u8; 4], vec![b as u8; 4]])
                            .unwrap();
                    let back = ycbcr420_to_rgb(&rgb_to_ycbcr420(&img).unwrap()).unwrap();
                    for c in 0..3 {
                        let d = i32::from(back.plane_u8(c).unwrap()[0])
                            - i32::from(img.plane_u8(c).unwrap()[0]);
                        assert!(d.abs() <= 1, "({r},{g},{b}) channel {c} off by {d}");
                    }
                }
            }
        }
    }

    #[test]
    fn tile_counts() {
        let g = PatchGrid::new(1920, 1080, 235).unwrap();
        assert_eq!((g.cols, g.rows, g.len()), (8, 4, 32));
        assert_eq!(PatchGrid::new(235, 235, 235).unwrap().len(), 1);
        let g = PatchGrid::new(64, 64, 32).unwrap();
        assert_eq!(g.patches, vec![(0, 0), (32, 0), (0, 32), (32, 32)]);
        assert!(matches!(PatchGrid::new(100, 50, 64), Err(Error::Dimensions(_))));
        assert!(matches!(PatchGrid::new(100, 50, 4), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rejects_bad_planes() {
        assert!(PlanarImage::gray_u8(0, 4, vec![]).is_err());
        assert!(PlanarImage::gray_u8(2, 2, vec![0; 3]).is_err());
        assert!(PlanarImage::from_u8(1, 1, vec![vec![0], vec![0]]).is_err());
        assert!(PlanarImage::gray_f32(1, 1, vec![1.5]).is_err());
        assert!(PlanarImage::gray_f32(1, 1, vec![f32::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn tiles_disjoint_and_in_bounds(w in 8usize..200, h in 8usize..200, n in 8usize..64) {
            prop_assume!(n <= w.min(h));
            let g = PatchGrid::new(w, h, n).unwrap();
            prop_assert!(!g.is_empty() && g.len() <= (w / n) * (h / n));
            let mut owner = vec![usize::MAX; w * h];
            for (k, &(x0, y0)) in g.patches.iter().enumerate() {
                prop_assert!(x0 + n <= w && y0 + n <= h);
                for y in y0..y0 + n {
                    for x in x0..x0 + n {
                        prop_assert_eq!(owner[y * w + x], usize::MAX);
                        owner[y * w + x] = k;
                        prop_assert_eq!(g.patch_at(x, y), Some(k));
                    }
                }
            }
        }

        #[test]
        fn luma_is_linear(seed in any::<u64>(), a in 0.0f32..1.0) {
            use rand::{Rng as _, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let planes: Vec<Vec<f32>> = (0..3).map(|_| (0..64).map(|_| rng.random::<f32>()).collect()).collect();
            let scaled: Vec<Vec<f32>> = planes.iter().map(|p| p.iter().map(|v| v * a).collect()).collect();
            let base = to_luma(&PlanarImage::from_f32(8, 8, planes).unwrap());
            let lum_scaled = to_luma(&PlanarImage::from_f32(8, 8, scaled).unwrap());
            for (l, s) in base.plane_f32(0).unwrap().iter().zip(lum_scaled.plane_f32(0).unwrap()) {
                prop_assert!((l * a - s).abs() < 1e-6);
            }
        }

        #[test]
        fn block_constant_round_trip_within_three_levels(seed in any::<u64>()) {
            use rand::{Rng as _, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (w, h) = (8usize, 6usize);
            let blocks: Vec<[u8; 3]> = (0..(w / 2) * (h / 2)).map(|_| rng.random()).collect();
            let mut planes = vec![vec![0u8; w * h]; 3];
            for y in 0..h {
                for x in 0..w {
                    let b = blocks[(y / 2) * (w / 2) + x / 2];
                    for c in 0..3 {
                        planes[c][y * w + x] = b[c];
                    }
                }
            }
            let img = PlanarImage::from_u8(w, h, planes).unwrap();
            let back = ycbcr420_to_rgb(&rgb_to_ycbcr420(&img).unwrap()).unwrap();
            for c in 0..3 {
                for (a, b) in img.plane_u8(c).unwrap().iter().zip(back.plane_u8(c).unwrap()) {
                    prop_assert!((i32::from(*a) - i32::from(*b)).abs() <= 3);
                }
            }
        }
    }
}

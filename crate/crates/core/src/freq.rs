//! High- and low-frequency maps.
//!
//! The high-frequency map is the isotropic Sobel gradient magnitude. The
//! low-frequency map is a piecewise-smooth approximation: the edge set is
//! frozen from the input gradient, after which the remaining energy is a
//! quadratic in the approximation and is minimized with Jacobi-preconditioned
//! conjugate gradients.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::PlanarImage;

/// Gradient magnitude field, same size as its source.
#[derive(Clone, Debug, PartialEq)]
pub struct HighFreqMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

/// Piecewise-smooth approximation of the source, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowFreqMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl HighFreqMap {
    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }

    /// Min-max normalized 8-bit rendering, all black when the map is flat.
    pub fn to_image(&self) -> PlanarImage {
        normalized_gray(self.width, self.height, &self.values)
    }
}

impl LowFreqMap {
    pub fn to_image(&self) -> PlanarImage {
        let data = self
            .values
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        PlanarImage::gray_u8(self.width, self.height, data).expect("map dimensions are valid")
    }
}

pub(crate) fn normalized_gray(width: usize, height: usize, values: &[f32]) -> PlanarImage {
    let (lo, hi) = values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let data = if hi > lo {
        values
            .iter()
            .map(|&v| ((v - lo) / (hi - lo) * 255.0).round() as u8)
            .collect()
    } else {
        vec![0; values.len()]
    };
    PlanarImage::gray_u8(width, height, data).expect("map dimensions are valid")
}

/// Where the high-frequency map is computed in the scoring pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HfmMode {
    /// Sobel on each patch independently (borders replicated per patch).
    #[default]
    PerPatch,
    /// Sobel on the whole luma image, then cropped to each patch.
    FullImage,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PwsConfig {
    /// Weight of the squared-gradient smoothness term.
    pub reg_alpha: f64,
    /// Weight of the edge-length term. Constant once the edge set is frozen.
    pub reg_beta: f64,
    /// Gradient magnitude above which a pixel belongs to the edge set.
    /// `None` selects mean + 2·std of the input gradient magnitude.
    pub edge_threshold: Option<f64>,
    pub max_iters: usize,
    /// Target relative error of the solution.
    pub tol: f64,
}

impl Default for PwsConfig {
    fn default() -> Self {
        Self {
            reg_alpha: 2.0,
            reg_beta: 0.05,
            edge_threshold: None,
            max_iters: 500,
            tol: 1e-6,
        }
    }
}

impl PwsConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.reg_alpha) || !ok(self.reg_beta) || !ok(self.tol) {
            return Err(Error::InvalidParameter(format!(
                "reg_alpha, reg_beta and tol must be positive: {self:?}"
            )));
        }
        if matches!(self.edge_threshold, Some(t) if !t.is_finite() || t < 0.0) {
            return Err(Error::InvalidParameter("edge threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FreqConfig {
    pub pws: PwsConfig,
    pub hfm_mode: HfmMode,
}

fn single_channel(img: &PlanarImage, what: &str) -> Result<Vec<f64>> {
    if img.channels() != 1 {
        return Err(Error::InvalidParameter(format!(
            "{what} needs a 1-channel image, got {} channels",
            img.channels()
        )));
    }
    let f = img.to_f32();
    Ok(f.plane_f32(0)
        .expect("float plane")
        .iter()
        .map(|&v| f64::from(v))
        .collect())
}

/// Isotropic Sobel magnitude with edge-replicated borders.
pub fn sobel_hfm(patch: &PlanarImage) -> Result<HighFreqMap> {
    let (w, h) = (patch.width(), patch.height());
    if w < 3 || h < 3 {
        return Err(Error::Dimensions(format!(
            "Sobel needs at least 3x3, got {w}x{h}"
        )));
    }
    let data = single_channel(patch, "Sobel")?;
    Ok(HighFreqMap {
        width: w,
        height: h,
        values: sobel_magnitude(&data, w, h),
    })
}

pub(crate) fn sobel_magnitude(data: &[f64], w: usize, h: usize) -> Vec<f32> {
    let at = |x: isize, y: isize| {
        let xc = x.clamp(0, w as isize - 1) as usize;
        let yc = y.clamp(0, h as isize - 1) as usize;
        data[yc * w + xc]
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) - at(x - 1, y - 1))
                + SQRT_2 * (at(x + 1, y) - at(x - 1, y))
                + (at(x + 1, y + 1) - at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) - at(x - 1, y - 1))
                + SQRT_2 * (at(x, y + 1) - at(x, y - 1))
                + (at(x + 1, y + 1) - at(x + 1, y - 1));
            out.push(gx.hypot(gy) as f32);
        }
    }
    out
}

/// Pixels excluded from the smoothness term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSet {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
}

impl EdgeSet {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            mask: vec![false; width * height],
        }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Forward-difference gradient magnitude with Neumann boundary.
fn forward_gradient(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = data[y * w + x];
            let dx = if x + 1 < w { data[y * w + x + 1] - p } else { 0.0 };
            let dy = if y + 1 < h { data[(y + 1) * w + x] - p } else { 0.0 };
            g.push(dx.hypot(dy));
        }
    }
    g
}

fn default_threshold(grad: &[f64]) -> f64 {
    let n = grad.len() as f64;
    let mean = grad.iter().sum::<f64>() / n;
    let var = grad.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    mean + 2.0 * var.sqrt()
}

/// Freezes the edge set `{p : |∇I(p)| > τ}` of a 1-channel image.
pub fn edge_set(img: &PlanarImage, threshold: Option<f64>) -> Result<EdgeSet> {
    let data = single_channel(img, "edge detection")?;
    Ok(edge_set_from(&data, img.width(), img.height(), threshold))
}

fn edge_set_from(data: &[f64], w: usize, h: usize, threshold: Option<f64>) -> EdgeSet {
    let grad = forward_gradient(data, w, h);
    let tau = threshold.unwrap_or_else(|| default_threshold(&grad));
    EdgeSet {
        width: w,
        height: h,
        mask: grad.iter().map(|&g| g > tau).collect(),
    }
}

/// Components of the piecewise-smooth energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyTerms {
    /// ½ Σ (I − L)²
    pub data: f64,
    /// α Σ_{p ∉ E} |∇L(p)|², forward differences.
    pub smoothness: f64,
    /// β · |E|
    pub edge: f64,
}

impl EnergyTerms {
    pub fn total(&self) -> f64 {
        self.data + self.smoothness + self.edge
    }
}

fn energy_of(i: &[f64], l: &[f64], w: usize, h: usize, edges: &[bool], cfg: &PwsConfig) -> EnergyTerms {
    let data = 0.5 * i.iter().zip(l).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let mut grad2 = 0.0;
    let mut n_edges = 0usize;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if edges[p] {
                n_edges += 1;
                continue;
            }
            if x + 1 < w {
                grad2 += (l[p + 1] - l[p]).powi(2);
            }
            if y + 1 < h {
                grad2 += (l[p + w] - l[p]).powi(2);
            }
        }
    }
    EnergyTerms {
        data,
        smoothness: cfg.reg_alpha * grad2,
        edge: cfg.reg_beta * n_edges as f64,
    }
}

/// Evaluates the piecewise-smooth energy of approximation `lfm` of `img`.
pub fn pws_energy(
    img: &PlanarImage,
    lfm: &LowFreqMap,
    edges: &EdgeSet,
    cfg: &PwsConfig,
) -> Result<EnergyTerms> {
    let (w, h) = (img.width(), img.height());
    if (lfm.width, lfm.height) != (w, h) || (edges.width, edges.height) != (w, h) {
        return Err(Error::Dimensions(format!(
            "image {w}x{h}, map {}x{}, edges {}x{}",
            lfm.width, lfm.height, edges.width, edges.height
        )));
    }
    let i = single_channel(img, "energy")?;
    let l: Vec<f64> = lfm.values.iter().map(|&v| f64::from(v)).collect();
    Ok(energy_of(&i, &l, w, h, &edges.mask, cfg))
}

/// Full solver output, including the per-iteration energy trace.
#[derive(Clone, Debug)]
pub struct PwsSolution {
    pub lfm: LowFreqMap,
    /// Unrounded solution.
    pub values: Vec<f64>,
    pub edges: EdgeSet,
    /// Total energy at the initial iterate followed by one entry per
    /// accepted iteration.
    pub energy_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Frozen-edge quadratic `A L = I` with `A = Id + 2α Σ_links`.
struct Quadratic<'a> {
    w: usize,
    h: usize,
    edges: &'a [bool],
    two_alpha: f64,
}

impl Quadratic<'_> {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.copy_from_slice(v);
        let (w, h) = (self.w, self.h);
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if self.edges[p] {
                    continue;
                }
                if x + 1 < w {
                    let d = self.two_alpha * (v[p] - v[p + 1]);
                    out[p] += d;
                    out[p + 1] -= d;
                }
                if y + 1 < h {
                    let d = self.two_alpha * (v[p] - v[p + w]);
                    out[p] += d;
                    out[p + w] -= d;
                }
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let (w, h) = (self.w, self.h);
        let mut d = vec![1.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                if self.edges[p] {
                    continue;
                }
                if x + 1 < w {
                    d[p] += self.two_alpha;
                    d[p + 1] += self.two_alpha;
                }
                if y + 1 < h {
                    d[p] += self.two_alpha;
                    d[p + w] += self.two_alpha;
                }
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Low-frequency map of a 1-channel image.
pub fn pws_lfm(img: &PlanarImage, cfg: &PwsConfig) -> Result<LowFreqMap> {
    pws_solve(img, cfg).map(|s| s.lfm)
}

/// Runs the frozen-edge solver and returns the full trace.
pub fn pws_solve(img: &PlanarImage, cfg: &PwsConfig) -> Result<PwsSolution> {
    cfg.validate()?;
    let data = single_channel(img, "piecewise-smooth approximation")?;
    let edges = edge_set_from(&data, img.width(), img.height(), cfg.edge_threshold);
    Ok(finish(&data, edges, cfg))
}

/// Solves the frozen-edge quadratic for an explicit edge set.
pub fn pws_solve_with_edges(img: &PlanarImage, edges: &EdgeSet, cfg: &PwsConfig) -> Result<PwsSolution> {
    cfg.validate()?;
    let data = single_channel(img, "piecewise-smooth approximation")?;
    if (edges.width, edges.height) != (img.width(), img.height()) {
        return Err(Error::Dimensions("edge set does not match image".into()));
    }
    Ok(finish(&data, edges.clone(), cfg))
}

fn finish(data: &[f64], edges: EdgeSet, cfg: &PwsConfig) -> PwsSolution {
    let (w, h) = (edges.width, edges.height);
    let (values, energy_trace, iterations, converged) = solve_frozen(data, w, h, &edges.mask, cfg);
    PwsSolution {
        lfm: LowFreqMap {
            width: w,
            height: h,
            values: values.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect(),
        },
        values,
        edges,
        energy_trace,
        iterations,
        converged,
    }
}

fn solve_frozen(
    b: &[f64],
    w: usize,
    h: usize,
    edges: &[bool],
    cfg: &PwsConfig,
) -> (Vec<f64>, Vec<f64>, usize, bool) {
    let n = w * h;
    let q = Quadratic {
        w,
        h,
        edges,
        two_alpha: 2.0 * cfg.reg_alpha,
    };
    let energy = |l: &[f64]| energy_of(b, l, w, h, edges, cfg).total();

    // Start from L = I.
    let mut x = b.to_vec();
    let mut trace = vec![energy(&x)];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return (x, trace, 0, true);
    }
    // ||e|| / ||x|| <= κ(A) ||r|| / ||b||, and κ(A) <= 1 + 16α.
    let target = cfg.tol / (1.0 + 16.0 * cfg.reg_alpha) * b_norm;

    let inv_diag: Vec<f64> = q.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut ax = vec![0.0; n];
    q.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    if dot(&r, &r).sqrt() <= target {
        return (x, trace, 0, true);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut candidate = vec![0.0; n];

    for it in 1..=cfg.max_iters {
        q.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return (x, trace, it - 1, false);
        }
        let step = rz / pap;
        for ((c, xi), pi) in candidate.iter_mut().zip(&x).zip(&p) {
            *c = xi + step * pi;
        }
        let e = energy(&candidate);
        let prev = *trace.last().expect("trace is non-empty");
        if e > prev {
            // Round-off floor reached; keep the last accepted iterate.
            return (x, trace, it - 1, false);
        }
        std::mem::swap(&mut x, &mut candidate);
        trace.push(e);
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= step * api;
        }
        if dot(&r, &r).sqrt() <= target {
            return (x, trace, it, true);
        }
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * di;
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    (x, trace, cfg.max_iters, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> f32) -> PlanarImage {
        let data = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        PlanarImage::gray_f32(w, h, data).unwrap()
    }

    #[test]
    fn constant_patch_has_zero_hfm() {
        let hfm = sobel_hfm(&gray(9, 7, |_, _| 0.4)).unwrap();
        assert!(hfm.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_response_matches_hand_convolution() {
        let n = 16;
        let s = 1.0 / n as f64;
        let img = gray(n, n, |x, _| x as f32 / n as f32);
        let hfm = sobel_hfm(&img).unwrap();
        let expected = (4.0 + 2.0 * SQRT_2) * s;
        for y in 0..n {
            for x in 1..n - 1 {
                let v = f64::from(hfm.values[y * n + x]);
                assert!((v - expected).abs() < 1e-5, "({x},{y}) {v} vs {expected}");
            }
        }
    }

    #[test]
    fn rotation_swaps_components() {
        let n = 12;
        let f = |x: usize, y: usize| ((x * 7 + y * 3) % 11) as f32 / 10.0;
        let img = gray(n, n, f);
        // Rotate 90°: (x, y) -> (n-1-y, x)
        let rot = gray(n, n, |x, y| f(y, n - 1 - x));
        let a = sobel_hfm(&img).unwrap();
        let b = sobel_hfm(&rot).unwrap();
        for y in 0..n {
            for x in 0..n {
                let (sx, sy) = (y, n - 1 - x);
                assert!((b.values[y * n + x] - a.values[sy * n + sx]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn small_patch_rejected() {
        assert!(matches!(sobel_hfm(&gray(2, 5, |_, _| 0.0)), Err(Error::Dimensions(_))));
        let rgb = PlanarImage::from_u8(4, 4, vec![vec![0; 16]; 3]).unwrap();
        assert!(matches!(sobel_hfm(&rgb), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn constant_image_is_its_own_lfm() {
        let img = gray(10, 10, |_, _| 0.3);
        let sol = pws_solve(&img, &PwsConfig::default()).unwrap();
        assert_eq!(sol.lfm.values, img.plane_f32(0).unwrap());
        assert_eq!(sol.energy_trace, vec![0.0]);
        assert_eq!(sol.edges.count(), 0);
    }

    #[test]
    fn vanishing_alpha_returns_input() {
        let img = gray(12, 12, |x, y| ((x * x + 3 * y) % 13) as f32 / 12.0);
        let cfg = PwsConfig {
            reg_alpha: 1e-9,
            ..PwsConfig::default()
        };
        let l = pws_lfm(&img, &cfg).unwrap();
        for (a, b) in l.values.iter().zip(img.plane_f32(0).unwrap()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn energy_terms() {
        let img = gray(6, 6, |x, _| if x < 3 { 0.2 } else { 0.7 });
        let lfm = LowFreqMap {
            width: 6,
            height: 6,
            values: img.plane_f32(0).unwrap().to_vec(),
        };
        let empty = EdgeSet::empty(6, 6);
        let cfg = PwsConfig::default();
        let e1 = pws_energy(&img, &lfm, &empty, &cfg).unwrap();
        assert_eq!(e1.data, 0.0);
        let cfg2 = PwsConfig {
            reg_alpha: 2.0 * cfg.reg_alpha,
            ..cfg
        };
        let e2 = pws_energy(&img, &lfm, &empty, &cfg2).unwrap();
        assert_eq!(e2.smoothness, 2.0 * e1.smoothness);
        assert!(e1.smoothness > 0.0);

        let flat = gray(6, 6, |_, _| 0.5);
        let flat_l = LowFreqMap {
            width: 6,
            height: 6,
            values: vec![0.5; 36],
        };
        assert_eq!(pws_energy(&flat, &flat_l, &empty, &cfg).unwrap().total(), 0.0);

        let wrong = LowFreqMap {
            width: 5,
            height: 6,
            values: vec![0.0; 30],
        };
        assert!(pws_energy(&img, &wrong, &empty, &cfg).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let img = gray(4, 4, |_, _| 0.0);
        for cfg in [
            PwsConfig { reg_alpha: 0.0, ..PwsConfig::default() },
            PwsConfig { reg_beta: -1.0, ..PwsConfig::default() },
            PwsConfig { tol: 0.0, ..PwsConfig::default() },
        ] {
            assert!(matches!(pws_lfm(&img, &cfg), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn hfm_ignores_offset() {
        let a = gray(10, 10, |x, y| ((x * 5 + y * 2) % 7) as f32 / 20.0);
        let b = gray(10, 10, |x, y| ((x * 5 + y * 2) % 7) as f32 / 20.0 + 0.25);
        let (ha, hb) = (sobel_hfm(&a).unwrap(), sobel_hfm(&b).unwrap());
        for (u, v) in ha.values.iter().zip(&hb.values) {
            assert!((u - v).abs() < 1e-5);
        }
    }
}

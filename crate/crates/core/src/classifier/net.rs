//! Dual-branch convolutional network: parameter layout, forward pass and
//! backpropagation. Generic over the scalar so gradients can be checked in
//! double precision while training runs in single precision.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::Float;
use rand::Rng as _;

use crate::rng::Rng;

pub trait Scalar: Float + Sum + Send + Sync + Debug + Default + 'static {}
impl Scalar for f32 {}
impl Scalar for f64 {}

fn lit<T: Scalar>(v: f64) -> T {
    T::from(v).expect("representable constant")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 1,
            Activation::Identity => 0,
        }
    }

    pub(crate) fn from_tag(t: u8) -> Option<Self> {
        match t {
            1 => Some(Activation::Relu),
            0 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// `k`×`k` convolution with zero padding `k / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub activation: Activation,
    /// `[out][in][ky][kx]`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// `[out][in]`
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch<T> {
    pub layers: Vec<ConvLayer<T>>,
}

/// Shape of the network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub patch_size: usize,
    /// Output channels of each convolution in a branch.
    pub widths: Vec<usize>,
    /// Width of the first fully-connected layer.
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            patch_size: 64,
            widths: vec![8, 16, 32],
            hidden: 128,
        }
    }
}

impl Architecture {
    /// Width of the concatenated hierarchical feature vector: pooled first
    /// and last convolution outputs of both branches.
    pub fn feature_width(&self) -> usize {
        2 * (self.widths[0] + self.widths[self.widths.len() - 1])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelMeta {
    pub patch_size: usize,
    pub seed: u64,
    pub epochs: usize,
}

/// Parameters of the dual-branch classifier. The two branches have the same
/// shape and never share values.
#[derive(Clone, Debug, PartialEq)]
pub struct DualNetParams<T = f32> {
    pub branch_h: Branch<T>,
    pub branch_l: Branch<T>,
    pub hidden: Dense<T>,
    pub output: Dense<T>,
    pub meta: ModelMeta,
}

fn glorot<T: Scalar>(rng: &mut Rng, n: usize, fan_in: usize, fan_out: usize, scale: f64) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() * scale;
    (0..n).map(|_| lit(rng.random_range(-limit..=limit))).collect()
}

fn init_branch<T: Scalar>(arch: &Architecture, rng: &mut Rng) -> Branch<T> {
    let mut c_in = 1;
    let layers = arch
        .widths
        .iter()
        .map(|&c_out| {
            let k = 3;
            let layer = ConvLayer {
                in_channels: c_in,
                out_channels: c_out,
                kernel: k,
                stride: 2,
                activation: Activation::Relu,
                weights: glorot(rng, c_out * c_in * k * k, c_in * k * k, c_out * k * k, 1.0),
                bias: vec![T::zero(); c_out],
            };
            c_in = c_out;
            layer
        })
        .collect();
    Branch { layers }
}

/// Output-layer weights start at a tenth of the usual range so the initial
/// prediction is close to 0.5.
const OUTPUT_INIT_SCALE: f64 = 0.1;

impl<T: Scalar> DualNetParams<T> {
    /// Glorot-uniform initialization, biases zero.
    pub fn init(arch: &Architecture, rng: &mut Rng) -> Self {
        let branch_h = init_branch(arch, rng);
        let branch_l = init_branch(arch, rng);
        let f = arch.feature_width();
        let hidden = Dense {
            inputs: f,
            outputs: arch.hidden,
            activation: Activation::Relu,
            weights: glorot(rng, f * arch.hidden, f, arch.hidden, 1.0),
            bias: vec![T::zero(); arch.hidden],
        };
        let output = Dense {
            inputs: arch.hidden,
            outputs: 1,
            activation: Activation::Identity,
            weights: glorot(rng, arch.hidden, arch.hidden, 1, OUTPUT_INIT_SCALE),
            bias: vec![T::zero()],
        };
        Self {
            branch_h,
            branch_l,
            hidden,
            output,
            meta: ModelMeta {
                patch_size: arch.patch_size,
                seed: 0,
                epochs: 0,
            },
        }
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            patch_size: self.meta.patch_size,
            widths: self.branch_h.layers.iter().map(|l| l.out_channels).collect(),
            hidden: self.hidden.outputs,
        }
    }

    /// Every weight and bias vector in a fixed order.
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut v: Vec<&[T]> = Vec::new();
        for b in [&self.branch_h, &self.branch_l] {
            for l in &b.layers {
                v.push(&l.weights);
                v.push(&l.bias);
            }
        }
        for d in [&self.hidden, &self.output] {
            v.push(&d.weights);
            v.push(&d.bias);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v: Vec<&mut Vec<T>> = Vec::new();
        for b in [&mut self.branch_h, &mut self.branch_l] {
            for l in &mut b.layers {
                v.push(&mut l.weights);
                v.push(&mut l.bias);
            }
        }
        for d in [&mut self.hidden, &mut self.output] {
            v.push(&mut d.weights);
            v.push(&mut d.bias);
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Same shape, all values zero.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    pub fn cast<U: Scalar>(&self) -> DualNetParams<U> {
        fn conv<T: Scalar, U: Scalar>(l: &ConvLayer<T>) -> ConvLayer<U> {
            ConvLayer {
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                kernel: l.kernel,
                stride: l.stride,
                activation: l.activation,
                weights: l.weights.iter().map(|&v| lit(v.to_f64().unwrap())).collect(),
                bias: l.bias.iter().map(|&v| lit(v.to_f64().unwrap())).collect(),
            }
        }
        fn dense<T: Scalar, U: Scalar>(d: &Dense<T>) -> Dense<U> {
            Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                activation: d.activation,
                weights: d.weights.iter().map(|&v| lit(v.to_f64().unwrap())).collect(),
                bias: d.bias.iter().map(|&v| lit(v.to_f64().unwrap())).collect(),
            }
        }
        DualNetParams {
            branch_h: Branch {
                layers: self.branch_h.layers.iter().map(conv).collect(),
            },
            branch_l: Branch {
                layers: self.branch_l.layers.iter().map(conv).collect(),
            },
            hidden: dense(&self.hidden),
            output: dense(&self.output),
            meta: self.meta.clone(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

pub(crate) struct ConvCache<T> {
    col: Vec<T>,
    pub(crate) out: Vec<T>,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

fn out_dim(n: usize, k: usize, s: usize) -> usize {
    (n + 2 * (k / 2) - k) / s + 1
}

fn activate<T: Scalar>(a: Activation, v: &mut [T]) {
    if a == Activation::Relu {
        for x in v {
            if *x < T::zero() {
                *x = T::zero();
            }
        }
    }
}

fn conv_forward<T: Scalar>(layer: &ConvLayer<T>, input: &[T], in_h: usize, in_w: usize) -> ConvCache<T> {
    let (k, s, pad) = (layer.kernel, layer.stride, (layer.kernel / 2) as isize);
    let (out_h, out_w) = (out_dim(in_h, k, s), out_dim(in_w, k, s));
    let cols = out_h * out_w;
    let rows = layer.in_channels * k * k;
    let mut col = vec![T::zero(); rows * cols];
    for ci in 0..layer.in_channels {
        let plane = &input[ci * in_h * in_w..(ci + 1) * in_h * in_w];
        for ky in 0..k {
            for kx in 0..k {
                let r = (ci * k + ky) * k + kx;
                let dst = &mut col[r * cols..(r + 1) * cols];
                for oy in 0..out_h {
                    let iy = (oy * s + ky) as isize - pad;
                    if iy < 0 || iy >= in_h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * in_w..(iy as usize + 1) * in_w];
                    let drow = &mut dst[oy * out_w..(oy + 1) * out_w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * s + kx) as isize - pad;
                        if ix >= 0 && ix < in_w as isize {
                            *d = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    let mut out = vec![T::zero(); layer.out_channels * cols];
    for co in 0..layer.out_channels {
        let o = &mut out[co * cols..(co + 1) * cols];
        o.fill(layer.bias[co]);
        let wrow = &layer.weights[co * rows..(co + 1) * rows];
        for (r, &w) in wrow.iter().enumerate() {
            let c = &col[r * cols..(r + 1) * cols];
            for (ov, &cv) in o.iter_mut().zip(c) {
                *ov = *ov + w * cv;
            }
        }
        activate(layer.activation, o);
    }
    ConvCache {
        col,
        out,
        in_h,
        in_w,
        out_h,
        out_w,
    }
}

/// `grad_out` holds dL/d(output after activation) and is consumed.
/// Returns dL/d(input) when requested.
fn conv_backward<T: Scalar>(
    layer: &ConvLayer<T>,
    cache: &ConvCache<T>,
    mut grad_out: Vec<T>,
    grads: &mut ConvLayer<T>,
    need_input: bool,
) -> Option<Vec<T>> {
    let (k, s, pad) = (layer.kernel, layer.stride, (layer.kernel / 2) as isize);
    let cols = cache.out_h * cache.out_w;
    let rows = layer.in_channels * k * k;
    if layer.activation == Activation::Relu {
        for (g, &o) in grad_out.iter_mut().zip(&cache.out) {
            if o <= T::zero() {
                *g = T::zero();
            }
        }
    }
    let mut dcol = if need_input {
        vec![T::zero(); rows * cols]
    } else {
        Vec::new()
    };
    for co in 0..layer.out_channels {
        let g = &grad_out[co * cols..(co + 1) * cols];
        grads.bias[co] = grads.bias[co] + g.iter().copied().sum::<T>();
        let wrow = &layer.weights[co * rows..(co + 1) * rows];
        let gwrow = &mut grads.weights[co * rows..(co + 1) * rows];
        for r in 0..rows {
            let c = &cache.col[r * cols..(r + 1) * cols];
            let acc = c.iter().zip(g).fold(T::zero(), |a, (&cv, &gv)| a + cv * gv);
            gwrow[r] = gwrow[r] + acc;
            if need_input {
                let w = wrow[r];
                let d = &mut dcol[r * cols..(r + 1) * cols];
                for (dv, &gv) in d.iter_mut().zip(g) {
                    *dv = *dv + w * gv;
                }
            }
        }
    }
    if !need_input {
        return None;
    }
    let (in_h, in_w) = (cache.in_h, cache.in_w);
    let mut dinput = vec![T::zero(); layer.in_channels * in_h * in_w];
    for ci in 0..layer.in_channels {
        let plane = &mut dinput[ci * in_h * in_w..(ci + 1) * in_h * in_w];
        for ky in 0..k {
            for kx in 0..k {
                let r = (ci * k + ky) * k + kx;
                let src = &dcol[r * cols..(r + 1) * cols];
                for oy in 0..cache.out_h {
                    let iy = (oy * s + ky) as isize - pad;
                    if iy < 0 || iy >= in_h as isize {
                        continue;
                    }
                    for ox in 0..cache.out_w {
                        let ix = (ox * s + kx) as isize - pad;
                        if ix >= 0 && ix < in_w as isize {
                            let p = iy as usize * in_w + ix as usize;
                            plane[p] = plane[p] + src[oy * cache.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    Some(dinput)
}

fn channel_means<T: Scalar>(out: &[T], channels: usize) -> Vec<T> {
    let area = out.len() / channels;
    let inv = lit::<T>(1.0 / area as f64);
    out.chunks_exact(area)
        .map(|c| c.iter().copied().sum::<T>() * inv)
        .collect()
}

pub(crate) struct BranchCache<T> {
    pub(crate) layers: Vec<ConvCache<T>>,
}

fn branch_forward<T: Scalar>(branch: &Branch<T>, input: &[T], n: usize) -> BranchCache<T> {
    let mut layers: Vec<ConvCache<T>> = Vec::with_capacity(branch.layers.len());
    for layer in &branch.layers {
        let cache = match layers.last() {
            None => conv_forward(layer, input, n, n),
            Some(prev) => conv_forward(layer, &prev.out, prev.out_h, prev.out_w),
        };
        layers.push(cache);
    }
    BranchCache { layers }
}

/// Pooled first-layer features followed by pooled last-layer features.
fn branch_features<T: Scalar>(branch: &Branch<T>, cache: &BranchCache<T>) -> Vec<T> {
    let first = &branch.layers[0];
    let last = &branch.layers[branch.layers.len() - 1];
    let mut f = channel_means(&cache.layers[0].out, first.out_channels);
    f.extend(channel_means(
        &cache.layers[cache.layers.len() - 1].out,
        last.out_channels,
    ));
    f
}

fn branch_backward<T: Scalar>(
    branch: &Branch<T>,
    cache: &BranchCache<T>,
    dfeat: &[T],
    grads: &mut Branch<T>,
) {
    let n_layers = branch.layers.len();
    let c_first = branch.layers[0].out_channels;
    let spread = |c: &ConvCache<T>, channels: usize, d: &[T]| -> Vec<T> {
        let area = c.out_h * c.out_w;
        let inv = lit::<T>(1.0 / area as f64);
        let mut g = vec![T::zero(); channels * area];
        for (ch, &dv) in d.iter().enumerate() {
            g[ch * area..(ch + 1) * area].fill(dv * inv);
        }
        g
    };
    let last = n_layers - 1;
    let mut grad = spread(
        &cache.layers[last],
        branch.layers[last].out_channels,
        &dfeat[c_first..],
    );
    for li in (0..n_layers).rev() {
        if li == 0 {
            // The first layer also feeds the pooled feature directly.
            let pooled = spread(&cache.layers[0], c_first, &dfeat[..c_first]);
            for (g, p) in grad.iter_mut().zip(&pooled) {
                *g = *g + *p;
            }
        }
        let need_input = li > 0;
        let next = conv_backward(
            &branch.layers[li],
            &cache.layers[li],
            grad,
            &mut grads.layers[li],
            need_input,
        );
        grad = next.unwrap_or_default();
    }
}

pub(crate) struct ForwardCache<T> {
    h: BranchCache<T>,
    l: BranchCache<T>,
    features: Vec<T>,
    hidden: Vec<T>,
    pub(crate) logit: T,
}

impl<T: Scalar> ForwardCache<T> {
    /// Whether each ReLU unit is active, in a fixed order.
    pub(crate) fn active_units(&self) -> Vec<bool> {
        let convs = self.h.layers.iter().chain(&self.l.layers).flat_map(|c| c.out.iter());
        convs.chain(&self.hidden).map(|&v| v > T::zero()).collect()
    }
}

fn dense_forward<T: Scalar>(d: &Dense<T>, x: &[T]) -> Vec<T> {
    let mut out: Vec<T> = d
        .weights
        .chunks_exact(d.inputs)
        .zip(&d.bias)
        .map(|(w, &b)| w.iter().zip(x).fold(b, |a, (&wv, &xv)| a + wv * xv))
        .collect();
    activate(d.activation, &mut out);
    out
}

pub(crate) fn to_scalar<T: Scalar>(v: &[f32]) -> Vec<T> {
    v.iter().map(|&x| lit(f64::from(x))).collect()
}

/// Fixed input scaling: gradient magnitudes of smooth content are a few
/// hundredths, so the HFM is amplified; the LFM is mapped to `[-1, 1]`.
pub const HFM_INPUT_GAIN: f64 = 8.0;

pub(crate) fn forward_cached<T: Scalar>(p: &DualNetParams<T>, hfm: &[T], lfm: &[T]) -> ForwardCache<T> {
    let n = p.meta.patch_size;
    let gain = lit::<T>(HFM_INPUT_GAIN);
    let (two, one) = (lit::<T>(2.0), T::one());
    let hfm: Vec<T> = hfm.iter().map(|&v| v * gain).collect();
    let lfm: Vec<T> = lfm.iter().map(|&v| two * v - one).collect();
    let h = branch_forward(&p.branch_h, &hfm, n);
    let l = branch_forward(&p.branch_l, &lfm, n);
    let mut features = branch_features(&p.branch_h, &h);
    features.extend(branch_features(&p.branch_l, &l));
    let hidden = dense_forward(&p.hidden, &features);
    let logit = dense_forward(&p.output, &hidden)[0];
    ForwardCache {
        h,
        l,
        features,
        hidden,
        logit,
    }
}

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Binary cross-entropy of logit `z` against target `y ∈ {0, 1}`.
pub(crate) fn bce_with_logit<T: Scalar>(z: T, y: T) -> T {
    z.max(T::zero()) - z * y + (T::one() + (-z.abs()).exp()).ln()
}

/// Accumulates dL/dθ for one sample into `grads`; returns the loss.
pub(crate) fn backward<T: Scalar>(
    p: &DualNetParams<T>,
    cache: &ForwardCache<T>,
    target: T,
    grads: &mut DualNetParams<T>,
) -> T {
    let z = cache.logit;
    let loss = bce_with_logit(z, target);
    let dz = sigmoid(z) - target;

    // Output layer.
    let mut dhidden = vec![T::zero(); p.hidden.outputs];
    for (j, &hv) in cache.hidden.iter().enumerate() {
        grads.output.weights[j] = grads.output.weights[j] + dz * hv;
        dhidden[j] = if hv > T::zero() {
            dz * p.output.weights[j]
        } else {
            T::zero()
        };
    }
    grads.output.bias[0] = grads.output.bias[0] + dz;

    // Hidden layer.
    let f = p.hidden.inputs;
    let mut dfeat = vec![T::zero(); f];
    for (j, &dh) in dhidden.iter().enumerate() {
        if dh == T::zero() {
            continue;
        }
        grads.hidden.bias[j] = grads.hidden.bias[j] + dh;
        let wrow = &p.hidden.weights[j * f..(j + 1) * f];
        let gwrow = &mut grads.hidden.weights[j * f..(j + 1) * f];
        for i in 0..f {
            gwrow[i] = gwrow[i] + dh * cache.features[i];
            dfeat[i] = dfeat[i] + dh * wrow[i];
        }
    }

    let half = f / 2;
    branch_backward(&p.branch_h, &cache.h, &dfeat[..half], &mut grads.branch_h);
    branch_backward(&p.branch_l, &cache.l, &dfeat[half..], &mut grads.branch_l);
    loss
}

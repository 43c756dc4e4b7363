//! Binary weight container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      b"BGDN"
//! version    u32 (= 1)
//! patch_size u32
//! seed       u64
//! epochs     u32
//! n_layers   u32
//! layer table, n_layers entries:
//!     kind u8 (0 = conv, 1 = dense), activation u8, kernel u8, stride u8,
//!     inputs u32, outputs u32
//! weights    f32 per value: each layer's weights then its bias, table order
//! crc32      u32 over every preceding byte
//! ```
//!
//! Layer order is: branch H convolutions, branch L convolutions, hidden
//! dense, output dense.

use std::path::Path;

use super::net::{Activation, Branch, ConvLayer, Dense, DualNetParams, ModelMeta};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BGDN";
const VERSION: u32 = 1;
const KIND_CONV: u8 = 0;
const KIND_DENSE: u8 = 1;

struct LayerEntry {
    kind: u8,
    activation: Activation,
    kernel: usize,
    stride: usize,
    inputs: usize,
    outputs: usize,
}

impl LayerEntry {
    fn weight_count(&self) -> usize {
        self.inputs * self.outputs * self.kernel * self.kernel
    }
}

pub fn params_to_bytes(params: &DualNetParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.meta.patch_size as u32).to_le_bytes());
    out.extend_from_slice(&params.meta.seed.to_le_bytes());
    out.extend_from_slice(&(params.meta.epochs as u32).to_le_bytes());

    let convs = params.branch_h.layers.iter().chain(&params.branch_l.layers);
    let n_layers = params.branch_h.layers.len() + params.branch_l.layers.len() + 2;
    out.extend_from_slice(&(n_layers as u32).to_le_bytes());
    for c in convs.clone() {
        out.extend([KIND_CONV, c.activation.tag(), c.kernel as u8, c.stride as u8]);
        out.extend_from_slice(&(c.in_channels as u32).to_le_bytes());
        out.extend_from_slice(&(c.out_channels as u32).to_le_bytes());
    }
    for d in [&params.hidden, &params.output] {
        out.extend([KIND_DENSE, d.activation.tag(), 1, 1]);
        out.extend_from_slice(&(d.inputs as u32).to_le_bytes());
        out.extend_from_slice(&(d.outputs as u32).to_le_bytes());
    }
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Format(format!("unexpected end of data at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<DualNetParams> {
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing BGDN magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Version(version));
    }
    if bytes.len() < 12 {
        return Err(Error::Checksum { stored: 0, computed: crc32fast::hash(bytes) });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { buf: body, pos: 8 };
    let patch_size = r.u32()? as usize;
    let seed = r.u64()?;
    let epochs = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers < 4 || !n_layers.is_multiple_of(2) {
        return Err(Error::Format(format!("{n_layers} layers cannot form two branches and a head")));
    }
    let mut table = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let kind = r.u8()?;
        let tag = r.u8()?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))?;
        let kernel = r.u8()? as usize;
        let stride = r.u8()? as usize;
        let inputs = r.u32()? as usize;
        let outputs = r.u32()? as usize;
        table.push(LayerEntry { kind, activation, kernel, stride, inputs, outputs });
    }
    validate_table(&table, patch_size)?;

    let per_branch = (n_layers - 2) / 2;
    let mut convs = Vec::with_capacity(2 * per_branch);
    for e in &table[..2 * per_branch] {
        let weights = r.f32s(e.weight_count())?;
        let bias = r.f32s(e.outputs)?;
        convs.push(ConvLayer {
            in_channels: e.inputs,
            out_channels: e.outputs,
            kernel: e.kernel,
            stride: e.stride,
            activation: e.activation,
            weights,
            bias,
        });
    }
    let mut dense = Vec::with_capacity(2);
    for e in &table[2 * per_branch..] {
        let weights = r.f32s(e.weight_count())?;
        let bias = r.f32s(e.outputs)?;
        dense.push(Dense {
            inputs: e.inputs,
            outputs: e.outputs,
            activation: e.activation,
            weights,
            bias,
        });
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
    }
    let branch_l = Branch { layers: convs.split_off(per_branch) };
    let branch_h = Branch { layers: convs };
    let output = dense.pop().expect("two dense layers");
    let hidden = dense.pop().expect("two dense layers");
    Ok(DualNetParams {
        branch_h,
        branch_l,
        hidden,
        output,
        meta: ModelMeta { patch_size, seed, epochs },
    })
}

fn validate_table(table: &[LayerEntry], patch_size: usize) -> Result<()> {
    let shape_err = |m: String| Err(Error::Format(format!("shape table: {m}")));
    if patch_size < 3 {
        return shape_err(format!("patch size {patch_size}"));
    }
    let per_branch = (table.len() - 2) / 2;
    let (h, rest) = table.split_at(per_branch);
    let (l, head) = rest.split_at(per_branch);
    for branch in [h, l] {
        let mut c_in = 1;
        for e in branch {
            if e.kind != KIND_CONV || e.kernel == 0 || e.stride == 0 || e.inputs != c_in || e.outputs == 0 {
                return shape_err("malformed convolution stack".into());
            }
            c_in = e.outputs;
        }
    }
    for (a, b) in h.iter().zip(l) {
        if (a.kernel, a.stride, a.inputs, a.outputs) != (b.kernel, b.stride, b.inputs, b.outputs) {
            return shape_err("branches differ in shape".into());
        }
    }
    let features = 2 * (h[0].outputs + h[per_branch - 1].outputs);
    let (hid, out) = (&head[0], &head[1]);
    if hid.kind != KIND_DENSE || out.kind != KIND_DENSE {
        return shape_err("head must be two dense layers".into());
    }
    if hid.inputs != features || out.inputs != hid.outputs || out.outputs != 1 || hid.kernel != 1 || out.kernel != 1 {
        return shape_err(format!(
            "head {}->{}->{} does not fit {features} features",
            hid.inputs, hid.outputs, out.outputs
        ));
    }
    Ok(())
}

pub fn save_params(params: &DualNetParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, params_to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<DualNetParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    params_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Architecture;
    use crate::rng::substream;

    fn sample() -> DualNetParams {
        let mut p: DualNetParams = DualNetParams::init(
            &Architecture { patch_size: 32, widths: vec![4, 6, 8], hidden: 16 },
            &mut substream(4, "c"),
        );
        p.meta.seed = 4;
        p.meta.epochs = 9;
        p.output.bias[0] = -0.25;
        p
    }

    #[test]
    fn round_trip() {
        let p = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bgdn");
        save_params(&p, &path).unwrap();
        assert_eq!(load_params(&path).unwrap(), p);
    }

    #[test]
    fn truncation_is_a_checksum_error() {
        let bytes = params_to_bytes(&sample());
        for cut in [1, 4, 100, bytes.len() - 12] {
            let err = params_from_bytes(&bytes[..bytes.len() - cut]).unwrap_err();
            assert!(matches!(err, Error::Checksum { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn flipped_version_byte() {
        let mut bytes = params_to_bytes(&sample());
        bytes[4] ^= 0xff;
        assert!(matches!(params_from_bytes(&bytes), Err(Error::Version(_))));
    }

    #[test]
    fn corrupted_payload() {
        let mut bytes = params_to_bytes(&sample());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        assert!(matches!(params_from_bytes(&bytes), Err(Error::Checksum { .. })));
        assert!(matches!(params_from_bytes(b"nope"), Err(Error::Format(_))));
    }

    #[test]
    fn inconsistent_shape_table() {
        let mut bytes = params_to_bytes(&sample());
        // Hidden layer input width lives in the 7th table entry.
        let entry = 8 + 4 + 8 + 4 + 4 + 6 * 12;
        bytes[entry + 4] = bytes[entry + 4].wrapping_add(1);
        let body = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..body]);
        bytes[body..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(params_from_bytes(&bytes), Err(Error::Format(_))));
    }
}

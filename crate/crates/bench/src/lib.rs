//! Shared fixtures for the benchmarks.

use bandgauge::datagen::{gen_base, quantize_bitdepth, SynthKind, SynthSpec};
use bandgauge::imgcore::to_luma;
use bandgauge::PlanarImage;

/// Mixed scene of side `size`, quantized to `depth` bits.
pub fn banded_scene(size: usize, depth: u8) -> PlanarImage {
    let base = gen_base(&SynthSpec::new(SynthKind::MixedScene, size, 8, 1)).expect("valid spec");
    quantize_bitdepth(&base, depth).expect("valid depth")
}

/// Float luma crop of a banded scene.
pub fn luma_patch(n: usize) -> PlanarImage {
    to_luma(&banded_scene(n.max(64), 4)).crop(0, 0, n, n).expect("in bounds")
}

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imgcore::{PlanarImage, LUMA_WEIGHTS};

/// Content statistics on the 0–255 scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diversity {
    /// Standard deviation of luma.
    pub contrast: f64,
    pub colorfulness: f64,
    /// Mean over all R, G and B samples.
    pub brightness: f64,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    (m, (v.map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn diversity_metrics(img: &PlanarImage) -> Result<Diversity> {
    if img.channels() != 3 {
        return Err(Error::InvalidParameter(format!(
            "diversity metrics need an RGB image, got {} channels",
            img.channels()
        )));
    }
    let planes = [0, 1, 2].map(|c| match img.plane_u8(c) {
        Some(p) => p.iter().map(|&v| f64::from(v)).collect::<Vec<f64>>(),
        None => img.plane_f32(c).unwrap().iter().map(|&v| f64::from(v) * 255.0).collect(),
    });
    let [r, g, b] = [&planes[0][..], &planes[1][..], &planes[2][..]];
    let n = r.len();
    let w = LUMA_WEIGHTS.map(f64::from);

    let luma = (0..n).map(|i| w[0] * r[i] + w[1] * g[i] + w[2] * b[i]);
    let (_, contrast) = mean_std(luma);
    let (mu_rg, sd_rg) = mean_std((0..n).map(|i| r[i] - g[i]));
    let (mu_yb, sd_yb) = mean_std((0..n).map(|i| 0.5 * (r[i] + g[i]) - b[i]));
    let colorfulness = mu_rg.hypot(mu_yb) + sd_rg.hypot(sd_yb);
    let brightness = (0..n).map(|i| r[i] + g[i] + b[i]).sum::<f64>() / (3 * n) as f64;
    Ok(Diversity { contrast, colorfulness, brightness })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rgb(r: u8, g: u8, b: u8) -> PlanarImage {
        PlanarImage::from_u8(4, 4, vec![vec![r; 16], vec![g; 16], vec![b; 16]]).unwrap()
    }

    #[test]
    fn constant_gray() {
        let d = diversity_metrics(&rgb(90, 90, 90)).unwrap();
        assert!(d.contrast.abs() < 1e-9);
        assert_eq!(d.colorfulness, 0.0);
        assert!((d.brightness - 90.0).abs() < 1e-9);
    }

    #[test]
    fn pure_red() {
        let d = diversity_metrics(&rgb(255, 0, 0)).unwrap();
        assert!((d.colorfulness - 255f64.hypot(127.5)).abs() < 1e-9);
        assert!((d.colorfulness - 285.1).abs() < 0.05);
    }

    #[test]
    fn checkerboard_brightness() {
        let v: Vec<u8> = (0..16).map(|i| if (i % 4 + i / 4) % 2 == 0 { 0 } else { 255 }).collect();
        let img = PlanarImage::from_u8(4, 4, vec![v.clone(), v.clone(), v]).unwrap();
        let d = diversity_metrics(&img).unwrap();
        assert!((d.brightness - 127.5).abs() < 1e-9);
        assert!((d.contrast - 127.5).abs() < 1e-4);
        assert!(diversity_metrics(&PlanarImage::gray_u8(2, 2, vec![0; 4]).unwrap()).is_err());
    }
}

//! Image comparison metrics.
//!
//! All metrics operate on the 8-bit stored values. PSNR of identical images
//! is the +infinity sentinel; JSON export writes it as the string "inf".

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::image::RasterImage;

/// Peak intensity of the 8-bit range.
pub const PEAK: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Psnr,
    Mse,
    Ssim,
    Histogram,
    ColorScattering,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Mse => "mse",
            Metric::Ssim => "ssim",
            Metric::Histogram => "histogram",
            Metric::ColorScattering => "color_scattering",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Dispatches to the individual metrics. Both images must share dimensions
/// and channel count.
pub fn image_distance(a: &RasterImage, b: &RasterImage, metric: Metric) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(match metric {
        Metric::Psnr => psnr(a, b),
        Metric::Mse => mse(a, b),
        Metric::Ssim => ssim(a, b),
        Metric::Histogram => histogram_distance(a, b),
        Metric::ColorScattering => color_scattering_distance(a, b),
    })
}

/// Mean squared error over all pixels and channels.
pub fn mse(a: &RasterImage, b: &RasterImage) -> f64 {
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    sum / a.data().len() as f64
}

/// `20 log10(255) - 10 log10(mse)`, +inf for identical images.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> f64 {
    let e = mse(a, b);
    if e == 0.0 {
        f64::INFINITY
    } else {
        20.0 * PEAK.log10() - 10.0 * e.log10()
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_taps(len: usize, sigma: f64) -> Vec<f64> {
    let half = (len / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable convolution with reflect padding.
fn filter_separable(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let reflect = |i: isize, n: isize| -> usize {
        let mut i = i;
        if i < 0 {
            i = -i - 1;
        }
        if i >= n {
            i = 2 * n - 1 - i;
        }
        i.clamp(0, n - 1) as usize
    };
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let cc = reflect(c as isize + t as isize - half, w as isize);
                acc += k * plane[r * w + cc];
            }
            tmp[r * w + c] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let rr = reflect(r as isize + t as isize - half, h as isize);
                acc += k * tmp[rr * w + c];
            }
            out[r * w + c] = acc;
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = (SSIM_K1 * PEAK) * (SSIM_K1 * PEAK);
    let c2 = (SSIM_K2 * PEAK) * (SSIM_K2 * PEAK);

    let mu_x = filter_separable(x, h, w, &taps);
    let mu_y = filter_separable(y, h, w, &taps);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let e_xx = filter_separable(&xx, h, w, &taps);
    let e_yy = filter_separable(&yy, h, w, &taps);
    let e_xy = filter_separable(&xy, h, w, &taps);

    let mut acc = 0.0;
    for i in 0..h * w {
        let var_x = e_xx[i] - mu_x[i] * mu_x[i];
        let var_y = e_yy[i] - mu_y[i] * mu_y[i];
        let cov = e_xy[i] - mu_x[i] * mu_y[i];
        let num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2);
        let den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (var_x + var_y + c2);
        acc += num / den;
    }
    acc / (h * w) as f64
}

/// Mean local SSIM with an 11x11 Gaussian window (sigma 1.5), computed per
/// channel and averaged.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> f64 {
    let (h, w) = a.dims();
    let mut acc = 0.0;
    for ch in 0..a.channels() {
        acc += ssim_plane(&a.plane(ch), &b.plane(ch), h, w);
    }
    acc / a.channels() as f64
}

/// L1 distance between per-channel 256-bin normalized intensity histograms,
/// summed over channels.
pub fn histogram_distance(a: &RasterImage, b: &RasterImage) -> f64 {
    let n = (a.height() * a.width()) as f64;
    let mut total = 0.0;
    for ch in 0..a.channels() {
        let mut ha = [0.0f64; 256];
        let mut hb = [0.0f64; 256];
        for i in 0..a.height() * a.width() {
            ha[a.data()[i * a.channels() + ch] as usize] += 1.0;
            hb[b.data()[i * b.channels() + ch] as usize] += 1.0;
        }
        for t in 0..256 {
            total += (ha[t] / n - hb[t] / n).abs();
        }
    }
    total
}

/// Per-intensity mean distance to the image center, on the luminance channel.
fn scatter_vector(img: &RasterImage) -> [f64; 256] {
    let (h, w) = img.dims();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let lum = img.luminance();
    let mut sum = [0.0f64; 256];
    let mut count = [0u64; 256];
    for r in 0..h {
        for c in 0..w {
            let t = lum[r * w + c].round().clamp(0.0, 255.0) as usize;
            let d = ((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)).sqrt();
            sum[t] += d;
            count[t] += 1;
        }
    }
    let mut out = [0.0f64; 256];
    for t in 0..256 {
        if count[t] > 0 {
            out[t] = sum[t] / count[t] as f64;
        }
    }
    out
}

/// L2 distance between the color-scattering vectors of the two images.
pub fn color_scattering_distance(a: &RasterImage, b: &RasterImage) -> f64 {
    let va = scatter_vector(a);
    let vb = scatter_vector(b);
    va.iter()
        .zip(vb.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Serialize PSNR-like values, mapping +inf to the string "inf".
pub mod serde_db {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            v.serialize(s)
        } else {
            "inf".serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(#[allow(dead_code)] String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Num(v) => v,
            Raw::Text(_) => f64::INFINITY,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(h: usize, w: usize, ch: usize) -> RasterImage {
        RasterImage::from_fn(h, w, ch, |r, c, k| {
            ((r * 37 + c * 11 + k * 7) % 251) as f64
        })
    }

    #[test]
    fn identical_images_hit_all_sentinels() {
        let a = textured(16, 16, 3);
        assert_eq!(psnr(&a, &a), f64::INFINITY);
        assert_eq!(mse(&a, &a), 0.0);
        assert!((ssim(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(histogram_distance(&a, &a), 0.0);
        assert_eq!(color_scattering_distance(&a, &a), 0.0);
    }

    #[test]
    fn unit_offset_gives_unit_mse_and_forty_eight_db() {
        // b = a + 1 everywhere, no clipping.
        let a = RasterImage::from_fn(8, 8, 1, |r, c, _| ((r * 8 + c) % 200) as f64);
        let b = RasterImage::from_fn(8, 8, 1, |r, c, _| ((r * 8 + c) % 200 + 1) as f64);
        assert_eq!(mse(&a, &b), 1.0);
        let expect = 20.0 * 255f64.log10();
        assert!((psnr(&a, &b) - expect).abs() < 1e-9);
        assert!((expect - 48.1308).abs() < 1e-4);
    }

    #[test]
    fn histogram_is_permutation_invariant() {
        let a = textured(8, 8, 1);
        let mut data = a.data().to_vec();
        data.reverse();
        data.swap(0, 17);
        let b = RasterImage::from_raw(8, 8, 1, data).unwrap();
        assert_eq!(histogram_distance(&a, &b), 0.0);
    }

    #[test]
    fn ssim_penalizes_noise() {
        let a = textured(32, 32, 1);
        let b = RasterImage::from_fn(32, 32, 1, |r, c, _| {
            a.get(r, c, 0) as f64 + if (r + c) % 2 == 0 { 40.0 } else { -40.0 }
        });
        let s = ssim(&a, &b);
        assert!(s < 0.9, "ssim = {s}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = textured(8, 8, 1);
        let b = textured(8, 9, 1);
        assert!(image_distance(&a, &b, Metric::Mse).is_err());
    }

    #[test]
    fn psnr_serializes_inf_as_string() {
        #[derive(serde::Serialize)]
        struct S {
            #[serde(with = "serde_db")]
            v: f64,
        }
        let j = serde_json::to_string(&S { v: f64::INFINITY }).unwrap();
        assert_eq!(j, r#"{"v":"inf"}"#);
        let j = serde_json::to_string(&S { v: 12.5 }).unwrap();
        assert_eq!(j, r#"{"v":12.5}"#);
    }
}

//! Spatial-paradigm detectors.
//!
//! Adversarial-signal amplification (down-and-upscaling, min/max filters)
//! compares an image against a version in which the attack payload is
//! strengthened. Clean-signal comparison (clean filter, patch-clean variants)
//! compares against a version in which the payload is erased instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{self, FilterKind, MinMaxMode};
use crate::image::RasterImage;
use crate::metrics::{self, Metric};
use crate::scaling::{self, ScaleSpec};

/// PSNR cap substituted for identical patches (the 16-bit-accumulator
/// ceiling); keeps the patch statistics finite.
pub const PATCH_PSNR_CAP: f64 = 96.0;

/// Default patch-clean parameters: half length and stride.
pub const PATCH_CLEAN_W: usize = 22;
pub const PATCH_CLEAN_STRIDE: usize = 11;
/// Default targeted patch-clean parameters.
pub const TARGETED_W: usize = 11;
pub const TARGETED_STRIDE: usize = 11;
pub const TARGETED_Q: f64 = 0.6;

/// Sliding-window tiling of an image: square patches of side `2w`, anchored
/// every `stride` pixels, with the final row/column anchored flush to the
/// border so every pixel is covered.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PatchGrid {
    pub half_len: usize,
    pub stride: usize,
    /// (top, left) anchors; every patch is side x side.
    pub anchors: Vec<(usize, usize)>,
    pub side: usize,
}

impl PatchGrid {
    /// Builds the grid for an h x w image. Fails when a patch cannot fit.
    pub fn new(h: usize, w: usize, half_len: usize, stride: usize) -> Result<Self> {
        let side = 2 * half_len;
        if side == 0 || stride == 0 {
            return Err(Error::InvalidParameter(
                "patch side and stride must be positive".into(),
            ));
        }
        if side > h || side > w {
            return Err(Error::InvalidParameter(format!(
                "patch side {side} exceeds image {h}x{w}"
            )));
        }
        let axis_anchors = |len: usize| -> Vec<usize> {
            let mut v = Vec::new();
            let mut pos = 0;
            loop {
                if pos + side >= len {
                    v.push(len - side);
                    break;
                }
                v.push(pos);
                pos += stride;
            }
            v
        };
        let tops = axis_anchors(h);
        let lefts = axis_anchors(w);
        let mut anchors = Vec::with_capacity(tops.len() * lefts.len());
        for &t in &tops {
            for &l in &lefts {
                anchors.push((t, l));
            }
        }
        Ok(Self {
            half_len,
            stride,
            anchors,
            side,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty sample");
    let q = q.clamp(0.0, 1.0);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Down-and-upscaling score: distance between the image and its
/// downscale-then-upscale round trip. PSNR/SSIM read low for attacks;
/// MSE, histogram and color scattering read high.
pub fn down_up_score(img: &RasterImage, spec: &ScaleSpec, metric: Metric) -> Result<f64> {
    let down = scaling::scale(img, spec)?;
    let up = scaling::upscale(&down, spec)?;
    metrics::image_distance(img, &up, metric)
}

/// Min/max amplifying filter score: 3x3 erosion or dilation compared against
/// the input with MSE or SSIM.
pub fn minmax_filter_score(img: &RasterImage, mode: MinMaxMode, metric: Metric) -> Result<f64> {
    let filtered = filters::minmax_filter(img, mode);
    metrics::image_distance(img, &filtered, metric)
}

/// Clean-filter score: prevention-filter the scaling pixels and compare
/// against the input. Low PSNR/SSIM means attack.
pub fn clean_filter_score(
    img: &RasterImage,
    spec: &ScaleSpec,
    kind: FilterKind,
    metric: Metric,
    seed: u64,
) -> Result<f64> {
    let cleaned = clean_image(img, spec, kind, seed)?;
    metrics::image_distance(img, &cleaned, metric)
}

/// The prevention-filtered version of an image for a spec, with the default
/// window for the spec's ratio.
pub fn clean_image(
    img: &RasterImage,
    spec: &ScaleSpec,
    kind: FilterKind,
    seed: u64,
) -> Result<RasterImage> {
    let mask = scaling::scaling_pixel_mask(spec)?;
    let window = filters::default_window(spec);
    filters::prevention_filter(img, &mask, kind, window, seed)
}

/// Patch-clean score from a vector of per-patch PSNR values:
/// `|mean - min|`, with infinite entries capped first.
pub fn patch_clean_statistic(patch_psnrs: &[f64]) -> f64 {
    let capped: Vec<f64> = patch_psnrs
        .iter()
        .map(|&v| if v.is_finite() { v.min(PATCH_PSNR_CAP) } else { PATCH_PSNR_CAP })
        .collect();
    let mean = capped.iter().sum::<f64>() / capped.len() as f64;
    let min = capped.iter().cloned().fold(f64::MAX, f64::min);
    (mean - min).abs()
}

fn patch_view(img: &RasterImage, top: usize, left: usize, side: usize) -> RasterImage {
    RasterImage::from_fn(side, side, img.channels(), |r, c, ch| {
        img.get(top + r, left + c, ch) as f64
    })
}

/// Patch-clean filter score: downscale the image and its median-cleaned
/// version, smooth the former, tile both, and compare patch PSNRs. The gap
/// between mean and minimum reveals a locally corrupted patch. High means
/// attack.
pub fn patch_clean_score(
    img: &RasterImage,
    spec: &ScaleSpec,
    half_len: usize,
    stride: usize,
    seed: u64,
) -> Result<f64> {
    let down = scaling::scale(img, spec)?;
    let cleaned = clean_image(img, spec, FilterKind::Median, seed)?;
    let down_clean = scaling::scale(&cleaned, spec)?;
    // The cleaned branch is slightly smoothed by the filter, so the direct
    // branch gets a matching 3x3 Gaussian.
    let down_smooth = filters::gaussian_smooth(&down)?;
    let grid = PatchGrid::new(spec.dst.0, spec.dst.1, half_len, stride)?;
    let v: Vec<f64> = grid
        .anchors
        .iter()
        .map(|&(t, l)| {
            let a = patch_view(&down_smooth, t, l, grid.side);
            let b = patch_view(&down_clean, t, l, grid.side);
            metrics::psnr(&a, &b)
        })
        .collect();
    Ok(patch_clean_statistic(&v))
}

/// Targeted patch-clean score from per-patch quantiles: `|max - mean|`.
pub fn targeted_patch_statistic(patch_quantiles: &[f64]) -> f64 {
    let mean = patch_quantiles.iter().sum::<f64>() / patch_quantiles.len() as f64;
    let max = patch_quantiles.iter().cloned().fold(f64::MIN, f64::max);
    (max - mean).abs()
}

/// Targeted patch-clean filter score: clean the full-resolution image, then
/// per patch compare only the scaling pixels between original and cleaned
/// version, take the q-quantile of the absolute differences, and score
/// `|max - mean|` over patches. Patches without scaling pixels are skipped.
/// High means attack.
pub fn targeted_patch_clean_score(
    img: &RasterImage,
    spec: &ScaleSpec,
    half_len: usize,
    stride: usize,
    q: f64,
    seed: u64,
) -> Result<f64> {
    let mask = scaling::scaling_pixel_mask(spec)?;
    let window = filters::default_window(spec);
    let cleaned = filters::prevention_filter(img, &mask, FilterKind::Median, window, seed)?;
    let (h, w) = img.dims();
    let grid = PatchGrid::new(h, w, half_len, stride)?;

    let mut quantiles = Vec::new();
    let mut diffs = Vec::new();
    for &(top, left) in &grid.anchors {
        diffs.clear();
        for r in top..top + grid.side {
            for c in left..left + grid.side {
                if !mask.get(r, c) {
                    continue;
                }
                for ch in 0..img.channels() {
                    let d = img.get(r, c, ch) as f64 - cleaned.get(r, c, ch) as f64;
                    diffs.push(d.abs());
                }
            }
        }
        if !diffs.is_empty() {
            quantiles.push(quantile(&diffs, q));
        }
    }
    if quantiles.is_empty() {
        return Err(Error::EmptyScoringSet(
            "no patch contains scaling pixels".into(),
        ));
    }
    Ok(targeted_patch_statistic(&quantiles))
}

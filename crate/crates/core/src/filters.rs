//! Reconstruction and amplification filters.
//!
//! The prevention filters rebuild every scaling pixel from its non-masked
//! neighborhood, erasing whatever an attack wrote there. The min/max filters
//! amplify sparse modifications instead.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RasterImage;
use crate::scaling::{PixelMask, ScaleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// Replace by the median of the non-masked window pixels.
    Median,
    /// Replace by one uniformly drawn non-masked window pixel.
    Random,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Median => "median",
            FilterKind::Random => "random",
        }
    }
}

/// Default window side for a spec: `2 * ceil(beta) + 1`, wide enough to reach
/// clean neighbors at ratio beta.
pub fn default_window(spec: &ScaleSpec) -> usize {
    let beta = spec.beta_m().max(spec.beta_n());
    2 * beta.ceil() as usize + 1
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Replaces every masked pixel by a statistic of the non-masked pixels inside
/// its window. Windows grow by 2 per axis until they contain a non-masked
/// pixel; an image whose windows reach `min(m, n)` without finding one is
/// degenerate and rejected.
///
/// The random variant draws uniformly from the same neighbor set and is
/// deterministic for a fixed seed.
pub fn prevention_filter(
    img: &RasterImage,
    mask: &PixelMask,
    kind: FilterKind,
    window: usize,
    seed: u64,
) -> Result<RasterImage> {
    if mask.dims() != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", img.height(), img.width()),
            actual: format!("{}x{}", mask.dims().0, mask.dims().1),
        });
    }
    if window < 3 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "window must be odd and >= 3, got {window}"
        )));
    }
    let (h, w) = img.dims();
    let cap = h.min(w);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let mut neighbors: Vec<(usize, usize)> = Vec::new();

    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            neighbors.clear();
            let mut side = window;
            loop {
                let half = side / 2;
                let r0 = r.saturating_sub(half);
                let r1 = (r + half).min(h - 1);
                let c0 = c.saturating_sub(half);
                let c1 = (c + half).min(w - 1);
                for rr in r0..=r1 {
                    for cc in c0..=c1 {
                        if !mask.get(rr, cc) {
                            neighbors.push((rr, cc));
                        }
                    }
                }
                if !neighbors.is_empty() {
                    break;
                }
                if side >= cap {
                    return Err(Error::DegenerateFilter(format!(
                        "no non-masked pixel within window of side {side}"
                    )));
                }
                side += 2;
            }
            match kind {
                FilterKind::Median => {
                    for ch in 0..img.channels() {
                        let mut vals: Vec<f64> = neighbors
                            .iter()
                            .map(|&(rr, cc)| img.get(rr, cc, ch) as f64)
                            .collect();
                        let m = median_of(&mut vals);
                        out.set(r, c, ch, crate::image::quantize(m));
                    }
                }
                FilterKind::Random => {
                    let pick = neighbors[rng.random_range(0..neighbors.len())];
                    for ch in 0..img.channels() {
                        out.set(r, c, ch, img.get(pick.0, pick.1, ch));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 3x3 Gaussian blur with sigma 0.8 (the standard kernel-size-derived sigma
/// for a specified sigma of zero) and reflect padding.
pub fn gaussian_smooth(img: &RasterImage) -> Result<RasterImage> {
    let taps = gaussian3_taps();
    let (h, w) = img.dims();
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
    let planes: Vec<Vec<f64>> = img
        .planes()
        .iter()
        .map(|p| {
            let mut tmp = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let mut acc = 0.0;
                    for (t, &k) in taps.iter().enumerate() {
                        let cc = reflect(c as isize + t as isize - 1, w as isize);
                        acc += k * p[r * w + cc];
                    }
                    tmp[r * w + c] = acc;
                }
            }
            let mut out = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let mut acc = 0.0;
                    for (t, &k) in taps.iter().enumerate() {
                        let rr = reflect(r as isize + t as isize - 1, h as isize);
                        acc += k * tmp[rr * w + c];
                    }
                    out[r * w + c] = acc;
                }
            }
            out
        })
        .collect();
    RasterImage::from_planes(h, w, &planes)
}

/// Normalized 1D taps of the 3x3 Gaussian, sigma = 0.3*((3-1)*0.5 - 1) + 0.8.
pub fn gaussian3_taps() -> [f64; 3] {
    let sigma = 0.3 * ((3.0 - 1.0) * 0.5 - 1.0) + 0.8;
    let side = (-1.0 / (2.0 * sigma * sigma) as f64).exp();
    let sum = 1.0 + 2.0 * side;
    [side / sum, 1.0 / sum, side / sum]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinMaxMode {
    Min,
    Max,
}

impl MinMaxMode {
    pub fn name(&self) -> &'static str {
        match self {
            MinMaxMode::Min => "min",
            MinMaxMode::Max => "max",
        }
    }
}

/// 3x3 erosion (min) or dilation (max), borders clamped.
pub fn minmax_filter(img: &RasterImage, mode: MinMaxMode) -> RasterImage {
    let (h, w) = img.dims();
    let mut out = img.clone();
    for r in 0..h {
        for c in 0..w {
            let r0 = r.saturating_sub(1);
            let r1 = (r + 1).min(h - 1);
            let c0 = c.saturating_sub(1);
            let c1 = (c + 1).min(w - 1);
            for ch in 0..img.channels() {
                let mut best = img.get(r, c, ch);
                for rr in r0..=r1 {
                    for cc in c0..=c1 {
                        let v = img.get(rr, cc, ch);
                        best = match mode {
                            MinMaxMode::Min => best.min(v),
                            MinMaxMode::Max => best.max(v),
                        };
                    }
                }
                out.set(r, c, ch, best);
            }
        }
    }
    out
}

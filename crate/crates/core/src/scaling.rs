//! Scaling operators with explicit sampling structure.
//!
//! Downscaling is factorized into two one-dimensional mixing matrices so the
//! set of source pixels that actually influence the output is explicit. The
//! coordinate convention is half-pixel-center mapping,
//! `src = (dst + 0.5) * beta - 0.5`, with kernel weights renormalized after
//! boundary clamping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize, RasterImage};

/// Weights below this magnitude are treated as zero when building operators.
const WEIGHT_EPS: f64 = 1e-12;

/// Supported scaling algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleAlgorithm {
    /// Single-tap point sampling.
    Nearest,
    /// Triangle kernel, support 2.
    Bilinear,
    /// Keys cubic kernel with a = -0.5, support 4.
    Bicubic,
}

impl ScaleAlgorithm {
    pub const ALL: [ScaleAlgorithm; 3] = [
        ScaleAlgorithm::Nearest,
        ScaleAlgorithm::Bilinear,
        ScaleAlgorithm::Bicubic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScaleAlgorithm::Nearest => "nearest",
            ScaleAlgorithm::Bilinear => "bilinear",
            ScaleAlgorithm::Bicubic => "bicubic",
        }
    }
}

impl std::fmt::Display for ScaleAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A downscaling specification: algorithm, source and target dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScaleSpec {
    pub algorithm: ScaleAlgorithm,
    /// Source (m, n) = (height, width).
    pub src: (usize, usize),
    /// Target (m', n').
    pub dst: (usize, usize),
}

impl ScaleSpec {
    /// Creates a downscale spec. Upscaling specs (target larger than source)
    /// are rejected.
    pub fn new(
        algorithm: ScaleAlgorithm,
        src: (usize, usize),
        dst: (usize, usize),
    ) -> Result<Self> {
        if src.0 == 0 || src.1 == 0 || dst.0 == 0 || dst.1 == 0 {
            return Err(Error::InvalidSpec("zero dimension".into()));
        }
        if src.0 < dst.0 || src.1 < dst.1 {
            return Err(Error::InvalidSpec(format!(
                "upscale spec rejected: {}x{} -> {}x{}",
                src.0, src.1, dst.0, dst.1
            )));
        }
        Ok(Self { algorithm, src, dst })
    }

    /// Vertical scaling ratio m / m'.
    pub fn beta_m(&self) -> f64 {
        self.src.0 as f64 / self.dst.0 as f64
    }

    /// Horizontal scaling ratio n / n'.
    pub fn beta_n(&self) -> f64 {
        self.src.1 as f64 / self.dst.1 as f64
    }

    /// True when both ratios exceed 1, i.e. there is slack for an attack to
    /// hide modified pixels in.
    pub fn is_attackable(&self) -> bool {
        self.beta_m() > 1.0 && self.beta_n() > 1.0
    }
}

/// One sparse mixing row: the source taps of a single output coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingRow {
    /// (source index, weight) pairs, ascending by index, weights nonzero.
    pub taps: Vec<(usize, f64)>,
}

impl MixingRow {
    pub fn weight_sum(&self) -> f64 {
        self.taps.iter().map(|(_, w)| w).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.taps.iter().map(|(_, w)| w * w).sum()
    }

    /// Dot product with a strided slice (`values[i * stride]` is tap `i`).
    #[inline]
    pub fn dot_strided(&self, values: &[f64], stride: usize) -> f64 {
        self.taps
            .iter()
            .map(|&(i, w)| w * values[i * stride])
            .sum()
    }
}

/// Separable factorization of a scaling operation:
/// `scale(X) = CL * X * CR^T` per channel, with `CL` acting on rows and `CR`
/// on columns. Rows are stored sparsely; each is nonnegative for nearest and
/// bilinear, and sums to 1 for every algorithm.
#[derive(Debug, Clone)]
pub struct SamplingOperator {
    pub spec: ScaleSpec,
    /// m' rows over m source rows.
    pub rows: Vec<MixingRow>,
    /// n' rows over n source columns.
    pub cols: Vec<MixingRow>,
}

impl SamplingOperator {
    /// Dense m' x m row matrix, mainly for inspection and tests.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        dense(&self.rows, self.spec.src.0)
    }

    /// Dense n' x n column matrix.
    pub fn dense_cols(&self) -> Vec<Vec<f64>> {
        dense(&self.cols, self.spec.src.1)
    }
}

fn dense(rows: &[MixingRow], width: usize) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| {
            let mut v = vec![0.0; width];
            for &(i, w) in &r.taps {
                v[i] = w;
            }
            v
        })
        .collect()
}

/// Keys bicubic kernel with a = -0.5.
fn keys_kernel(d: f64) -> f64 {
    let d = d.abs();
    if d <= 1.0 {
        1.5 * d * d * d - 2.5 * d * d + 1.0
    } else if d < 2.0 {
        -0.5 * d * d * d + 2.5 * d * d - 4.0 * d + 2.0
    } else {
        0.0
    }
}

/// Triangle kernel, support 2.
fn triangle_kernel(d: f64) -> f64 {
    let d = d.abs();
    if d < 1.0 {
        1.0 - d
    } else {
        0.0
    }
}

/// Builds the sparse mixing rows for one axis: `n_dst` outputs over `n_src`
/// inputs. Works for any ratio; downscale validation happens in the public
/// entry points.
fn build_axis(algorithm: ScaleAlgorithm, n_src: usize, n_dst: usize) -> Vec<MixingRow> {
    let beta = n_src as f64 / n_dst as f64;
    let mut rows = Vec::with_capacity(n_dst);
    for k in 0..n_dst {
        let src = (k as f64 + 0.5) * beta - 0.5;
        let mut taps: Vec<(usize, f64)> = Vec::new();
        match algorithm {
            ScaleAlgorithm::Nearest => {
                // Round half away from zero, clamped into range.
                let i = src.round().clamp(0.0, (n_src - 1) as f64) as usize;
                taps.push((i, 1.0));
            }
            ScaleAlgorithm::Bilinear | ScaleAlgorithm::Bicubic => {
                let (lo, hi) = match algorithm {
                    ScaleAlgorithm::Bilinear => (src.floor() as i64, src.floor() as i64 + 1),
                    _ => (src.floor() as i64 - 1, src.floor() as i64 + 2),
                };
                let kernel = match algorithm {
                    ScaleAlgorithm::Bilinear => triangle_kernel as fn(f64) -> f64,
                    _ => keys_kernel as fn(f64) -> f64,
                };
                let mut acc: Vec<(usize, f64)> = Vec::with_capacity(4);
                for i in lo..=hi {
                    let w = kernel(src - i as f64);
                    if w.abs() <= WEIGHT_EPS {
                        continue;
                    }
                    // Boundary clamp: out-of-range taps fold onto the edge.
                    let idx = i.clamp(0, n_src as i64 - 1) as usize;
                    if let Some(last) = acc.iter_mut().find(|(j, _)| *j == idx) {
                        last.1 += w;
                    } else {
                        acc.push((idx, w));
                    }
                }
                // Renormalize to sum 1 after clamping.
                let sum: f64 = acc.iter().map(|(_, w)| w).sum();
                for (i, w) in acc {
                    let w = w / sum;
                    if w.abs() > WEIGHT_EPS {
                        taps.push((i, w));
                    }
                }
                taps.sort_by_key(|&(i, _)| i);
            }
        }
        rows.push(MixingRow { taps });
    }
    rows
}

/// Builds the separable sampling operator realizing `spec`.
///
/// Rejects upscale specs; use [`upscale`] for the reverse direction.
pub fn build_sampling_operator(spec: &ScaleSpec) -> Result<SamplingOperator> {
    if spec.src.0 < spec.dst.0 || spec.src.1 < spec.dst.1 {
        return Err(Error::InvalidSpec("upscale spec rejected".into()));
    }
    Ok(SamplingOperator {
        spec: *spec,
        rows: build_axis(spec.algorithm, spec.src.0, spec.dst.0),
        cols: build_axis(spec.algorithm, spec.src.1, spec.dst.1),
    })
}

/// Applies a set of mixing rows along the row axis of a plane.
fn apply_rows(rows: &[MixingRow], plane: &[f64], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows.len() * width];
    for (k, row) in rows.iter().enumerate() {
        let dst = &mut out[k * width..(k + 1) * width];
        for &(i, w) in &row.taps {
            let src = &plane[i * width..(i + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += w * s;
            }
        }
    }
    out
}

/// Applies a set of mixing rows along the column axis of a plane.
pub(crate) fn apply_cols(cols: &[MixingRow], plane: &[f64], height: usize, width: usize) -> Vec<f64> {
    let n_dst = cols.len();
    let mut out = vec![0.0; height * n_dst];
    for r in 0..height {
        let src = &plane[r * width..(r + 1) * width];
        let dst = &mut out[r * n_dst..(r + 1) * n_dst];
        for (l, col) in cols.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, w) in &col.taps {
                acc += w * src[j];
            }
            dst[l] = acc;
        }
    }
    out
}

/// Scales one f64 plane without quantization.
pub fn scale_plane(op: &SamplingOperator, plane: &[f64]) -> Vec<f64> {
    let (m, n) = op.spec.src;
    debug_assert_eq!(plane.len(), m * n);
    let mid = apply_cols(&op.cols, plane, m, n);
    apply_rows(&op.rows, &mid, op.spec.dst.1)
}

/// Downscales an image per `spec`: per channel `clamp(round(CL X CR^T))`.
pub fn scale(img: &RasterImage, spec: &ScaleSpec) -> Result<RasterImage> {
    if img.dims() != spec.src {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", spec.src.0, spec.src.1),
            actual: format!("{}x{}", img.height(), img.width()),
        });
    }
    let op = build_sampling_operator(spec)?;
    scale_with_operator(img, &op)
}

/// Downscale using a pre-built operator (avoids rebuilding in hot loops).
pub fn scale_with_operator(img: &RasterImage, op: &SamplingOperator) -> Result<RasterImage> {
    if img.dims() != op.spec.src {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", op.spec.src.0, op.spec.src.1),
            actual: format!("{}x{}", img.height(), img.width()),
        });
    }
    let planes: Vec<Vec<f64>> = img.planes().iter().map(|p| scale_plane(op, p)).collect();
    RasterImage::from_planes(op.spec.dst.0, op.spec.dst.1, &planes)
}

/// Upscales an image from `spec.dst` back to `spec.src` with the same
/// algorithm family (used by the down-and-up detector).
pub fn upscale(img: &RasterImage, spec: &ScaleSpec) -> Result<RasterImage> {
    if img.dims() != spec.dst {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", spec.dst.0, spec.dst.1),
            actual: format!("{}x{}", img.height(), img.width()),
        });
    }
    let rows = build_axis(spec.algorithm, spec.dst.0, spec.src.0);
    let cols = build_axis(spec.algorithm, spec.dst.1, spec.src.1);
    let (h, w) = img.dims();
    let planes: Vec<Vec<f64>> = img
        .planes()
        .iter()
        .map(|p| {
            let mid = apply_cols(&cols, p, h, w);
            apply_rows(&rows, &mid, spec.src.1)
        })
        .collect();
    RasterImage::from_planes(spec.src.0, spec.src.1, &planes)
}

/// The set of source pixels with nonzero scaling weight.
#[derive(Debug, Clone)]
pub struct PixelMask {
    height: usize,
    width: usize,
    /// Row-major grid; true where the pixel influences the scaled output.
    grid: Vec<bool>,
    /// Per-axis touch vectors the grid factors into.
    rows_touched: Vec<bool>,
    cols_touched: Vec<bool>,
}

impl PixelMask {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.grid[row * self.width + col]
    }

    pub fn grid(&self) -> &[bool] {
        &self.grid
    }

    pub fn count(&self) -> usize {
        self.grid.iter().filter(|&&b| b).count()
    }

    pub fn is_all_true(&self) -> bool {
        self.grid.iter().all(|&b| b)
    }

    pub fn rows_touched(&self) -> &[bool] {
        &self.rows_touched
    }

    pub fn cols_touched(&self) -> &[bool] {
        &self.cols_touched
    }

    /// Indices of all masked pixels (row, col), row-major order.
    pub fn masked_coords(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

/// Computes the scaling-pixel mask of a spec: `mask(i, j)` is true exactly
/// when row `i` and column `j` both carry nonzero weight in the operator.
pub fn scaling_pixel_mask(spec: &ScaleSpec) -> Result<PixelMask> {
    let op = build_sampling_operator(spec)?;
    Ok(mask_from_operator(&op))
}

pub fn mask_from_operator(op: &SamplingOperator) -> PixelMask {
    let (m, n) = op.spec.src;
    let mut rows_touched = vec![false; m];
    for row in &op.rows {
        for &(i, _) in &row.taps {
            rows_touched[i] = true;
        }
    }
    let mut cols_touched = vec![false; n];
    for col in &op.cols {
        for &(j, _) in &col.taps {
            cols_touched[j] = true;
        }
    }
    let mut grid = vec![false; m * n];
    for i in 0..m {
        if !rows_touched[i] {
            continue;
        }
        for j in 0..n {
            grid[i * n + j] = cols_touched[j];
        }
    }
    PixelMask {
        height: m,
        width: n,
        grid,
        rows_touched,
        cols_touched,
    }
}

/// Reference implementation: evaluates the kernel directly per output pixel,
/// with no operator factorization. Quadratic in the kernel support, intended
/// for oracle comparisons in tests.
pub fn scale_reference(img: &RasterImage, spec: &ScaleSpec) -> Result<RasterImage> {
    if img.dims() != spec.src {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", spec.src.0, spec.src.1),
            actual: format!("{}x{}", img.height(), img.width()),
        });
    }
    let rows = build_axis(spec.algorithm, spec.src.0, spec.dst.0);
    let cols = build_axis(spec.algorithm, spec.src.1, spec.dst.1);
    let (mp, np) = spec.dst;
    let mut data = Vec::with_capacity(mp * np * img.channels());
    for k in 0..mp {
        for l in 0..np {
            for ch in 0..img.channels() {
                let mut acc = 0.0;
                for &(i, wr) in &rows[k].taps {
                    for &(j, wc) in &cols[l].taps {
                        acc += wr * wc * img.get(i, j, ch) as f64;
                    }
                }
                data.push(quantize(acc));
            }
        }
    }
    RasterImage::from_raw(mp, np, img.channels(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alg: ScaleAlgorithm, src: (usize, usize), dst: (usize, usize)) -> ScaleSpec {
        ScaleSpec::new(alg, src, dst).unwrap()
    }

    #[test]
    fn identity_nearest_operator_is_identity() {
        let op =
            build_sampling_operator(&spec(ScaleAlgorithm::Nearest, (4, 4), (4, 4))).unwrap();
        for (k, row) in op.rows.iter().enumerate() {
            assert_eq!(row.taps, vec![(k, 1.0)]);
        }
        for (k, col) in op.cols.iter().enumerate() {
            assert_eq!(col.taps, vec![(k, 1.0)]);
        }
    }

    #[test]
    fn nearest_four_to_two_selects_rows_one_and_three() {
        // src = (k + 0.5) * 2 - 0.5 rounds to 1 and 3.
        let op =
            build_sampling_operator(&spec(ScaleAlgorithm::Nearest, (4, 4), (2, 2))).unwrap();
        let picked: Vec<usize> = op.rows.iter().map(|r| r.taps[0].0).collect();
        assert_eq!(picked, vec![1, 3]);
    }

    #[test]
    fn rows_are_stochastic_for_all_algorithms() {
        for alg in ScaleAlgorithm::ALL {
            let op = build_sampling_operator(&spec(alg, (37, 53), (11, 17))).unwrap();
            for row in op.rows.iter().chain(op.cols.iter()) {
                assert!((row.weight_sum() - 1.0).abs() < 1e-9, "{alg:?}");
            }
        }
    }

    #[test]
    fn nearest_rows_have_single_unit_tap() {
        let op =
            build_sampling_operator(&spec(ScaleAlgorithm::Nearest, (64, 48), (16, 12))).unwrap();
        for row in op.rows.iter().chain(op.cols.iter()) {
            assert_eq!(row.taps.len(), 1);
            assert_eq!(row.taps[0].1, 1.0);
        }
    }

    #[test]
    fn upscale_specs_rejected() {
        assert!(ScaleSpec::new(ScaleAlgorithm::Nearest, (4, 4), (8, 4)).is_err());
        let s = ScaleSpec {
            algorithm: ScaleAlgorithm::Bilinear,
            src: (4, 4),
            dst: (8, 8),
        };
        assert!(build_sampling_operator(&s).is_err());
    }

    #[test]
    fn scale_preserves_constants() {
        for alg in ScaleAlgorithm::ALL {
            let img = RasterImage::constant(16, 12, 3, 128);
            let out = scale(&img, &spec(alg, (16, 12), (5, 4))).unwrap();
            assert!(out.data().iter().all(|&v| v == 128), "{alg:?}");
        }
    }

    #[test]
    fn scale_identity_spec_is_identity() {
        let img = RasterImage::from_fn(9, 7, 1, |r, c, _| ((r * 31 + c * 17) % 256) as f64);
        for alg in ScaleAlgorithm::ALL {
            let out = scale(&img, &spec(alg, (9, 7), (9, 7))).unwrap();
            assert_eq!(out, img, "{alg:?}");
        }
    }

    #[test]
    fn nearest_ramp_samples_expected_positions() {
        // 4x4 ramp image: value = 16r + 4c identifies the position uniquely.
        let img = RasterImage::from_fn(4, 4, 1, |r, c, _| (16 * r + 4 * c) as f64);
        let out = scale(&img, &spec(ScaleAlgorithm::Nearest, (4, 4), (2, 2))).unwrap();
        let expect = [
            img.get(1, 1, 0),
            img.get(1, 3, 0),
            img.get(3, 1, 0),
            img.get(3, 3, 0),
        ];
        assert_eq!(out.data(), &expect);
    }

    #[test]
    fn mask_identity_spec_is_all_true() {
        let m = scaling_pixel_mask(&spec(ScaleAlgorithm::Nearest, (224, 224), (224, 224)))
            .unwrap();
        assert!(m.is_all_true());
    }

    #[test]
    fn mask_nearest_integer_ratio_counts_dst_pixels() {
        let m =
            scaling_pixel_mask(&spec(ScaleAlgorithm::Nearest, (896, 896), (224, 224))).unwrap();
        assert_eq!(m.count(), 224 * 224);
    }

    #[test]
    fn mask_bicubic_larger_than_nearest() {
        let nearest =
            scaling_pixel_mask(&spec(ScaleAlgorithm::Nearest, (896, 896), (224, 224))).unwrap();
        let bicubic =
            scaling_pixel_mask(&spec(ScaleAlgorithm::Bicubic, (896, 896), (224, 224))).unwrap();
        assert!(bicubic.count() > nearest.count());
    }

    #[test]
    fn odd_integer_ratio_degenerates_to_single_tap() {
        // Half-pixel centers land exactly on source pixels for odd integer
        // ratios, so bilinear and bicubic collapse to point sampling.
        for alg in [ScaleAlgorithm::Bilinear, ScaleAlgorithm::Bicubic] {
            let op = build_sampling_operator(&spec(alg, (12, 12), (4, 4))).unwrap();
            for row in &op.rows {
                assert_eq!(row.taps.len(), 1, "{alg:?}");
                assert!((row.taps[0].1 - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upscale_round_trip_dims() {
        let img = RasterImage::constant(8, 8, 1, 77);
        let s = spec(ScaleAlgorithm::Bilinear, (32, 24), (8, 8));
        let up = upscale(&img, &s).unwrap();
        assert_eq!(up.dims(), (32, 24));
        assert!(up.data().iter().all(|&v| v == 77));
    }
}

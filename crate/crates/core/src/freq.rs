//! Frequency-paradigm detectors.
//!
//! A scaling attack writes its payload on a periodic grid, which concentrates
//! energy at predictable spectrum coordinates: multiples of the target
//! dimensions away from the DC term. The peak-spectrum and peak-distance
//! scores exploit those known positions; the CSP baselines count peaks at
//! arbitrary positions.

use std::collections::BTreeSet;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RasterImage;
use crate::scaling::ScaleSpec;

/// Default half length of the peak-spectrum window.
pub const DEFAULT_PEAK_WINDOW: usize = 5;

/// Forward 2D DFT of a row-major plane, in place. Unnormalized.
pub fn fft2_forward(data: &mut [Complex<f64>], height: usize, width: usize) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(width);
    for r in 0..height {
        row_fft.process(&mut data[r * width..(r + 1) * width]);
    }
    let col_fft = planner.plan_fft_forward(height);
    let mut col = vec![Complex::default(); height];
    for c in 0..width {
        for r in 0..height {
            col[r] = data[r * width + c];
        }
        col_fft.process(&mut col);
        for r in 0..height {
            data[r * width + c] = col[r];
        }
    }
}

/// Inverse 2D DFT with 1/(m n) normalization, in place.
pub fn fft2_inverse(data: &mut [Complex<f64>], height: usize, width: usize) {
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(width);
    for r in 0..height {
        row_fft.process(&mut data[r * width..(r + 1) * width]);
    }
    let col_fft = planner.plan_fft_inverse(height);
    let mut col = vec![Complex::default(); height];
    for c in 0..width {
        for r in 0..height {
            col[r] = data[r * width + c];
        }
        col_fft.process(&mut col);
        for r in 0..height {
            data[r * width + c] = col[r];
        }
    }
    let norm = 1.0 / (height * width) as f64;
    for v in data.iter_mut() {
        *v *= norm;
    }
}

/// Centered log-scaled magnitude spectrum of one channel.
#[derive(Debug, Clone)]
pub struct Spectrum {
    height: usize,
    width: usize,
    /// log(1 + |F|) with the DC term at (height/2, width/2).
    values: Vec<f64>,
}

impl Spectrum {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// The centered DC position (c_m, c_n).
    pub fn center(&self) -> (usize, usize) {
        (self.height / 2, self.width / 2)
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[u * self.width + v]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Builds a spectrum directly from centered log-magnitude values.
    /// Used by tests that construct synthetic spectra.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::InvalidParameter("spectrum size mismatch".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Writes the spectrum as a normalized 16-bit grayscale PNG.
    pub fn write_png(&self, path: &Path) -> Result<()> {
        let max = self.values.iter().cloned().fold(f64::MIN, f64::max);
        let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
        let pixels: Vec<u16> = self
            .values
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, 65535.0) as u16)
            .collect();
        let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
            self.width as u32,
            self.height as u32,
            pixels,
        )
        .expect("spectrum buffer");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    /// Writes the raw float grid (little-endian f64, row-major, after an
    /// 16-byte header of two u64 dims) for debugging.
    pub fn write_raw(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(16 + self.values.len() * 8);
        out.extend_from_slice(&(self.height as u64).to_le_bytes());
        out.extend_from_slice(&(self.width as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Computes the uncentered complex DFT of the luminance channel.
pub fn luminance_dft(img: &RasterImage) -> Vec<Complex<f64>> {
    let (h, w) = img.dims();
    let mut data: Vec<Complex<f64>> = img
        .luminance()
        .into_iter()
        .map(|v| Complex::new(v, 0.0))
        .collect();
    fft2_forward(&mut data, h, w);
    data
}

/// Centered log-scaled magnitude spectrum of the luminance channel.
pub fn log_magnitude_spectrum(img: &RasterImage) -> Spectrum {
    let (h, w) = img.dims();
    let dft = luminance_dft(img);
    let (cm, cn) = (h / 2, w / 2);
    let mut values = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            // fftshift: uncentered (u, v) lands at (u + cm mod h, v + cn mod w).
            let cu = (u + cm) % h;
            let cv = (v + cn) % w;
            values[cu * w + cv] = (1.0 + dft[u * w + v].norm()).ln();
        }
    }
    Spectrum {
        height: h,
        width: w,
        values,
    }
}

/// An axis-aligned rectangle of spectrum coordinates, half-open bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Excerpt {
    pub top: usize,
    pub left: usize,
    pub bottom: usize,
    pub right: usize,
}

impl Excerpt {
    pub fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.top && u < self.bottom && v >= self.left && v < self.right
    }

    pub fn half_diagonal(&self) -> f64 {
        let h = (self.bottom - self.top) as f64;
        let w = (self.right - self.left) as f64;
        0.5 * (h * h + w * w).sqrt()
    }
}

/// Expected peak coordinates of a scaling attack, with the excerpt cell
/// around each scoring peak.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeakMap {
    pub spectrum_dims: (usize, usize),
    pub center: (usize, usize),
    /// Non-center peaks, the scoring set. Sorted, deduplicated.
    pub peaks: Vec<(usize, usize)>,
    /// One excerpt per scoring peak, aligned with `peaks`.
    pub excerpts: Vec<Excerpt>,
    /// Half length of the peak-spectrum windows.
    pub window_half_len: usize,
}

impl PeakMap {
    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    /// Serializes the peak coordinates as a JSON list.
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Enumerates the expected peak lattice for a spec: coordinates
/// `(c_m + k1 m', c_n + k2 n')` for integer k with |k1| <= beta_m / 2 and
/// |k2| <= beta_n / 2 (inclusive, covering rational ratios), restricted to
/// the spectrum bounds. The center (k1 = k2 = 0) is excluded from the
/// scoring set.
pub fn expected_peaks(spec: &ScaleSpec) -> Result<PeakMap> {
    let (m, n) = spec.src;
    let (mp, np) = spec.dst;
    let (cm, cn) = (m / 2, n / 2);
    let k1_max = (spec.beta_m() / 2.0).floor() as i64;
    let k2_max = (spec.beta_n() / 2.0).floor() as i64;

    let mut peaks = BTreeSet::new();
    for k1 in -k1_max..=k1_max {
        for k2 in -k2_max..=k2_max {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let u = cm as i64 + k1 * mp as i64;
            let v = cn as i64 + k2 * np as i64;
            if u < 0 || u >= m as i64 || v < 0 || v >= n as i64 {
                continue;
            }
            peaks.insert((u as usize, v as usize));
        }
    }
    let peaks: Vec<(usize, usize)> = peaks.into_iter().collect();
    let excerpts = peaks
        .iter()
        .map(|&(u, v)| {
            // Nominal extent m' x n' centered on the peak, clipped in place
            // (never shifted) at the spectrum borders.
            let lo_u = u as i64 - (mp / 2) as i64;
            let lo_v = v as i64 - (np / 2) as i64;
            Excerpt {
                top: lo_u.max(0) as usize,
                left: lo_v.max(0) as usize,
                bottom: (lo_u + mp as i64).min(m as i64) as usize,
                right: (lo_v + np as i64).min(n as i64) as usize,
            }
        })
        .collect();
    Ok(PeakMap {
        spectrum_dims: (m, n),
        center: (cm, cn),
        peaks,
        excerpts,
        window_half_len: DEFAULT_PEAK_WINDOW,
    })
}

/// The deduplicated set of coordinates covered by the (2w+1)^2 windows around
/// all scoring peaks, clipped at the borders.
pub fn peak_window_coords(map: &PeakMap, w: usize) -> BTreeSet<(usize, usize)> {
    let (m, n) = map.spectrum_dims;
    let mut coords = BTreeSet::new();
    for &(pu, pv) in &map.peaks {
        let u0 = pu.saturating_sub(w);
        let u1 = (pu + w).min(m - 1);
        let v0 = pv.saturating_sub(w);
        let v1 = (pv + w).min(n - 1);
        for u in u0..=u1 {
            for v in v0..=v1 {
                coords.insert((u, v));
            }
        }
    }
    coords
}

/// Peak-spectrum score on a pre-computed spectrum: the percentile rank
/// (strict less-than) of the mean window value relative to every spectrum
/// coefficient. In [0, 1]; higher means more attack-like.
pub fn peak_spectrum_score_spectrum(spectrum: &Spectrum, map: &PeakMap, w: usize) -> Result<f64> {
    if map.is_empty() {
        return Err(Error::EmptyScoringSet(
            "no non-center expected peaks; spec is not attackable".into(),
        ));
    }
    let coords = peak_window_coords(map, w);
    let mean: f64 =
        coords.iter().map(|&(u, v)| spectrum.get(u, v)).sum::<f64>() / coords.len() as f64;
    let below = spectrum.values().iter().filter(|&&v| v < mean).count();
    Ok(below as f64 / spectrum.values().len() as f64)
}

/// Peak-spectrum score of an image for a spec.
pub fn peak_spectrum_score(img: &RasterImage, spec: &ScaleSpec, w: usize) -> Result<f64> {
    check_dims(img, spec)?;
    let map = expected_peaks(spec)?;
    peak_spectrum_score_spectrum(&log_magnitude_spectrum(img), &map, w)
}

/// Peak-distance score on a pre-computed spectrum: mean Euclidean distance
/// between each excerpt's maximum and its expected peak. Lower means more
/// attack-like. Ties resolve to the first maximum in row-major order.
pub fn peak_distance_score_spectrum(spectrum: &Spectrum, map: &PeakMap) -> Result<f64> {
    if map.is_empty() {
        return Err(Error::EmptyScoringSet(
            "no non-center expected peaks; spec is not attackable".into(),
        ));
    }
    let mut total = 0.0;
    for (&(pu, pv), ex) in map.peaks.iter().zip(&map.excerpts) {
        let mut best = f64::MIN;
        let mut arg = (ex.top, ex.left);
        for u in ex.top..ex.bottom {
            for v in ex.left..ex.right {
                let val = spectrum.get(u, v);
                if val > best {
                    best = val;
                    arg = (u, v);
                }
            }
        }
        let du = arg.0 as f64 - pu as f64;
        let dv = arg.1 as f64 - pv as f64;
        total += (du * du + dv * dv).sqrt();
    }
    Ok(total / map.peaks.len() as f64)
}

/// Peak-distance score of an image for a spec.
pub fn peak_distance_score(img: &RasterImage, spec: &ScaleSpec) -> Result<f64> {
    check_dims(img, spec)?;
    let map = expected_peaks(spec)?;
    peak_distance_score_spectrum(&log_magnitude_spectrum(img), &map)
}

fn check_dims(img: &RasterImage, spec: &ScaleSpec) -> Result<()> {
    if img.dims() != spec.src {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", spec.src.0, spec.src.1),
            actual: format!("{}x{}", img.height(), img.width()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CspVariant {
    /// Prior-work rule: attack if more than one peak.
    Fixed,
    /// Same count, threshold calibrated from data instead.
    Improved,
}

/// CSP parameters. The cited work gives no formula, so the peak definition
/// (mean + k sigma threshold, DC guard window, 8-connected merging) is
/// exposed here.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CspParams {
    /// Threshold multiplier: a peak exceeds mu + k * sigma.
    pub sigma_factor: f64,
    /// Half length of the zeroed guard window around DC.
    pub dc_guard: usize,
}

impl Default for CspParams {
    fn default() -> Self {
        Self {
            sigma_factor: 4.0,
            dc_guard: 5,
        }
    }
}

/// Counts spectrum peaks at arbitrary positions: coefficients above
/// mu + k sigma after zeroing the DC guard window, with 8-connected
/// super-threshold coefficients merged into one peak.
pub fn csp_peak_count(spectrum: &Spectrum, params: &CspParams) -> usize {
    let (h, w) = spectrum.dims();
    let (cm, cn) = spectrum.center();
    let g = params.dc_guard;
    let mut values = spectrum.values().to_vec();
    for u in cm.saturating_sub(g)..=(cm + g).min(h - 1) {
        for v in cn.saturating_sub(g)..=(cn + g).min(w - 1) {
            values[u * w + v] = 0.0;
        }
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let threshold = mean + params.sigma_factor * var.sqrt();

    let hot: Vec<bool> = values.iter().map(|&v| v > threshold).collect();
    let mut seen = vec![false; values.len()];
    let mut count = 0usize;
    let mut stack = Vec::new();
    for start in 0..values.len() {
        if !hot[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            let (u, v) = (idx / w, idx % w);
            for du in -1i64..=1 {
                for dv in -1i64..=1 {
                    let (nu, nv) = (u as i64 + du, v as i64 + dv);
                    if nu < 0 || nu >= h as i64 || nv < 0 || nv >= w as i64 {
                        continue;
                    }
                    let nidx = nu as usize * w + nv as usize;
                    if hot[nidx] && !seen[nidx] {
                        seen[nidx] = true;
                        stack.push(nidx);
                    }
                }
            }
        }
    }
    count
}

/// CSP score of an image: the peak count as f64. The fixed variant is
/// thresholded at count > 1 by the caller; the improved variant calibrates.
pub fn csp_score(img: &RasterImage, _variant: CspVariant, params: &CspParams) -> f64 {
    csp_peak_count(&log_magnitude_spectrum(img), params) as f64
}

//! Unified detector registry: every detection method behind one scoring
//! interface, with its score direction and an identity string for reports
//! and profiles.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filters::{FilterKind, MinMaxMode};
use crate::freq::{self, CspParams, PeakMap, Spectrum};
use crate::image::RasterImage;
use crate::metrics::Metric;
use crate::scaling::ScaleSpec;
use crate::spatial;

/// Which side of the threshold means "attack".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HighIsAttack,
    LowIsAttack,
}

/// A detection method with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum DetectorKind {
    PeakSpectrum { w: usize },
    PeakDistance,
    CspFixed,
    CspImproved,
    DownUp { metric: Metric },
    MinFilter { metric: Metric },
    MaxFilter { metric: Metric },
    CleanFilter { filter: FilterKind, metric: Metric },
    PatchClean { w: usize, stride: usize },
    TargetedPatchClean { w: usize, stride: usize, q: f64 },
}

impl DetectorKind {
    /// Stable identity string, also the report row label.
    pub fn id(&self) -> String {
        match self {
            DetectorKind::PeakSpectrum { w } => format!("peak_spectrum_w{w}"),
            DetectorKind::PeakDistance => "peak_distance".into(),
            DetectorKind::CspFixed => "csp_fixed".into(),
            DetectorKind::CspImproved => "csp_improved".into(),
            DetectorKind::DownUp { metric } => format!("down_up_{metric}"),
            DetectorKind::MinFilter { metric } => format!("min_filter_{metric}"),
            DetectorKind::MaxFilter { metric } => format!("max_filter_{metric}"),
            DetectorKind::CleanFilter { filter, metric } => {
                format!("clean_filter_{}_{metric}", filter.name())
            }
            DetectorKind::PatchClean { w, stride } => format!("patch_clean_w{w}_s{stride}"),
            DetectorKind::TargetedPatchClean { w, stride, q } => {
                format!("targeted_patch_clean_w{w}_s{stride}_q{q}")
            }
        }
    }

    pub fn direction(&self) -> Direction {
        match self {
            DetectorKind::PeakSpectrum { .. } => Direction::HighIsAttack,
            DetectorKind::PeakDistance => Direction::LowIsAttack,
            DetectorKind::CspFixed | DetectorKind::CspImproved => Direction::HighIsAttack,
            DetectorKind::DownUp { metric }
            | DetectorKind::MinFilter { metric }
            | DetectorKind::MaxFilter { metric }
            | DetectorKind::CleanFilter { metric, .. } => match metric {
                Metric::Psnr | Metric::Ssim => Direction::LowIsAttack,
                Metric::Mse | Metric::Histogram | Metric::ColorScattering => {
                    Direction::HighIsAttack
                }
            },
            DetectorKind::PatchClean { .. } | DetectorKind::TargetedPatchClean { .. } => {
                Direction::HighIsAttack
            }
        }
    }

    /// The paper-default instantiations of all ten methods.
    pub fn standard_set() -> Vec<DetectorKind> {
        vec![
            DetectorKind::PeakSpectrum {
                w: freq::DEFAULT_PEAK_WINDOW,
            },
            DetectorKind::PeakDistance,
            DetectorKind::CspFixed,
            DetectorKind::CspImproved,
            DetectorKind::DownUp {
                metric: Metric::Psnr,
            },
            DetectorKind::DownUp {
                metric: Metric::Ssim,
            },
            DetectorKind::DownUp {
                metric: Metric::Histogram,
            },
            DetectorKind::DownUp {
                metric: Metric::ColorScattering,
            },
            DetectorKind::MinFilter {
                metric: Metric::Ssim,
            },
            DetectorKind::MaxFilter {
                metric: Metric::Ssim,
            },
            DetectorKind::CleanFilter {
                filter: FilterKind::Median,
                metric: Metric::Ssim,
            },
            DetectorKind::CleanFilter {
                filter: FilterKind::Median,
                metric: Metric::Psnr,
            },
            DetectorKind::PatchClean {
                w: spatial::PATCH_CLEAN_W,
                stride: spatial::PATCH_CLEAN_STRIDE,
            },
            DetectorKind::TargetedPatchClean {
                w: spatial::TARGETED_W,
                stride: spatial::TARGETED_STRIDE,
                q: spatial::TARGETED_Q,
            },
        ]
    }

    /// Scores one image. Stateless; see [`ImageScorer`] for the cached batch
    /// variant.
    pub fn score(&self, img: &RasterImage, spec: &ScaleSpec, seed: u64) -> Result<f64> {
        ImageScorer::new(img, spec, seed).score(self)
    }
}

/// Scores one image under several detectors, computing shared intermediates
/// (spectrum, peak map, cleaned image) once.
pub struct ImageScorer<'a> {
    img: &'a RasterImage,
    spec: &'a ScaleSpec,
    seed: u64,
    spectrum: Option<Spectrum>,
    peak_map: Option<PeakMap>,
    cleaned_median: Option<RasterImage>,
}

impl<'a> ImageScorer<'a> {
    pub fn new(img: &'a RasterImage, spec: &'a ScaleSpec, seed: u64) -> Self {
        Self {
            img,
            spec,
            seed,
            spectrum: None,
            peak_map: None,
            cleaned_median: None,
        }
    }

    fn spectrum(&mut self) -> &Spectrum {
        if self.spectrum.is_none() {
            self.spectrum = Some(freq::log_magnitude_spectrum(self.img));
        }
        self.spectrum.as_ref().unwrap()
    }

    fn peak_map(&mut self) -> Result<&PeakMap> {
        if self.peak_map.is_none() {
            self.peak_map = Some(freq::expected_peaks(self.spec)?);
        }
        Ok(self.peak_map.as_ref().unwrap())
    }

    fn cleaned_median(&mut self) -> Result<&RasterImage> {
        if self.cleaned_median.is_none() {
            self.cleaned_median =
                Some(spatial::clean_image(self.img, self.spec, FilterKind::Median, self.seed)?);
        }
        Ok(self.cleaned_median.as_ref().unwrap())
    }

    pub fn score(&mut self, detector: &DetectorKind) -> Result<f64> {
        match detector {
            DetectorKind::PeakSpectrum { w } => {
                self.peak_map()?;
                let map = self.peak_map.clone().unwrap();
                freq::peak_spectrum_score_spectrum(self.spectrum(), &map, *w)
            }
            DetectorKind::PeakDistance => {
                self.peak_map()?;
                let map = self.peak_map.clone().unwrap();
                freq::peak_distance_score_spectrum(self.spectrum(), &map)
            }
            DetectorKind::CspFixed | DetectorKind::CspImproved => {
                Ok(freq::csp_peak_count(self.spectrum(), &CspParams::default()) as f64)
            }
            DetectorKind::DownUp { metric } => spatial::down_up_score(self.img, self.spec, *metric),
            DetectorKind::MinFilter { metric } => {
                spatial::minmax_filter_score(self.img, MinMaxMode::Min, *metric)
            }
            DetectorKind::MaxFilter { metric } => {
                spatial::minmax_filter_score(self.img, MinMaxMode::Max, *metric)
            }
            DetectorKind::CleanFilter { filter, metric } => match filter {
                FilterKind::Median => {
                    let cleaned = self.cleaned_median()?.clone();
                    crate::metrics::image_distance(self.img, &cleaned, *metric)
                }
                FilterKind::Random => {
                    spatial::clean_filter_score(self.img, self.spec, *filter, *metric, self.seed)
                }
            },
            DetectorKind::PatchClean { w, stride } => {
                spatial::patch_clean_score(self.img, self.spec, *w, *stride, self.seed)
            }
            DetectorKind::TargetedPatchClean { w, stride, q } => {
                spatial::targeted_patch_clean_score(self.img, self.spec, *w, *stride, *q, self.seed)
            }
        }
    }
}

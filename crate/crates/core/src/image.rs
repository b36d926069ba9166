//! Pixel containers.
//!
//! Images are stored as 8-bit row-major buffers; all arithmetic happens on
//! 64-bit floating-point working copies and is quantized back on store.

use crate::error::{Error, Result};

/// Rec. 601 luma weights, used wherever a color image must be reduced to a
/// single channel.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Round half away from zero, then clamp into the 8-bit range.
///
/// This is the single quantization rule applied at every image-producing
/// boundary.
#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// An 8-bit image with `height * width * channels` samples in row-major,
/// channel-interleaved order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl RasterImage {
    /// Creates an image from raw samples. `channels` must be 1 or 3 and the
    /// buffer length must match the dimensions.
    pub fn from_raw(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage("empty dimensions".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "buffer length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Creates an image filled with a constant value.
    pub fn constant(height: usize, width: usize, channels: usize, value: u8) -> Self {
        Self::from_raw(height, width, channels, vec![value; height * width * channels])
            .expect("constant image dimensions")
    }

    /// Creates an image by evaluating `f(row, col, channel)` at every sample.
    /// Values are quantized with the standard rule.
    pub fn from_fn<F>(height: usize, width: usize, channels: usize, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(quantize(f(r, c, ch)));
                }
            }
        }
        Self::from_raw(height, width, channels, data).expect("from_fn dimensions")
    }

    /// Builds an image from per-channel f64 planes, quantizing every sample.
    pub fn from_planes(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        for p in planes {
            if p.len() != height * width {
                return Err(Error::InvalidImage("plane length mismatch".into()));
            }
        }
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height * width {
            for p in planes {
                data.push(quantize(p[i]));
            }
        }
        Self::from_raw(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// (height, width) pair.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: u8) {
        self.data[(row * self.width + col) * self.channels + channel] = value;
    }

    /// Extracts one channel as an f64 working plane.
    pub fn plane(&self, channel: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.height * self.width);
        for i in 0..self.height * self.width {
            out.push(self.data[i * self.channels + channel] as f64);
        }
        out
    }

    /// All channels as f64 working planes.
    pub fn planes(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Luminance plane: Rec. 601 weighting for color images, the sole channel
    /// for grayscale.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.plane(0);
        }
        let mut out = Vec::with_capacity(self.height * self.width);
        for i in 0..self.height * self.width {
            let base = i * self.channels;
            let y = LUMA_WEIGHTS[0] * self.data[base] as f64
                + LUMA_WEIGHTS[1] * self.data[base + 1] as f64
                + LUMA_WEIGHTS[2] * self.data[base + 2] as f64;
            out.push(y);
        }
        out
    }

    /// Checks that `other` has identical height, width and channel count.
    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() || self.channels != other.channels {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}x{}", self.height, self.width, self.channels),
                actual: format!("{}x{}x{}", other.height, other.width, other.channels),
            });
        }
        Ok(())
    }

    /// Number of samples in which the two images differ.
    pub fn count_differing(&self, other: &Self) -> usize {
        self.data
            .iter()
            .zip(other.data.iter())
            .filter(|(a, b)| a != b)
            .count()
    }
}

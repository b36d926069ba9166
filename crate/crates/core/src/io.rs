//! Codec round-trips and file I/O: PNG and binary PPM/PGM (bit-exact 8-bit),
//! baseline JPEG at a chosen quality.

use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{DynamicImage, GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::image::RasterImage;

fn to_dynamic(img: &RasterImage) -> DynamicImage {
    let (h, w) = img.dims();
    if img.channels() == 3 {
        DynamicImage::ImageRgb8(
            RgbImage::from_raw(w as u32, h as u32, img.data().to_vec()).expect("raw rgb"),
        )
    } else {
        DynamicImage::ImageLuma8(
            GrayImage::from_raw(w as u32, h as u32, img.data().to_vec()).expect("raw gray"),
        )
    }
}

fn from_dynamic(dyn_img: DynamicImage, channels: usize) -> Result<RasterImage> {
    let h = dyn_img.height() as usize;
    let w = dyn_img.width() as usize;
    if channels == 3 {
        RasterImage::from_raw(h, w, 3, dyn_img.into_rgb8().into_raw())
    } else {
        RasterImage::from_raw(h, w, 1, dyn_img.into_luma8().into_raw())
    }
}

/// Writes a PNG (8-bit, lossless).
pub fn write_png(img: &RasterImage, path: &Path) -> Result<()> {
    to_dynamic(img).save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Reads a PNG or JPEG file. Images with alpha or 16-bit depth are converted
/// down to the matching 8-bit layout.
pub fn read_image(path: &Path) -> Result<RasterImage> {
    let dyn_img = ImageReader::open(path)?.decode()?;
    let channels = match dyn_img.color().channel_count() {
        1 | 2 => 1,
        _ => 3,
    };
    from_dynamic(dyn_img, channels)
}

/// Writes binary PPM (P6) for color or PGM (P5) for grayscale.
pub fn write_ppm(img: &RasterImage, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    write!(out, "{magic}\n{} {}\n255\n", img.width(), img.height())?;
    out.write_all(img.data())?;
    Ok(())
}

/// Reads binary PPM (P6) or PGM (P5).
pub fn read_ppm(path: &Path) -> Result<RasterImage> {
    let bytes = std::fs::read(path)?;
    parse_ppm(&bytes)
}

fn parse_ppm(bytes: &[u8]) -> Result<RasterImage> {
    let mut pos = 0usize;
    let mut fields: Vec<usize> = Vec::new();
    if bytes.len() < 2 {
        return Err(Error::InvalidImage("truncated PNM header".into()));
    }
    let channels = match &bytes[0..2] {
        b"P6" => 3,
        b"P5" => 1,
        _ => return Err(Error::InvalidImage("not a binary PNM file".into())),
    };
    pos += 2;
    // Header: three whitespace-separated integers, # comments allowed.
    while fields.len() < 3 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::InvalidImage("malformed PNM header".into()));
        }
        let v: usize = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| Error::InvalidImage("malformed PNM header".into()))?
            .parse()
            .map_err(|_| Error::InvalidImage("malformed PNM header".into()))?;
        fields.push(v);
    }
    if fields[2] != 255 {
        return Err(Error::InvalidImage(format!(
            "unsupported PNM maxval {}",
            fields[2]
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let (w, h) = (fields[0], fields[1]);
    let need = w * h * channels;
    if bytes.len() < pos + need {
        return Err(Error::InvalidImage("truncated PNM raster".into()));
    }
    RasterImage::from_raw(h, w, channels, bytes[pos..pos + need].to_vec())
}

/// Encodes with a baseline JPEG codec at the given quality and decodes the
/// result. Dimensions and channel count are preserved.
pub fn jpeg_roundtrip(img: &RasterImage, quality: u8) -> Result<RasterImage> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidParameter(format!(
            "jpeg quality must be in 1..=100, got {quality}"
        )));
    }
    let mut buf = Vec::new();
    let encoder = JpegEncoder::new_with_quality(Cursor::new(&mut buf), quality);
    to_dynamic(img).write_with_encoder(encoder)?;
    let decoded = image::load_from_memory_with_format(&buf, image::ImageFormat::Jpeg)?;
    from_dynamic(decoded, img.channels())
}

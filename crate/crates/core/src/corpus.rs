//! Deterministic synthetic image corpus.
//!
//! Stands in for a photo collection at desk scale: gradients, filtered noise,
//! geometric shapes and periodic textures, all seed-reproducible. Textures
//! get a guaranteed quota because they exercise the natural-peak false
//! positives of peak-counting detectors.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RasterImage;
use crate::io;

/// Minimum corpus size; below this the split protocol degenerates.
pub const MIN_CORPUS_COUNT: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    Gradient,
    FilteredNoise,
    Shapes,
    PeriodicTexture,
}

impl ContentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ContentKind::Gradient => "gradient",
            ContentKind::FilteredNoise => "filtered_noise",
            ContentKind::Shapes => "shapes",
            ContentKind::PeriodicTexture => "periodic_texture",
        }
    }
}

/// Fractions of each content kind; they are normalized before use. The
/// texture fraction must keep the corpus above the natural-peak quota.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ContentMix {
    pub gradients: f64,
    pub filtered_noise: f64,
    pub shapes: f64,
    pub periodic_textures: f64,
}

impl Default for ContentMix {
    fn default() -> Self {
        Self {
            gradients: 0.3,
            filtered_noise: 0.3,
            shapes: 0.3,
            periodic_textures: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpusSpec {
    pub count: usize,
    /// Inclusive bounds of both image dimensions.
    pub size_min: usize,
    pub size_max: usize,
    pub channels: usize,
    pub mix: ContentMix,
    pub seed: u64,
}

impl SyntheticCorpusSpec {
    pub fn new(count: usize, size_min: usize, size_max: usize, seed: u64) -> Self {
        Self {
            count,
            size_min,
            size_max,
            channels: 3,
            mix: ContentMix::default(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count < MIN_CORPUS_COUNT {
            return Err(Error::InvalidParameter(format!(
                "corpus count must be >= {MIN_CORPUS_COUNT}, got {}",
                self.count
            )));
        }
        if self.size_min == 0 || self.size_min > self.size_max {
            return Err(Error::InvalidParameter("bad size range".into()));
        }
        let total = self.mix.gradients
            + self.mix.filtered_noise
            + self.mix.shapes
            + self.mix.periodic_textures;
        if total <= 0.0 {
            return Err(Error::InvalidParameter("content mix sums to zero".into()));
        }
        if self.mix.periodic_textures / total < 0.1 {
            return Err(Error::InvalidParameter(
                "periodic-texture quota below 10%".into(),
            ));
        }
        Ok(())
    }
}

/// Manifest entry of one generated image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    pub kind: ContentKind,
    pub height: usize,
    pub width: usize,
    pub image_seed: u64,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: SyntheticCorpusSpec,
    pub entries: Vec<CorpusEntry>,
}

/// A generated corpus held in memory.
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub images: Vec<RasterImage>,
}

impl Corpus {
    /// Writes every image as PNG plus manifest.json.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (entry, img) in self.manifest.entries.iter().zip(&self.images) {
            io::write_png(img, &dir.join(&entry.file))?;
        }
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&self.manifest)?,
        )?;
        Ok(())
    }

    /// Reads a corpus directory written by [`Corpus::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: CorpusManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let images = manifest
            .entries
            .iter()
            .map(|e| io::read_image(&dir.join(&e.file)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, images })
    }
}

/// Deterministic kind allocation: largest-remainder apportionment of the mix
/// fractions, then a seeded shuffle so kinds interleave across sizes.
fn allocate_kinds(spec: &SyntheticCorpusSpec, rng: &mut ChaCha8Rng) -> Vec<ContentKind> {
    let total = spec.mix.gradients
        + spec.mix.filtered_noise
        + spec.mix.shapes
        + spec.mix.periodic_textures;
    let fractions = [
        (ContentKind::Gradient, spec.mix.gradients / total),
        (ContentKind::FilteredNoise, spec.mix.filtered_noise / total),
        (ContentKind::Shapes, spec.mix.shapes / total),
        (
            ContentKind::PeriodicTexture,
            spec.mix.periodic_textures / total,
        ),
    ];
    let mut counts: Vec<(ContentKind, usize, f64)> = fractions
        .iter()
        .map(|&(k, f)| {
            let exact = f * spec.count as f64;
            (k, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let mut allocated: usize = counts.iter().map(|&(_, c, _)| c).sum();
    while allocated < spec.count {
        let (_, count, rem) = counts
            .iter_mut()
            .max_by(|a, b| a.2.partial_cmp(&b.2).unwrap())
            .unwrap();
        *count += 1;
        *rem = -1.0;
        allocated += 1;
    }
    let mut kinds = Vec::with_capacity(spec.count);
    for &(k, c, _) in &counts {
        kinds.extend(std::iter::repeat(k).take(c));
    }
    // Fisher-Yates with the corpus RNG.
    for i in (1..kinds.len()).rev() {
        let j = rng.random_range(0..=i);
        kinds.swap(i, j);
    }
    kinds
}

/// Generates the corpus. Bit-identical for identical specs.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let kinds = allocate_kinds(spec, &mut rng);
    let mut entries = Vec::with_capacity(spec.count);
    let mut images = Vec::with_capacity(spec.count);
    for (i, &kind) in kinds.iter().enumerate() {
        let h = rng.random_range(spec.size_min..=spec.size_max);
        let w = rng.random_range(spec.size_min..=spec.size_max);
        let image_seed = rng.random::<u64>();
        let img = render(kind, h, w, spec.channels, image_seed);
        let id = format!("img{i:04}");
        entries.push(CorpusEntry {
            id: id.clone(),
            kind,
            height: h,
            width: w,
            image_seed,
            file: format!("{id}.png"),
        });
        images.push(img);
    }
    Ok(Corpus {
        manifest: CorpusManifest {
            spec: spec.clone(),
            entries,
        },
        images,
    })
}

/// Renders one image of the given kind. Content sits around mid-gray with
/// moderate contrast so cross-image differences stay in a range where
/// attacks can hold both of their goals. A faint grain on top keeps the
/// spectra photo-like instead of synthetically empty.
pub fn render(kind: ContentKind, h: usize, w: usize, channels: usize, seed: u64) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = match kind {
        ContentKind::Gradient => render_gradient(h, w, channels, &mut rng),
        ContentKind::FilteredNoise => render_noise(h, w, channels, &mut rng),
        ContentKind::Shapes => render_shapes(h, w, channels, &mut rng),
        ContentKind::PeriodicTexture => render_texture(h, w, channels, &mut rng),
    };
    let grain = 2.0 + rng.random::<f64>() * 2.0;
    let planes: Vec<Vec<f64>> = img
        .planes()
        .iter()
        .map(|p| {
            p.iter()
                .map(|v| v + (rng.random::<f64>() - 0.5) * 2.0 * grain)
                .collect()
        })
        .collect();
    RasterImage::from_planes(h, w, &planes).expect("grain planes")
}

fn channel_offsets(channels: usize, rng: &mut ChaCha8Rng, spread: f64) -> Vec<f64> {
    (0..channels)
        .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * spread)
        .collect()
}

fn render_gradient(h: usize, w: usize, channels: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let angle = rng.random::<f64>() * 2.0 * PI;
    let amplitude = 18.0 + rng.random::<f64>() * 22.0;
    let base = 104.0 + rng.random::<f64>() * 48.0;
    let radial = rng.random::<f64>() < 0.3;
    let offsets = channel_offsets(channels, rng, 8.0);
    let (dy, dx) = (angle.sin(), angle.cos());
    let diag = ((h * h + w * w) as f64).sqrt();
    RasterImage::from_fn(h, w, channels, |r, c, ch| {
        let t = if radial {
            let yy = r as f64 - h as f64 / 2.0;
            let xx = c as f64 - w as f64 / 2.0;
            2.0 * (yy * yy + xx * xx).sqrt() / diag
        } else {
            (r as f64 * dy + c as f64 * dx) / diag + 0.5
        };
        base + offsets[ch] + amplitude * (2.0 * t - 1.0)
    })
}

fn render_noise(h: usize, w: usize, channels: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let base = 104.0 + rng.random::<f64>() * 48.0;
    let amplitude = 13.0 + rng.random::<f64>() * 12.0;
    // Smooth white noise with a few box-blur passes; the pass count sets the
    // correlation length. Enough smoothing that the spectrum decays like a
    // photo instead of staying broadband.
    let passes = 2 + rng.random_range(0..3);
    let radius = 2 + rng.random_range(0..3usize);
    let offsets = channel_offsets(channels, rng, 7.0);
    let mut planes = Vec::with_capacity(channels);
    for ch in 0..channels {
        let mut plane: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..passes {
            plane = box_blur(&plane, h, w, radius);
        }
        let std = plane_std(&plane).max(1e-9);
        planes.push(
            plane
                .iter()
                .map(|v| base + offsets[ch] + v / std * amplitude)
                .collect(),
        );
    }
    RasterImage::from_planes(h, w, &planes).expect("noise planes")
}

fn render_shapes(h: usize, w: usize, channels: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let bg = 104.0 + rng.random::<f64>() * 48.0;
    let offsets = channel_offsets(channels, rng, 10.0);
    let mut planes: Vec<Vec<f64>> = (0..channels)
        .map(|ch| vec![bg + offsets[ch]; h * w])
        .collect();
    let n_shapes = 3 + rng.random_range(0..5);
    for _ in 0..n_shapes {
        let value_shift = (rng.random::<f64>() - 0.5) * 76.0;
        let cy = rng.random_range(0..h);
        let cx = rng.random_range(0..w);
        let sy = h / 8 + rng.random_range(0..h / 3);
        let sx = w / 8 + rng.random_range(0..w / 3);
        let disk = rng.random::<bool>();
        let per_channel: Vec<f64> = (0..channels)
            .map(|_| value_shift + (rng.random::<f64>() - 0.5) * 20.0)
            .collect();
        for r in cy.saturating_sub(sy / 2)..(cy + sy / 2).min(h) {
            for c in cx.saturating_sub(sx / 2)..(cx + sx / 2).min(w) {
                let inside = if disk {
                    let yy = (r as f64 - cy as f64) / (sy as f64 / 2.0);
                    let xx = (c as f64 - cx as f64) / (sx as f64 / 2.0);
                    yy * yy + xx * xx <= 1.0
                } else {
                    true
                };
                if inside {
                    for (ch, plane) in planes.iter_mut().enumerate() {
                        plane[r * w + c] = bg + offsets[ch] + per_channel[ch];
                    }
                }
            }
        }
    }
    // Soften the edges; razor-sharp synthetic rectangles throw far more
    // spectral speckle than photographic content does, and selective median
    // reconstruction overshoots on hard steps.
    let planes: Vec<Vec<f64>> = planes.iter().map(|p| box_blur(p, h, w, 2)).collect();
    RasterImage::from_planes(h, w, &planes).expect("shape planes")
}

fn render_texture(h: usize, w: usize, channels: usize, rng: &mut ChaCha8Rng) -> RasterImage {
    let base = 104.0 + rng.random::<f64>() * 48.0;
    // Two gratings guarantee several natural spectrum peaks. Periods of 8.5
    // and up keep every grating frequency within half a target size of DC,
    // i.e. inside the center excerpt that the lattice detectors discard.
    let period1 = 8.5 + rng.random::<f64>() * 7.0;
    let period2 = 17.0 + rng.random::<f64>() * 15.0;
    let amp1 = 10.0 + rng.random::<f64>() * 6.0;
    let amp2 = 8.0 + rng.random::<f64>() * 6.0;
    let vertical1 = rng.random::<bool>();
    let offsets = channel_offsets(channels, rng, 7.0);
    let phase1 = rng.random::<f64>() * 2.0 * PI;
    let phase2 = rng.random::<f64>() * 2.0 * PI;
    RasterImage::from_fn(h, w, channels, |r, c, ch| {
        let x1 = if vertical1 { r as f64 } else { c as f64 };
        let x2 = if vertical1 { c as f64 } else { r as f64 };
        base + offsets[ch]
            + amp1 * (2.0 * PI * x1 / period1 + phase1).cos()
            + amp2 * (2.0 * PI * x2 / period2 + phase2).cos()
    })
}

fn box_blur(plane: &[f64], h: usize, w: usize, radius: usize) -> Vec<f64> {
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let c0 = c.saturating_sub(radius);
            let c1 = (c + radius).min(w - 1);
            let mut acc = 0.0;
            for cc in c0..=c1 {
                acc += plane[r * w + cc];
            }
            tmp[r * w + c] = acc / (c1 - c0 + 1) as f64;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let r0 = r.saturating_sub(radius);
        let r1 = (r + radius).min(h - 1);
        for c in 0..w {
            let mut acc = 0.0;
            for rr in r0..=r1 {
                acc += tmp[rr * w + c];
            }
            out[r * w + c] = acc / (r1 - r0 + 1) as f64;
        }
    }
    out
}

fn plane_std(plane: &[f64]) -> f64 {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    (plane.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::{csp_peak_count, log_magnitude_spectrum, CspParams};

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = SyntheticCorpusSpec::new(40, 48, 96, 7);
        let a = generate_corpus(&spec).unwrap();
        let b = generate_corpus(&spec).unwrap();
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x, y);
        }
        assert_eq!(
            serde_json::to_string(&a.manifest).unwrap(),
            serde_json::to_string(&b.manifest).unwrap()
        );
    }

    #[test]
    fn different_seed_differs() {
        let a = generate_corpus(&SyntheticCorpusSpec::new(40, 48, 96, 7)).unwrap();
        let b = generate_corpus(&SyntheticCorpusSpec::new(40, 48, 96, 8)).unwrap();
        assert!(a.images.iter().zip(&b.images).any(|(x, y)| x != y));
    }

    #[test]
    fn sizes_in_range_and_count_honored() {
        let spec = SyntheticCorpusSpec::new(50, 64, 128, 3);
        let corpus = generate_corpus(&spec).unwrap();
        assert_eq!(corpus.images.len(), 50);
        for (e, img) in corpus.manifest.entries.iter().zip(&corpus.images) {
            assert_eq!((e.height, e.width), img.dims());
            assert!((64..=128).contains(&e.height));
            assert!((64..=128).contains(&e.width));
        }
    }

    #[test]
    fn texture_quota_met() {
        let spec = SyntheticCorpusSpec::new(40, 64, 64, 1);
        let corpus = generate_corpus(&spec).unwrap();
        let textures = corpus
            .manifest
            .entries
            .iter()
            .filter(|e| e.kind == ContentKind::PeriodicTexture)
            .count();
        assert!(textures * 10 >= 40, "{textures} textures of 40");
    }

    #[test]
    fn small_count_rejected() {
        assert!(generate_corpus(&SyntheticCorpusSpec::new(39, 64, 64, 0)).is_err());
    }

    #[test]
    fn textures_trip_the_peak_counter() {
        let spec = SyntheticCorpusSpec::new(40, 96, 160, 21);
        let corpus = generate_corpus(&spec).unwrap();
        let mut flagged = 0usize;
        let mut total = 0usize;
        for (e, img) in corpus.manifest.entries.iter().zip(&corpus.images) {
            if e.kind != ContentKind::PeriodicTexture {
                continue;
            }
            total += 1;
            let count = csp_peak_count(&log_magnitude_spectrum(img), &CspParams::default());
            if count > 1 {
                flagged += 1;
            }
        }
        assert!(total > 0);
        assert!(2 * flagged >= total, "{flagged} of {total} textures flagged");
    }

    #[test]
    fn write_and_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = generate_corpus(&SyntheticCorpusSpec::new(40, 32, 48, 9)).unwrap();
        corpus.write(dir.path()).unwrap();
        let back = Corpus::read(dir.path()).unwrap();
        assert_eq!(back.images.len(), corpus.images.len());
        for (a, b) in corpus.images.iter().zip(&back.images) {
            assert_eq!(a, b);
        }
        // Every file in the directory belongs to exactly one manifest entry.
        let mut files: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|f| f.ends_with(".png"))
            .collect();
        files.sort();
        let mut listed: Vec<String> =
            corpus.manifest.entries.iter().map(|e| e.file.clone()).collect();
        listed.sort();
        assert_eq!(files, listed);
    }
}

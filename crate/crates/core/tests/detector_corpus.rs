//! Detector behavior on a miniature desk corpus: separation between benign
//! and attack score distributions, score bounds, and the white-noise
//! peak-distance baseline.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scalewatch_core::attack::{
    craft_attack, make_target, AttackConfig, BackdoorKind, BackdoorPattern,
};
use scalewatch_core::corpus::{generate_corpus, SyntheticCorpusSpec};
use scalewatch_core::detectors::{DetectorKind, Direction};
use scalewatch_core::filters::FilterKind;
use scalewatch_core::freq::{expected_peaks, peak_distance_score, peak_spectrum_score};
use scalewatch_core::image::RasterImage;
use scalewatch_core::metrics::Metric;
use scalewatch_core::scaling::{scale, ScaleAlgorithm, ScaleSpec};
use scalewatch_core::spatial;

const DST: usize = 32;

/// Mini desk corpus: benign images of one size plus nearest global attacks
/// crafted from disjoint source/donor pairs.
struct MiniCorpus {
    spec: ScaleSpec,
    benign: Vec<RasterImage>,
    attacks: Vec<RasterImage>,
}

fn mini_corpus(size: usize, n: usize, seed: u64) -> MiniCorpus {
    let spec = ScaleSpec::new(ScaleAlgorithm::Nearest, (size, size), (DST, DST)).unwrap();
    let corpus = generate_corpus(&SyntheticCorpusSpec::new((3 * n).max(40), size, size, seed))
        .unwrap()
        .images;
    let cfg = AttackConfig::global();
    let benign: Vec<RasterImage> = corpus[..n].to_vec();
    let attacks: Vec<RasterImage> = (0..n)
        .map(|i| {
            let donor = scale(&corpus[2 * n + i], &spec).unwrap();
            craft_attack(&corpus[n + i], &donor, &spec, &cfg)
                .unwrap()
                .attack
        })
        .collect();
    MiniCorpus {
        spec,
        benign,
        attacks,
    }
}

fn percentile(sorted_ascending: &[f64], p: f64) -> f64 {
    let pos = p * (sorted_ascending.len() - 1) as f64;
    sorted_ascending[pos.round() as usize]
}

#[test]
fn peak_spectrum_separates_attacks_from_their_sources() {
    let corpus = mini_corpus(128, 25, 31);
    let cfg = AttackConfig::global();
    let sources = generate_corpus(&SyntheticCorpusSpec::new(75, 128, 128, 31))
        .unwrap()
        .images;
    // Pairwise: every attack image scores above the source it was built from.
    let mut greater = 0;
    for (i, attack) in corpus.attacks.iter().enumerate() {
        let source = &sources[25 + i];
        let sa = peak_spectrum_score(attack, &corpus.spec, 5).unwrap();
        let ss = peak_spectrum_score(source, &corpus.spec, 5).unwrap();
        if sa > ss {
            greater += 1;
        }
    }
    assert_eq!(greater, 25, "attack score not above source in every pair");
    let _ = cfg;
}

#[test]
fn peak_distance_near_zero_for_integer_ratio_nearest_attacks() {
    let mut within_one_bin = 0;
    let mut total = 0;
    for (size, seed) in [(64usize, 41u64), (96, 43), (128, 47)] {
        let corpus = mini_corpus(size, 12, seed);
        for attack in &corpus.attacks {
            let d = peak_distance_score(attack, &corpus.spec).unwrap();
            total += 1;
            if d <= 1.0 {
                within_one_bin += 1;
            }
        }
    }
    assert!(
        within_one_bin * 100 >= total * 95,
        "{within_one_bin}/{total} attacks within 1 bin"
    );
}

#[test]
fn peak_distance_bounds_hold_everywhere() {
    let corpus = mini_corpus(96, 15, 53);
    let map = expected_peaks(&corpus.spec).unwrap();
    let bound = map
        .excerpts
        .iter()
        .map(|e| e.half_diagonal())
        .fold(0.0, f64::max);
    for img in corpus.benign.iter().chain(&corpus.attacks) {
        let d = peak_distance_score(img, &corpus.spec).unwrap();
        assert!(d >= 0.0 && d <= bound, "distance {d} outside [0, {bound}]");
        let s = peak_spectrum_score(img, &corpus.spec, 5).unwrap();
        assert!((0.0..=1.0).contains(&s), "spectrum score {s}");
    }
}

#[test]
fn white_noise_peak_distance_matches_uniform_baseline() {
    // On white noise the per-excerpt argmax is uniform, so the mean distance
    // to the excerpt center approaches the Monte-Carlo expectation of a
    // uniformly drawn cell.
    let spec = ScaleSpec::new(ScaleAlgorithm::Nearest, (128, 128), (32, 32)).unwrap();
    let map = expected_peaks(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(59);

    // Monte-Carlo reference on the same excerpt geometry.
    let mut reference = 0.0;
    let trials = 4000;
    for _ in 0..trials {
        let mut acc = 0.0;
        for (peak, ex) in map.peaks.iter().zip(&map.excerpts) {
            let u = rng.random_range(ex.top..ex.bottom) as f64;
            let v = rng.random_range(ex.left..ex.right) as f64;
            acc += ((u - peak.0 as f64).powi(2) + (v - peak.1 as f64).powi(2)).sqrt();
        }
        reference += acc / map.peaks.len() as f64;
    }
    reference /= trials as f64;

    let mut measured = 0.0;
    let n_images = 24;
    for _ in 0..n_images {
        let img = RasterImage::from_fn(128, 128, 1, |_, _, _| rng.random_range(0..256) as f64);
        measured += peak_distance_score(&img, &spec).unwrap();
    }
    measured /= n_images as f64;

    let rel = (measured - reference).abs() / reference;
    assert!(
        rel < 0.15,
        "measured {measured:.2} vs reference {reference:.2} ({rel:.3} relative)"
    );
}

#[test]
fn down_up_psnr_drops_below_benign_first_percentile() {
    let corpus = mini_corpus(128, 25, 61);
    let benign: Vec<f64> = corpus
        .benign
        .iter()
        .map(|img| spatial::down_up_score(img, &corpus.spec, Metric::Psnr).unwrap())
        .collect();
    let mut sorted = benign.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p1 = percentile(&sorted, 0.01);
    let below = corpus
        .attacks
        .iter()
        .filter(|img| spatial::down_up_score(img, &corpus.spec, Metric::Psnr).unwrap() < p1)
        .count();
    assert_eq!(below, corpus.attacks.len(), "p1 = {p1:.2} dB");
}

#[test]
fn clean_filter_psnr_drops_below_benign_first_percentile() {
    let corpus = mini_corpus(128, 25, 67);
    let score = |img: &RasterImage| {
        spatial::clean_filter_score(img, &corpus.spec, FilterKind::Median, Metric::Psnr, 0)
            .unwrap()
    };
    let mut benign: Vec<f64> = corpus.benign.iter().map(&score).collect();
    benign.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p1 = percentile(&benign, 0.01);
    let below = corpus.attacks.iter().filter(|img| score(img) < p1).count();
    assert_eq!(below, corpus.attacks.len(), "p1 = {p1:.2} dB");
}

/// Local-scenario mini corpus: nearest beta = 4, box backdoor.
fn local_corpus(n: usize, seed: u64) -> (ScaleSpec, Vec<RasterImage>, Vec<RasterImage>) {
    let size = 128;
    let spec = ScaleSpec::new(ScaleAlgorithm::Nearest, (size, size), (DST, DST)).unwrap();
    let images = generate_corpus(&SyntheticCorpusSpec::new((2 * n).max(40), size, size, seed))
        .unwrap()
        .images;
    let cfg = AttackConfig::local(BackdoorPattern::standard(BackdoorKind::Box));
    let benign = images[..n].to_vec();
    let attacks = (0..n)
        .map(|i| {
            let source = &images[n + i];
            let target = make_target(source, &spec, &cfg, None).unwrap();
            craft_attack(source, &target, &spec, &cfg).unwrap().attack
        })
        .collect();
    (spec, benign, attacks)
}

// Patch parameters scaled to the 32-pixel mini target (the full-size
// defaults assume a 224 target).
const MINI_PATCH_W: usize = 8;
const MINI_PATCH_STRIDE: usize = 8;

#[test]
fn patch_clean_flags_local_backdoors() {
    let (spec, benign, attacks) = local_corpus(25, 71);
    let score = |img: &RasterImage| {
        spatial::patch_clean_score(img, &spec, MINI_PATCH_W, MINI_PATCH_STRIDE, 0).unwrap()
    };
    let mut benign_scores: Vec<f64> = benign.iter().map(&score).collect();
    benign_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p99 = percentile(&benign_scores, 0.99);
    let above = attacks.iter().filter(|img| score(img) > p99).count();
    assert!(
        above * 100 >= attacks.len() * 70,
        "{above}/{} above benign 99th percentile {p99:.2}",
        attacks.len()
    );
}

#[test]
fn targeted_patch_clean_tracks_patch_clean_accuracy() {
    let (spec, benign, attacks) = local_corpus(25, 73);
    let accuracy = |scores_benign: &[f64], scores_attack: &[f64]| -> f64 {
        // Calibrate at 1% FPR on the benign half, then measure accuracy.
        let profile = scalewatch_core::calibrate::calibrate_threshold(
            scores_benign,
            Direction::HighIsAttack,
            0.01,
        )
        .unwrap();
        let tp = scores_attack.iter().filter(|&&s| s > profile).count();
        let fp = scores_benign.iter().filter(|&&s| s > profile).count();
        let tn = scores_benign.len() - fp;
        100.0 * (tp + tn) as f64 / (scores_benign.len() + scores_attack.len()) as f64
    };
    let pc_b: Vec<f64> = benign
        .iter()
        .map(|i| spatial::patch_clean_score(i, &spec, MINI_PATCH_W, MINI_PATCH_STRIDE, 0).unwrap())
        .collect();
    let pc_a: Vec<f64> = attacks
        .iter()
        .map(|i| spatial::patch_clean_score(i, &spec, MINI_PATCH_W, MINI_PATCH_STRIDE, 0).unwrap())
        .collect();
    let tp_b: Vec<f64> = benign
        .iter()
        .map(|i| {
            spatial::targeted_patch_clean_score(i, &spec, MINI_PATCH_W, MINI_PATCH_STRIDE, 0.6, 0)
                .unwrap()
        })
        .collect();
    let tp_a: Vec<f64> = attacks
        .iter()
        .map(|i| {
            spatial::targeted_patch_clean_score(i, &spec, MINI_PATCH_W, MINI_PATCH_STRIDE, 0.6, 0)
                .unwrap()
        })
        .collect();
    let acc_pc = accuracy(&pc_b, &pc_a);
    let acc_tp = accuracy(&tp_b, &tp_a);
    assert!(
        (acc_pc - acc_tp).abs() <= 10.0,
        "patch-clean {acc_pc:.1}% vs targeted {acc_tp:.1}%"
    );
}

/// Mann-Whitney U z-statistic (normal approximation) for the hypothesis that
/// `attack` scores are stochastically greater than `benign` scores.
fn mann_whitney_z(benign: &[f64], attack: &[f64]) -> f64 {
    let n1 = benign.len() as f64;
    let n2 = attack.len() as f64;
    let mut all: Vec<(f64, bool)> = benign
        .iter()
        .map(|&s| (s, false))
        .chain(attack.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Midranks with tie handling.
    let mut ranks = vec![0.0; all.len()];
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for r in ranks.iter_mut().take(j + 1).skip(i) {
            *r = rank;
        }
        i = j + 1;
    }
    let r2: f64 = all
        .iter()
        .zip(&ranks)
        .filter(|((_, is_attack), _)| *is_attack)
        .map(|(_, &r)| r)
        .sum();
    let u2 = r2 - n2 * (n2 + 1.0) / 2.0;
    let mean = n1 * n2 / 2.0;
    let sd = (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt();
    (u2 - mean) / sd
}

#[test]
fn every_detector_shifts_in_its_documented_direction() {
    let corpus = mini_corpus(128, 20, 79);
    // The full-size patch defaults do not fit the mini target, so the two
    // patch methods run with mini parameters.
    let mut detectors: Vec<DetectorKind> = DetectorKind::standard_set()
        .into_iter()
        .filter(|d| {
            !matches!(
                d,
                DetectorKind::PatchClean { .. } | DetectorKind::TargetedPatchClean { .. }
            )
        })
        .collect();
    detectors.push(DetectorKind::PatchClean {
        w: MINI_PATCH_W,
        stride: MINI_PATCH_STRIDE,
    });
    detectors.push(DetectorKind::TargetedPatchClean {
        w: MINI_PATCH_W,
        stride: MINI_PATCH_STRIDE,
        q: 0.6,
    });
    // z beyond 2.33 is p < 0.01 one-sided.
    for d in &detectors {
        let benign: Vec<f64> = corpus
            .benign
            .iter()
            .map(|i| d.score(i, &corpus.spec, 1).unwrap())
            .collect();
        let attack: Vec<f64> = corpus
            .attacks
            .iter()
            .map(|i| d.score(i, &corpus.spec, 1).unwrap())
            .collect();
        let z = mann_whitney_z(&benign, &attack);
        let directed = match d.direction() {
            Direction::HighIsAttack => z,
            Direction::LowIsAttack => -z,
        };
        assert!(
            directed > 2.33,
            "{}: directed z = {directed:.2} (benign {:?}.., attack {:?}..)",
            d.id(),
            &benign[..3.min(benign.len())],
            &attack[..3.min(attack.len())]
        );
    }
}

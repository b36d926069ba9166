//! Threshold calibration, hyperparameter grid search, ensemble voting and
//! detection metrics.
//!
//! Thresholds come from an order statistic of benign calibration scores so
//! that the empirical false positive rate stays at or below the target.
//! Flagging uses strict inequality, which makes ties land on the benign side.

use serde::{Deserialize, Serialize};

use crate::detectors::{DetectorKind, Direction};
use crate::error::{Error, Result};

/// Minimum number of benign scores a calibration accepts.
pub const MIN_CALIBRATION_SCORES: usize = 20;

/// Default calibration target: 1% false positives.
pub const DEFAULT_TARGET_FPR: f64 = 0.01;

/// Calibration bookkeeping stored alongside a threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationMeta {
    pub target_fpr: f64,
    pub n_benign: usize,
    pub seed: u64,
}

/// A calibrated detector: identity, hyperparameters, score direction and
/// threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorProfile {
    pub detector: DetectorKind,
    pub direction: Direction,
    pub threshold: f64,
    pub calibration: CalibrationMeta,
}

impl DetectorProfile {
    /// True when the score falls on the attack side of the threshold.
    pub fn flags(&self, score: f64) -> bool {
        match self.direction {
            Direction::HighIsAttack => score > self.threshold,
            Direction::LowIsAttack => score < self.threshold,
        }
    }
}

/// Picks the threshold from benign scores: the `ceil((1 - fpr) * N)`-th order
/// statistic (zero-based, clamped to the sample). Flagging is strict, so the
/// empirical FPR on the calibration set is at most the target.
pub fn calibrate_threshold(
    benign_scores: &[f64],
    direction: Direction,
    target_fpr: f64,
) -> Result<f64> {
    if benign_scores.len() < MIN_CALIBRATION_SCORES {
        return Err(Error::TooFewScores {
            min: MIN_CALIBRATION_SCORES,
            actual: benign_scores.len(),
        });
    }
    if !(0.0..=1.0).contains(&target_fpr) {
        return Err(Error::InvalidParameter(
            "target FPR must lie in [0, 1]".into(),
        ));
    }
    let mut sorted = benign_scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let idx = (((1.0 - target_fpr) * n as f64).ceil() as usize).min(n - 1);
    Ok(match direction {
        Direction::HighIsAttack => sorted[idx],
        Direction::LowIsAttack => sorted[n - 1 - idx],
    })
}

/// Calibrates a full profile for a detector.
pub fn calibrate_profile(
    detector: &DetectorKind,
    benign_scores: &[f64],
    target_fpr: f64,
    seed: u64,
) -> Result<DetectorProfile> {
    let direction = detector.direction();
    let threshold = calibrate_threshold(benign_scores, direction, target_fpr)?;
    Ok(DetectorProfile {
        detector: detector.clone(),
        direction,
        threshold,
        calibration: CalibrationMeta {
            target_fpr,
            n_benign: benign_scores.len(),
            seed,
        },
    })
}

/// A profile with a fixed, data-independent threshold (the fixed CSP rule:
/// attack if more than one peak).
pub fn fixed_profile(detector: &DetectorKind, threshold: f64) -> DetectorProfile {
    DetectorProfile {
        direction: detector.direction(),
        detector: detector.clone(),
        threshold,
        calibration: CalibrationMeta {
            target_fpr: f64::NAN,
            n_benign: 0,
            seed: 0,
        },
    }
}

/// Confusion counts of a binary evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_verdicts(verdicts: &[(bool, bool)]) -> Self {
        let mut c = Confusion::default();
        for &(flagged, is_attack) in verdicts {
            match (flagged, is_attack) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    /// Accuracy in percent.
    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        if total == 0 {
            return 0.0;
        }
        100.0 * (self.tp + self.tn) as f64 / total as f64
    }

    /// True positive rate in percent.
    pub fn tpr(&self) -> f64 {
        let p = self.tp + self.fn_;
        if p == 0 {
            return 0.0;
        }
        100.0 * self.tp as f64 / p as f64
    }

    /// False positive rate in percent.
    pub fn fpr(&self) -> f64 {
        let n = self.fp + self.tn;
        if n == 0 {
            return 0.0;
        }
        100.0 * self.fp as f64 / n as f64
    }
}

/// Applies a profile to labeled scores: (score, is_attack) pairs.
pub fn evaluate_profile(profile: &DetectorProfile, labeled: &[(f64, bool)]) -> Confusion {
    let verdicts: Vec<(bool, bool)> = labeled
        .iter()
        .map(|&(score, is_attack)| (profile.flags(score), is_attack))
        .collect();
    Confusion::from_verdicts(&verdicts)
}

/// One grid-search candidate: a detector instantiation, its benign scores on
/// the calibration subsplit, and its labeled scores on the validation split.
#[derive(Debug, Clone)]
pub struct GridPoint {
    pub detector: DetectorKind,
    pub calibration_benign: Vec<f64>,
    pub validation: Vec<(f64, bool)>,
}

/// Outcome of a grid search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best_index: usize,
    pub profile: DetectorProfile,
    /// (detector id, validation accuracy, validation fpr), lattice order.
    pub scoreboard: Vec<(String, f64, f64)>,
}

/// Picks the lattice point maximizing validation accuracy at the calibrated
/// threshold. Ties break by lower validation FPR, then lattice order.
pub fn grid_search(points: &[GridPoint], target_fpr: f64, seed: u64) -> Result<GridOutcome> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("empty grid".into()));
    }
    let mut scoreboard = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, point) in points.iter().enumerate() {
        if point.validation.is_empty() {
            return Err(Error::InvalidParameter("empty validation split".into()));
        }
        let profile =
            calibrate_profile(&point.detector, &point.calibration_benign, target_fpr, seed)?;
        let confusion = evaluate_profile(&profile, &point.validation);
        let (acc, fpr) = (confusion.accuracy(), confusion.fpr());
        scoreboard.push((point.detector.id(), acc, fpr));
        let better = match best {
            None => true,
            Some((_, best_acc, best_fpr)) => {
                acc > best_acc || (acc == best_acc && fpr < best_fpr)
            }
        };
        if better {
            best = Some((i, acc, fpr));
        }
    }
    let best_index = best.unwrap().0;
    let profile = calibrate_profile(
        &points[best_index].detector,
        &points[best_index].calibration_benign,
        target_fpr,
        seed,
    )?;
    Ok(GridOutcome {
        best_index,
        profile,
        scoreboard,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteStrategy {
    /// Attack when strictly more than half the members flag.
    Majority,
    /// Attack when any member flags.
    OneWinnerTakesAll,
}

impl VoteStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            VoteStrategy::Majority => "majority",
            VoteStrategy::OneWinnerTakesAll => "one_winner_takes_all",
        }
    }
}

/// Combines member verdicts into one.
pub fn ensemble_vote(verdicts: &[bool], strategy: VoteStrategy) -> Result<bool> {
    if verdicts.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let flags = verdicts.iter().filter(|&&v| v).count();
    Ok(match strategy {
        VoteStrategy::Majority => 2 * flags > verdicts.len(),
        VoteStrategy::OneWinnerTakesAll => flags > 0,
    })
}

/// Checks that record-id splits are pairwise disjoint.
pub fn check_disjoint_splits(splits: &[&[String]]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for split in splits {
        for id in *split {
            if !seen.insert(id.clone()) {
                return Err(Error::SplitLeakage(id.clone()));
            }
        }
    }
    Ok(())
}

/// Evaluation row of one detector (or ensemble) on one test split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub detector_id: String,
    pub accuracy: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub confusion: Confusion,
    pub threshold: f64,
    pub direction: Direction,
    /// Benign and attack test-score distributions, in split order.
    pub benign_scores: Vec<f64>,
    pub attack_scores: Vec<f64>,
}

/// Evaluates calibrated profiles on a labeled test split.
pub fn evaluate(profiles: &[DetectorProfile], test: &[(f64, bool)], ids: &[String]) -> Result<Vec<EvalRow>> {
    if profiles.len() != ids.len() {
        return Err(Error::InvalidParameter(
            "profile and id counts differ".into(),
        ));
    }
    Ok(profiles
        .iter()
        .zip(ids)
        .map(|(profile, id)| {
            let confusion = evaluate_profile(profile, test);
            EvalRow {
                detector_id: id.clone(),
                accuracy: confusion.accuracy(),
                tpr: confusion.tpr(),
                fpr: confusion.fpr(),
                confusion,
                threshold: profile.threshold,
                direction: profile.direction,
                benign_scores: test
                    .iter()
                    .filter(|(_, a)| !a)
                    .map(|(s, _)| *s)
                    .collect(),
                attack_scores: test.iter().filter(|(_, a)| *a).map(|(s, _)| *s).collect(),
            }
        })
        .collect())
}

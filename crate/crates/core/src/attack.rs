//! Attack crafting: target construction for the three threat scenarios and
//! the box-constrained least-squares solver that hides a target inside a
//! source image.
//!
//! The optimization minimizes the squared perturbation norm subject to the
//! scaled output staying within epsilon of the target in max norm, with all
//! pixels inside [0, 255]. It is solved separably: a column stage produces an
//! m x n' intermediate, a row stage then produces the full-resolution attack
//! image. Each stage is a sequence of single-output subproblems handled by
//! projected gradient steps of size 1 / ||c||^2.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{quantize, RasterImage};
use crate::io;
use crate::metrics;
use crate::scaling::{
    apply_cols, build_sampling_operator, mask_from_operator, MixingRow, SamplingOperator,
    ScaleSpec,
};

/// Maximum projected-gradient iterations per output constraint.
const MAX_ITERS: usize = 10_000;
/// Convergence bound on the per-iteration update magnitude.
const UPDATE_TOL: f64 = 1e-6;
/// Sweeps over a stage's constraints; couplings between overlapping kernel
/// windows die off quickly, so few are needed.
const MAX_SWEEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackScenario {
    /// Arbitrary, unrelated target image.
    Global,
    /// Target is the downscaled source with a backdoor trigger stamped in.
    Local,
    /// Target blended into the downscaled source with factor alpha.
    Overlay,
}

impl AttackScenario {
    pub fn name(&self) -> &'static str {
        match self {
            AttackScenario::Global => "global",
            AttackScenario::Local => "local",
            AttackScenario::Overlay => "overlay",
        }
    }
}

impl std::fmt::Display for AttackScenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Image corner a backdoor pattern anchors to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corner {
    UpperLeft,
    UpperRight,
    LowerLeft,
    LowerRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackdoorKind {
    /// Black 15x15 square.
    Box,
    /// Filled black disk of radius 10.
    Circle,
    /// Deterministic 15x15 hue-sweep tile.
    Rainbow,
}

impl BackdoorKind {
    pub const ALL: [BackdoorKind; 3] =
        [BackdoorKind::Box, BackdoorKind::Circle, BackdoorKind::Rainbow];

    pub fn name(&self) -> &'static str {
        match self {
            BackdoorKind::Box => "box",
            BackdoorKind::Circle => "circle",
            BackdoorKind::Rainbow => "rainbow",
        }
    }
}

impl std::fmt::Display for BackdoorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A backdoor trigger: kind, anchor corner, and extent in pixels (side length
/// for box/rainbow, radius for circle).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackdoorPattern {
    pub kind: BackdoorKind,
    pub anchor: Corner,
    pub extent: usize,
}

impl BackdoorPattern {
    /// The evaluated patterns: black box lower-left (15x15), black circle
    /// upper-right (radius 10), rainbow tile lower-left (15x15).
    pub fn standard(kind: BackdoorKind) -> Self {
        match kind {
            BackdoorKind::Box => Self {
                kind,
                anchor: Corner::LowerLeft,
                extent: 15,
            },
            BackdoorKind::Circle => Self {
                kind,
                anchor: Corner::UpperRight,
                extent: 10,
            },
            BackdoorKind::Rainbow => Self {
                kind,
                anchor: Corner::LowerLeft,
                extent: 15,
            },
        }
    }

    /// Bounding-box side length in pixels.
    fn side(&self) -> usize {
        match self.kind {
            BackdoorKind::Box | BackdoorKind::Rainbow => self.extent,
            BackdoorKind::Circle => 2 * self.extent + 1,
        }
    }

    fn origin(&self, h: usize, w: usize) -> (usize, usize) {
        let side = self.side();
        match self.anchor {
            Corner::UpperLeft => (0, 0),
            Corner::UpperRight => (0, w - side),
            Corner::LowerLeft => (h - side, 0),
            Corner::LowerRight => (h - side, w - side),
        }
    }

    /// Stamps the pattern onto an image in place.
    pub fn stamp(&self, img: &mut RasterImage) -> Result<()> {
        let (h, w) = img.dims();
        if self.side() > h || self.side() > w {
            return Err(Error::InvalidParameter(format!(
                "backdoor extent {} exceeds target dims {h}x{w}",
                self.side()
            )));
        }
        let (top, left) = self.origin(h, w);
        let side = self.side();
        for dr in 0..side {
            for dc in 0..side {
                let inside = match self.kind {
                    BackdoorKind::Box | BackdoorKind::Rainbow => true,
                    BackdoorKind::Circle => {
                        let rr = dr as f64 - self.extent as f64;
                        let cc = dc as f64 - self.extent as f64;
                        rr * rr + cc * cc <= (self.extent * self.extent) as f64
                    }
                };
                if !inside {
                    continue;
                }
                let color = match self.kind {
                    BackdoorKind::Box | BackdoorKind::Circle => [0u8, 0, 0],
                    BackdoorKind::Rainbow => rainbow_tile_color(dr, dc, side),
                };
                for ch in 0..img.channels() {
                    img.set(top + dr, left + dc, ch, color[ch.min(2)]);
                }
            }
        }
        Ok(())
    }

    /// Number of pixels the stamp covers.
    pub fn pixel_count(&self) -> usize {
        let side = self.side();
        match self.kind {
            BackdoorKind::Box | BackdoorKind::Rainbow => side * side,
            BackdoorKind::Circle => {
                let r = self.extent as f64;
                let mut count = 0;
                for dr in 0..side {
                    for dc in 0..side {
                        let rr = dr as f64 - r;
                        let cc = dc as f64 - r;
                        if rr * rr + cc * cc <= r * r {
                            count += 1;
                        }
                    }
                }
                count
            }
        }
    }
}

/// Fixed HSV sweep over the tile diagonal, fully saturated, converted to RGB.
fn rainbow_tile_color(dr: usize, dc: usize, side: usize) -> [u8; 3] {
    let t = (dr + dc) as f64 / (2 * side - 2).max(1) as f64;
    let h = (t * 360.0) % 360.0;
    let sector = (h / 60.0).floor() as i32 % 6;
    let f = h / 60.0 - (h / 60.0).floor();
    let (r, g, b) = match sector {
        0 => (1.0, f, 0.0),
        1 => (1.0 - f, 1.0, 0.0),
        2 => (0.0, 1.0, f),
        3 => (0.0, 1.0 - f, 1.0),
        4 => (f, 0.0, 1.0),
        _ => (1.0, 0.0, 1.0 - f),
    };
    [quantize(r * 255.0), quantize(g * 255.0), quantize(b * 255.0)]
}

/// Attack configuration shared by all scenarios.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Max-norm budget on the scaled output, in intensity units.
    pub epsilon: f64,
    pub scenario: AttackScenario,
    /// Blending factor, overlay only.
    pub alpha: f64,
    /// Trigger pattern, local only.
    pub backdoor: Option<BackdoorPattern>,
    /// PSNR gate (dB) for the source-similarity goal.
    pub o2_psnr_gate: f64,
}

impl AttackConfig {
    pub fn global() -> Self {
        Self {
            epsilon: 1.0,
            scenario: AttackScenario::Global,
            alpha: 1.0,
            backdoor: None,
            o2_psnr_gate: 25.0,
        }
    }

    pub fn local(backdoor: BackdoorPattern) -> Self {
        Self {
            epsilon: 1.0,
            scenario: AttackScenario::Local,
            alpha: 1.0,
            backdoor: Some(backdoor),
            o2_psnr_gate: 25.0,
        }
    }

    pub fn overlay(alpha: f64) -> Self {
        Self {
            epsilon: 1.0,
            scenario: AttackScenario::Overlay,
            alpha,
            backdoor: None,
            o2_psnr_gate: 25.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::InvalidParameter("epsilon must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter("alpha must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Builds the target image for a scenario. Global and overlay need a donor
/// image at the scaled size; local stamps the configured backdoor onto the
/// downscaled source.
pub fn make_target(
    source: &RasterImage,
    spec: &ScaleSpec,
    cfg: &AttackConfig,
    donor: Option<&RasterImage>,
) -> Result<RasterImage> {
    cfg.validate()?;
    match cfg.scenario {
        AttackScenario::Global => {
            let donor = require_donor(donor, spec, "global")?;
            Ok(donor.clone())
        }
        AttackScenario::Local => {
            let backdoor = cfg.backdoor.ok_or_else(|| {
                Error::InvalidParameter("local scenario requires a backdoor pattern".into())
            })?;
            let mut target = crate::scaling::scale(source, spec)?;
            backdoor.stamp(&mut target)?;
            Ok(target)
        }
        AttackScenario::Overlay => {
            let donor = require_donor(donor, spec, "overlay")?;
            let scaled = crate::scaling::scale(source, spec)?;
            let (h, w) = spec.dst;
            let planes: Vec<Vec<f64>> = (0..source.channels())
                .map(|ch| {
                    let d = donor.plane(ch);
                    let s = scaled.plane(ch);
                    d.iter()
                        .zip(&s)
                        .map(|(dv, sv)| cfg.alpha * dv + (1.0 - cfg.alpha) * sv)
                        .collect()
                })
                .collect();
            RasterImage::from_planes(h, w, &planes)
        }
    }
}

fn require_donor<'a>(
    donor: Option<&'a RasterImage>,
    spec: &ScaleSpec,
    scenario: &str,
) -> Result<&'a RasterImage> {
    let donor = donor.ok_or_else(|| {
        Error::InvalidParameter(format!("{scenario} scenario requires a donor target"))
    })?;
    if donor.dims() != spec.dst {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", spec.dst.0, spec.dst.1),
            actual: format!("{}x{}", donor.dims().0, donor.dims().1),
        });
    }
    Ok(donor)
}

/// Success flags for the two attack goals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessFlags {
    /// scale(A) within epsilon of T (max norm, post-quantization).
    pub o1: bool,
    /// A close enough to S (PSNR gate).
    pub o2: bool,
}

impl SuccessFlags {
    pub fn both(&self) -> bool {
        self.o1 && self.o2
    }
}

/// A finished attack: images plus goal diagnostics.
#[derive(Debug, Clone)]
pub struct AttackRecord {
    pub source: RasterImage,
    pub target: RasterImage,
    pub attack: RasterImage,
    /// PSNR(scale(A), T) in dB.
    pub goal_o1_psnr: f64,
    /// PSNR(A, S) in dB.
    pub goal_o2_psnr: f64,
    /// Max-norm error of scale(A) against T after quantization.
    pub linf_error: f64,
    pub success: SuccessFlags,
    /// False when some stage constraint was unsatisfiable inside pixel bounds.
    pub solver_feasible: bool,
}

/// Serialized attack metadata, written next to the images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackMeta {
    pub spec: ScaleSpec,
    pub config: AttackConfig,
    #[serde(with = "metrics::serde_db")]
    pub goal_o1_psnr: f64,
    #[serde(with = "metrics::serde_db")]
    pub goal_o2_psnr: f64,
    pub linf_error: f64,
    pub success: SuccessFlags,
    pub solver_feasible: bool,
    /// The source-similarity goal is a PSNR stand-in for the perceptual
    /// criterion; the label keeps reports honest about that.
    pub o2_criterion: String,
}

impl AttackRecord {
    pub fn meta(&self, spec: &ScaleSpec, cfg: &AttackConfig) -> AttackMeta {
        AttackMeta {
            spec: *spec,
            config: *cfg,
            goal_o1_psnr: self.goal_o1_psnr,
            goal_o2_psnr: self.goal_o2_psnr,
            linf_error: self.linf_error,
            success: self.success,
            solver_feasible: self.solver_feasible,
            o2_criterion: format!("psnr_proxy>={}dB", cfg.o2_psnr_gate),
        }
    }

    /// Writes S.png, T.png, A.png and meta.json into a directory.
    pub fn save(&self, dir: &Path, spec: &ScaleSpec, cfg: &AttackConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_png(&self.source, &dir.join("S.png"))?;
        io::write_png(&self.target, &dir.join("T.png"))?;
        io::write_png(&self.attack, &dir.join("A.png"))?;
        let meta = self.meta(spec, cfg);
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Reads a record directory written by [`AttackRecord::save`].
    pub fn load(dir: &Path) -> Result<(Self, AttackMeta)> {
        let meta: AttackMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        let record = AttackRecord {
            source: io::read_image(&dir.join("S.png"))?,
            target: io::read_image(&dir.join("T.png"))?,
            attack: io::read_image(&dir.join("A.png"))?,
            goal_o1_psnr: meta.goal_o1_psnr,
            goal_o2_psnr: meta.goal_o2_psnr,
            linf_error: meta.linf_error,
            success: meta.success,
            solver_feasible: meta.solver_feasible,
        };
        Ok((record, meta))
    }
}

/// Solves one output constraint in place: the smallest change to the window
/// pixels so that `c . x` lands within `eps` of `t`, with pixels kept in
/// [0, 255]. Projected gradient with step 1 / ||c||^2. Returns whether the
/// constraint holds on exit.
fn solve_output_constraint(
    values: &mut [f64],
    stride: usize,
    row: &MixingRow,
    t: f64,
    eps: f64,
) -> bool {
    let norm_sq = row.norm_sq();
    if norm_sq <= 0.0 {
        return t.abs() <= eps;
    }
    for _ in 0..MAX_ITERS {
        let y = row.dot_strided(values, stride);
        let resid = if y > t + eps {
            y - (t + eps)
        } else if y < t - eps {
            y - (t - eps)
        } else {
            return true;
        };
        let step = resid / norm_sq;
        let mut max_update = 0.0f64;
        for &(i, w) in &row.taps {
            let old = values[i * stride];
            let new = (old - step * w).clamp(0.0, 255.0);
            values[i * stride] = new;
            max_update = max_update.max((new - old).abs());
        }
        if max_update < UPDATE_TOL {
            break;
        }
    }
    (row.dot_strided(values, stride) - t).abs() <= eps + UPDATE_TOL
}

/// One solver stage over a plane: for each of `line_count` lines (columns in
/// the column stage, rows in the row stage) the mixing rows must reproduce
/// `targets[k * line_count + line]` within `eps`. Overlapping kernel windows
/// couple neighboring subproblems, so each line is swept until its full
/// constraint set holds. Returns false if any line stays infeasible.
fn solve_stage(
    values: &mut [f64],
    rows: &[MixingRow],
    targets: &[f64],
    eps: f64,
    line_count: usize,
    line_stride: usize,
    elem_stride: usize,
) -> bool {
    let mut feasible = true;
    for line in 0..line_count {
        let base = line * line_stride;
        let slice = &mut values[base..];
        let mut ok = false;
        for _ in 0..MAX_SWEEPS {
            for (k, row) in rows.iter().enumerate() {
                solve_output_constraint(slice, elem_stride, row, targets[k * line_count + line], eps);
            }
            ok = rows.iter().enumerate().all(|(k, row)| {
                (row.dot_strided(slice, elem_stride) - targets[k * line_count + line]).abs()
                    <= eps + 1e-6
            });
            if ok {
                break;
            }
        }
        feasible &= ok;
    }
    feasible
}

/// Crafts an attack image for the given source/target pair.
///
/// Nearest scaling short-circuits to exact assignment of the sampled pixels.
/// The other algorithms run the two-stage solver with half the epsilon budget
/// per stage, so the composed error stays within the overall budget. An
/// infeasible stage marks the record unsuccessful instead of failing.
pub fn craft_attack(
    source: &RasterImage,
    target: &RasterImage,
    spec: &ScaleSpec,
    cfg: &AttackConfig,
) -> Result<AttackRecord> {
    cfg.validate()?;
    if source.dims() != spec.src {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", spec.src.0, spec.src.1),
            actual: format!("{}x{}", source.dims().0, source.dims().1),
        });
    }
    if target.dims() != spec.dst || target.channels() != source.channels() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}x{}", spec.dst.0, spec.dst.1, source.channels()),
            actual: format!(
                "{}x{}x{}",
                target.dims().0,
                target.dims().1,
                target.channels()
            ),
        });
    }
    let op = build_sampling_operator(spec)?;
    let (attack, solver_feasible) = match spec.algorithm {
        crate::scaling::ScaleAlgorithm::Nearest => (craft_nearest(source, target, &op), true),
        _ => craft_two_stage(source, target, &op, cfg.epsilon),
    };
    finish_record(source, target, attack, spec, cfg, solver_feasible)
}

fn finish_record(
    source: &RasterImage,
    target: &RasterImage,
    attack: RasterImage,
    spec: &ScaleSpec,
    cfg: &AttackConfig,
    solver_feasible: bool,
) -> Result<AttackRecord> {
    let rescaled = crate::scaling::scale(&attack, spec)?;
    let linf = rescaled
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .fold(0.0, f64::max);
    let goal_o1_psnr = metrics::psnr(&rescaled, target);
    let goal_o2_psnr = metrics::psnr(&attack, source);
    let success = SuccessFlags {
        o1: solver_feasible && linf <= cfg.epsilon,
        o2: goal_o2_psnr >= cfg.o2_psnr_gate,
    };
    Ok(AttackRecord {
        source: source.clone(),
        target: target.clone(),
        attack,
        goal_o1_psnr,
        goal_o2_psnr,
        linf_error: linf,
        success,
        solver_feasible,
    })
}

/// Nearest scaling samples exactly one source pixel per output, so the attack
/// is plain assignment on the sampling mask.
fn craft_nearest(
    source: &RasterImage,
    target: &RasterImage,
    op: &SamplingOperator,
) -> RasterImage {
    let mut attack = source.clone();
    for (k, row) in op.rows.iter().enumerate() {
        let i = row.taps[0].0;
        for (l, col) in op.cols.iter().enumerate() {
            let j = col.taps[0].0;
            for ch in 0..source.channels() {
                attack.set(i, j, ch, target.get(k, l, ch));
            }
        }
    }
    attack
}

fn craft_two_stage(
    source: &RasterImage,
    target: &RasterImage,
    op: &SamplingOperator,
    eps: f64,
) -> (RasterImage, bool) {
    let (m, n) = op.spec.src;
    let np = op.spec.dst.1;
    // Quarter budget per stage: stage errors compose through the mixing
    // matrices and add to the quantization error of the stored image, and
    // the total has to stay within eps after rounding. With eps/4 per stage
    // the worst case is 0.5625 eps + 0.79, below the rounding threshold of
    // eps + 0.5 for every eps >= 1.
    let stage_eps = 0.25 * eps;
    let mut feasible = true;
    let mut planes: Vec<Vec<f64>> = Vec::with_capacity(source.channels());

    for ch in 0..source.channels() {
        let src_plane = source.plane(ch);
        let tgt_plane = target.plane(ch);

        // Column stage: start from the horizontally downscaled source and
        // perturb each m-length column until the vertical mix reproduces the
        // target column.
        let mut intermediate = apply_cols(&op.cols, &src_plane, m, n);
        clamp_plane(&mut intermediate);
        feasible &= solve_stage(
            &mut intermediate,
            &op.rows,
            &tgt_plane,
            stage_eps,
            np, // one constraint set per intermediate column
            1,  // column l starts at offset l
            np, // its elements are np apart
        );

        // Row stage: perturb each n-length source row until the horizontal
        // mix reproduces the intermediate row.
        let mut attack_plane = src_plane;
        let mut row_targets = vec![0.0; m * np];
        for i in 0..m {
            for l in 0..np {
                row_targets[l * m + i] = intermediate[i * np + l];
            }
        }
        feasible &= solve_stage(
            &mut attack_plane,
            &op.cols,
            &row_targets,
            stage_eps,
            m, // one constraint set per source row
            n, // row i starts at offset i * n
            1, // its elements are adjacent
        );
        planes.push(attack_plane);
    }
    let attack = RasterImage::from_planes(m, n, &planes).expect("attack planes match source");
    (attack, feasible)
}

fn clamp_plane(plane: &mut [f64]) {
    for v in plane.iter_mut() {
        *v = v.clamp(0.0, 255.0);
    }
}

/// Recomputes the success flags of a record from its stored (quantized)
/// images: the scaled-output goal by re-scaling the attack image, the
/// source-similarity goal from the PSNR gate in the config.
pub fn validate_attack(
    record: &AttackRecord,
    spec: &ScaleSpec,
    cfg: &AttackConfig,
) -> Result<SuccessFlags> {
    let rescaled = crate::scaling::scale(&record.attack, spec)?;
    let linf = rescaled
        .data()
        .iter()
        .zip(record.target.data())
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .fold(0.0, f64::max);
    Ok(SuccessFlags {
        o1: linf <= cfg.epsilon,
        o2: metrics::psnr(&record.attack, &record.source) >= cfg.o2_psnr_gate,
    })
}

/// The sampling mask of a spec, i.e. the set of pixels an attack may touch.
pub fn attack_surface(spec: &ScaleSpec) -> Result<crate::scaling::PixelMask> {
    Ok(mask_from_operator(&build_sampling_operator(spec)?))
}

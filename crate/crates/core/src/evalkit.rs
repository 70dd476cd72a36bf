//! Segmentation metrics, the oracle mask propagator and the tiered evaluator.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{run_episode, ActionPolicy, GreedyPolicy, SimulatorConfig};
use crate::error::{Error, Result};
use crate::policy::PolicyParams;
use crate::rewards::{score, Commit, RewardBreakdown, RewardConfig};
use crate::scene::{DifficultyTier, Rect, Scene};

/// A binary mask on a square grid, one bit per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    grid: usize,
    bits: Vec<u64>,
}

impl Mask {
    pub fn empty(grid: usize) -> Self {
        Self { grid, bits: vec![0; (grid * grid).div_ceil(64)] }
    }

    /// Pixels `(x, y)` with `x1 <= x < x2` and `y1 <= y < y2`, clipped to the grid.
    pub fn from_rect(grid: usize, rect: &Rect) -> Self {
        let mut m = Self::empty(grid);
        let r = rect.canonical();
        let lo = |v: i32| v.clamp(0, grid as i32) as usize;
        for y in lo(r.y1)..lo(r.y2) {
            for x in lo(r.x1)..lo(r.x2) {
                m.set(x, y, true);
            }
        }
        m
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        let i = y * self.grid + x;
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        let i = y * self.grid + x;
        if on {
            self.bits[i / 64] |= 1 << (i % 64);
        } else {
            self.bits[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn intersection_count(&self, other: &Mask) -> u64 {
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a & b).count_ones() as u64).sum()
    }

    pub fn union_count(&self, other: &Mask) -> u64 {
        self.bits.iter().zip(&other.bits).map(|(a, b)| (a | b).count_ones() as u64).sum()
    }

    /// IoU with the convention that two empty masks agree perfectly.
    pub fn iou(&self, other: &Mask) -> f64 {
        let u = self.union_count(other);
        if u == 0 {
            1.0
        } else {
            self.intersection_count(other) as f64 / u as f64
        }
    }

    /// Mask pixels with a 4-neighbour outside the mask or on the grid border.
    pub fn boundary(&self) -> Vec<(usize, usize)> {
        let s = self.grid;
        let mut out = Vec::new();
        for y in 0..s {
            for x in 0..s {
                if !self.get(x, y) {
                    continue;
                }
                let edge = x == 0
                    || y == 0
                    || x + 1 == s
                    || y + 1 == s
                    || !self.get(x - 1, y)
                    || !self.get(x + 1, y)
                    || !self.get(x, y - 1)
                    || !self.get(x, y + 1);
                if edge {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// One mask per frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSequence {
    pub masks: Vec<Mask>,
}

impl MaskSequence {
    pub fn from_boxes(grid: usize, boxes: &[Rect]) -> Self {
        Self { masks: boxes.iter().map(|b| Mask::from_rect(grid, b)).collect() }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }
}

fn check_dims(pred: &MaskSequence, gt: &MaskSequence) -> Result<()> {
    if pred.len() != gt.len() || pred.masks.iter().zip(&gt.masks).any(|(a, b)| a.grid != b.grid) {
        return Err(Error::Precondition(format!(
            "mask sequences differ in shape: {} vs {} frames",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Precondition("mask sequences have no frames".into()));
    }
    Ok(())
}

/// Mean per-frame IoU; frames where both masks are empty count as 1.
pub fn region_similarity_j(pred: &MaskSequence, gt: &MaskSequence) -> Result<f64> {
    check_dims(pred, gt)?;
    Ok(pred.masks.iter().zip(&gt.masks).map(|(p, g)| p.iou(g)).sum::<f64>() / pred.len() as f64)
}

/// Boundary tolerance: 0.8% of the grid diagonal, at least one pixel.
pub fn default_tolerance(grid: usize) -> f64 {
    (0.008 * (2.0f64).sqrt() * grid as f64).max(1.0)
}

fn matched_fraction(from: &[(usize, usize)], to: &[(usize, usize)], tol: f64) -> f64 {
    let tol2 = tol * tol;
    let hits = from
        .iter()
        .filter(|&&(x, y)| {
            to.iter().any(|&(u, v)| {
                let dx = x as f64 - u as f64;
                let dy = y as f64 - v as f64;
                dx * dx + dy * dy <= tol2
            })
        })
        .count();
    hits as f64 / from.len() as f64
}

/// Boundary F-measure of one frame.
pub fn boundary_f(pred: &Mask, gt: &Mask, tol: f64) -> f64 {
    let bp = pred.boundary();
    let bg = gt.boundary();
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => {
            let precision = matched_fraction(&bp, &bg, tol);
            let recall = matched_fraction(&bg, &bp, tol);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        }
    }
}

/// Mean per-frame boundary F-measure.
pub fn contour_accuracy_f(pred: &MaskSequence, gt: &MaskSequence, tol: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Precondition(format!("boundary tolerance must be non-negative, got {tol}")));
    }
    let frames: Vec<f64> = pred.masks.par_iter().zip(&gt.masks).map(|(p, g)| boundary_f(p, g, tol)).collect();
    Ok(frames.iter().sum::<f64>() / frames.len() as f64)
}

/// `(gIoU, cIoU)`: the mean per-sample IoU and the pooled intersection over pooled union.
pub fn image_metrics(samples: &[(Mask, Mask)]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Precondition("image metrics need at least one sample".into()));
    }
    let giou = samples.iter().map(|(p, g)| p.iou(g)).sum::<f64>() / samples.len() as f64;
    let inter: u64 = samples.iter().map(|(p, g)| p.intersection_count(g)).sum();
    let union: u64 = samples.iter().map(|(p, g)| p.union_count(g)).sum();
    let ciou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    Ok((giou, ciou))
}

/// Slot of the object a commit grounds to: highest IoU at the keyframe, then the
/// nearest box center, then the lowest slot id.
pub fn matched_object(scene: &Scene, commit: &Commit) -> usize {
    let pred = commit.bbox.canonical();
    let (px, py) = pred.center();
    let t = commit.keyframe.min(scene.frames.saturating_sub(1));
    let key = |slot: usize, b: &Rect| {
        let (cx, cy) = b.center();
        (pred.iou(b), -((cx - px).powi(2) + (cy - py).powi(2)), std::cmp::Reverse(slot))
    };
    scene
        .objects
        .iter()
        .filter(|o| o.present)
        .map(|o| (o.slot_id, key(o.slot_id, &o.boxes[t])))
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite keys"))
        .map(|(slot, _)| slot)
        .unwrap_or(scene.target_id)
}

/// Stand-in for video mask propagation: the full mask sequence of the matched object.
pub fn propagate_mask(scene: &Scene, commit: &Commit) -> MaskSequence {
    let obj = scene.object(matched_object(scene, commit)).expect("matched object exists");
    MaskSequence::from_boxes(scene.grid, &obj.boxes)
}

/// Aggregate metrics of one tier (or of all samples).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TierStats {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "JF")]
    pub jf: f64,
    pub mean_turns: f64,
    pub mean_time_s: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tiers {
    pub simple: TierStats,
    pub medium: TierStats,
    pub difficult: TierStats,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub tiers: Tiers,
    pub overall: TierStats,
}

impl TierReport {
    pub fn tier(&self, tier: DifficultyTier) -> &TierStats {
        match tier {
            DifficultyTier::Simple => &self.tiers.simple,
            DifficultyTier::Medium => &self.tiers.medium,
            DifficultyTier::Difficult => &self.tiers.difficult,
        }
    }
}

/// Per-scene evaluation record (one JSONL line).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub tier: DifficultyTier,
    #[serde(rename = "K")]
    pub k: usize,
    pub rewards: RewardBreakdown,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub commit: Commit,
    #[serde(skip)]
    pub time_s: f64,
}

/// Evaluation settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub max_turns: usize,
    pub alpha: f64,
    /// Record wall-time per sample (makes reports non-reproducible).
    pub timing: bool,
    /// Boundary tolerance override; defaults to [`default_tolerance`].
    pub tolerance: Option<f64>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { max_turns: 5, alpha: 0.5, timing: false, tolerance: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: TierReport,
    pub samples: Vec<SampleRecord>,
}

impl Evaluation {
    pub fn report_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.report)? + "\n")
    }

    pub fn samples_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }
}

fn aggregate(samples: &[&SampleRecord]) -> TierStats {
    if samples.is_empty() {
        return TierStats::default();
    }
    let n = samples.len() as f64;
    let mean = |f: fn(&SampleRecord) -> f64| samples.iter().map(|s| f(s)).sum::<f64>() / n;
    let j = mean(|s| s.j);
    let f = mean(|s| s.f);
    TierStats {
        j,
        f,
        jf: (j + f) / 2.0,
        mean_turns: mean(|s| s.k as f64),
        mean_time_s: mean(|s| s.time_s),
        n: samples.len(),
    }
}

/// Builds the tiered report from per-sample records.
pub fn summarize(samples: &[SampleRecord]) -> TierReport {
    let of = |t: DifficultyTier| aggregate(&samples.iter().filter(|s| s.tier == t).collect::<Vec<_>>());
    TierReport {
        tiers: Tiers {
            simple: of(DifficultyTier::Simple),
            medium: of(DifficultyTier::Medium),
            difficult: of(DifficultyTier::Difficult),
        },
        overall: aggregate(&samples.iter().collect::<Vec<_>>()),
    }
}

/// Scores one finished episode.
fn evaluate_scene<P: ActionPolicy + ?Sized>(
    scene: &Scene,
    policy: &mut P,
    sim: &SimulatorConfig,
    opts: &EvalOptions,
) -> Result<SampleRecord> {
    let start = opts.timing.then(Instant::now);
    let traj = run_episode(scene, policy, sim, opts.max_turns)?;
    let rewards = score(scene, &traj.commit, &traj.trace.counts, &RewardConfig::for_grid(scene.grid, opts.alpha))?;
    let pred = propagate_mask(scene, &traj.commit);
    let gt = MaskSequence::from_boxes(scene.grid, &scene.target().boxes);
    let tol = opts.tolerance.unwrap_or_else(|| default_tolerance(scene.grid));
    let j = region_similarity_j(&pred, &gt)?;
    let f = contour_accuracy_f(&pred, &gt, tol)?;
    Ok(SampleRecord {
        seed: scene.seed,
        tier: scene.tier,
        k: traj.turns.len(),
        rewards,
        j,
        f,
        commit: traj.commit,
        time_s: start.map_or(0.0, |s| s.elapsed().as_secs_f64()),
    })
}

/// Evaluates an arbitrary policy, built fresh for each scene by `make_policy(index, scene)`.
pub fn evaluate_with<'p, F>(pack: &[Scene], sim: &SimulatorConfig, opts: &EvalOptions, make_policy: F) -> Result<Evaluation>
where
    F: Fn(usize, &Scene) -> Box<dyn ActionPolicy + 'p> + Sync,
{
    let samples: Vec<SampleRecord> = pack
        .par_iter()
        .enumerate()
        .map(|(i, scene)| evaluate_scene(scene, make_policy(i, scene).as_mut(), sim, opts))
        .collect::<Result<_>>()?;
    Ok(Evaluation { report: summarize(&samples), samples })
}

/// Greedy-decoding evaluation of a checkpoint on a scenario pack.
pub fn evaluate(params: &PolicyParams, pack: &[Scene], sim: &SimulatorConfig, opts: &EvalOptions) -> Result<Evaluation> {
    let world = &params.spec.world;
    for s in pack {
        if s.schema != world.schema || s.frames != world.frames || s.grid != world.grid || s.objects.len() > world.max_objects
        {
            return Err(Error::Config(format!(
                "scene {} does not match the checkpoint world (schema, {} frames, grid {}, {} slots)",
                s.seed, world.frames, world.grid, world.max_objects
            )));
        }
    }
    if opts.max_turns != params.spec.max_turns {
        return Err(Error::Config(format!(
            "checkpoint was trained with max_turns {}, evaluation requested {}",
            params.spec.max_turns, opts.max_turns
        )));
    }
    evaluate_with(pack, sim, opts, |_, _| Box::new(GreedyPolicy { params }))
}

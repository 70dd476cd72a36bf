//! Trajectory-level and turn-level rewards.
//!
//! The trajectory reward scores the committed keyframe, box and point against
//! the target. The turn reward scores the clarification dialogue through the
//! residual candidate counts `N_1..N_K` (with `N_0 = M`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{Rect, Scene};

/// The final grounding output of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Commit {
    pub keyframe: usize,
    #[serde(rename = "box")]
    pub bbox: Rect,
    pub point: (f64, f64),
}

/// Distance thresholds for the center and point gates, in grid units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub tau_box: f64,
    pub tau_point: f64,
}

/// Resolution at which the reference tolerances (10 px center, 100 px radius) are stated.
pub const REFERENCE_RESOLUTION: f64 = 864.0;

impl Thresholds {
    /// Reference tolerances rescaled to a `grid`-wide canvas.
    pub fn for_grid(grid: usize) -> Self {
        let scale = grid as f64 / REFERENCE_RESOLUTION;
        Self { tau_box: (10.0 * scale).ceil(), tau_point: (100.0 * scale).ceil() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTerms {
    pub r_iou: f64,
    pub r_box: f64,
    pub r_point: f64,
    pub r_keyframe: f64,
}

/// All reward components of one trajectory and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_iou: f64,
    pub r_box: f64,
    pub r_point: f64,
    pub r_keyframe: f64,
    pub r_ent: f64,
    pub r_eff: f64,
    pub r_traj: f64,
    pub r_turn: f64,
    pub total: f64,
    /// Set when the residual candidate count was 0 and got clamped to 1.
    #[serde(default)]
    pub clamped: bool,
}

/// Ratio of the target's area at `chosen` to its maximum area over frames.
pub fn keyframe_ratio(areas: &[i64], chosen: usize) -> f64 {
    let max = areas.iter().copied().max().unwrap_or(0);
    if max <= 0 {
        return 0.0;
    }
    areas.get(chosen).map_or(0.0, |&a| a as f64 / max as f64)
}

pub fn trajectory_reward(scene: &Scene, commit: &Commit, thresholds: Thresholds) -> TrajectoryTerms {
    let target = scene.target();
    let zero = TrajectoryTerms { r_iou: 0.0, r_box: 0.0, r_point: 0.0, r_keyframe: 0.0 };
    if !target.present || commit.keyframe >= target.boxes.len() {
        return zero;
    }
    let gt = target.boxes[commit.keyframe];
    let pred = commit.bbox.canonical();

    let r_iou = if pred.area() > 0 && pred.iou(&gt) > 0.5 { 1.0 } else { 0.0 };
    let (pcx, pcy) = pred.center();
    let (gcx, gcy) = gt.center();
    let r_box = if (pcx - gcx).abs() + (pcy - gcy).abs() < thresholds.tau_box { 1.0 } else { 0.0 };
    let (px, py) = commit.point;
    let within = ((px - gcx).powi(2) + (py - gcy).powi(2)).sqrt() <= thresholds.tau_point;
    let r_point = if pred.contains_point(px, py) && within { 1.0 } else { 0.0 };
    let areas: Vec<i64> = target.boxes.iter().map(Rect::area).collect();
    TrajectoryTerms { r_iou, r_box, r_point, r_keyframe: keyframe_ratio(&areas, commit.keyframe) }
}

/// Normalized entropy reduction `(log2 M - log2 N_K) / log2 M`.
pub fn entropy_reward(m: usize, n_k: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Precondition(format!(
            "entropy reward needs M >= 2 (initial entropy must be positive), got M = {m}"
        )));
    }
    if n_k == 0 {
        return Err(Error::Precondition("entropy reward needs N_K >= 1".into()));
    }
    let h0 = (m as f64).log2();
    let hk = (n_k as f64).log2();
    Ok((h0 - hk) / h0)
}

/// Fraction of questions that strictly shrank the candidate set. `K = 0` scores 1.
pub fn efficiency_reward(m: usize, trace: &[usize]) -> f64 {
    if trace.is_empty() {
        return 1.0;
    }
    let mut prev = m;
    let mut effective = 0usize;
    for &n in trace {
        if n < prev {
            effective += 1;
        }
        prev = n;
    }
    effective as f64 / trace.len() as f64
}

pub fn total_reward(terms: TrajectoryTerms, r_ent: f64, r_eff: f64, alpha: f64) -> RewardBreakdown {
    let r_traj = terms.r_iou + terms.r_box + terms.r_point + terms.r_keyframe;
    let r_turn = r_ent + r_eff;
    RewardBreakdown {
        r_iou: terms.r_iou,
        r_box: terms.r_box,
        r_point: terms.r_point,
        r_keyframe: terms.r_keyframe,
        r_ent,
        r_eff,
        r_traj,
        r_turn,
        total: r_traj + alpha * r_turn,
        clamped: false,
    }
}

/// Reward settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha: f64,
    pub thresholds: Thresholds,
}

impl RewardConfig {
    pub fn for_grid(grid: usize, alpha: f64) -> Self {
        Self { alpha, thresholds: Thresholds::for_grid(grid) }
    }
}

/// Scores an episode given its commit and candidate trace.
pub fn score(scene: &Scene, commit: &Commit, trace: &[usize], cfg: &RewardConfig) -> Result<RewardBreakdown> {
    let m = scene.initial_candidate_count();
    let n_k = trace.last().copied().unwrap_or(m);
    let clamped = n_k == 0;
    let r_ent = entropy_reward(m, n_k.max(1))?;
    let r_eff = efficiency_reward(m, trace);
    let terms = trajectory_reward(scene, commit, cfg.thresholds);
    let mut out = total_reward(terms, r_ent, r_eff, cfg.alpha);
    out.clamped = clamped;
    if clamped {
        tracing::debug!(seed = scene.seed, "residual candidate count 0 clamped to 1");
    }
    Ok(out)
}

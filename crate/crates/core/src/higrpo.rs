//! Hierarchical group-relative policy optimization.
//!
//! Per step: roll out a group of `G` trajectories per scene, score them, standardize
//! `R_traj + alpha * R_turn` within the group, and modulate every token's
//! advantage by the clipped self-teacher factor
//!
//! ```text
//! A~[i,t] = A[i] * ((1 - lambda) + lambda * clip(f[i,t]^sign(A[i]), 1 - eps_f, 1 + eps_f))
//! ```
//!
//! before one gradient-ascent step on the clipped surrogate. With `lambda = 0`
//! and `alpha = 0` this is trajectory-reward GRPO.

use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{expert_guidance, run_episode, CandidateTrace, DialogueTurn, SampledPolicy, SimulatorConfig};
use crate::error::{Error, Result};
use crate::policy::{gradient, save_checkpoint, sequence_logprobs, EvalPoint, Phase, PolicyParams, PrivilegedContext, View};
use crate::rewards::{score, Commit, RewardBreakdown, RewardConfig};
use crate::scene::{generate_scene, DifficultyTier, Scene, WorldConfig};
use crate::seeding;

/// One emitted token with its phase and sampling log-probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token: usize,
    pub phase: Phase,
    pub logprob: f64,
}

/// A sampled episode and everything computed about it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub scene_seed: u64,
    pub tokens: Vec<TokenRecord>,
    pub turns: Vec<DialogueTurn>,
    pub trace: CandidateTrace,
    pub commit: Commit,
    pub rewards: Option<RewardBreakdown>,
    /// Self-teacher factors, one per token (empty until computed).
    pub factors: Vec<f64>,
    /// Hierarchical advantages, one per token (empty until computed).
    pub advantages: Vec<f64>,
}

impl Trajectory {
    pub fn ask_count(&self) -> usize {
        self.turns.len()
    }

    pub fn old_logprobs(&self) -> Vec<f64> {
        self.tokens.iter().map(|t| t.logprob).collect()
    }
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiGrpoConfig {
    pub group_size: usize,
    pub alpha: f64,
    /// Surrogate ratio clip.
    pub clip_eps: f64,
    /// Token-factor clip.
    pub factor_clip: f64,
    pub lambda0: f64,
    pub sync_interval: u64,
    pub max_turns: usize,
    pub learning_rate: f64,
    pub total_steps: u64,
    pub seed: u64,
    /// Scenes sampled per optimization step, each with its own group.
    pub scenes_per_step: usize,
    pub checkpoint_every: u64,
}

impl Default for HiGrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            alpha: 0.5,
            clip_eps: 0.2,
            factor_clip: 0.2,
            lambda0: 0.5,
            sync_interval: 10,
            max_turns: 5,
            learning_rate: 1.0,
            total_steps: 100,
            seed: 0,
            scenes_per_step: 4,
            checkpoint_every: 10,
        }
    }
}

impl HiGrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.group_size < 2 {
            return bad(format!("group_size must be at least 2, got {}", self.group_size));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps));
        }
        if !(self.factor_clip > 0.0 && self.factor_clip < 1.0) {
            return bad(format!("factor_clip must lie in (0, 1), got {}", self.factor_clip));
        }
        if !(0.0..=1.0).contains(&self.lambda0) {
            return bad(format!("lambda0 must lie in [0, 1], got {}", self.lambda0));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.total_steps == 0 || self.sync_interval == 0 || self.scenes_per_step == 0 {
            return bad("total_steps, sync_interval and scenes_per_step must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Linearly decayed mixing coefficient.
    pub fn lambda_at(&self, step: u64) -> f64 {
        let frac = step.min(self.total_steps) as f64 / self.total_steps as f64;
        (self.lambda0 * (1.0 - frac)).max(0.0)
    }
}

/// Sequence-level and token-level advantages of one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBatch {
    pub sequence: Vec<f64>,
    pub tokens: Vec<Vec<f64>>,
    pub mean: f64,
    pub std: f64,
    pub signs: Vec<f64>,
}

/// Group mean and population standard deviation.
pub fn group_stats(rewards: &[f64]) -> (f64, f64) {
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g;
    (mean, var.sqrt())
}

/// `(R_i - mean) / std` with the population std; all zeros for a zero-variance group.
pub fn sequence_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::Config(format!("a group needs at least 2 trajectories, got {}", rewards.len())));
    }
    let (mean, std) = group_stats(rewards);
    if std == 0.0 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// `f_t = pi(y_t | x, r, y_<t) / pi(y_t | x, y_<t)`, both on the frozen snapshot.
pub fn token_factors(
    snapshot: &PolicyParams,
    scene: &Scene,
    traj: &Trajectory,
    guidance: &PrivilegedContext,
) -> Result<Vec<f64>> {
    let teacher = sequence_logprobs(snapshot, scene, traj, View::Teacher(guidance))?;
    let student = sequence_logprobs(snapshot, scene, traj, View::Student)?;
    let f: Vec<f64> = teacher.iter().zip(&student).map(|(t, s)| (t - s).exp()).collect();
    if let Some(t) = f.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite token factor at token {t} of scene {}", scene.seed)));
    }
    Ok(f)
}

/// Direction indicator: +1 for a positive advantage, -1 otherwise.
pub fn direction(a: f64) -> f64 {
    if a > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-token hierarchical advantages of one trajectory.
pub fn hierarchical_advantages(a: f64, factors: &[f64], lambda: f64, factor_clip: f64) -> Vec<f64> {
    if a == 0.0 {
        return vec![0.0; factors.len()];
    }
    let s = direction(a);
    factors
        .iter()
        .map(|&f| {
            let directed = if s > 0.0 { f } else { 1.0 / f };
            let clipped = directed.clamp(1.0 - factor_clip, 1.0 + factor_clip);
            a * ((1.0 - lambda) + lambda * clipped)
        })
        .collect()
}

/// Assembles the advantage batch of a scored group.
pub fn group_advantages(
    totals: &[f64],
    factors: &[Vec<f64>],
    lambda: f64,
    factor_clip: f64,
) -> Result<AdvantageBatch> {
    let sequence = sequence_advantages(totals)?;
    let (mean, std) = group_stats(totals);
    let tokens = sequence
        .iter()
        .zip(factors)
        .map(|(&a, f)| hierarchical_advantages(a, f, lambda, factor_clip))
        .collect();
    let signs = sequence.iter().map(|&a| direction(a)).collect();
    Ok(AdvantageBatch { sequence, tokens, mean, std, signs })
}

/// Clipped surrogate and its derivative with respect to each current log-probability.
///
/// `current`, `old` and `advantages` are per trajectory; every trajectory is
/// weighted `1 / (n_traj * |y_i|)`.
pub fn surrogate_terms(
    current: &[Vec<f64>],
    old: &[Vec<f64>],
    advantages: &[Vec<f64>],
    clip_eps: f64,
) -> Result<(f64, Vec<f64>)> {
    if current.len() != old.len() || current.len() != advantages.len() {
        return Err(Error::Integrity("surrogate inputs cover different trajectory counts".into()));
    }
    let n = current.len() as f64;
    let mut value = 0.0;
    let mut adjoints = Vec::new();
    for ((cur, old), adv) in current.iter().zip(old).zip(advantages) {
        if cur.len() != old.len() || cur.len() != adv.len() {
            return Err(Error::Integrity(format!(
                "token count mismatch: {} log-probs, {} old log-probs, {} advantages",
                cur.len(),
                old.len(),
                adv.len()
            )));
        }
        let len = cur.len() as f64;
        let mut sum = 0.0;
        for ((&lp, &lo), &a) in cur.iter().zip(old).zip(adv) {
            let rho = (lp - lo).exp();
            let unclipped = rho * a;
            let clipped = rho.clamp(1.0 - clip_eps, 1.0 + clip_eps) * a;
            if unclipped <= clipped {
                sum += unclipped;
                adjoints.push(rho * a / (n * len));
            } else {
                sum += clipped;
                adjoints.push(0.0);
            }
        }
        value += sum / len / n;
    }
    Ok((value, adjoints))
}

/// Surrogate objective of `trajs` (each paired with its scene) and its gradient.
pub fn surrogate_loss(
    params: &PolicyParams,
    batch: &[(&Scene, &Trajectory)],
    clip_eps: f64,
) -> Result<(f64, Vec<f64>)> {
    let layout = params.spec.layout();
    let mut points: Vec<EvalPoint> = Vec::new();
    let mut old = Vec::with_capacity(batch.len());
    let mut adv = Vec::with_capacity(batch.len());
    let mut lens = Vec::with_capacity(batch.len());
    for (scene, traj) in batch {
        if traj.advantages.len() != traj.tokens.len() {
            return Err(Error::Integrity(format!(
                "trajectory of scene {} has {} advantages for {} tokens",
                traj.scene_seed,
                traj.advantages.len(),
                traj.tokens.len()
            )));
        }
        points.extend(crate::dialogue::replay(&layout, scene, traj, None)?);
        old.push(traj.old_logprobs());
        adv.push(traj.advantages.clone());
        lens.push(traj.tokens.len());
    }
    let mut failure = None;
    let result = gradient(params, &points, |lps| {
        let mut current = Vec::with_capacity(lens.len());
        let mut at = 0;
        for &l in &lens {
            current.push(lps[at..at + l].to_vec());
            at += l;
        }
        match surrogate_terms(&current, &old, &adv, clip_eps) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                (0.0, vec![0.0; lps.len()])
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    result
}

/// Where training scenes come from.
#[derive(Clone, Debug)]
pub enum ScenarioSource {
    Pack(Vec<Scene>),
    Generator { world: WorldConfig, tiers: Vec<DifficultyTier> },
}

impl ScenarioSource {
    /// The `slot`-th scene of step `step`.
    pub fn scene_for(&self, seed: u64, step: u64, slot: usize) -> Result<Scene> {
        let mut rng: ChaCha8Rng = seeding::rng(&[seeding::TAG_TRAIN_SCENE, seed, step, slot as u64]);
        match self {
            ScenarioSource::Pack(scenes) => {
                if scenes.is_empty() {
                    return Err(Error::Data("scenario pack is empty".into()));
                }
                Ok(scenes[rng.gen_range(0..scenes.len())].clone())
            }
            ScenarioSource::Generator { world, tiers } => {
                if tiers.is_empty() {
                    return Err(Error::Config("no training tiers configured".into()));
                }
                let tier = tiers[rng.gen_range(0..tiers.len())];
                generate_scene(world, tier, rng.gen())
            }
        }
    }
}

/// Random stream of rollout `i` of scene `slot` at `step`.
pub fn rollout_rng(seed: u64, step: u64, slot: usize, i: usize) -> ChaCha8Rng {
    seeding::rng(&[seeding::TAG_ROLLOUT, seed, step, slot as u64, i as u64])
}

/// Per-step training dynamics (one CSV row).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub lambda: f64,
    pub mean_r_iou: f64,
    pub mean_r_box: f64,
    pub mean_r_point: f64,
    pub mean_r_keyframe: f64,
    pub mean_r_ent: f64,
    pub mean_r_eff: f64,
    pub mean_total: f64,
    pub mean_turns: f64,
    pub success_rate: f64,
    pub mean_tokens_correct: f64,
    pub mean_tokens_wrong: f64,
}

impl StepLog {
    fn from_group(step: u64, lambda: f64, trajs: &[Trajectory]) -> Self {
        let n = trajs.len() as f64;
        let r = |f: fn(&RewardBreakdown) -> f64| {
            trajs.iter().map(|t| t.rewards.as_ref().map_or(0.0, f)).sum::<f64>() / n
        };
        let success = |t: &Trajectory| t.rewards.is_some_and(|r| r.r_iou == 1.0);
        let mean_len = |want: bool| {
            let lens: Vec<f64> =
                trajs.iter().filter(|t| success(t) == want).map(|t| t.tokens.len() as f64).collect();
            if lens.is_empty() {
                0.0
            } else {
                lens.iter().sum::<f64>() / lens.len() as f64
            }
        };
        StepLog {
            step,
            lambda,
            mean_r_iou: r(|b| b.r_iou),
            mean_r_box: r(|b| b.r_box),
            mean_r_point: r(|b| b.r_point),
            mean_r_keyframe: r(|b| b.r_keyframe),
            mean_r_ent: r(|b| b.r_ent),
            mean_r_eff: r(|b| b.r_eff),
            mean_total: r(|b| b.total),
            mean_turns: trajs.iter().map(|t| t.ask_count() as f64).sum::<f64>() / n,
            success_rate: trajs.iter().filter(|t| success(t)).count() as f64 / n,
            mean_tokens_correct: mean_len(true),
            mean_tokens_wrong: mean_len(false),
        }
    }
}

/// Output destinations of a training run.
#[derive(Default)]
pub struct TrainSinks {
    pub csv: Option<csv::Writer<Box<dyn Write + Send>>>,
    pub checkpoint_dir: Option<PathBuf>,
}

/// Final parameters and the per-step log.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: PolicyParams,
    pub logs: Vec<StepLog>,
}

/// One scored, advantage-annotated group.
#[derive(Clone, Debug)]
pub struct Group {
    pub scene: Scene,
    pub trajectories: Vec<Trajectory>,
    pub advantages: AdvantageBatch,
}

/// Rolls out and scores one group; fills factors and hierarchical advantages.
pub fn collect_group(
    cfg: &HiGrpoConfig,
    params: &PolicyParams,
    teacher: &PolicyParams,
    scene: Scene,
    sim: &SimulatorConfig,
    step: u64,
    slot: usize,
    lambda: f64,
) -> Result<Group> {
    let rewards = RewardConfig::for_grid(scene.grid, cfg.alpha);
    let mut trajs: Vec<Trajectory> = (0..cfg.group_size)
        .into_par_iter()
        .map(|i| {
            let mut policy = SampledPolicy { params, rng: rollout_rng(cfg.seed, step, slot, i) };
            let mut t = run_episode(&scene, &mut policy, sim, cfg.max_turns)?;
            t.rewards = Some(score(&scene, &t.commit, &t.trace.counts, &rewards)?);
            let guidance = expert_guidance(&scene, &t);
            t.factors = token_factors(teacher, &scene, &t, &guidance)?;
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let totals: Vec<f64> = trajs.iter().map(|t| t.rewards.expect("scored").total).collect();
    let factors: Vec<Vec<f64>> = trajs.iter().map(|t| t.factors.clone()).collect();
    let advantages = group_advantages(&totals, &factors, lambda, cfg.factor_clip)?;
    for (t, a) in trajs.iter_mut().zip(&advantages.tokens) {
        t.advantages = a.clone();
    }
    Ok(Group { scene, trajectories: trajs, advantages })
}

/// Runs the training loop from `init.step` to `cfg.total_steps`.
///
/// The teacher snapshot starts as a copy of `init`, so a run resumed on a
/// sync boundary continues bit-identically.
pub fn train(
    cfg: &HiGrpoConfig,
    init: PolicyParams,
    source: &ScenarioSource,
    sim: &SimulatorConfig,
    sinks: &mut TrainSinks,
) -> Result<TrainResult> {
    cfg.validate()?;
    if init.spec.max_turns != cfg.max_turns {
        return Err(Error::Config(format!(
            "policy was built for max_turns {} but training uses {}",
            init.spec.max_turns, cfg.max_turns
        )));
    }
    let mut params = init;
    params.round_to_f32();
    let mut teacher = params.clone();
    let mut logs = Vec::new();
    let start = params.step;

    for step in start..cfg.total_steps {
        let lambda = cfg.lambda_at(step);
        if step % cfg.sync_interval == 0 {
            teacher = params.clone();
        }
        let mut groups = Vec::with_capacity(cfg.scenes_per_step);
        for slot in 0..cfg.scenes_per_step {
            let scene = source.scene_for(cfg.seed, step, slot)?;
            groups.push(collect_group(cfg, &params, &teacher, scene, sim, step, slot, lambda)?);
        }

        let batch: Vec<(&Scene, &Trajectory)> =
            groups.iter().flat_map(|g| g.trajectories.iter().map(move |t| (&g.scene, t))).collect();
        let (objective, grad) = surrogate_loss(&params, &batch, cfg.clip_eps).map_err(|e| match e {
            Error::Numerical(msg) => Error::Numerical(format!("step {step}: {msg}; {}", dump_groups(&groups))),
            other => other,
        })?;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!("step {step}: non-finite objective; {}", dump_groups(&groups))));
        }
        for (w, g) in params.weights.iter_mut().zip(&grad) {
            *w += cfg.learning_rate * g;
        }
        params.round_to_f32();
        params.step = step + 1;

        let all: Vec<Trajectory> = groups.iter().flat_map(|g| g.trajectories.iter().cloned()).collect();
        let row = StepLog::from_group(step, lambda, &all);
        if let Some(w) = sinks.csv.as_mut() {
            w.serialize(&row)?;
            w.flush()?;
        }
        logs.push(row);

        if let Some(dir) = &sinks.checkpoint_dir {
            let last = params.step == cfg.total_steps;
            if last || params.step.is_multiple_of(cfg.checkpoint_every.max(1)) {
                save_checkpoint(&params, cfg.lambda_at(params.step), dir, &format!("step_{:05}", params.step))?;
                save_checkpoint(&params, cfg.lambda_at(params.step), dir, "latest")?;
            }
        }
        tracing::debug!(step, lambda, objective, mean_total = logs.last().map(|l| l.mean_total), "step");
    }
    Ok(TrainResult { params, logs })
}

fn dump_groups(groups: &[Group]) -> String {
    let rows: Vec<serde_json::Value> = groups
        .iter()
        .map(|g| {
            serde_json::json!({
                "scene_seed": g.scene.seed,
                "totals": g.trajectories.iter().map(|t| t.rewards.map(|r| r.total)).collect::<Vec<_>>(),
                "sequence_advantages": g.advantages.sequence,
                "factors": g.trajectories.iter().map(|t| t.factors.clone()).collect::<Vec<_>>(),
            })
        })
        .collect();
    format!("offending groups: {}", serde_json::Value::Array(rows))
}

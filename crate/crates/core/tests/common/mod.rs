//! Checks shared by the integration tests and the acceptance target. Each
//! `criterion_*` function returns a short detail line on success.
#![allow(dead_code)]

use std::path::Path;
use std::process::Command;

use clarify::dialogue::{replay, run_episode, ActionPolicy, FnPolicy, SampledPolicy, SimulatorConfig};
use clarify::evalkit::{contour_accuracy_f, default_tolerance, evaluate, region_similarity_j, EvalOptions, Mask, MaskSequence};
use clarify::higrpo::{
    collect_group, hierarchical_advantages, rollout_rng, sequence_advantages, surrogate_loss, train, HiGrpoConfig,
    ScenarioSource, TrainSinks, Trajectory,
};
use clarify::policy::{gradient, DecodeState, EvalPoint, Phase, PolicyParams, PolicySpec, Vocabulary};
use clarify::rewards::{efficiency_reward, entropy_reward, keyframe_ratio, trajectory_reward, Thresholds};
use clarify::scene::{generate_scene, AttributeSchema, DifficultyTier, Rect, Scene, WorldConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: got {got}, want {want} (tol {tol:e})"))
    }
}

// ---------------------------------------------------------------- rewards

pub fn criterion_1() -> Check {
    let t0 = std::time::Instant::now();
    let e = |m, n| entropy_reward(m, n).map_err(|e| e.to_string());
    close("entropy(4,1)", e(4, 1)?, 1.0, 1e-12)?;
    close("entropy(4,4)", e(4, 4)?, 0.0, 1e-12)?;
    close("entropy(4,2)", e(4, 2)?, 0.5, 1e-12)?;
    close("efficiency(4,[3,3,1])", efficiency_reward(4, &[3, 3, 1]), 2.0 / 3.0, 1e-12)?;
    close("keyframe([50,100,80],0)", keyframe_ratio(&[50, 100, 80], 0), 0.5, 1e-12)?;
    let secs = t0.elapsed().as_secs_f64();
    if secs >= 1.0 {
        return Err(format!("took {secs:.3}s"));
    }
    Ok(format!("5 values exact, {secs:.4}s"))
}

// ---------------------------------------------------------------- advantages

pub fn criterion_2() -> Check {
    let a = sequence_advantages(&[2.5, 1.0, 1.0, 3.5]).map_err(|e| e.to_string())?;
    // mean 2, population variance 9/8, so A = d * sqrt(8/9) for deviations d.
    let root2 = 2.0f64.sqrt();
    let want = [root2 / 3.0, -2.0 * root2 / 3.0, -2.0 * root2 / 3.0, root2];
    for (i, (g, w)) in a.iter().zip(want).enumerate() {
        close(&format!("A[{i}]"), *g, w, 1e-9)?;
    }
    let pos = hierarchical_advantages(1.0, &[1.5], 0.5, 0.2);
    let neg = hierarchical_advantages(-1.0, &[1.5], 0.5, 0.2);
    close("token advantage (A=+1)", pos[0], 1.1, 1e-12)?;
    close("token advantage (A=-1)", neg[0], -0.9, 1e-12)?;
    Ok(format!("A = {a:.6?}; token advantages {:.3} / {:.3}", pos[0], neg[0]))
}

// ---------------------------------------------------------------- gradient

/// A small world so the reduced policy stays cheap to difference.
pub fn reduced_world() -> WorldConfig {
    WorldConfig { schema: AttributeSchema::new(&[("color", 2), ("shape", 2)]), frames: 2, grid: 16, max_objects: 3 }
}

/// Largest relative error between the analytic surrogate gradient and central
/// differences over every parameter. Pairs where both sides are below
/// `floor` in magnitude are compared against `floor` instead.
pub fn gradient_check(seed: u64, floor: f64) -> Result<(f64, usize), String> {
    let world = reduced_world();
    let spec = PolicySpec::new(world.clone(), 3, 8);
    let params = PolicyParams::init(spec, seed);
    let tier = if seed.is_multiple_of(2) { DifficultyTier::Simple } else { DifficultyTier::Medium };
    let cfg = HiGrpoConfig { max_turns: 3, seed, ..Default::default() };
    // Sample the group from a perturbed copy so ratios differ from one.
    let mut behaviour = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in &mut behaviour.weights {
        *w += rng.gen_range(-0.02..0.02);
    }
    let mut group = None;
    for attempt in 0..32u64 {
        let scene = generate_scene(&world, tier, seed * 1000 + attempt).map_err(|e| e.to_string())?;
        let g = collect_group(&cfg, &behaviour, &params, scene, &SimulatorConfig::truthful(), attempt, 0, 0.5)
            .map_err(|e| e.to_string())?;
        if g.advantages.sequence.iter().any(|a| *a != 0.0) {
            group = Some(g);
            break;
        }
    }
    let group = group.ok_or("no non-degenerate group found")?;
    let batch: Vec<(&Scene, &Trajectory)> = group.trajectories.iter().map(|t| (&group.scene, t)).collect();
    let eps = cfg.clip_eps;
    let (_, analytic) = surrogate_loss(&params, &batch, eps).map_err(|e| e.to_string())?;
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    let mut probe = params.clone();
    for j in 0..params.weights.len() {
        let w = params.weights[j];
        probe.weights[j] = w + h;
        let up = surrogate_loss(&probe, &batch, eps).map_err(|e| e.to_string())?.0;
        probe.weights[j] = w - h;
        let down = surrogate_loss(&probe, &batch, eps).map_err(|e| e.to_string())?.0;
        probe.weights[j] = w;
        let fd = (up - down) / (2.0 * h);
        let scale = analytic[j].abs().max(fd.abs()).max(floor);
        worst = worst.max((analytic[j] - fd).abs() / scale);
    }
    Ok((worst, params.weights.len()))
}

pub const GRADIENT_FLOOR: f64 = 1e-6;

pub fn criterion_3() -> Check {
    let t0 = std::time::Instant::now();
    let mut lines = Vec::new();
    for seed in 0..5 {
        let (err, n) = gradient_check(seed, GRADIENT_FLOOR)?;
        if err.is_nan() || err >= 1e-4 {
            return Err(format!("seed {seed}: max relative error {err:e} over {n} parameters"));
        }
        lines.push(format!("{err:.1e}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!("max relative errors {} ({secs:.1}s)", lines.join(", ")))
}

// ---------------------------------------------------------------- reduction

/// Plain trajectory-only GRPO written against the public building blocks:
/// rollouts, localization reward, standardization, clipped surrogate adjoints,
/// one gradient-ascent step, `f32` rounding.
pub fn reference_grpo(cfg: &HiGrpoConfig, init: &PolicyParams, source: &ScenarioSource) -> PolicyParams {
    let sim = SimulatorConfig::truthful();
    let mut params = init.clone();
    for w in &mut params.weights {
        *w = *w as f32 as f64;
    }
    let layout = params.spec.layout();
    for step in 0..cfg.total_steps {
        let mut rollouts: Vec<(Scene, Trajectory, f64)> = Vec::new();
        for slot in 0..cfg.scenes_per_step {
            let scene = source.scene_for(cfg.seed, step, slot).unwrap();
            let thresholds = Thresholds::for_grid(scene.grid);
            let trajs: Vec<Trajectory> = (0..cfg.group_size)
                .map(|i| {
                    let mut pol = SampledPolicy { params: &params, rng: rollout_rng(cfg.seed, step, slot, i) };
                    run_episode(&scene, &mut pol, &sim, cfg.max_turns).unwrap()
                })
                .collect();
            let rewards: Vec<f64> = trajs
                .iter()
                .map(|t| {
                    let r = trajectory_reward(&scene, &t.commit, thresholds);
                    r.r_iou + r.r_box + r.r_point + r.r_keyframe
                })
                .collect();
            let g = rewards.len() as f64;
            let mean = rewards.iter().sum::<f64>() / g;
            let std = (rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g).sqrt();
            for (t, r) in trajs.into_iter().zip(rewards) {
                let a = if std == 0.0 { 0.0 } else { (r - mean) / std };
                rollouts.push((scene.clone(), t, a));
            }
        }
        let n = rollouts.len() as f64;
        let mut points: Vec<EvalPoint> = Vec::new();
        let mut adjoints = Vec::new();
        for (scene, traj, a) in &rollouts {
            let pts = replay(&layout, scene, traj, None).unwrap();
            let len = traj.tokens.len() as f64;
            for ((obs, tok), rec) in pts.iter().zip(&traj.tokens) {
                let lp = params.logprobs(obs).unwrap()[*tok];
                let ratio = (lp - rec.logprob).exp();
                let inside = ratio >= 1.0 - cfg.clip_eps && ratio <= 1.0 + cfg.clip_eps;
                let keep = inside || (ratio > 1.0 + cfg.clip_eps && *a < 0.0) || (ratio < 1.0 - cfg.clip_eps && *a > 0.0);
                adjoints.push(if keep { ratio * a / (n * len) } else { 0.0 });
            }
            points.extend(pts);
        }
        let (_, grad) = gradient(&params, &points, |_| (0.0, adjoints.clone())).unwrap();
        for (w, g) in params.weights.iter_mut().zip(&grad) {
            *w = (*w + cfg.learning_rate * g) as f32 as f64;
        }
        params.step = step + 1;
    }
    params
}

pub fn reduction_setup(seed: u64) -> (HiGrpoConfig, PolicyParams, ScenarioSource) {
    let world = WorldConfig::default();
    let cfg = HiGrpoConfig { lambda0: 0.0, alpha: 0.0, total_steps: 20, seed, ..Default::default() };
    let init = PolicyParams::init(PolicySpec::new(world.clone(), cfg.max_turns, 16), seed);
    let source = ScenarioSource::Generator { world, tiers: DifficultyTier::ALL.to_vec() };
    (cfg, init, source)
}

pub fn criterion_4() -> Check {
    let (cfg, init, source) = reduction_setup(7);
    let ours = train(&cfg, init.clone(), &source, &SimulatorConfig::truthful(), &mut TrainSinks::default())
        .map_err(|e| e.to_string())?
        .params;
    let reference = reference_grpo(&cfg, &init, &source);
    let differing = ours.weights.iter().zip(&reference.weights).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    let moved = ours.weights.iter().zip(&init.weights).filter(|(a, b)| a.to_bits() != b.to_bits()).count();
    if differing != 0 {
        return Err(format!("{differing} of {} weights differ", ours.weights.len()));
    }
    if moved == 0 {
        return Err("training did not change any weight".into());
    }
    Ok(format!("{} weights bit-identical after 20 steps ({moved} moved)", ours.weights.len()))
}

// ---------------------------------------------------------------- invariants

pub const PROPERTY_CASES: u32 = 10_000;

fn runner() -> TestRunner {
    TestRunner::new(RunnerConfig { cases: PROPERTY_CASES, failure_persistence: None, ..RunnerConfig::default() })
}

fn run<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner().run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

/// Initial candidate count and a non-increasing trace of up to five counts.
pub fn trace_strategy() -> impl Strategy<Value = (usize, Vec<usize>)> {
    (2usize..=8).prop_flat_map(|m| {
        (Just(m), proptest::collection::vec(0usize..=m, 0..=5)).prop_map(|(m, steps)| {
            let mut cur = m;
            let trace = steps
                .into_iter()
                .map(|drop| {
                    cur = cur.saturating_sub(drop % (cur + 1)).max(1);
                    cur
                })
                .collect();
            (m, trace)
        })
    })
}

pub fn prop_turn_rewards_bounded() -> Result<(), String> {
    run("turn rewards", trace_strategy(), |(m, trace)| {
        let n_k = trace.last().copied().unwrap_or(m);
        let ent = entropy_reward(m, n_k).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let eff = efficiency_reward(m, &trace);
        prop_assert!((0.0..=1.0).contains(&ent), "r_ent = {ent}");
        prop_assert!((0.0..=1.0).contains(&eff), "r_eff = {eff}");
        Ok(())
    })
}

pub fn prop_token_factor_bounds() -> Result<(), String> {
    let strategy = (
        prop_oneof![-5.0f64..-1e-6, 1e-6f64..5.0],
        -6.0f64..6.0,
        0.0f64..=0.5,
        0.01f64..0.5,
    );
    run("token factor", strategy, |(a, log_f, lambda, clip)| {
        let adv = hierarchical_advantages(a, &[log_f.exp()], lambda, clip)[0];
        let factor = adv / a;
        let slack = 1e-12;
        prop_assert!(factor >= 1.0 - lambda * clip - slack && factor <= 1.0 + lambda * clip + slack, "factor {factor}");
        prop_assert_eq!(adv.signum(), a.signum());
        Ok(())
    })
}

pub fn prop_standardization() -> Result<(), String> {
    let strategy = proptest::collection::vec(-10.0f64..10.0, 2..32);
    run("standardization", strategy, |rewards| {
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let spread = rewards.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
        prop_assume!(spread > 1e-6);
        let a = sequence_advantages(&rewards).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let n = a.len() as f64;
        let m = a.iter().sum::<f64>() / n;
        let v = a.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
        prop_assert!(m.abs() < 1e-9, "mean {m}");
        prop_assert!((v - 1.0).abs() < 1e-9, "variance {v}");
        Ok(())
    })
}

/// Asks with probability `ask_rate` whenever asking is legal, otherwise picks
/// uniformly among legal tokens.
pub fn random_policy(seed: u64, ask_rate: f64) -> impl ActionPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FnPolicy(move |scene: &Scene, state: &DecodeState| {
        let vocab = Vocabulary { attributes: scene.schema.len(), frames: scene.frames, grid: scene.grid };
        let legal = vocab.legal_range(state.phase, state.at_turn_cap());
        let tok = if state.phase == Phase::Dialogue && !state.at_turn_cap() && rng.gen_bool(ask_rate) {
            vocab.ask(rng.gen_range(0..scene.schema.len()))
        } else {
            rng.gen_range(legal)
        };
        Ok((tok, 0.0))
    })
}

pub fn prop_episode_bounds() -> Result<(), String> {
    let world = WorldConfig::default();
    let strategy = (any::<u64>(), 0usize..3, 0.0f64..=1.0);
    run("episodes", strategy, |(seed, tier, ask_rate)| {
        let scene = generate_scene(&world, DifficultyTier::ALL[tier], seed).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let t = run_episode(&scene, &mut random_policy(seed, ask_rate), &SimulatorConfig::truthful(), 5)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(t.ask_count() <= 5, "{} asks", t.ask_count());
        prop_assert!(t.trace.is_non_increasing(scene.initial_candidate_count()), "trace {:?}", t.trace.counts);
        prop_assert!(t.trace.counts.iter().all(|&n| n >= 1), "truthful answers never empty the set");
        Ok(())
    })
}

pub fn criterion_5() -> Check {
    prop_turn_rewards_bounded()?;
    prop_token_factor_bounds()?;
    prop_standardization()?;
    prop_episode_bounds()?;
    Ok(format!("4 properties x {PROPERTY_CASES} cases"))
}

// ---------------------------------------------------------------- oracles

pub fn pixel_mask(grid: usize, r: &Rect) -> Vec<bool> {
    let mut m = vec![false; grid * grid];
    for y in r.y1.max(0)..r.y2.min(grid as i32) {
        for x in r.x1.max(0)..r.x2.min(grid as i32) {
            m[y as usize * grid + x as usize] = true;
        }
    }
    m
}

pub fn random_rect(rng: &mut ChaCha8Rng, grid: i32) -> Rect {
    let (a, b) = (rng.gen_range(0..grid), rng.gen_range(0..grid));
    let (c, d) = (rng.gen_range(0..grid), rng.gen_range(0..grid));
    Rect::new(a.min(b), c.min(d), a.max(b) + 1, c.max(d) + 1)
}

pub fn iou_oracle(pairs: usize, seed: u64) -> Result<(), String> {
    let grid = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..pairs {
        let (p, q) = (random_rect(&mut rng, grid as i32), random_rect(&mut rng, grid as i32));
        let (mp, mq) = (pixel_mask(grid, &p), pixel_mask(grid, &q));
        let inter = mp.iter().zip(&mq).filter(|(a, b)| **a && **b).count() as i64;
        let union = mp.iter().zip(&mq).filter(|(a, b)| **a || **b).count() as i64;
        if p.intersection_area(&q) != inter || p.union_area(&q) != union {
            return Err(format!("pair {i} {p:?} {q:?}: closed form {}/{} vs pixels {inter}/{union}",
                p.intersection_area(&q), p.union_area(&q)));
        }
        if p.iou(&q) != inter as f64 / union as f64 {
            return Err(format!("pair {i}: IoU {} vs {}", p.iou(&q), inter as f64 / union as f64));
        }
    }
    Ok(())
}

pub fn candidate_oracle(dialogues: usize, seed: u64) -> Result<(), String> {
    let world = WorldConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..dialogues {
        let tier = DifficultyTier::ALL[i % 3];
        let scene = generate_scene(&world, tier, rng.gen()).map_err(|e| e.to_string())?;
        let sim = SimulatorConfig { noise_rate: [0.0, 0.3][i % 2], seed: rng.gen() };
        let t = run_episode(&scene, &mut random_policy(rng.gen(), 0.8), &sim, 5).map_err(|e| e.to_string())?;
        for k in 0..t.turns.len() {
            let brute = scene
                .objects
                .iter()
                .filter(|o| o.present)
                .filter(|o| scene.query.iter().enumerate().all(|(a, q)| q.is_none_or(|q| o.attr_values[a] == q)))
                .filter(|o| t.turns[..=k].iter().all(|turn| o.attr_values[turn.asked_attr] == turn.answer_value))
                .count();
            if t.turns[k].n_k != brute || t.trace.counts[k] != brute {
                return Err(format!("dialogue {i} turn {}: incremental {} vs brute force {brute}", k + 1, t.turns[k].n_k));
            }
        }
    }
    Ok(())
}

pub fn random_mask_sequence(rng: &mut ChaCha8Rng, grid: usize, frames: usize) -> (MaskSequence, Vec<Vec<bool>>) {
    let mut masks = Vec::new();
    let mut pixels = Vec::new();
    for _ in 0..frames {
        let density: f64 = rng.gen_range(0.0..=1.0);
        let empty = rng.gen_bool(0.1);
        let mut m = Mask::empty(grid);
        let mut p = vec![false; grid * grid];
        for y in 0..grid {
            for x in 0..grid {
                let on = !empty && rng.gen_bool(density);
                m.set(x, y, on);
                p[y * grid + x] = on;
            }
        }
        masks.push(m);
        pixels.push(p);
    }
    (MaskSequence { masks }, pixels)
}

pub fn j_oracle(cases: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..cases {
        let grid = rng.gen_range(1..=20);
        let frames = rng.gen_range(1..=6);
        let (pred, pp) = random_mask_sequence(&mut rng, grid, frames);
        let (gt, gp) = random_mask_sequence(&mut rng, grid, frames);
        let mut total = 0.0;
        for (a, b) in pp.iter().zip(&gp) {
            let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
            let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
            total += if union == 0 { 1.0 } else { inter as f64 / union as f64 };
        }
        let want = total / frames as f64;
        let got = region_similarity_j(&pred, &gt).map_err(|e| e.to_string())?;
        if got != want {
            return Err(format!("case {i}: J {got} vs pixel oracle {want}"));
        }
    }
    Ok(())
}

pub fn criterion_6() -> Check {
    iou_oracle(1000, 6)?;
    candidate_oracle(1000, 6)?;
    j_oracle(1000, 6)?;
    Ok("1000 IoU pairs, 1000 dialogues, 1000 mask pairs exact".into())
}

// ---------------------------------------------------------------- ablation

pub struct AblationArm {
    pub name: &'static str,
    pub lambda0: f64,
    pub alpha: f64,
}

pub const ARMS: [AblationArm; 3] = [
    AblationArm { name: "trajectory-only", lambda0: 0.0, alpha: 0.0 },
    AblationArm { name: "+turn rewards", lambda0: 0.0, alpha: 0.5 },
    AblationArm { name: "full", lambda0: 0.5, alpha: 0.5 },
];

pub fn simple_eval_pack(n: u64) -> Vec<Scene> {
    let world = WorldConfig::default();
    (0..n).map(|i| generate_scene(&world, DifficultyTier::Simple, 1_000_000 + i).unwrap()).collect()
}

/// Trains one arm for 300 steps on Simple scenes and evaluates it greedily.
pub fn train_arm(arm: &AblationArm, seed: u64) -> clarify::Result<(PolicyParams, f64, f64)> {
    let world = WorldConfig::default();
    let cfg = HiGrpoConfig { lambda0: arm.lambda0, alpha: arm.alpha, total_steps: 300, seed, ..Default::default() };
    let source = ScenarioSource::Generator { world: world.clone(), tiers: vec![DifficultyTier::Simple] };
    let init = PolicyParams::init(PolicySpec::new(world, cfg.max_turns, 64), seed);
    let sim = SimulatorConfig::truthful();
    let params = train(&cfg, init, &source, &sim, &mut TrainSinks::default())?.params;
    let ev = evaluate(&params, &simple_eval_pack(200), &sim, &EvalOptions::default())?;
    Ok((params, ev.report.overall.jf, ev.report.overall.mean_turns))
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn criterion_7() -> Check {
    let t0 = std::time::Instant::now();
    let mut jf = Vec::new();
    let mut turns = Vec::new();
    for arm in &ARMS {
        let mut arm_jf = Vec::new();
        let mut arm_turns = Vec::new();
        for seed in 0..5 {
            let (_, j, k) = train_arm(arm, seed).map_err(|e| e.to_string())?;
            println!("    {:<16} seed {seed}: J&F {j:.3}, turns {k:.2}", arm.name);
            arm_jf.push(j);
            arm_turns.push(k);
        }
        jf.push(median(arm_jf));
        turns.push(median(arm_turns));
    }
    let secs = t0.elapsed().as_secs_f64();
    let detail = format!(
        "median J&F {:.3} / {:.3} / {:.3}, median turns {:.2} / {:.2} / {:.2} ({secs:.0}s)",
        jf[0], jf[1], jf[2], turns[0], turns[1], turns[2]
    );
    let ok = jf[2] >= jf[1] && jf[1] >= jf[0] && jf[2] - jf[0] >= 0.05 && turns[2] <= turns[0] && secs <= 1800.0;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- noise

pub fn criterion_8() -> Check {
    let (params, _, _) = train_arm(&ARMS[2], 0).map_err(|e| e.to_string())?;
    let world = WorldConfig::default();
    let pack = clarify::cli::generate_pack(
        &world,
        &[(DifficultyTier::Simple, 40), (DifficultyTier::Medium, 40), (DifficultyTier::Difficult, 40)],
        11,
    )
    .map_err(|e| e.to_string())?;
    let score = |noise: f64| -> Result<f64, String> {
        let runs = (0..3u64)
            .map(|seed| {
                let sim = SimulatorConfig { noise_rate: noise, seed };
                evaluate(&params, &pack, &sim, &EvalOptions::default()).map(|e| e.report.overall.jf)
            })
            .collect::<clarify::Result<Vec<f64>>>()
            .map_err(|e| e.to_string())?;
        Ok(median(runs))
    };
    let (clean, noisy) = (score(0.0)?, score(0.3)?);
    let detail = format!("median J&F {clean:.3} at noise 0.0, {noisy:.3} at noise 0.3");
    if noisy < clean {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- determinism

pub fn clarify_bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_clarify"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with(clarify::cli::ENV_PREFIX)) {
        cmd.env_remove(k);
    }
    cmd
}

fn run_bin(args: &[&str]) -> Result<(), String> {
    let out = clarify_bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("clarify {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

/// gen, train and eval through the binary under `dir`.
pub fn pipeline(dir: &Path) -> Result<(), String> {
    let p = |s: &str| dir.join(s).display().to_string();
    run_bin(&["gen", "--seed", "5", "--simple", "4", "--medium", "4", "--difficult", "4", "--out", &p("pack.json")])?;
    run_bin(&[
        "train", "--seed", "5", "--set", "hidden=16", "--total-steps", "6", "--pack", &p("pack.json"),
        "--checkpoint-dir", &p("ckpt"), "--log-dir", &p("logs"),
    ])?;
    run_bin(&[
        "eval", "--checkpoint", &p("ckpt/latest.json"), "--pack", &p("pack.json"), "--noise", "0.2",
        "--sim-seed", "3", "--out", &p("eval"),
    ])
}

pub fn criterion_9() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    pipeline(a.path())?;
    pipeline(b.path())?;
    let files = ["pack.json", "logs/train.csv", "ckpt/latest.bin", "eval/report.json", "eval/samples.jsonl"];
    for f in files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        if x != y {
            return Err(format!("{f} differs between runs"));
        }
        if x.is_empty() {
            return Err(format!("{f} is empty"));
        }
    }
    Ok(format!("{} outputs byte-identical", files.len()))
}

// ---------------------------------------------------------------- metrics

pub fn criterion_10() -> Check {
    let grid = 32;
    let boxes = [Rect::new(4, 4, 12, 10), Rect::new(5, 6, 20, 18)];
    let a = MaskSequence::from_boxes(grid, &boxes);
    let tol = default_tolerance(grid);
    let jf = |p: &MaskSequence, g: &MaskSequence, tol: f64| -> Result<(f64, f64, f64), String> {
        let j = region_similarity_j(p, g).map_err(|e| e.to_string())?;
        let f = contour_accuracy_f(p, g, tol).map_err(|e| e.to_string())?;
        Ok((j, f, (j + f) / 2.0))
    };
    let (j, f, m) = jf(&a, &a, tol)?;
    for (n, v) in [("J", j), ("F", f), ("J&F", m)] {
        close(&format!("identical {n}"), v, 1.0, 1e-12)?;
    }
    let far = MaskSequence::from_boxes(grid, &[Rect::new(20, 20, 30, 30), Rect::new(24, 0, 30, 4)]);
    let (j, f, m) = jf(&a, &far, tol)?;
    for (n, v) in [("J", j), ("F", f), ("J&F", m)] {
        close(&format!("disjoint {n}"), v, 0.0, 1e-12)?;
    }
    let shifted = MaskSequence::from_boxes(grid, &boxes.map(|b| Rect::new(b.x1 + 1, b.y1, b.x2 + 1, b.y2)));
    let f = contour_accuracy_f(&shifted, &a, 1.0).map_err(|e| e.to_string())?;
    close("shifted F (tol 1)", f, 1.0, 1e-12)?;
    Ok("identical 1, disjoint 0, one-pixel shift F = 1".into())
}

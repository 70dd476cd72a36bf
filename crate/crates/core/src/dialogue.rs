//! The clarification loop: user simulator, episode driver and expert guidance.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::higrpo::{TokenRecord, Trajectory};
use crate::policy::{DecodeState, EvalPoint, ObsLayout, Phase, PolicyParams, PrivilegedContext, Token, Vocabulary};
use crate::rewards::Commit;
use crate::scene::{candidate_set, Rect, Scene};
use crate::seeding;

/// One ask/answer exchange.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueTurn {
    /// 1-based turn index.
    pub k: usize,
    pub asked_attr: usize,
    pub answer_value: usize,
    /// Candidate count after this answer.
    pub n_k: usize,
}

/// Residual candidate counts `[N_1, ..., N_K]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateTrace {
    pub counts: Vec<usize>,
}

impl CandidateTrace {
    pub fn is_non_increasing(&self, m: usize) -> bool {
        let mut prev = m;
        self.counts.iter().all(|&n| {
            let ok = n <= prev;
            prev = n;
            ok
        })
    }
}

/// Scripted user. `noise_rate` is the probability of a uniformly random wrong answer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulatorConfig {
    pub noise_rate: f64,
    pub seed: u64,
}

impl SimulatorConfig {
    pub fn truthful() -> Self {
        Self::default()
    }
}

/// Answer of the scripted user to a question about `asked_attr` at turn `k`.
pub fn answer_question(scene: &Scene, asked_attr: usize, sim: &SimulatorConfig, k: usize) -> usize {
    let truth = scene.target().attr_values[asked_attr];
    let mut rng: ChaCha8Rng = seeding::rng(&[seeding::TAG_SIMULATOR, scene.seed, sim.seed, k as u64]);
    let u: f64 = rng.gen();
    if u < sim.noise_rate {
        let d = scene.schema.domain(asked_attr);
        let v = rng.gen_range(0..d - 1);
        if v >= truth {
            v + 1
        } else {
            v
        }
    } else {
        truth
    }
}

/// Anything that can answer attribute questions about the target.
pub trait Answerer {
    fn answer(&mut self, scene: &Scene, asked_attr: usize, k: usize) -> Result<usize>;
}

impl Answerer for SimulatorConfig {
    fn answer(&mut self, scene: &Scene, asked_attr: usize, k: usize) -> Result<usize> {
        Ok(answer_question(scene, asked_attr, self, k))
    }
}

/// Replays a fixed list of answers (used to re-run recorded sessions).
pub struct RecordedAnswers(pub std::collections::VecDeque<usize>);

impl Answerer for RecordedAnswers {
    fn answer(&mut self, _scene: &Scene, _asked_attr: usize, k: usize) -> Result<usize> {
        self.0
            .pop_front()
            .ok_or_else(|| Error::Data(format!("recorded transcript has no answer for turn {k}")))
    }
}

/// A decision rule producing one token per step, with its log-probability.
pub trait ActionPolicy {
    fn choose(&mut self, scene: &Scene, state: &DecodeState) -> Result<(usize, f64)>;
}

/// Temperature-1 sampling from the student view.
pub struct SampledPolicy<'a> {
    pub params: &'a PolicyParams,
    pub rng: ChaCha8Rng,
}

impl ActionPolicy for SampledPolicy<'_> {
    fn choose(&mut self, scene: &Scene, state: &DecodeState) -> Result<(usize, f64)> {
        let obs = self.params.spec.layout().encode(scene, state, None);
        self.params.sample_token(&obs, &mut self.rng)
    }
}

/// Argmax decoding from the student view.
pub struct GreedyPolicy<'a> {
    pub params: &'a PolicyParams,
}

impl ActionPolicy for GreedyPolicy<'_> {
    fn choose(&mut self, scene: &Scene, state: &DecodeState) -> Result<(usize, f64)> {
        let obs = self.params.spec.layout().encode(scene, state, None);
        self.params.greedy_token(&obs)
    }
}

/// Scripted reference: asks the best-splitting attribute until one candidate is
/// left, then commits that candidate's largest-area frame, box and center.
pub struct BestSplitOracle {
    pub vocab: Vocabulary,
}

impl ActionPolicy for BestSplitOracle {
    fn choose(&mut self, scene: &Scene, state: &DecodeState) -> Result<(usize, f64)> {
        let cands = candidate_set(scene, &state.answers);
        let pick = cands.first().copied().unwrap_or(scene.objects[0].slot_id);
        let obj = scene.object(pick).expect("candidate exists");
        let kf = largest_frame(&obj.boxes);
        let b = obj.boxes[kf];
        let (cx, cy) = b.center();
        let v = |c: f64| self.vocab.coord(c.floor().clamp(0.0, (scene.grid - 1) as f64) as usize);
        let tok = match state.phase {
            Phase::Dialogue => {
                let answered: Vec<usize> = state.answers.iter().map(|(a, _)| *a).collect();
                match (cands.len() > 1 && !state.at_turn_cap())
                    .then(|| best_split(scene, &cands, &answered))
                    .flatten()
                {
                    Some(a) => self.vocab.ask(a),
                    None => self.vocab.commit(),
                }
            }
            Phase::Keyframe => self.vocab.keyframe(kf),
            Phase::X1 => v(b.x1 as f64),
            Phase::Y1 => v(b.y1 as f64),
            Phase::X2 => v(b.x2 as f64),
            Phase::Y2 => v(b.y2 as f64),
            Phase::Px => v(cx),
            Phase::Py => v(cy),
        };
        Ok((tok, 0.0))
    }
}

/// Wraps a closure as a policy.
pub struct FnPolicy<F>(pub F);

impl<F> ActionPolicy for FnPolicy<F>
where
    F: FnMut(&Scene, &DecodeState) -> Result<(usize, f64)>,
{
    fn choose(&mut self, scene: &Scene, state: &DecodeState) -> Result<(usize, f64)> {
        (self.0)(scene, state)
    }
}

/// Frame with the largest box area; ties go to the earliest frame.
pub fn largest_frame(boxes: &[Rect]) -> usize {
    let mut best = 0;
    for (t, b) in boxes.iter().enumerate() {
        if b.area() > boxes[best].area() {
            best = t;
        }
    }
    best
}

/// Unanswered attribute minimizing the worst-case surviving count among `cands`.
/// Ties go to the lowest attribute index. `None` when every attribute is answered.
pub fn best_split(scene: &Scene, cands: &[usize], answered: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for a in 0..scene.schema.len() {
        if answered.contains(&a) {
            continue;
        }
        let mut counts = vec![0usize; scene.schema.domain(a)];
        for &c in cands {
            counts[scene.object(c).expect("candidate exists").attr_values[a]] += 1;
        }
        let worst = counts.into_iter().max().unwrap_or(0);
        if best.is_none_or(|(_, w)| worst < w) {
            best = Some((a, worst));
        }
    }
    best.map(|(a, _)| a)
}

/// Runs one episode against the scripted simulator.
pub fn run_episode<P: ActionPolicy + ?Sized>(
    scene: &Scene,
    policy: &mut P,
    sim: &SimulatorConfig,
    max_turns: usize,
) -> Result<Trajectory> {
    let mut sim = *sim;
    run_episode_with(scene, policy, &mut sim, max_turns)
}

/// Runs one episode with an arbitrary answerer (scripted or human).
///
/// The dialogue phase alternates policy actions and answers until the policy
/// emits `COMMIT`; at the turn cap `COMMIT` is the only legal token. Then one
/// keyframe token and six coordinate tokens `(x1, y1, x2, y2, px, py)` follow.
pub fn run_episode_with<P: ActionPolicy + ?Sized>(
    scene: &Scene,
    policy: &mut P,
    answerer: &mut dyn Answerer,
    max_turns: usize,
) -> Result<Trajectory> {
    let vocab = Vocabulary { attributes: scene.schema.len(), frames: scene.frames, grid: scene.grid };
    let mut state = DecodeState::new(max_turns);
    let mut tokens = Vec::new();
    let mut turns = Vec::new();
    let mut remaining = candidate_set(scene, &[]);

    loop {
        let (tok, logprob) = policy.choose(scene, &state)?;
        if !vocab.legal_range(state.phase, state.at_turn_cap()).contains(&tok) {
            return Err(Error::Integrity(format!(
                "policy emitted token {tok} outside the legal set of phase {:?}",
                state.phase
            )));
        }
        tokens.push(TokenRecord { token: tok, phase: state.phase, logprob });
        match vocab.decode(tok).expect("legal token decodes") {
            Token::Ask(a) => {
                let k = state.turns + 1;
                let v = answerer.answer(scene, a, k)?;
                if v >= scene.schema.domain(a) {
                    return Err(Error::Data(format!("answer {v} is outside the domain of attribute {a}")));
                }
                remaining.retain(|&s| scene.object(s).is_some_and(|o| o.attr_values[a] == v));
                state.record_answer(a, v);
                turns.push(DialogueTurn { k, asked_attr: a, answer_value: v, n_k: remaining.len() });
            }
            token => {
                if !state.record(token) {
                    break;
                }
            }
        }
    }

    let keyframe = state.keyframe.expect("keyframe phase precedes the coordinates");
    let coords: [usize; 6] = state.coords.as_slice().try_into().expect("six coordinates");
    let c = coords.map(|v| v as i32);
    let commit = Commit {
        keyframe,
        bbox: Rect::new(c[0], c[1], c[2], c[3]),
        point: (coords[4] as f64, coords[5] as f64),
    };
    let trace = CandidateTrace { counts: turns.iter().map(|t| t.n_k).collect() };
    Ok(Trajectory {
        scene_seed: scene.seed,
        tokens,
        turns,
        trace,
        commit,
        rewards: None,
        factors: Vec::new(),
        advantages: Vec::new(),
    })
}

/// Rebuilds the observation at every step of `traj`, in the student view or,
/// with `privileged`, in the self-teacher view.
pub fn replay(
    layout: &ObsLayout,
    scene: &Scene,
    traj: &Trajectory,
    privileged: Option<&PrivilegedContext>,
) -> Result<Vec<EvalPoint>> {
    if traj.scene_seed != scene.seed {
        return Err(Error::Integrity(format!(
            "trajectory belongs to scene {} but was replayed on scene {}",
            traj.scene_seed, scene.seed
        )));
    }
    let vocab = Vocabulary { attributes: scene.schema.len(), frames: scene.frames, grid: scene.grid };
    let expected = traj.turns.len() + 8;
    if traj.tokens.len() != expected {
        return Err(Error::Integrity(format!(
            "trajectory has {} tokens, expected {expected} for {} turns",
            traj.tokens.len(),
            traj.turns.len()
        )));
    }
    let mut state = DecodeState::new(layout.max_turns);
    let mut points = Vec::with_capacity(traj.tokens.len());
    for rec in &traj.tokens {
        if rec.phase != state.phase
            || !vocab.legal_range(state.phase, state.at_turn_cap()).contains(&rec.token)
        {
            return Err(Error::Integrity(format!(
                "token {} does not fit phase {:?} at turn {}",
                rec.token, state.phase, state.turns
            )));
        }
        points.push((layout.encode(scene, &state, privileged), rec.token));
        match vocab.decode(rec.token).expect("legal token decodes") {
            Token::Ask(a) => {
                let turn = traj
                    .turns
                    .get(state.turns)
                    .filter(|t| t.asked_attr == a)
                    .ok_or_else(|| Error::Integrity(format!("turn {} disagrees with its ASK token", state.turns + 1)))?;
                state.record_answer(a, turn.answer_value);
            }
            token => {
                state.record(token);
            }
        }
    }
    Ok(points)
}

/// Structured expert feedback for a finished trajectory.
pub fn expert_guidance(scene: &Scene, traj: &Trajectory) -> PrivilegedContext {
    let answers: Vec<(usize, usize)> = traj.turns.iter().map(|t| (t.asked_attr, t.answer_value)).collect();
    let mut cands = candidate_set(scene, &answers);
    let mut answered: Vec<usize> = answers.iter().map(|(a, _)| *a).collect();
    if cands.is_empty() {
        // Contradictory answers: advise from the initial candidate set.
        cands = candidate_set(scene, &[]);
        answered.clear();
    }
    let best = if cands.len() > 1 { best_split(scene, &cands, &answered) } else { None };

    let m = scene.initial_candidate_count();
    let mut prev = m;
    let redundant = traj
        .turns
        .iter()
        .map(|t| {
            let r = t.n_k == prev;
            prev = t.n_k;
            r
        })
        .collect();

    let target = scene.target();
    let kf = largest_frame(&target.boxes);
    let b = target.boxes[kf];
    let s = scene.grid as f64;
    let (cx, cy) = b.center();
    PrivilegedContext {
        target_slot: scene.target_id,
        best_split: best,
        redundant,
        gt_keyframe: kf,
        gt_box: [b.x1 as f64 / s, b.y1 as f64 / s, b.x2 as f64 / s, b.y2 as f64 / s],
        gt_point: [cx / s, cy / s],
    }
}

//! The sequence policy: a two-layer tanh network over a phase-masked vocabulary.
//!
//! The same weights serve two views. The student view fills only the base block
//! of the observation; the self-teacher view also fills the privileged block
//! produced by [`crate::dialogue::expert_guidance`]. Privileged features enter
//! the first layer like any other input and, in addition, a fixed parameter-free
//! readout that turns the guidance into logit offsets. With a zero privileged
//! block both paths vanish and the two views coincide exactly.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{candidate_set, Scene, WorldConfig};
use crate::seeding;

/// Decoding phase. The order fixes the phase one-hot layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Dialogue,
    Keyframe,
    X1,
    Y1,
    X2,
    Y2,
    Px,
    Py,
}

impl Phase {
    pub const COUNT: usize = 8;
    pub const COORDS: [Phase; 6] = [Phase::X1, Phase::Y1, Phase::X2, Phase::Y2, Phase::Px, Phase::Py];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Phase following a committed token of this phase (`None` after the last coordinate).
    pub fn next(self) -> Option<Phase> {
        match self {
            Phase::Dialogue => Some(Phase::Keyframe),
            Phase::Keyframe => Some(Phase::X1),
            Phase::X1 => Some(Phase::Y1),
            Phase::Y1 => Some(Phase::X2),
            Phase::X2 => Some(Phase::Y2),
            Phase::Y2 => Some(Phase::Px),
            Phase::Px => Some(Phase::Py),
            Phase::Py => None,
        }
    }

    fn coord_index(self) -> Option<usize> {
        Phase::COORDS.iter().position(|p| *p == self)
    }
}

/// A decoded token.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Ask(usize),
    Commit,
    Keyframe(usize),
    Coord(usize),
}

/// Contiguous, phase-partitioned token ids: `ASK_a`, `COMMIT`, `KF_t`, `COORD_v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    pub attributes: usize,
    pub frames: usize,
    pub grid: usize,
}

impl Vocabulary {
    pub fn for_world(world: &WorldConfig) -> Self {
        Self { attributes: world.schema.len(), frames: world.frames, grid: world.grid }
    }

    pub fn len(&self) -> usize {
        self.attributes + 1 + self.frames + self.grid
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ask(&self, attr: usize) -> usize {
        attr
    }

    pub fn commit(&self) -> usize {
        self.attributes
    }

    pub fn keyframe(&self, t: usize) -> usize {
        self.attributes + 1 + t
    }

    pub fn coord(&self, v: usize) -> usize {
        self.attributes + 1 + self.frames + v
    }

    pub fn decode(&self, id: usize) -> Option<Token> {
        let a = self.attributes;
        let t = self.frames;
        match id {
            _ if id < a => Some(Token::Ask(id)),
            _ if id == a => Some(Token::Commit),
            _ if id < a + 1 + t => Some(Token::Keyframe(id - a - 1)),
            _ if id < self.len() => Some(Token::Coord(id - a - 1 - t)),
            _ => None,
        }
    }

    /// Half-open id range of the tokens legal in `phase`.
    pub fn legal_range(&self, phase: Phase, at_turn_cap: bool) -> std::ops::Range<usize> {
        match phase {
            Phase::Dialogue if at_turn_cap => self.commit()..self.commit() + 1,
            Phase::Dialogue => 0..self.attributes + 1,
            Phase::Keyframe => self.keyframe(0)..self.keyframe(0) + self.frames,
            _ => self.coord(0)..self.coord(0) + self.grid,
        }
    }
}

/// Expert guidance for one trajectory: the privileged context of the self-teacher view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivilegedContext {
    pub target_slot: usize,
    /// Unanswered attribute with the smallest worst-case surviving candidate count, if
    /// the trajectory ended with more than one candidate left.
    pub best_split: Option<usize>,
    /// Per asked turn, whether the answer left the candidate count unchanged.
    pub redundant: Vec<bool>,
    pub gt_keyframe: usize,
    /// Target box at the ground-truth keyframe, normalized by the grid size.
    pub gt_box: [f64; 4],
    /// Target box center at the ground-truth keyframe, normalized by the grid size.
    pub gt_point: [f64; 2],
}

/// Decoding state needed to build an observation.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeState {
    pub phase: Phase,
    pub answers: Vec<(usize, usize)>,
    pub turns: usize,
    pub max_turns: usize,
    /// Keyframe token emitted so far, if any.
    pub keyframe: Option<usize>,
    /// Coordinate values emitted so far, in phase order.
    pub coords: Vec<usize>,
}

impl DecodeState {
    pub fn new(max_turns: usize) -> Self {
        Self { phase: Phase::Dialogue, answers: Vec::new(), turns: 0, max_turns, keyframe: None, coords: Vec::new() }
    }

    pub fn at_turn_cap(&self) -> bool {
        self.turns >= self.max_turns
    }

    /// Records an answered question. The phase stays `Dialogue`.
    pub fn record_answer(&mut self, attr: usize, value: usize) {
        self.answers.push((attr, value));
        self.turns += 1;
    }

    /// Records a non-question token and moves to the next phase.
    /// Returns `false` once the last coordinate has been emitted.
    pub fn record(&mut self, token: Token) -> bool {
        match token {
            Token::Keyframe(t) => self.keyframe = Some(t),
            Token::Coord(v) => self.coords.push(v),
            Token::Ask(_) | Token::Commit => {}
        }
        match self.phase.next() {
            Some(p) => {
                self.phase = p;
                true
            }
            None => false,
        }
    }
}

/// Network input plus the metadata needed for masking and the guidance readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub features: Vec<f64>,
    pub phase: Phase,
    pub turns: usize,
    pub at_turn_cap: bool,
}

/// Architecture and world dimensions of a policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub world: WorldConfig,
    pub max_turns: usize,
    pub hidden: usize,
    /// Strength of the fixed readout of privileged guidance (0 disables it).
    pub guidance_gain: f64,
}

impl PolicySpec {
    pub fn new(world: WorldConfig, max_turns: usize, hidden: usize) -> Self {
        Self { world, max_turns, hidden, guidance_gain: DEFAULT_GUIDANCE_GAIN }
    }

    pub fn vocab(&self) -> Vocabulary {
        Vocabulary::for_world(&self.world)
    }

    pub fn layout(&self) -> ObsLayout {
        ObsLayout::new(&self.world, self.max_turns)
    }

    pub fn param_count(&self) -> usize {
        let i = self.layout().len();
        let o = self.vocab().len();
        self.hidden * i + self.hidden + o * self.hidden + o + Phase::COORDS.len()
    }
}

pub const DEFAULT_GUIDANCE_GAIN: f64 = 3.0;

/// Offsets of the observation vector. Fixed by the schema, frame count, slot count and turn cap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObsLayout {
    pub slots: usize,
    pub attributes: usize,
    pub values: usize,
    pub frames: usize,
    pub grid: usize,
    pub max_turns: usize,
    pub slot_width: usize,
    pub query_offset: usize,
    pub answer_offset: usize,
    pub phase_offset: usize,
    pub turn_offset: usize,
    /// Candidate fraction `N / M`, per attribute whether the candidates disagree on it,
    /// then the pointer bins averaged over the candidates.
    pub summary_offset: usize,
    /// Emitted keyframe one-hot followed by the emitted coordinates.
    pub prefix_offset: usize,
    pub privileged_offset: usize,
    len: usize,
}

const BOX_FEATURES: usize = 5;
const SLOT_FLAGS: usize = 3;
/// Radial-basis bins encoding the pointed-at coordinate of each slot.
const POINTER_BINS: usize = 16;
const SLOT_HEAD: usize = SLOT_FLAGS + POINTER_BINS;
const POINTER_SCALE: f64 = 8.0;

fn pointer_bins(v: f64, grid: f64) -> [f64; POINTER_BINS] {
    let width = grid / POINTER_BINS as f64;
    std::array::from_fn(|k| {
        let d = (v - (k as f64 + 0.5) * width) / width;
        (-0.5 * d * d).exp()
    })
}

impl ObsLayout {
    pub fn new(world: &WorldConfig, max_turns: usize) -> Self {
        let a = world.schema.len();
        let values = world.schema.total_values();
        let slot_width = SLOT_HEAD + values + world.frames * BOX_FEATURES;
        let query_offset = world.max_objects * slot_width;
        let answer_offset = query_offset + a + values;
        let phase_offset = answer_offset + a + values;
        let turn_offset = phase_offset + Phase::COUNT;
        let summary_offset = turn_offset + 1;
        let prefix_offset = summary_offset + 1 + a + POINTER_BINS;
        let privileged_offset = prefix_offset + world.frames + Phase::COORDS.len();
        let privileged_len = world.max_objects + a + max_turns + world.frames + 6;
        Self {
            slots: world.max_objects,
            attributes: a,
            values,
            frames: world.frames,
            grid: world.grid,
            max_turns,
            slot_width,
            query_offset,
            answer_offset,
            phase_offset,
            turn_offset,
            summary_offset,
            prefix_offset,
            privileged_offset,
            len: privileged_offset + privileged_len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn base_len(&self) -> usize {
        self.privileged_offset
    }

    fn target_offset(&self) -> usize {
        self.privileged_offset
    }
    fn split_offset(&self) -> usize {
        self.target_offset() + self.slots
    }
    fn redundancy_offset(&self) -> usize {
        self.split_offset() + self.attributes
    }
    fn keyframe_offset(&self) -> usize {
        self.redundancy_offset() + self.max_turns
    }
    fn gt_box_offset(&self) -> usize {
        self.keyframe_offset() + self.frames
    }

    /// Presentation order of slots: current candidates first, then the other
    /// present objects, each group by slot id.
    pub fn slot_order(&self, scene: &Scene, answers: &[(usize, usize)]) -> Vec<usize> {
        let cands = candidate_set(scene, answers);
        let mut order: Vec<usize> = cands.clone();
        order.extend(
            scene
                .objects
                .iter()
                .filter(|o| o.present && !cands.contains(&o.slot_id))
                .map(|o| o.slot_id),
        );
        order
    }

    /// Encodes the observation for `state`; `privileged` selects the teacher view.
    pub fn encode(
        &self,
        scene: &Scene,
        state: &DecodeState,
        privileged: Option<&PrivilegedContext>,
    ) -> Observation {
        let mut x = vec![0.0; self.len];
        let schema = &scene.schema;
        let s = scene.grid as f64;
        let order = self.slot_order(scene, &state.answers);
        let cands = candidate_set(scene, &state.answers);
        for (pos, slot) in order.iter().enumerate().take(self.slots) {
            let o = scene.object(*slot).expect("ordered slot exists");
            let base = pos * self.slot_width;
            x[base] = 1.0;
            x[base + 1] = if cands.contains(slot) { 1.0 } else { 0.0 };
            if let (Some(i), Some(t)) = (state.phase.coord_index(), state.keyframe) {
                if let Some(b) = o.boxes.get(t) {
                    let (cx, cy) = b.center();
                    let v = [b.x1 as f64, b.y1 as f64, b.x2 as f64, b.y2 as f64, cx, cy][i];
                    x[base + 2] = v / s;
                    let share = if cands.contains(slot) { 1.0 / cands.len() as f64 } else { 0.0 };
                    let pooled = self.summary_offset + 1 + self.attributes;
                    for (k, r) in pointer_bins(v, s).into_iter().enumerate() {
                        x[base + SLOT_FLAGS + k] = r;
                        x[pooled + k] += share * r;
                    }
                }
            }
            for (a, &v) in o.attr_values.iter().enumerate() {
                x[base + SLOT_HEAD + schema.value_offset(a) + v] = 1.0;
            }
            let boxes = base + SLOT_HEAD + self.values;
            for (t, b) in o.boxes.iter().enumerate().take(self.frames) {
                let f = boxes + t * BOX_FEATURES;
                x[f] = b.x1 as f64 / s;
                x[f + 1] = b.y1 as f64 / s;
                x[f + 2] = b.x2 as f64 / s;
                x[f + 3] = b.y2 as f64 / s;
                x[f + 4] = b.area() as f64 / (s * s);
            }
        }
        for (a, q) in scene.query.iter().enumerate() {
            if let Some(v) = q {
                x[self.query_offset + a] = 1.0;
                x[self.query_offset + self.attributes + schema.value_offset(a) + v] = 1.0;
            }
        }
        for &(a, v) in &state.answers {
            x[self.answer_offset + a] = 1.0;
            x[self.answer_offset + self.attributes + schema.value_offset(a) + v] = 1.0;
        }
        x[self.phase_offset + state.phase.index()] = 1.0;
        if self.max_turns > 0 {
            x[self.turn_offset] = state.turns as f64 / self.max_turns as f64;
        }
        let m = candidate_set(scene, &[]).len().max(1);
        x[self.summary_offset] = cands.len() as f64 / m as f64;
        for a in 0..self.attributes.min(schema.len()) {
            let first = cands.first().and_then(|&c| scene.object(c)).map(|o| o.attr_values[a]);
            let split = cands.iter().any(|&c| scene.object(c).map(|o| o.attr_values[a]) != first);
            x[self.summary_offset + 1 + a] = if split { 1.0 } else { 0.0 };
        }
        if let Some(t) = state.keyframe.filter(|&t| t < self.frames) {
            x[self.prefix_offset + t] = 1.0;
        }
        for (i, &v) in state.coords.iter().enumerate().take(Phase::COORDS.len()) {
            x[self.prefix_offset + self.frames + i] = v as f64 / s;
        }
        if let Some(p) = privileged {
            if let Some(pos) = order.iter().position(|&sl| sl == p.target_slot) {
                if pos < self.slots {
                    x[self.target_offset() + pos] = 1.0;
                }
            }
            if let Some(b) = p.best_split {
                x[self.split_offset() + b] = 1.0;
            }
            for (k, &r) in p.redundant.iter().enumerate().take(self.max_turns) {
                x[self.redundancy_offset() + k] = if r { 1.0 } else { 0.0 };
            }
            if p.gt_keyframe < self.frames {
                x[self.keyframe_offset() + p.gt_keyframe] = 1.0;
            }
            let g = self.gt_box_offset();
            x[g..g + 4].copy_from_slice(&p.gt_box);
            x[g + 4..g + 6].copy_from_slice(&p.gt_point);
        }
        Observation {
            features: x,
            phase: state.phase,
            turns: state.turns,
            at_turn_cap: state.at_turn_cap(),
        }
    }

    /// Similarity of every coordinate value to the candidates' pooled pointer.
    pub fn pointer_kernel(&self, obs: &Observation) -> Vec<f64> {
        let pooled = &obs.features[self.summary_offset + 1 + self.attributes..][..POINTER_BINS];
        (0..self.grid)
            .map(|v| {
                let bins = pointer_bins(v as f64 + 0.5, self.grid as f64);
                POINTER_SCALE * bins.iter().zip(pooled).map(|(b, p)| b * p).sum::<f64>()
            })
            .collect()
    }

    /// Whether the privileged block of `obs` is exactly zero.
    pub fn is_student_view(&self, obs: &Observation) -> bool {
        obs.features[self.privileged_offset..].iter().all(|&v| v == 0.0)
    }

    /// Logit offsets read from the privileged block. All zero in the student view.
    pub fn guidance_bias(&self, obs: &Observation, vocab: &Vocabulary, gain: f64) -> Option<Vec<f64>> {
        let x = &obs.features;
        let presence: f64 = x[self.target_offset()..self.target_offset() + self.slots].iter().sum();
        if presence == 0.0 || gain == 0.0 {
            return None;
        }
        let mut bias = vec![0.0; vocab.len()];
        match obs.phase {
            Phase::Dialogue => {
                let split = &x[self.split_offset()..self.split_offset() + self.attributes];
                if split.iter().any(|&v| v != 0.0) {
                    for (a, &v) in split.iter().enumerate() {
                        bias[vocab.ask(a)] += gain * v;
                    }
                    bias[vocab.commit()] -= gain;
                }
                if obs.turns < self.max_turns && x[self.redundancy_offset() + obs.turns] != 0.0 {
                    for a in 0..self.attributes {
                        bias[vocab.ask(a)] -= gain;
                    }
                }
            }
            Phase::Keyframe => {
                for t in 0..self.frames {
                    bias[vocab.keyframe(t)] += gain * x[self.keyframe_offset() + t];
                }
            }
            coord => {
                let i = coord.coord_index().expect("coordinate phase");
                let c = x[self.gt_box_offset() + i] * self.grid as f64;
                let width = (self.grid as f64 / 8.0).max(1.0);
                for v in 0..self.grid {
                    let d = (v as f64 - c) / width;
                    bias[vocab.coord(v)] += gain * (-0.5 * d * d).exp();
                }
            }
        }
        Some(bias)
    }
}

/// Weights of the two-layer policy, laid out as `W1 | b1 | W2 | b2` (row-major, output-major).
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub spec: PolicySpec,
    pub weights: Vec<f64>,
    pub step: u64,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub hidden: Vec<f64>,
    pub logprobs: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(spec: PolicySpec) -> Self {
        let n = spec.param_count();
        Self { spec, weights: vec![0.0; n], step: 0 }
    }

    /// Uniform init in [-0.05, 0.05], rounded to `f32` so checkpoints are lossless.
    pub fn init(spec: PolicySpec, seed: u64) -> Self {
        let n = spec.param_count();
        let mut rng = seeding::rng(&[seeding::TAG_INIT, seed]);
        let weights = (0..n).map(|_| rng.gen_range(-0.05f64..=0.05) as f32 as f64).collect();
        Self { spec, weights, step: 0 }
    }

    pub fn input_dim(&self) -> usize {
        self.spec.layout().len()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.vocab().len()
    }

    /// Rounds every weight to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for w in &mut self.weights {
            *w = *w as f32 as f64;
        }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64], &[f64], &[f64]) {
        let i = self.input_dim();
        let h = self.spec.hidden;
        let o = self.output_dim();
        let (w1, rest) = self.weights.split_at(h * i);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(o * h);
        let (b2, pointer) = rest.split_at(o);
        (w1, b1, w2, b2, pointer)
    }

    pub fn check_dims(&self, obs: &Observation) -> Result<()> {
        if self.weights.len() != self.spec.param_count() {
            return Err(Error::Config(format!(
                "parameter vector has {} entries, architecture needs {}",
                self.weights.len(),
                self.spec.param_count()
            )));
        }
        if obs.features.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "observation has {} features, policy expects {}",
                obs.features.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Masked log-probabilities over the whole vocabulary (`-inf` for illegal tokens).
    pub fn forward(&self, obs: &Observation) -> Result<ForwardPass> {
        self.check_dims(obs)?;
        let (w1, b1, w2, b2, pointer) = self.split();
        let n_in = self.input_dim();
        let x = &obs.features;
        let active: Vec<usize> = (0..n_in).filter(|&j| x[j] != 0.0).collect();
        let hidden: Vec<f64> = (0..self.spec.hidden)
            .map(|k| {
                let row = &w1[k * n_in..(k + 1) * n_in];
                let z = active.iter().fold(b1[k], |acc, &j| acc + row[j] * x[j]);
                z.tanh()
            })
            .collect();
        if hidden.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite activation in the hidden layer".into()));
        }
        let vocab = self.spec.vocab();
        let h = self.spec.hidden;
        let mut logits: Vec<f64> = (0..vocab.len())
            .map(|o| {
                let row = &w2[o * h..(o + 1) * h];
                row.iter().zip(&hidden).fold(b2[o], |acc, (w, v)| acc + w * v)
            })
            .collect();
        let layout = self.spec.layout();
        if let Some(i) = obs.phase.coord_index() {
            for (v, k) in layout.pointer_kernel(obs).into_iter().enumerate() {
                logits[vocab.coord(v)] += pointer[i] * k;
            }
        }
        if let Some(bias) = layout.guidance_bias(obs, &vocab, self.spec.guidance_gain) {
            for (l, b) in logits.iter_mut().zip(bias) {
                *l += b;
            }
        }
        let legal = vocab.legal_range(obs.phase, obs.at_turn_cap);
        if logits[legal.clone()].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite logit in the output layer".into()));
        }
        let max = logits[legal.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits[legal.clone()].iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let logprobs = logits
            .iter()
            .enumerate()
            .map(|(j, l)| if legal.contains(&j) { l - lse } else { f64::NEG_INFINITY })
            .collect();
        Ok(ForwardPass { hidden, logprobs })
    }

    pub fn logprobs(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.forward(obs)?.logprobs)
    }

    /// Samples a token at temperature 1. Consumes exactly one uniform draw.
    pub fn sample_token<R: Rng + ?Sized>(&self, obs: &Observation, rng: &mut R) -> Result<(usize, f64)> {
        let lp = self.logprobs(obs)?;
        let legal = self.spec.vocab().legal_range(obs.phase, obs.at_turn_cap);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = legal.start;
        for j in legal {
            acc += lp[j].exp();
            last = j;
            if u < acc {
                return Ok((j, lp[j]));
            }
        }
        Ok((last, lp[last]))
    }

    /// Argmax token, ties to the lowest id.
    pub fn greedy_token(&self, obs: &Observation) -> Result<(usize, f64)> {
        let lp = self.logprobs(obs)?;
        let legal = self.spec.vocab().legal_range(obs.phase, obs.at_turn_cap);
        let mut best = legal.start;
        for j in legal {
            if lp[j] > lp[best] {
                best = j;
            }
        }
        Ok((best, lp[best]))
    }
}

/// One log-probability evaluation point: an observation and the token scored there.
pub type EvalPoint = (Observation, usize);

/// Which input view to score a trajectory under.
#[derive(Clone, Copy, Debug)]
pub enum View<'a> {
    Student,
    Teacher(&'a PrivilegedContext),
}

/// Per-token log-probabilities of a recorded trajectory under `params`.
pub fn sequence_logprobs(
    params: &PolicyParams,
    scene: &Scene,
    traj: &crate::higrpo::Trajectory,
    view: View<'_>,
) -> Result<Vec<f64>> {
    let privileged = match view {
        View::Student => None,
        View::Teacher(ctx) => Some(ctx),
    };
    crate::dialogue::replay(&params.spec.layout(), scene, traj, privileged)?
        .iter()
        .map(|(obs, tok)| Ok(params.logprobs(obs)?[*tok]))
        .collect()
}

/// Exact reverse-mode gradient of a scalar objective of per-token log-probabilities.
///
/// `objective` receives `log pi(token | obs)` for every point and returns the
/// objective value and its derivative with respect to each log-probability. The
/// adjoints are then propagated through the log-softmax and both layers.
/// Contributions are accumulated in point order.
pub fn gradient<F>(params: &PolicyParams, points: &[EvalPoint], objective: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&[f64]) -> (f64, Vec<f64>),
{
    let mut passes = Vec::with_capacity(points.len());
    for (obs, tok) in points {
        let fp = params.forward(obs)?;
        if !fp.logprobs[*tok].is_finite() {
            return Err(Error::Integrity(format!("token {tok} is illegal in phase {:?}", obs.phase)));
        }
        passes.push(fp);
    }
    let lps: Vec<f64> = points.iter().zip(&passes).map(|((_, t), fp)| fp.logprobs[*t]).collect();
    let (value, adjoints) = objective(&lps);
    if adjoints.len() != points.len() {
        return Err(Error::Integrity(format!(
            "objective returned {} adjoints for {} points",
            adjoints.len(),
            points.len()
        )));
    }
    if !value.is_finite() || adjoints.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite objective value or adjoint".into()));
    }

    let n_in = params.input_dim();
    let h = params.spec.hidden;
    let vocab = params.spec.vocab();
    let n_out = vocab.len();
    let layout = params.spec.layout();
    let (_, _, w2, _, _) = params.split();
    let mut grad = vec![0.0; params.weights.len()];
    let (g_w1, rest) = grad.split_at_mut(h * n_in);
    let (g_b1, rest) = rest.split_at_mut(h);
    let (g_w2, rest) = rest.split_at_mut(n_out * h);
    let (g_b2, g_pointer) = rest.split_at_mut(n_out);

    let mut delta_out = vec![0.0; n_out];
    let mut delta_h = vec![0.0; h];
    for (((obs, tok), fp), &adj) in points.iter().zip(&passes).zip(&adjoints) {
        if adj == 0.0 {
            continue;
        }
        let legal = vocab.legal_range(obs.phase, obs.at_turn_cap);
        delta_out.iter_mut().for_each(|d| *d = 0.0);
        for j in legal {
            let onehot = if j == *tok { 1.0 } else { 0.0 };
            delta_out[j] = adj * (onehot - fp.logprobs[j].exp());
        }
        if let Some(i) = obs.phase.coord_index() {
            for (v, k) in layout.pointer_kernel(obs).into_iter().enumerate() {
                g_pointer[i] += delta_out[vocab.coord(v)] * k;
            }
        }
        delta_h.iter_mut().for_each(|d| *d = 0.0);
        for (o, &d) in delta_out.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g_b2[o] += d;
            let row = &w2[o * h..(o + 1) * h];
            let g_row = &mut g_w2[o * h..(o + 1) * h];
            for k in 0..h {
                g_row[k] += d * fp.hidden[k];
                delta_h[k] += d * row[k];
            }
        }
        let x = &obs.features;
        for k in 0..h {
            let dz = delta_h[k] * (1.0 - fp.hidden[k] * fp.hidden[k]);
            g_b1[k] += dz;
            let g_row = &mut g_w1[k * n_in..(k + 1) * n_in];
            for (j, &xj) in x.iter().enumerate() {
                if xj != 0.0 {
                    g_row[j] += dz * xj;
                }
            }
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite gradient entry".into()));
    }
    Ok((value, grad))
}

/// Checkpoint metadata, stored as JSON next to a little-endian `f32` weight file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub spec: PolicySpec,
    pub input_dim: usize,
    pub output_dim: usize,
    pub step: u64,
    pub lambda: f64,
    pub weights_file: String,
    pub layer_order: Vec<String>,
}

/// Writes `<stem>.json` and `<stem>.bin`; returns the metadata path.
pub fn save_checkpoint(params: &PolicyParams, lambda: f64, dir: &Path, stem: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let bin_name = format!("{stem}.bin");
    let meta = CheckpointMeta {
        spec: params.spec.clone(),
        input_dim: params.input_dim(),
        output_dim: params.output_dim(),
        step: params.step,
        lambda,
        weights_file: bin_name.clone(),
        layer_order: ["W1", "b1", "W2", "b2", "pointer"].iter().map(|s| s.to_string()).collect(),
    };
    let mut bytes = Vec::with_capacity(params.weights.len() * 4);
    for w in &params.weights {
        bytes.extend_from_slice(&(*w as f32).to_le_bytes());
    }
    // Weights first, metadata last: a readable metadata file implies complete weights.
    write_atomic(&dir.join(&bin_name), &bytes)?;
    let meta_path = dir.join(format!("{stem}.json"));
    let mut json = serde_json::to_vec_pretty(&meta)?;
    json.push(b'\n');
    write_atomic(&meta_path, &json)?;
    Ok(meta_path)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint from its metadata path. Returns the parameters and stored lambda.
pub fn load_checkpoint(meta_path: &Path) -> Result<(PolicyParams, f64)> {
    let meta: CheckpointMeta = serde_json::from_slice(&fs::read(meta_path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?;
    meta.spec.world.validate()?;
    let bin = meta_path.parent().unwrap_or(Path::new(".")).join(&meta.weights_file);
    let bytes = fs::read(&bin)?;
    let n = meta.spec.param_count();
    if meta.input_dim != meta.spec.layout().len() || meta.output_dim != meta.spec.vocab().len() {
        return Err(Error::Data(format!("{}: dimensions disagree with the stored architecture", meta_path.display())));
    }
    if bytes.len() != n * 4 {
        return Err(Error::Data(format!(
            "{}: expected {} weight bytes, found {}",
            bin.display(),
            n * 4,
            bytes.len()
        )));
    }
    let weights = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((PolicyParams { spec: meta.spec, weights, step: meta.step }, meta.lambda))
}

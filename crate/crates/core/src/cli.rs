//! Command-line layer: run configuration, persistence and the subcommands behind
//! the `clarify` binary.
//!
//! Configuration is layered. Later layers win:
//! built-in defaults, a JSON config file, `CLARIFY_<KEY>` environment variables,
//! then command-line flags (`--set key=value` and the named flags).

use std::collections::VecDeque;
use std::fs;
use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dialogue::{run_episode_with, Answerer, GreedyPolicy, RecordedAnswers, SimulatorConfig};
use crate::error::{Error, Result};
use crate::evalkit::{self, EvalOptions, MaskSequence};
use crate::higrpo::{self, HiGrpoConfig, ScenarioSource, TrainSinks, Trajectory};
use crate::policy::{load_checkpoint, PolicyParams, PolicySpec, DEFAULT_GUIDANCE_GAIN};
use crate::rewards::{score, Commit, RewardBreakdown, RewardConfig};
use crate::scene::{candidate_set, generate_scene, AttributeSchema, DifficultyTier, Scene, WorldConfig};
use crate::seeding;

/// Prefix of environment-variable overrides.
pub const ENV_PREFIX: &str = "CLARIFY_";

/// Every tunable of the tool. Unknown keys are rejected at every layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub group_size: usize,
    pub alpha: f64,
    pub clip_eps: f64,
    pub factor_clip: f64,
    pub lambda0: f64,
    pub sync_interval: u64,
    pub max_turns: usize,
    pub learning_rate: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub scenes_per_step: usize,
    pub checkpoint_every: u64,
    /// Hidden width of the policy.
    pub hidden: usize,
    pub guidance_gain: f64,
    pub schema: AttributeSchema,
    pub frames: usize,
    pub grid: usize,
    pub max_objects: usize,
    /// Tiers drawn uniformly when training without a pack.
    pub train_tiers: Vec<DifficultyTier>,
    pub noise: f64,
    pub sim_seed: u64,
    pub pack: Option<PathBuf>,
    pub checkpoint_dir: PathBuf,
    pub log_dir: PathBuf,
    pub eval_timing: bool,
    pub eval_tolerance: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = HiGrpoConfig::default();
        let w = WorldConfig::default();
        Self {
            group_size: h.group_size,
            alpha: h.alpha,
            clip_eps: h.clip_eps,
            factor_clip: h.factor_clip,
            lambda0: h.lambda0,
            sync_interval: h.sync_interval,
            max_turns: h.max_turns,
            learning_rate: h.learning_rate,
            total_steps: h.total_steps,
            seed: h.seed,
            scenes_per_step: h.scenes_per_step,
            checkpoint_every: h.checkpoint_every,
            hidden: 64,
            guidance_gain: DEFAULT_GUIDANCE_GAIN,
            schema: w.schema,
            frames: w.frames,
            grid: w.grid,
            max_objects: w.max_objects,
            train_tiers: DifficultyTier::ALL.to_vec(),
            noise: 0.0,
            sim_seed: 0,
            pack: None,
            checkpoint_dir: PathBuf::from("runs/checkpoints"),
            log_dir: PathBuf::from("runs/logs"),
            eval_timing: false,
            eval_tolerance: None,
        }
    }
}

impl RunConfig {
    pub fn higrpo(&self) -> HiGrpoConfig {
        HiGrpoConfig {
            group_size: self.group_size,
            alpha: self.alpha,
            clip_eps: self.clip_eps,
            factor_clip: self.factor_clip,
            lambda0: self.lambda0,
            sync_interval: self.sync_interval,
            max_turns: self.max_turns,
            learning_rate: self.learning_rate,
            total_steps: self.total_steps,
            seed: self.seed,
            scenes_per_step: self.scenes_per_step,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn world(&self) -> WorldConfig {
        WorldConfig {
            schema: self.schema.clone(),
            frames: self.frames,
            grid: self.grid,
            max_objects: self.max_objects,
        }
    }

    pub fn policy_spec(&self) -> PolicySpec {
        PolicySpec { guidance_gain: self.guidance_gain, ..PolicySpec::new(self.world(), self.max_turns, self.hidden) }
    }

    pub fn simulator(&self) -> SimulatorConfig {
        SimulatorConfig { noise_rate: self.noise, seed: self.sim_seed }
    }

    pub fn validate(&self) -> Result<()> {
        self.higrpo().validate()?;
        self.world().validate()?;
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("noise must lie in [0, 1], got {}", self.noise)));
        }
        Ok(())
    }

    /// Merges the configuration layers. `env` is the process environment (or a fixture).
    pub fn resolve<I>(file: Option<&Path>, env: I, overrides: &[(String, String)]) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut merged = match serde_json::to_value(RunConfig::default())? {
            Value::Object(m) => m,
            _ => unreachable!("RunConfig serializes to an object"),
        };
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
            let layer: Map<String, Value> = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
            overlay(&mut merged, layer, &format!("config file {}", path.display()))?;
        }
        let mut env_layer = Map::new();
        let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        env.sort();
        for (k, v) in env {
            env_layer.insert(k[ENV_PREFIX.len()..].to_ascii_lowercase(), parse_scalar(&v));
        }
        overlay(&mut merged, env_layer, "environment")?;
        let mut cli_layer = Map::new();
        for (k, v) in overrides {
            cli_layer.insert(k.replace('-', "_"), parse_scalar(v));
        }
        overlay(&mut merged, cli_layer, "command line")?;
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn overlay(base: &mut Map<String, Value>, layer: Map<String, Value>, origin: &str) -> Result<()> {
    for (k, v) in layer {
        if !base.contains_key(&k) {
            return Err(Error::Config(format!("unknown configuration key `{k}` ({origin})")));
        }
        base.insert(k, v);
    }
    Ok(())
}

/// JSON if it parses, otherwise a plain string.
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Process exit code of an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Generation(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

#[derive(Debug, Parser)]
#[command(name = "clarify", version, about = "Clarify-then-ground policies trained with hierarchical GRPO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scenario pack.
    Gen(GenArgs),
    /// Train a policy.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a scenario pack.
    Eval(EvalArgs),
    /// Answer the policy's questions yourself.
    Play(PlayArgs),
    /// Pretty-print a pack, checkpoint, report, log or transcript.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override any config key, e.g. `--set hidden=16`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_kv)]
    pub set: Vec<(String, String)>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_kv(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

impl ConfigArgs {
    fn overrides(&self, named: &[(&str, Option<String>)]) -> Vec<(String, String)> {
        let mut out = self.set.clone();
        if let Some(s) = self.seed {
            out.push(("seed".into(), s.to_string()));
        }
        out.extend(named.iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))));
        out
    }

    fn resolve(&self, named: &[(&str, Option<String>)]) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), std::env::vars(), &self.overrides(named))
    }
}

fn json_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| Value::String(p.display().to_string()).to_string())
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long, default_value_t = 40)]
    pub simple: usize,
    #[arg(long, default_value_t = 60)]
    pub medium: usize,
    #[arg(long, default_value_t = 50)]
    pub difficult: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub pack: Option<PathBuf>,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub total_steps: Option<u64>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    #[arg(long)]
    pub log_dir: Option<PathBuf>,
    /// Continue from a checkpoint's `.json` metadata file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pack: PathBuf,
    /// Probability that the simulated user answers wrongly.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub sim_seed: Option<u64>,
    /// Directory for `report.json` and `samples.jsonl`.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Measure per-sample wall-time.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub pack: PathBuf,
    /// Position of the scene in the pack.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// JSONL file the session transcript is appended to.
    #[arg(long, default_value = "sessions.jsonl")]
    pub session_log: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, &mut out),
        Command::Train(a) => cmd_train(&a, &mut out),
        Command::Eval(a) => cmd_eval(&a, &mut out),
        Command::Play(a) => {
            if !std::io::stdin().is_terminal() {
                return Err(Error::Config(
                    "`play` needs an interactive terminal on stdin; use `clarify eval` for scripted evaluation".into(),
                ));
            }
            let stdin = std::io::stdin().lock();
            cmd_play(&a, stdin, &mut out)
        }
        Command::Inspect(a) => cmd_inspect(&a.path, &mut out),
    }
}

/// Reads and validates a scenario pack.
pub fn load_pack(path: &Path) -> Result<Vec<Scene>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read pack {}: {e}", path.display())))?;
    let scenes: Vec<Scene> =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("pack {}: {e}", path.display())))?;
    for s in &scenes {
        s.validate(None)?;
    }
    Ok(scenes)
}

/// Serializes a pack as a JSON array with one scene per line.
pub fn pack_to_string(scenes: &[Scene]) -> Result<String> {
    let lines = scenes.iter().map(serde_json::to_string).collect::<std::result::Result<Vec<_>, _>>()?;
    if lines.is_empty() {
        return Ok("[]\n".into());
    }
    Ok(format!("[\n{}\n]\n", lines.join(",\n")))
}

/// Scenes of a pack with the given tier counts, in tier order.
pub fn generate_pack(world: &WorldConfig, counts: &[(DifficultyTier, usize)], seed: u64) -> Result<Vec<Scene>> {
    let mut scenes = Vec::new();
    for &(tier, n) in counts {
        for i in 0..n {
            scenes.push(generate_scene(world, tier, seeding::derive(&[seed, tier as u64, i as u64]))?);
        }
    }
    Ok(scenes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.resolve(&[])?;
    let counts = [
        (DifficultyTier::Simple, args.simple),
        (DifficultyTier::Medium, args.medium),
        (DifficultyTier::Difficult, args.difficult),
    ];
    let scenes = generate_pack(&cfg.world(), &counts, cfg.seed)?;
    write_atomic(&args.out, pack_to_string(&scenes)?.as_bytes())?;
    writeln!(out, "wrote {} scenes to {}", scenes.len(), args.out.display())?;
    for tier in DifficultyTier::ALL {
        let n = scenes.iter().filter(|s| s.tier == tier).count();
        writeln!(out, "  {:<10} {:>5}  {}", tier.name(), n, "#".repeat(n.div_ceil(5)))?;
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let num = |v: Option<f64>| v.map(|x| x.to_string());
    let cfg = args.cfg.resolve(&[
        ("pack", json_str(&args.pack)),
        ("lambda0", num(args.lambda0)),
        ("alpha", num(args.alpha)),
        ("total_steps", args.total_steps.map(|v| v.to_string())),
        ("group_size", args.group_size.map(|v| v.to_string())),
        ("learning_rate", num(args.learning_rate)),
        ("checkpoint_dir", json_str(&args.checkpoint_dir)),
        ("log_dir", json_str(&args.log_dir)),
    ])?;
    let summary = train_with_config(&cfg, args.resume.as_deref())?;
    writeln!(out, "{summary}")?;
    Ok(())
}

/// Trains according to `cfg`, writing checkpoints and `train.csv`. Returns a summary line.
pub fn train_with_config(cfg: &RunConfig, resume: Option<&Path>) -> Result<String> {
    let source = match &cfg.pack {
        Some(p) => {
            let scenes = load_pack(p)?;
            for s in &scenes {
                s.validate(Some(&cfg.world()))?;
            }
            ScenarioSource::Pack(scenes)
        }
        None => ScenarioSource::Generator { world: cfg.world(), tiers: cfg.train_tiers.clone() },
    };
    let init = match resume {
        Some(path) => {
            let (params, _) = load_checkpoint(path)?;
            if params.spec != cfg.policy_spec() {
                return Err(Error::Config(format!(
                    "checkpoint {} was built for a different architecture or world",
                    path.display()
                )));
            }
            params
        }
        None => PolicyParams::init(cfg.policy_spec(), cfg.seed),
    };
    fs::create_dir_all(&cfg.log_dir)?;
    fs::create_dir_all(&cfg.checkpoint_dir)?;
    write_atomic(&cfg.log_dir.join("config.json"), (serde_json::to_string_pretty(cfg)? + "\n").as_bytes())?;
    let csv_path = cfg.log_dir.join("train.csv");
    let file: Box<dyn Write + Send> = if resume.is_some() && csv_path.exists() {
        Box::new(fs::OpenOptions::new().append(true).open(&csv_path)?)
    } else {
        Box::new(fs::File::create(&csv_path)?)
    };
    let writer = csv::WriterBuilder::new().has_headers(resume.is_none() || init.step == 0).from_writer(file);
    let mut sinks = TrainSinks { csv: Some(writer), checkpoint_dir: Some(cfg.checkpoint_dir.clone()) };
    let start = init.step;
    let result = higrpo::train(&cfg.higrpo(), init, &source, &cfg.simulator(), &mut sinks)?;
    let last = result.logs.last();
    Ok(format!(
        "trained steps {}..{}; final mean reward {:.4}, success rate {:.3}; checkpoints in {}",
        start,
        result.params.step,
        last.map_or(0.0, |l| l.mean_total),
        last.map_or(0.0, |l| l.success_rate),
        cfg.checkpoint_dir.display()
    ))
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.cfg.resolve(&[
        ("noise", args.noise.map(|v| v.to_string())),
        ("sim_seed", args.sim_seed.map(|v| v.to_string())),
    ])?;
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let pack = load_pack(&args.pack)?;
    let opts = EvalOptions {
        max_turns: params.spec.max_turns,
        alpha: cfg.alpha,
        timing: args.timing || cfg.eval_timing,
        tolerance: cfg.eval_tolerance,
    };
    let ev = evalkit::evaluate(&params, &pack, &cfg.simulator(), &opts)?;
    fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("report.json"), ev.report_json()?.as_bytes())?;
    write_atomic(&args.out.join("samples.jsonl"), ev.samples_jsonl()?.as_bytes())?;
    let o = ev.report.overall;
    writeln!(out, "{:<10} {:>6} {:>6} {:>6} {:>6} {:>5}", "tier", "J", "F", "J&F", "turns", "n")?;
    for tier in DifficultyTier::ALL {
        let t = ev.report.tier(tier);
        writeln!(out, "{:<10} {:>6.3} {:>6.3} {:>6.3} {:>6.2} {:>5}", tier.name(), t.j, t.f, t.jf, t.mean_turns, t.n)?;
    }
    writeln!(out, "{:<10} {:>6.3} {:>6.3} {:>6.3} {:>6.2} {:>5}", "overall", o.j, o.f, o.jf, o.mean_turns, o.n)?;
    Ok(())
}

/// Text table of a scene: one row per object, the target marked with `*` and
/// query candidates with `+`.
pub fn render_scene(scene: &Scene) -> String {
    let mut s = String::new();
    let query: Vec<String> = scene
        .query
        .iter()
        .enumerate()
        .filter_map(|(a, v)| v.map(|v| format!("{}={}", scene.schema.attributes[a].name, scene.schema.value_label(a, v))))
        .collect();
    s.push_str(&format!("scene {} ({}), query: {}\n", scene.seed, scene.tier, query.join(", ")));
    let cands = candidate_set(scene, &[]);
    let mut header = format!("{:<6}", "slot");
    for a in &scene.schema.attributes {
        header.push_str(&format!("{:<10}", a.name));
    }
    for t in 0..scene.frames {
        header.push_str(&format!("{:<18}", format!("frame {t}")));
    }
    s.push_str(header.trim_end());
    s.push('\n');
    for o in scene.objects.iter().filter(|o| o.present) {
        let mark = if o.slot_id == scene.target_id {
            '*'
        } else if cands.contains(&o.slot_id) {
            '+'
        } else {
            ' '
        };
        let mut row = format!("{mark}{:<5}", o.slot_id);
        for (a, &v) in o.attr_values.iter().enumerate() {
            row.push_str(&format!("{:<10}", scene.schema.value_label(a, v)));
        }
        for b in &o.boxes {
            row.push_str(&format!("{:<18}", format!("({},{},{},{})", b.x1, b.y1, b.x2, b.y2)));
        }
        s.push_str(row.trim_end());
        s.push('\n');
    }
    s.push_str("* target (answer questions about this object)   + matches the query\n");
    s
}

/// Asks a person, over a reader/writer pair, to answer questions about the target.
pub struct HumanAnswerer<R, W> {
    pub input: R,
    pub output: W,
}

impl<R: BufRead, W: Write> Answerer for HumanAnswerer<R, W> {
    fn answer(&mut self, scene: &Scene, asked_attr: usize, k: usize) -> Result<usize> {
        let attr = &scene.schema.attributes[asked_attr];
        let labels: Vec<String> = (0..attr.domain_size).map(|v| scene.schema.value_label(asked_attr, v)).collect();
        loop {
            writeln!(self.output, "Q{k}: what is the {} of the target?", attr.name)?;
            for (v, l) in labels.iter().enumerate() {
                writeln!(self.output, "  [{v}] {l}")?;
            }
            write!(self.output, "> ")?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Err(Error::Data("input closed before the session finished".into()));
            }
            let line = line.trim();
            let pick = line.parse::<usize>().ok().filter(|&v| v < labels.len()).or_else(|| {
                labels.iter().position(|l| l.eq_ignore_ascii_case(line))
            });
            match pick {
                Some(v) => return Ok(v),
                None => writeln!(self.output, "please enter a number from 0 to {} or a value name", labels.len() - 1)?,
            }
        }
    }
}

/// One played session (one JSONL line of the session log).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub scene_seed: u64,
    pub tier: DifficultyTier,
    pub checkpoint_step: u64,
    /// `(attribute, value)` per answered question.
    pub answers: Vec<(usize, usize)>,
    pub candidate_counts: Vec<usize>,
    pub commit: Commit,
    pub rewards: RewardBreakdown,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

/// Plays one session on `scene` with answers read from `input`.
pub fn play_session<R: BufRead, W: Write>(
    params: &PolicyParams,
    scene: &Scene,
    input: R,
    mut output: W,
) -> Result<SessionRecord> {
    write!(output, "{}", render_scene(scene))?;
    let mut human = HumanAnswerer { input, output: &mut output };
    let traj = run_episode_with(scene, &mut GreedyPolicy { params }, &mut human, params.spec.max_turns)?;
    let record = session_record(params, scene, &traj)?;
    let c = record.commit;
    writeln!(output, "commit: keyframe {}, box ({},{},{},{}), point ({}, {})", c.keyframe, c.bbox.x1, c.bbox.y1, c.bbox.x2, c.bbox.y2, c.point.0, c.point.1)?;
    let r = record.rewards;
    writeln!(
        output,
        "rewards: iou {} box {} point {} keyframe {:.3} entropy {:.3} efficiency {:.3} total {:.3}{}",
        r.r_iou,
        r.r_box,
        r.r_point,
        r.r_keyframe,
        r.r_ent,
        r.r_eff,
        r.total,
        if r.clamped { " (contradictory answers: candidate count clamped to 1)" } else { "" }
    )?;
    writeln!(output, "J {:.3}  F {:.3}  J&F {:.3}", record.j, record.f, (record.j + record.f) / 2.0)?;
    Ok(record)
}

fn session_record(params: &PolicyParams, scene: &Scene, traj: &Trajectory) -> Result<SessionRecord> {
    let rewards = score(scene, &traj.commit, &traj.trace.counts, &RewardConfig::for_grid(scene.grid, 0.5))?;
    let pred = evalkit::propagate_mask(scene, &traj.commit);
    let gt = MaskSequence::from_boxes(scene.grid, &scene.target().boxes);
    Ok(SessionRecord {
        scene_seed: scene.seed,
        tier: scene.tier,
        checkpoint_step: params.step,
        answers: traj.turns.iter().map(|t| (t.asked_attr, t.answer_value)).collect(),
        candidate_counts: traj.trace.counts.clone(),
        commit: traj.commit,
        rewards,
        j: evalkit::region_similarity_j(&pred, &gt)?,
        f: evalkit::contour_accuracy_f(&pred, &gt, evalkit::default_tolerance(scene.grid))?,
    })
}

/// Re-runs a recorded session with the same answers supplied by a script.
pub fn replay_session(params: &PolicyParams, scene: &Scene, record: &SessionRecord) -> Result<Commit> {
    let mut answers = RecordedAnswers(record.answers.iter().map(|&(_, v)| v).collect::<VecDeque<_>>());
    let traj = run_episode_with(scene, &mut GreedyPolicy { params }, &mut answers, params.spec.max_turns)?;
    Ok(traj.commit)
}

pub fn cmd_play<R: BufRead>(args: &PlayArgs, input: R, out: &mut dyn Write) -> Result<()> {
    let (params, _) = load_checkpoint(&args.checkpoint)?;
    let pack = load_pack(&args.pack)?;
    let scene = pack
        .get(args.index)
        .ok_or_else(|| Error::Data(format!("pack has {} scenes, index {} is out of range", pack.len(), args.index)))?;
    scene.validate(Some(&params.spec.world))?;
    let record = play_session(&params, scene, input, &mut *out)?;
    if let Some(dir) = args.session_log.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut log = fs::OpenOptions::new().create(true).append(true).open(&args.session_log)?;
    writeln!(log, "{}", serde_json::to_string(&record)?)?;
    writeln!(out, "session appended to {}", args.session_log.display())?;
    Ok(())
}

pub fn cmd_inspect(path: &Path, out: &mut dyn Write) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    match ext {
        "jsonl" => {
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let v: Value = serde_json::from_str(line)
                    .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
                writeln!(out, "--- record {}\n{}", i + 1, serde_json::to_string_pretty(&v)?)?;
            }
        }
        "csv" => {
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let headers = rdr.headers()?.clone();
            writeln!(out, "{}", headers.iter().collect::<Vec<_>>().join("\t"))?;
            for rec in rdr.records() {
                writeln!(out, "{}", rec?.iter().collect::<Vec<_>>().join("\t"))?;
            }
        }
        _ => {
            let v: Value =
                serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            match &v {
                Value::Array(_) => {
                    let scenes = load_pack(path)?;
                    writeln!(out, "scenario pack: {} scenes", scenes.len())?;
                    for tier in DifficultyTier::ALL {
                        writeln!(out, "  {:<10} {}", tier.name(), scenes.iter().filter(|s| s.tier == tier).count())?;
                    }
                    for s in &scenes {
                        write!(out, "\n{}", render_scene(s))?;
                    }
                }
                Value::Object(m) if m.contains_key("weights_file") => {
                    let (params, lambda) = load_checkpoint(path)?;
                    let norm = params.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
                    writeln!(out, "checkpoint at step {} (lambda {lambda})", params.step)?;
                    writeln!(
                        out,
                        "inputs {}, hidden {}, vocabulary {}, parameters {}, weight L2 norm {norm:.6}",
                        params.input_dim(),
                        params.spec.hidden,
                        params.output_dim(),
                        params.weights.len()
                    )?;
                    writeln!(out, "{}", serde_json::to_string_pretty(&params.spec)?)?;
                }
                _ => writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?,
            }
        }
    }
    Ok(())
}

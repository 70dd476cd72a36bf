//! Synthetic ambiguous-grounding world.
//!
//! A [`Scene`] is a short "video" of `frames` frames on a `grid`×`grid` canvas.
//! Every object is an axis-aligned rectangle per frame carrying a vector of
//! categorical attributes. The query constrains a subset of attributes and
//! matches at least two objects; only one of them is the intended target.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;

/// One categorical attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain_size: usize,
}

/// Ordered list of attributes. The order indexes every encoding in the crate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSchema {
    pub attributes: Vec<Attribute>,
}

impl Default for AttributeSchema {
    fn default() -> Self {
        Self::new(&[("color", 4), ("shape", 3), ("size", 2), ("motion", 4), ("region", 3)])
    }
}

impl AttributeSchema {
    pub fn new(attrs: &[(&str, usize)]) -> Self {
        Self {
            attributes: attrs
                .iter()
                .map(|(n, d)| Attribute { name: n.to_string(), domain_size: *d })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Config("attribute schema is empty".into()));
        }
        for a in &self.attributes {
            if a.domain_size < 2 {
                return Err(Error::Config(format!(
                    "attribute `{}` has domain size {} (needs at least 2)",
                    a.name, a.domain_size
                )));
            }
        }
        if let Some(m) = self.index_of("motion") {
            if self.attributes[m].domain_size > 5 {
                return Err(Error::Config(
                    "the motion attribute supports at most 5 values (still, right, left, down, up)".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn domain(&self, attr: usize) -> usize {
        self.attributes[attr].domain_size
    }

    /// Sum of all domain sizes, i.e. the width of a concatenated one-hot encoding.
    pub fn total_values(&self) -> usize {
        self.attributes.iter().map(|a| a.domain_size).sum()
    }

    /// Offset of attribute `attr` inside a concatenated one-hot encoding.
    pub fn value_offset(&self, attr: usize) -> usize {
        self.attributes[..attr].iter().map(|a| a.domain_size).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Human-readable label of a value, used by the text renderer.
    pub fn value_label(&self, attr: usize, value: usize) -> String {
        let name = self.attributes[attr].name.as_str();
        let labels: &[&str] = match name {
            "color" => &["red", "green", "blue", "yellow"],
            "shape" => &["round", "square", "triangular"],
            "size" => &["small", "large"],
            "motion" => &["still", "moving-right", "moving-left", "moving-down", "moving-up"],
            "region" => &["left", "center", "right"],
            _ => &[],
        };
        labels
            .get(value)
            .filter(|_| labels.len() >= self.domain(attr))
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("{name}#{value}"))
    }
}

/// Axis-aligned rectangle in grid units, covering pixels `x1..x2` × `y1..y2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

impl Rect {
    pub fn new(x1: i32, y1: i32, x2: i32, y2: i32) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Sorts the corner coordinates so that `x1 <= x2` and `y1 <= y2`.
    pub fn canonical(self) -> Self {
        Self {
            x1: self.x1.min(self.x2),
            y1: self.y1.min(self.y2),
            x2: self.x1.max(self.x2),
            y2: self.y1.max(self.y2),
        }
    }

    pub fn width(&self) -> i64 {
        (self.x2 - self.x1).max(0) as i64
    }

    pub fn height(&self) -> i64 {
        (self.y2 - self.y1).max(0) as i64
    }

    pub fn area(&self) -> i64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) as f64 / 2.0, (self.y1 + self.y2) as f64 / 2.0)
    }

    pub fn intersection_area(&self, other: &Rect) -> i64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0) as i64;
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0) as i64;
        w * h
    }

    pub fn union_area(&self, other: &Rect) -> i64 {
        self.area() + other.area() - self.intersection_area(other)
    }

    /// Closed-form IoU; 0 when the union is empty.
    pub fn iou(&self, other: &Rect) -> f64 {
        let u = self.union_area(other);
        if u == 0 {
            0.0
        } else {
            self.intersection_area(other) as f64 / u as f64
        }
    }

    /// Whether the point lies inside the closed rectangle.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x1 as f64 && x <= self.x2 as f64 && y >= self.y1 as f64 && y <= self.y2 as f64
    }

    pub fn is_degenerate(&self) -> bool {
        self.x2 <= self.x1 || self.y2 <= self.y1
    }
}

/// An object of the scene. Its mask at frame `t` is exactly the filled rectangle `boxes[t]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub slot_id: usize,
    pub attr_values: Vec<usize>,
    pub boxes: Vec<Rect>,
    pub present: bool,
}

impl SceneObject {
    pub fn matches(&self, assignment: &[Option<usize>]) -> bool {
        assignment
            .iter()
            .zip(&self.attr_values)
            .all(|(q, v)| q.is_none_or(|q| q == *v))
    }
}

/// Difficulty tier, a pure function of the initial candidate count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifficultyTier {
    Simple,
    Medium,
    Difficult,
}

impl DifficultyTier {
    pub const ALL: [DifficultyTier; 3] = [Self::Simple, Self::Medium, Self::Difficult];

    pub fn from_candidate_count(m: usize) -> Option<Self> {
        match m {
            0 | 1 => None,
            2 => Some(Self::Simple),
            3..=5 => Some(Self::Medium),
            _ => Some(Self::Difficult),
        }
    }

    /// Smallest candidate count of the tier.
    pub fn min_candidates(self) -> usize {
        match self {
            Self::Simple => 2,
            Self::Medium => 3,
            Self::Difficult => 6,
        }
    }

    /// Largest candidate count of the tier, if bounded.
    pub fn max_candidates(self) -> Option<usize> {
        match self {
            Self::Simple => Some(2),
            Self::Medium => Some(5),
            Self::Difficult => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Simple => "simple",
            Self::Medium => "medium",
            Self::Difficult => "difficult",
        }
    }
}

impl fmt::Display for DifficultyTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Dimensions of the world shared by scene generation and observation encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub schema: AttributeSchema,
    pub frames: usize,
    pub grid: usize,
    pub max_objects: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { schema: AttributeSchema::default(), frames: 6, grid: 64, max_objects: 8 }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        if self.grid < 8 {
            return Err(Error::Config(format!("grid {} is too small (minimum 8)", self.grid)));
        }
        if self.max_objects < 2 {
            return Err(Error::Config("max_objects must be at least 2".into()));
        }
        Ok(())
    }
}

/// A synthetic scenario. Serializes to the scene-file JSON object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub schema: AttributeSchema,
    pub frames: usize,
    pub grid: usize,
    pub objects: Vec<SceneObject>,
    /// Per attribute, the value the query requires, if any.
    pub query: Vec<Option<usize>>,
    pub target_id: usize,
    pub seed: u64,
    pub tier: DifficultyTier,
}

/// An ordered list of `(attribute, value)` answers.
pub type Answers = [(usize, usize)];

impl Scene {
    pub fn object(&self, slot: usize) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.slot_id == slot)
    }

    pub fn target(&self) -> &SceneObject {
        self.object(self.target_id).expect("scene target slot exists")
    }

    /// Initial candidate count M.
    pub fn initial_candidate_count(&self) -> usize {
        candidate_set(self, &[]).len()
    }

    /// Checks the structural invariants and, when given, compatibility with a world.
    pub fn validate(&self, world: Option<&WorldConfig>) -> Result<()> {
        let fail = |msg: String| Err(Error::Data(format!("scene seed {}: {msg}", self.seed)));
        if let Some(w) = world {
            if w.schema != self.schema || w.frames != self.frames || w.grid != self.grid {
                return Err(Error::Config(format!(
                    "scene seed {} does not match the configured schema/frames/grid",
                    self.seed
                )));
            }
            if self.objects.iter().any(|o| o.slot_id >= w.max_objects) {
                return Err(Error::Config(format!(
                    "scene seed {} uses a slot beyond max_objects {}",
                    self.seed, w.max_objects
                )));
            }
        }
        if self.query.len() != self.schema.len() {
            return fail("query length differs from the schema".into());
        }
        for o in &self.objects {
            if o.attr_values.len() != self.schema.len()
                || o.attr_values.iter().enumerate().any(|(a, &v)| v >= self.schema.domain(a))
            {
                return fail(format!("object {} has invalid attributes", o.slot_id));
            }
            if o.present {
                if o.boxes.len() != self.frames {
                    return fail(format!("object {} has {} boxes", o.slot_id, o.boxes.len()));
                }
                let s = self.grid as i32;
                for b in &o.boxes {
                    if b.is_degenerate() || b.x1 < 0 || b.y1 < 0 || b.x2 > s || b.y2 > s {
                        return fail(format!("object {} has an invalid box {b:?}", o.slot_id));
                    }
                }
            }
        }
        let c0 = candidate_set(self, &[]);
        if c0.len() < 2 {
            return fail(format!("query matches {} objects (needs at least 2)", c0.len()));
        }
        if !c0.contains(&self.target_id) {
            return fail("target is not a query candidate".into());
        }
        if DifficultyTier::from_candidate_count(c0.len()) != Some(self.tier) {
            return fail(format!("tier {} disagrees with M = {}", self.tier, c0.len()));
        }
        Ok(())
    }
}

/// Slot ids of present objects matching the query and every answer.
pub fn candidate_set(scene: &Scene, answered: &Answers) -> Vec<usize> {
    debug_assert!(answered.iter().all(|(a, _)| *a < scene.schema.len()));
    scene
        .objects
        .iter()
        .filter(|o| o.present && o.matches(&scene.query))
        .filter(|o| answered.iter().all(|&(a, v)| o.attr_values[a] == v))
        .map(|o| o.slot_id)
        .collect()
}

const GENERATION_ATTEMPTS: usize = 256;

/// Generates a scene of the given tier. Pure function of its arguments.
pub fn generate_scene(world: &WorldConfig, tier: DifficultyTier, seed: u64) -> Result<Scene> {
    world.validate()?;
    let n_max = world.max_objects;
    let lo = tier.min_candidates();
    let hi = tier.max_candidates().unwrap_or(n_max).min(n_max);
    if lo > n_max {
        return Err(Error::Generation(format!(
            "tier {tier} needs at least {lo} object slots but max_objects = {n_max}"
        )));
    }
    let schema = &world.schema;
    if schema.len() < 2 {
        return Err(Error::Generation(
            "scene generation needs at least two attributes (one for the query, one to disambiguate)".into(),
        ));
    }
    let mut rng = seeding::rng(&[seeding::TAG_SCENE, seed, tier as u64]);
    let geometry = Geometry::new(world);

    for _ in 0..GENERATION_ATTEMPTS {
        let m = rng.gen_range(lo..=hi);
        let a_count = schema.len();

        // Query constraints: one or two attributes, always leaving at least one free.
        let q = rng.gen_range(1..=2.min(a_count - 1));
        let mut attr_order: Vec<usize> = (0..a_count).collect();
        attr_order.shuffle(&mut rng);
        let mut query = vec![None; a_count];
        for &a in &attr_order[..q] {
            query[a] = Some(rng.gen_range(0..schema.domain(a)));
        }
        let free: Vec<usize> = (0..a_count).filter(|a| query[*a].is_none()).collect();

        let target: Vec<usize> = (0..a_count)
            .map(|a| query[a].unwrap_or_else(|| rng.gen_range(0..schema.domain(a))))
            .collect();
        let mut vectors = vec![target.clone()];
        for _ in 1..m {
            // Look-alike: copy the target, re-draw each free attribute with probability 1/2.
            let mut v = target.clone();
            for &a in &free {
                if rng.gen_bool(0.5) {
                    v[a] = rng.gen_range(0..schema.domain(a));
                }
            }
            if v == target {
                let a = *free.choose(&mut rng).expect("at least one free attribute");
                v[a] = other_value(&mut rng, schema.domain(a), target[a]);
            }
            vectors.push(v);
        }
        let constrained: Vec<usize> = (0..a_count).filter(|a| query[*a].is_some()).collect();
        for _ in m..n_max {
            if rng.gen_bool(0.5) {
                let mut v: Vec<usize> =
                    (0..a_count).map(|a| rng.gen_range(0..schema.domain(a))).collect();
                if constrained.iter().all(|&a| Some(v[a]) == query[a]) {
                    let a = *constrained.choose(&mut rng).expect("query has a constraint");
                    v[a] = other_value(&mut rng, schema.domain(a), v[a]);
                }
                vectors.push(v);
            }
        }

        let mut slots: Vec<usize> = (0..n_max).collect();
        slots.shuffle(&mut rng);
        let mut objects = Vec::with_capacity(vectors.len());
        let mut feasible = true;
        for (v, &slot) in vectors.iter().zip(&slots) {
            match geometry.draw(schema, v, &mut rng) {
                Some(boxes) => objects.push(SceneObject {
                    slot_id: slot,
                    attr_values: v.clone(),
                    boxes,
                    present: true,
                }),
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            continue;
        }
        let target_id = slots[0];
        objects.sort_by_key(|o| o.slot_id);
        let scene = Scene {
            schema: schema.clone(),
            frames: world.frames,
            grid: world.grid,
            objects,
            query,
            target_id,
            seed,
            tier,
        };
        debug_assert_eq!(scene.initial_candidate_count(), m);
        return Ok(scene);
    }
    Err(Error::Generation(format!(
        "could not place objects for tier {tier} on a {}x{} grid over {} frames",
        world.grid, world.grid, world.frames
    )))
}

fn other_value(rng: &mut ChaCha8Rng, domain: usize, current: usize) -> usize {
    let v = rng.gen_range(0..domain - 1);
    if v >= current {
        v + 1
    } else {
        v
    }
}

/// Box placement honouring the size, motion and region attributes when the schema has them.
struct Geometry {
    grid: i32,
    frames: i32,
    min_w: i32,
    max_w: i32,
    max_step: i32,
    max_jitter: i32,
}

impl Geometry {
    fn new(world: &WorldConfig) -> Self {
        let s = world.grid as i32;
        let min_w = (s / 10).max(2);
        let max_w = (s / 4).max(min_w);
        Self {
            grid: s,
            frames: world.frames as i32,
            min_w,
            max_w,
            max_step: (s / 32).max(1),
            max_jitter: (s / 64).max(1),
        }
    }

    /// Width range of size level `z` out of `levels`.
    fn size_band(&self, z: usize, levels: usize) -> (i32, i32) {
        let span = self.max_w - self.min_w + 1;
        let lo = self.min_w + (z as i32 * span) / levels as i32;
        let hi = self.min_w + ((z as i32 + 1) * span) / levels as i32 - 1;
        (lo, hi.max(lo))
    }

    fn draw(&self, schema: &AttributeSchema, v: &[usize], rng: &mut ChaCha8Rng) -> Option<Vec<Rect>> {
        let (w_lo, w_hi) = match schema.index_of("size") {
            Some(a) => self.size_band(v[a], schema.domain(a)),
            None => (self.min_w, self.max_w),
        };
        let w = rng.gen_range(w_lo..=w_hi);
        let h = rng.gen_range(w_lo..=w_hi);
        let motion = schema.index_of("motion").map(|a| v[a]).unwrap_or(0);
        let step = if motion == 0 { 0 } else { rng.gen_range(1..=self.max_step) };
        let (dx, dy) = match motion {
            1 => (step, 0),
            2 => (-step, 0),
            3 => (0, step),
            4 => (0, -step),
            _ => (0, 0),
        };
        let region = schema.index_of("region").map(|a| (v[a], schema.domain(a)));
        let jitter: Vec<i32> = (0..self.frames).map(|_| rng.gen_range(0..=self.max_jitter)).collect();

        // Try the drawn step first, then slower motion, then the smallest size of the band.
        let steps: Vec<i32> = (1..=step.max(1)).rev().collect();
        for &w in &[w, w_lo] {
            for &sp in &steps {
                let (dx, dy) = (dx.signum() * sp, dy.signum() * sp);
                let left = self.start_range(w, dx);
                let top = self.start_range(h.min(w_hi), dy);
                let lefts: Vec<i32> = match (left, region) {
                    (Some((lo, hi)), Some((r, levels))) => (lo..=hi)
                        .filter(|&l| {
                            let c2 = (2 * l + w) as i64 * levels as i64;
                            let s2 = 2 * self.grid as i64;
                            c2 >= r as i64 * s2 && c2 < (r as i64 + 1) * s2
                        })
                        .collect(),
                    (Some((lo, hi)), None) => (lo..=hi).collect(),
                    _ => Vec::new(),
                };
                let (Some(&l0), Some((t_lo, t_hi))) = (lefts.choose(rng), top) else {
                    continue;
                };
                let t0 = rng.gen_range(t_lo..=t_hi);
                let hh = h.min(w_hi);
                let boxes = (0..self.frames)
                    .map(|t| {
                        let j = jitter[t as usize];
                        let l = l0 + dx * t;
                        let tp = t0 + dy * t;
                        Rect::new(l - j, tp - j, l + w + j, tp + hh + j)
                    })
                    .collect();
                return Some(boxes);
            }
        }
        None
    }

    /// Feasible frame-0 start coordinates keeping every frame inside `[0, grid - 1]`.
    fn start_range(&self, extent: i32, delta: i32) -> Option<(i32, i32)> {
        let travel = delta * (self.frames - 1);
        let lo = self.max_jitter - travel.min(0);
        let hi = self.grid - 1 - extent - self.max_jitter - travel.max(0);
        (lo <= hi).then_some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> WorldConfig {
        WorldConfig::default()
    }

    #[test]
    fn simple_tier_has_two_candidates() {
        let s = generate_scene(&world(), DifficultyTier::Simple, 7).unwrap();
        assert_eq!(s.initial_candidate_count(), 2);
        s.validate(Some(&world())).unwrap();
    }

    #[test]
    fn difficult_tier_has_six_or_more() {
        let s = generate_scene(&world(), DifficultyTier::Difficult, 1).unwrap();
        let m = s.initial_candidate_count();
        assert!((6..=8).contains(&m), "M = {m}");
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(&world(), DifficultyTier::Medium, 42).unwrap();
        let b = generate_scene(&world(), DifficultyTier::Medium, 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn infeasible_tier_names_the_bound() {
        let w = WorldConfig { max_objects: 5, ..world() };
        let err = generate_scene(&w, DifficultyTier::Difficult, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("at least 6") && msg.contains("max_objects = 5"), "{msg}");
    }

    #[test]
    fn tier_is_a_function_of_m() {
        assert_eq!(DifficultyTier::from_candidate_count(1), None);
        assert_eq!(DifficultyTier::from_candidate_count(2), Some(DifficultyTier::Simple));
        for m in 3..=5 {
            assert_eq!(DifficultyTier::from_candidate_count(m), Some(DifficultyTier::Medium));
        }
        assert_eq!(DifficultyTier::from_candidate_count(6), Some(DifficultyTier::Difficult));
        assert_eq!(DifficultyTier::from_candidate_count(9), Some(DifficultyTier::Difficult));
    }

    #[test]
    fn geometry_respects_motion_region_and_grid() {
        let w = world();
        let motion = w.schema.index_of("motion").unwrap();
        let region = w.schema.index_of("region").unwrap();
        for seed in 0..300 {
            for tier in DifficultyTier::ALL {
                let s = generate_scene(&w, tier, seed).unwrap();
                s.validate(Some(&w)).unwrap();
                for o in &s.objects {
                    let cx: Vec<f64> = o.boxes.iter().map(|b| b.center().0).collect();
                    let cy: Vec<f64> = o.boxes.iter().map(|b| b.center().1).collect();
                    let inc = |v: &[f64]| v.windows(2).all(|p| p[1] > p[0]);
                    let dec = |v: &[f64]| v.windows(2).all(|p| p[1] < p[0]);
                    let flat = |v: &[f64]| v.windows(2).all(|p| p[1] == p[0]);
                    match o.attr_values[motion] {
                        0 => assert!(flat(&cx) && flat(&cy)),
                        1 => assert!(inc(&cx) && flat(&cy)),
                        2 => assert!(dec(&cx) && flat(&cy)),
                        3 => assert!(inc(&cy) && flat(&cx)),
                        _ => unreachable!(),
                    }
                    let third = (cx[0] * 3.0 / s.grid as f64).floor() as usize;
                    assert_eq!(third, o.attr_values[region], "seed {seed} slot {}", o.slot_id);
                    for b in &o.boxes {
                        assert!(b.x2 < s.grid as i32 && b.y2 < s.grid as i32);
                    }
                }
            }
        }
    }

    #[test]
    fn target_is_separable_from_every_candidate() {
        let w = world();
        for seed in 0..500 {
            let s = generate_scene(&w, DifficultyTier::Difficult, seed).unwrap();
            let t = s.target();
            let full: Vec<(usize, usize)> = t.attr_values.iter().copied().enumerate().collect();
            assert_eq!(candidate_set(&s, &full), vec![s.target_id]);
        }
    }

    #[test]
    fn contradictory_answer_empties_the_set() {
        let s = generate_scene(&world(), DifficultyTier::Medium, 3).unwrap();
        let (a, v) = s
            .query
            .iter()
            .enumerate()
            .find_map(|(a, q)| q.map(|v| (a, v)))
            .unwrap();
        let wrong = (v + 1) % s.schema.domain(a);
        assert!(candidate_set(&s, &[(a, wrong)]).is_empty());
    }

    #[test]
    fn small_grid_still_generates() {
        let w = WorldConfig { grid: 16, ..world() };
        for seed in 0..50 {
            generate_scene(&w, DifficultyTier::Simple, seed).unwrap().validate(Some(&w)).unwrap();
        }
    }

    #[test]
    fn schema_rejects_unary_domains() {
        assert!(AttributeSchema::new(&[("a", 1), ("b", 3)]).validate().is_err());
        AttributeSchema::default().validate().unwrap();
        assert_eq!(AttributeSchema::default().total_values(), 16);
    }
}

//! Seeded synthetic users with known ground truth.
//!
//! A [`WorkflowProfile`] is an order-1 Markov chain over workflow states.
//! Each state belongs to one application, emits action templates from its
//! own distribution (or, with probability `noise`, uniformly from all of
//! them) and waits an exponentially distributed delay before each action.
//! [`generate_session`] turns a run of the chain into raw input events over a
//! rendered [`SyntheticScene`], and [`oracle_accuracy`] estimates how well
//! the best possible predictor that knows the profile can do.

mod scene;

use std::collections::BTreeSet;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::corpus::{records_from_events, ActionRecord};
use crate::error::{Error, Result};
use crate::events::{EventKind, InputEvent};
use crate::geom::{Point, Rect};
use crate::patch::PatchId;
use crate::tokenizer::{elapsed_bucket, ActionKind, ScrollDirection, UserAction, ELAPSED_BUCKET_MS, MAX_ELAPSED_BUCKET};

pub use scene::{render_scene, SceneButton, SceneDetector, SyntheticScene, TITLE_BAR_PX};

/// Shortest gap between two generated actions. Longer than the scroll
/// coalescing window plus the longest event burst, so actions never merge.
pub const MIN_GAP_MS: i64 = 400;
pub const ORACLE_STEPS: usize = 200_000;
const START_MS: i64 = 1_700_000_000_000;
const ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowProfile {
    pub states: Vec<String>,
    /// Row-stochastic, `states x states`.
    pub transition: Vec<Vec<f64>>,
    /// Action templates; `button#<n>` refers to scene button `n`.
    pub actions: Vec<ActionKind>,
    /// Row-stochastic, `states x actions`.
    pub emissions: Vec<Vec<f64>>,
    pub apps: Vec<String>,
    /// Mean delay before an action, in seconds.
    pub dwell: Vec<f64>,
    pub noise: f64,
    /// Start distribution; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

fn check_row(row: &[f64], len: usize, what: &str) -> Result<()> {
    if row.len() != len {
        return Err(Error::Profile(format!("{what}: expected {len} entries, found {}", row.len())));
    }
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Profile(format!("{what}: entries must be finite and non-negative")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::Profile(format!("{what}: sums to {sum}, not 1")));
    }
    Ok(())
}

impl WorkflowProfile {
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| Error::Profile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let (s, a) = (self.states.len(), self.actions.len());
        if s == 0 || a == 0 {
            return Err(Error::Profile("need at least one state and one action".into()));
        }
        if self.transition.len() != s || self.emissions.len() != s || self.apps.len() != s || self.dwell.len() != s {
            return Err(Error::Profile("transition, emissions, apps and dwell need one row per state".into()));
        }
        for (i, row) in self.transition.iter().enumerate() {
            check_row(row, s, &format!("transition row {i}"))?;
        }
        for (i, row) in self.emissions.iter().enumerate() {
            check_row(row, a, &format!("emission row {i}"))?;
        }
        if let Some(init) = &self.initial {
            check_row(init, s, "initial")?;
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Profile(format!("noise {} outside [0, 1]", self.noise)));
        }
        if let Some(d) = self.dwell.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Profile(format!("dwell {d} must be positive")));
        }
        let distinct: BTreeSet<&ActionKind> = self.actions.iter().collect();
        if distinct.len() != a {
            return Err(Error::Profile("duplicate action template".into()));
        }
        Ok(())
    }

    /// Fails unless every state can reach every other state.
    pub fn check_irreducible(&self) -> Result<()> {
        let n = self.states.len();
        for start in 0..n {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for (j, &p) in self.transition[i].iter().enumerate() {
                    if p > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            if let Some(j) = seen.iter().position(|s| !s) {
                return Err(Error::Profile(format!(
                    "reducible chain: state {} cannot reach {}",
                    self.states[start], self.states[j]
                )));
            }
        }
        Ok(())
    }

    /// Scene button ids the profile can click, ascending.
    pub fn button_ids(&self) -> Vec<u64> {
        let ids: BTreeSet<u64> = self.actions.iter().filter_map(|a| a.patch_id()).map(|p| p.0).collect();
        ids.into_iter().collect()
    }

    /// Probability of emitting action `a` in state `s`, noise included.
    pub fn emission_prob(&self, s: usize, a: usize) -> f64 {
        (1.0 - self.noise) * self.emissions[s][a] + self.noise / self.actions.len() as f64
    }

    /// Probability that the delay before an action in state `s` falls in
    /// elapsed bucket `b`.
    pub fn bucket_prob(&self, s: usize, b: u8) -> f64 {
        let width = ELAPSED_BUCKET_MS as f64 / 1000.0;
        let surv = |k: u8| (-(f64::from(k) * width) / self.dwell[s]).exp();
        if b >= MAX_ELAPSED_BUCKET {
            surv(MAX_ELAPSED_BUCKET)
        } else {
            surv(b) - surv(b + 1)
        }
    }

    /// The scene every session of this profile is rendered on.
    pub fn scene(&self) -> SyntheticScene {
        SyntheticScene::random(&self.button_ids(), 4, (240, 160), 0x5ce7e)
    }
}

/// Samplers for one profile.
struct Chain<'a> {
    profile: &'a WorkflowProfile,
    initial: WeightedIndex<f64>,
    transition: Vec<WeightedIndex<f64>>,
    emissions: Vec<WeightedIndex<f64>>,
    dwell: Vec<Exp<f64>>,
}

impl<'a> Chain<'a> {
    fn new(profile: &'a WorkflowProfile) -> Result<Self> {
        profile.validate()?;
        let weights = |row: &[f64]| WeightedIndex::new(row).map_err(|e| Error::Profile(e.to_string()));
        let n = profile.states.len();
        let uniform = vec![1.0 / n as f64; n];
        Ok(Self {
            profile,
            initial: weights(profile.initial.as_deref().unwrap_or(&uniform))?,
            transition: profile.transition.iter().map(|r| weights(r)).collect::<Result<_>>()?,
            emissions: profile.emissions.iter().map(|r| weights(r)).collect::<Result<_>>()?,
            dwell: profile
                .dwell
                .iter()
                .map(|&d| Exp::new(1.0 / d).map_err(|e| Error::Profile(e.to_string())))
                .collect::<Result<_>>()?,
        })
    }

    fn next_state(&self, prev: Option<usize>, rng: &mut ChaCha8Rng) -> usize {
        match prev {
            None => self.initial.sample(rng),
            Some(s) => self.transition[s].sample(rng),
        }
    }

    fn emit(&self, state: usize, rng: &mut ChaCha8Rng) -> usize {
        if rng.gen_bool(self.profile.noise) {
            rng.gen_range(0..self.profile.actions.len())
        } else {
            self.emissions[state].sample(rng)
        }
    }

    fn gap_ms(&self, state: usize, rng: &mut ChaCha8Rng) -> i64 {
        ((self.dwell[state].sample(rng) * 1000.0).round() as i64).max(MIN_GAP_MS)
    }
}

/// One generated session with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSession {
    pub events: Vec<InputEvent>,
    /// Ground-truth actions; widget clicks carry the scene button id.
    pub actions: Vec<UserAction>,
    pub states: Vec<usize>,
    pub scene: SyntheticScene,
    /// Name the events use to refer to the session's screenshot.
    pub shot: String,
}

impl GeneratedSession {
    /// Maps a click to the scene button under it, as the id ground truth uses.
    pub fn ground_truth_resolver(&self) -> impl FnMut(&InputEvent) -> Option<PatchId> + '_ {
        move |ev: &InputEvent| self.scene.button_at(ev.cursor).map(|b| PatchId(b.id))
    }

    /// Tokenized records using scene ground truth for widget identity.
    pub fn records(&self) -> Result<Vec<ActionRecord>> {
        records_from_events(&self.events, self.ground_truth_resolver())
    }
}

fn inset_point(r: Rect, inset: i32, rng: &mut ChaCha8Rng) -> Point {
    Point::new(
        rng.gen_range(r.x + inset..=r.x + r.w - inset),
        rng.gen_range(r.y + inset..=r.y + r.h - inset),
    )
}

pub fn screenshot_name(seed: u64) -> String {
    format!("scene-{seed:016x}.ppm")
}

/// Runs the profile for `length` actions and renders them as input events.
pub fn generate_session(profile: &WorkflowProfile, length: usize, seed: u64) -> Result<GeneratedSession> {
    if length < 1 {
        return Err(Error::InvalidArgument("session length must be at least 1".into()));
    }
    let chain = Chain::new(profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = profile.scene();
    let scene = base.with_window_at(
        rng.gen_range(0..=base.width - base.window.w),
        rng.gen_range(0..=base.height - base.window.h),
    );
    let shot = screenshot_name(seed);
    let win = scene.window;

    let mut events = Vec::with_capacity(length * 4);
    let mut actions = Vec::with_capacity(length);
    let mut states = Vec::with_capacity(length);
    let mut cursor = Point::new(win.x + win.w / 2, win.y + win.h / 2);
    let mut t = START_MS;
    let mut state = None;
    for _ in 0..length {
        let s = chain.next_state(state, &mut rng);
        state = Some(s);
        t += chain.gap_ms(s, &mut rng);
        let kind = profile.actions[chain.emit(s, &mut rng)].clone();
        let app = profile.apps[s].as_str();
        let ev = |dt: i64, kind: EventKind, cursor: Point| InputEvent::new(t + dt, kind).at(cursor).in_app(app, win);
        match &kind {
            ActionKind::Keystroke { key, modifiers } => {
                for m in modifiers.iter() {
                    events.push(ev(0, EventKind::KeyDown(m.name().into()), cursor));
                }
                events.push(ev(0, EventKind::KeyDown(key.clone()), cursor));
                events.push(ev(40, EventKind::KeyUp(key.clone()), cursor));
                for m in modifiers.iter().collect::<Vec<_>>().into_iter().rev() {
                    events.push(ev(50, EventKind::KeyUp(m.name().into()), cursor));
                }
            }
            ActionKind::ButtonClick { patch_id, button } => {
                let b = scene
                    .button(patch_id.0)
                    .ok_or_else(|| Error::Profile(format!("no scene button {patch_id}")))?;
                cursor = inset_point(scene.absolute(b), 2, &mut rng);
                let mut down = ev(0, EventKind::MouseDown(*button), cursor);
                down.screenshot = Some(shot.clone());
                events.push(down);
                events.push(ev(70, EventKind::MouseUp(*button), cursor));
            }
            ActionKind::GenericClick { button } => {
                cursor = inset_point(scene.title_bar(), 4, &mut rng);
                let mut down = ev(0, EventKind::MouseDown(*button), cursor);
                down.screenshot = Some(shot.clone());
                events.push(down);
                events.push(ev(70, EventKind::MouseUp(*button), cursor));
            }
            ActionKind::Scroll { direction } => {
                let sign = if *direction == ScrollDirection::Up { 1 } else { -1 };
                for k in 0..rng.gen_range(1..=3) {
                    events.push(ev(50 * k, EventKind::Scroll(sign * rng.gen_range(1..=3)), cursor));
                }
            }
        }
        actions.push(UserAction::new(kind, t));
        states.push(s);
    }
    Ok(GeneratedSession { events, actions, states, scene, shot })
}

/// `sessions` sessions of `length` actions; session `i` uses seed `seed + i`.
pub fn generate_corpus(profile: &WorkflowProfile, sessions: usize, length: usize, seed: u64) -> Result<Vec<GeneratedSession>> {
    (0..sessions as u64).map(|i| generate_session(profile, length, seed.wrapping_add(i))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub accuracy: f64,
    pub std_error: f64,
    pub steps: usize,
}

/// Monte Carlo estimate of the top-1 accuracy of the Bayes-optimal predictor
/// with [`ORACLE_STEPS`] simulated predictions.
pub fn oracle_accuracy(profile: &WorkflowProfile, seed: u64) -> Result<OracleEstimate> {
    oracle_accuracy_with(profile, ORACLE_STEPS, seed)
}

/// The optimal predictor sees what a model sees: past actions, their apps
/// and their elapsed-time buckets. It tracks the posterior over the current
/// state with a forward filter and predicts the most probable next action.
pub fn oracle_accuracy_with(profile: &WorkflowProfile, steps: usize, seed: u64) -> Result<OracleEstimate> {
    let chain = Chain::new(profile)?;
    profile.check_irreducible()?;
    if steps < 1 {
        return Err(Error::InvalidArgument("oracle needs at least one step".into()));
    }
    let n = profile.states.len();
    let na = profile.actions.len();
    let emit: Vec<Vec<f64>> = (0..n).map(|s| (0..na).map(|a| profile.emission_prob(s, a)).collect()).collect();
    let bucket: Vec<Vec<f64>> = (0..n).map(|s| (0..=MAX_ELAPSED_BUCKET).map(|b| profile.bucket_prob(s, b)).collect()).collect();
    let initial: Vec<f64> = profile.initial.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = chain.next_state(None, &mut rng);
    let mut action = chain.emit(state, &mut rng);
    // posterior over the state that produced the latest action
    let mut post: Vec<f64> = (0..n)
        .map(|s| initial[s] * emit[s][action] * f64::from(profile.apps[s] == profile.apps[state]))
        .collect();
    normalize(&mut post);
    let mut prior = vec![0.0; n];
    let mut predictive = vec![0.0; na];
    let mut correct = 0usize;
    for _ in 0..steps {
        for (j, p) in prior.iter_mut().enumerate() {
            *p = (0..n).map(|i| post[i] * profile.transition[i][j]).sum();
        }
        predictive.iter_mut().for_each(|p| *p = 0.0);
        for (s, &ps) in prior.iter().enumerate() {
            if ps > 0.0 {
                for (a, p) in predictive.iter_mut().enumerate() {
                    *p += ps * emit[s][a];
                }
            }
        }
        let guess = predictive
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (a, &p)| if p > best.1 { (a, p) } else { best })
            .0;

        state = chain.next_state(Some(state), &mut rng);
        let b = elapsed_bucket(chain.gap_ms(state, &mut rng));
        action = chain.emit(state, &mut rng);
        correct += usize::from(guess == action);

        let app = &profile.apps[state];
        for s in 0..n {
            post[s] = prior[s] * emit[s][action] * bucket[s][usize::from(b)] * f64::from(&profile.apps[s] == app);
        }
        if !normalize(&mut post) {
            // numerically impossible observation; restart from the prior
            post.copy_from_slice(&prior);
        }
    }
    let acc = correct as f64 / steps as f64;
    Ok(OracleEstimate { accuracy: acc, std_error: (acc * (1.0 - acc) / steps as f64).sqrt(), steps })
}

fn normalize(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

/// Accuracy of always predicting the most frequent action of the stationary
/// chain, estimated over `steps` simulated actions.
pub fn marginal_baseline(profile: &WorkflowProfile, steps: usize, seed: u64) -> Result<f64> {
    let chain = Chain::new(profile)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; profile.actions.len()];
    let mut state = None;
    for _ in 0..steps {
        let s = chain.next_state(state, &mut rng);
        state = Some(s);
        counts[chain.emit(s, &mut rng)] += 1;
    }
    Ok(counts.iter().copied().max().unwrap_or(0) as f64 / steps.max(1) as f64)
}

/// The 8-state, 40-action benchmark with 10 % noise and one app per state.
pub fn benchmark_profile() -> WorkflowProfile {
    let keys = [
        "CTRL+C", "CTRL+V", "CTRL+S", "CTRL+Z", "CTRL+F", "ALT+TAB", "ENTER", "TAB", "SPACE", "BACKSPACE",
        "ESCAPE", "DELETE", "CTRL+SHIFT+T", "SHIFT+TAB", "F5", "UP", "DOWN", "LEFT", "RIGHT", "CTRL+A",
    ];
    let mut actions: Vec<ActionKind> = keys.iter().map(|k| k.parse().expect("valid label")).collect();
    actions.extend((0..16).map(|i| ActionKind::button(PatchId(i))));
    for label in ["scroll/up", "scroll/down", "click/left", "click/right"] {
        actions.push(label.parse().expect("valid label"));
    }
    let na = actions.len();
    let n = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let weights = [0.5, 0.2, 0.1, 0.08, 0.07, 0.05];
    let emissions = (0..n)
        .map(|s| {
            let mut row = vec![0.0; na];
            // five actions of its own plus one shared with another state
            for (k, w) in weights.iter().enumerate().take(5) {
                row[s * 5 + k] = *w;
            }
            let mut extra = rng.gen_range(0..na);
            while row[extra] > 0.0 {
                extra = rng.gen_range(0..na);
            }
            row[extra] = weights[5];
            row
        })
        .collect();
    let transition = (0..n)
        .map(|s| {
            let mut row = vec![0.0; n];
            row[(s + 1) % n] += 0.7;
            row[s] += 0.1;
            row[rng.gen_range(0..n)] += 0.1;
            row[rng.gen_range(0..n)] += 0.1;
            row
        })
        .collect();
    let apps = ["mail", "browser", "editor", "terminal", "files", "chat", "calendar", "spreadsheet"];
    WorkflowProfile {
        states: (0..n).map(|s| format!("s{s}")).collect(),
        transition,
        actions,
        emissions,
        apps: apps.iter().map(|a| a.to_string()).collect(),
        dwell: vec![2.0, 4.0, 8.0, 15.0, 3.0, 6.0, 12.0, 25.0],
        noise: 0.1,
        initial: None,
    }
}

const BUNDLED: [(&str, &str); 3] = [
    ("default", include_str!("../../profiles/default.json")),
    ("cycle3", include_str!("../../profiles/cycle3.json")),
    ("uniform4", include_str!("../../profiles/uniform4.json")),
];

/// Names of the profiles shipped in `profiles/`.
pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}

pub fn bundled_profile(name: &str) -> Option<WorkflowProfile> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| WorkflowProfile::from_json(text).expect("bundled profile is valid"))
}

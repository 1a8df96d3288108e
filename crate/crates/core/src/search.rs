//! Budgeted search over face-extrusion sequences guided by a policy.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Policy;
use crate::brep::FaceGraph;
use crate::env::{Env, EnvError, FaceExtrude, Snapshot, StepResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Procedure {
    Rollout,
    Beam,
    BestFirst,
}

impl Procedure {
    pub fn as_str(self) -> &'static str {
        match self {
            Procedure::Rollout => "rollout",
            Procedure::Beam => "beam",
            Procedure::BestFirst => "best_first",
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Procedure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rollout" => Ok(Procedure::Rollout),
            "beam" => Ok(Procedure::Beam),
            "best_first" | "best-first" => Ok(Procedure::BestFirst),
            _ => Err(format!("unknown search procedure `{s}` (expected rollout, beam or best_first)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub procedure: Procedure,
    /// Environment steps available to the search.
    pub budget: usize,
    /// Initial beam width.
    pub beam_width: usize,
    /// Extensions enqueued per best-first expansion.
    pub fan_out: usize,
    pub time_limit: Duration,
    pub seed: u64,
}

impl SearchConfig {
    pub fn new(procedure: Procedure, budget: usize, seed: u64) -> Self {
        SearchConfig { procedure, budget, beam_width: 5, fan_out: 16, time_limit: Duration::from_secs(600), seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    /// Best IoU seen after each charged step; always `budget` long.
    pub best_iou_by_step: Vec<f64>,
    /// Zero-based index of the step that produced an exact reconstruction.
    pub exact_found_at: Option<usize>,
    pub winning_sequence: Option<Vec<FaceExtrude>>,
    pub steps_charged: usize,
    pub timed_out: bool,
    /// Beam search only: width and steps charged of every run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beam_runs: Vec<(usize, usize)>,
}

impl SearchReport {
    pub fn best_iou(&self) -> f64 {
        self.best_iou_by_step.last().copied().unwrap_or(0.0)
    }

    /// Best IoU within the first `steps` steps.
    pub fn iou_at(&self, steps: usize) -> f64 {
        match steps.min(self.best_iou_by_step.len()) {
            0 => 0.0,
            s => self.best_iou_by_step[s - 1],
        }
    }

    pub fn exact_within(&self, steps: usize) -> bool {
        self.exact_found_at.is_some_and(|i| i < steps)
    }
}

/// Maximum sequence length: half the planar faces, rounded up, at least 2.
pub fn rollout_cap(target: &FaceGraph) -> usize {
    target.planar_count().div_ceil(2).max(2)
}

enum Outcome {
    Continue(StepResult),
    Exact,
    Exhausted,
}

/// Charges every environment step and keeps the IoU series.
struct Tracker<'a> {
    env: &'a mut Env,
    budget: usize,
    charged: usize,
    best: f64,
    series: Vec<f64>,
    exact_at: Option<usize>,
    winner: Option<Vec<FaceExtrude>>,
    beam_runs: Vec<(usize, usize)>,
    deadline: Instant,
    timed_out: bool,
}

impl<'a> Tracker<'a> {
    fn new(env: &'a mut Env, config: &SearchConfig) -> Self {
        Tracker {
            env,
            budget: config.budget,
            charged: 0,
            best: 0.0,
            series: Vec::with_capacity(config.budget),
            exact_at: None,
            winner: None,
            beam_runs: Vec::new(),
            deadline: Instant::now() + config.time_limit,
            timed_out: false,
        }
    }

    fn done(&mut self) -> bool {
        if self.exact_at.is_some() || self.charged >= self.budget {
            return true;
        }
        if Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        self.timed_out
    }

    /// Takes one step; `sequence` is the full action list ending in `a`.
    fn step(&mut self, a: &FaceExtrude, sequence: impl FnOnce() -> Vec<FaceExtrude>) -> Result<Outcome, EnvError> {
        if self.done() {
            return Ok(Outcome::Exhausted);
        }
        let r = self.env.step_face_extrude(a)?;
        self.charged += 1;
        self.best = self.best.max(r.iou.unwrap_or(0.0));
        if r.exact {
            self.best = 1.0;
            self.series.push(1.0);
            self.exact_at = Some(self.charged - 1);
            self.winner = Some(sequence());
            return Ok(Outcome::Exact);
        }
        self.series.push(self.best);
        Ok(Outcome::Continue(r))
    }

    fn finish(mut self) -> SearchReport {
        let fill = self.best;
        self.series.resize(self.budget, fill);
        SearchReport {
            best_iou_by_step: self.series,
            exact_found_at: self.exact_at,
            winning_sequence: self.winner,
            steps_charged: self.charged,
            timed_out: self.timed_out,
            beam_runs: self.beam_runs,
        }
    }
}

/// Runs the configured procedure against the env's target.
pub fn search(env: &mut Env, policy: &mut dyn Policy, config: &SearchConfig) -> Result<SearchReport, EnvError> {
    match config.procedure {
        Procedure::Rollout => random_rollouts(env, policy, config),
        Procedure::Beam => beam_search(env, policy, config),
        Procedure::BestFirst => best_first(env, policy, config),
    }
}

fn prepare(env: &mut Env, policy: &mut dyn Policy) -> Result<Option<(usize, FaceGraph)>, EnvError> {
    let target = env.target_graph().ok_or(EnvError::NoTarget)?.clone();
    let start = env.revert_to_target()?.current_graph;
    if policy.set_target(&target).is_err() {
        return Ok(None);
    }
    Ok(Some((rollout_cap(&target), start)))
}

/// Repeated policy rollouts of at most the rollout cap, reverting between them.
pub fn random_rollouts(env: &mut Env, policy: &mut dyn Policy, config: &SearchConfig) -> Result<SearchReport, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let Some((cap, empty)) = prepare(env, policy)? else {
        return Ok(Tracker::new(env, config).finish());
    };
    let mut t = Tracker::new(env, config);
    'outer: while !t.done() {
        t.env.revert_to_target()?;
        let mut graph = empty.clone();
        let mut seq = Vec::with_capacity(cap);
        for depth in 0..cap {
            let Ok(d) = policy.distribution(&graph, depth) else {
                if depth == 0 {
                    break 'outer;
                }
                break;
            };
            let a = d.sample(&mut rng);
            seq.push(a);
            match t.step(&a, || seq.clone())? {
                Outcome::Continue(r) => graph = r.current_graph,
                Outcome::Exact | Outcome::Exhausted => break 'outer,
            }
        }
    }
    Ok(t.finish())
}

struct Beam {
    actions: Vec<FaceExtrude>,
    log_prob: f64,
    state: Snapshot,
    graph: FaceGraph,
}

/// Beam search ranked by sequence log probability. A run lasts the rollout
/// cap; each failed run restarts from scratch with the width doubled.
pub fn beam_search(env: &mut Env, policy: &mut dyn Policy, config: &SearchConfig) -> Result<SearchReport, EnvError> {
    let Some((cap, empty)) = prepare(env, policy)? else {
        return Ok(Tracker::new(env, config).finish());
    };
    let mut t = Tracker::new(env, config);
    let mut k = config.beam_width.max(1);
    'runs: while !t.done() {
        t.env.revert_to_target()?;
        let run_start = t.charged;
        t.beam_runs.push((k, 0));
        let mut beams = vec![Beam { actions: Vec::new(), log_prob: 0.0, state: t.env.snapshot(), graph: empty.clone() }];
        let mut progressed = false;
        for depth in 0..cap {
            let mut ext: Vec<(usize, FaceExtrude, f64)> = Vec::new();
            for (bi, b) in beams.iter().enumerate() {
                if let Ok(d) = policy.distribution(&b.graph, depth) {
                    ext.extend(d.actions().into_iter().map(|(a, lp)| (bi, a, b.log_prob + lp)));
                }
            }
            // stable sort keeps beam order, then action order, among ties
            ext.sort_by(|a, b| b.2.total_cmp(&a.2));
            ext.truncate(k);
            let mut next = Vec::with_capacity(ext.len());
            for (bi, a, lp) in ext {
                let parent = &beams[bi];
                t.env.restore(&parent.state);
                let outcome = t.step(&a, || {
                    let mut s = parent.actions.clone();
                    s.push(a);
                    s
                })?;
                progressed = true;
                t.beam_runs.last_mut().expect("run pushed").1 = t.charged - run_start;
                match outcome {
                    Outcome::Continue(r) if r.valid => {
                        let mut actions = parent.actions.clone();
                        actions.push(a);
                        next.push(Beam { actions, log_prob: lp, state: t.env.snapshot(), graph: r.current_graph });
                    }
                    Outcome::Continue(_) => {}
                    Outcome::Exact | Outcome::Exhausted => break 'runs,
                }
            }
            if next.is_empty() {
                break;
            }
            beams = next;
        }
        if !progressed {
            break;
        }
        k *= 2;
    }
    Ok(t.finish())
}

struct Node {
    log_prob: f64,
    order: u64,
    actions: Vec<FaceExtrude>,
    parent: Rc<Snapshot>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Node {
    /// Higher probability first; earlier insertion wins ties.
    fn cmp(&self, o: &Self) -> Ordering {
        self.log_prob.total_cmp(&o.log_prob).then(o.order.cmp(&self.order))
    }
}

/// Best-first search with a priority queue of sequences. Extensions are
/// enqueued without stepping; a candidate's last action is executed only
/// when it is dequeued.
pub fn best_first(env: &mut Env, policy: &mut dyn Policy, config: &SearchConfig) -> Result<SearchReport, EnvError> {
    let Some((cap, empty)) = prepare(env, policy)? else {
        return Ok(Tracker::new(env, config).finish());
    };
    let mut t = Tracker::new(env, config);
    let mut order = 0u64;
    let mut queue = BinaryHeap::new();
    queue.push(Node { log_prob: 0.0, order, actions: Vec::new(), parent: Rc::new(t.env.snapshot()) });
    while let Some(node) = queue.pop() {
        if t.done() {
            break;
        }
        t.env.restore(&node.parent);
        let graph = match node.actions.last() {
            None => empty.clone(),
            Some(a) => match t.step(a, || node.actions.clone())? {
                Outcome::Continue(r) if r.valid => r.current_graph,
                Outcome::Continue(_) => continue,
                Outcome::Exact | Outcome::Exhausted => break,
            },
        };
        if node.actions.len() >= cap {
            continue;
        }
        let Ok(d) = policy.distribution(&graph, node.actions.len()) else {
            continue;
        };
        let mut ext = d.actions();
        ext.sort_by(|a, b| b.1.total_cmp(&a.1));
        ext.truncate(config.fan_out.max(1));
        let here = Rc::new(t.env.snapshot());
        for (a, lp) in ext {
            order += 1;
            let mut actions = node.actions.clone();
            actions.push(a);
            queue.push(Node { log_prob: node.log_prob + lp, order, actions, parent: Rc::clone(&here) });
        }
    }
    Ok(t.finish())
}

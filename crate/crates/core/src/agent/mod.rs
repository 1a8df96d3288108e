//! Imitation-trained policy over face-extrusion actions.

pub mod nn;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::brep::FaceGraph;
use crate::dsl::{execute, Program};
use crate::env::{convert_to_face_extrusion, Env, FaceExtrude};
use crate::kernel::BoolOp;
use nn::{Dropout, Label, LabelIssue, Layout, Net, TargetContext, OPS};

pub const HIDDEN: usize = 256;
const CHECKPOINT_FORMAT: &str = "cadrecon-policy";
const CHECKPOINT_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Rand,
    Mlp,
    Gcn,
}

impl AgentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Rand => "rand",
            AgentKind::Mlp => "mlp",
            AgentKind::Gcn => "gcn",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rand" => Ok(AgentKind::Rand),
            "mlp" => Ok(AgentKind::Mlp),
            "gcn" => Ok(AgentKind::Gcn),
            _ => Err(format!("unknown agent kind `{s}` (expected rand, mlp or gcn)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("every action is masked")]
    NoValidAction,
    #[error("the {0} label is masked")]
    MaskedLabel(&'static str),
    #[error("label index out of range for the target graph")]
    LabelOutOfRange,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("target graph has no faces")]
    EmptyTarget,
    #[error("no target has been set on the policy")]
    NoTarget,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

fn label_error(issue: LabelIssue) -> AgentError {
    match issue {
        LabelIssue::Masked(w) => AgentError::MaskedLabel(w),
        LabelIssue::NoValidAction => AgentError::NoValidAction,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub kind: AgentKind,
    pub hidden: usize,
    pub data: Vec<f64>,
}

impl PolicyParams {
    /// Uniform initialization in `±1/sqrt(fan_in)`; the rand kind has no tensors.
    pub fn init(kind: AgentKind, hidden: usize, seed: u64) -> Self {
        if kind == AgentKind::Rand {
            return PolicyParams { kind, hidden, data: Vec::new() };
        }
        let layout = Layout::new(hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; layout.total];
        for s in 0..layout.names.len() {
            let bound = 1.0 / (layout.fan_in(s) as f64).sqrt();
            for v in &mut data[layout.range(s)] {
                *v = rng.random_range(-bound..bound);
            }
        }
        PolicyParams { kind, hidden, data }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.hidden)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn net<'a>(&'a self, layout: &'a Layout) -> Net<'a> {
        Net { kind: self.kind, hidden: self.hidden, layout, data: &self.data }
    }

    /// Versioned JSON dump with a shape manifest.
    pub fn to_json(&self) -> Value {
        let tensors: Vec<Value> = if self.kind == AgentKind::Rand {
            Vec::new()
        } else {
            let layout = self.layout();
            (0..layout.names.len())
                .map(|s| json!({"name": layout.names[s], "shape": layout.shapes[s], "data": &self.data[layout.range(s)]}))
                .collect()
        };
        json!({
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "kind": self.kind,
            "hidden": self.hidden,
            "tensors": tensors,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, AgentError> {
        let bad = |m: &str| AgentError::Checkpoint(m.to_string());
        if v.get("format").and_then(Value::as_str) != Some(CHECKPOINT_FORMAT) {
            return Err(bad("not a policy checkpoint"));
        }
        if v.get("version").and_then(Value::as_u64) != Some(CHECKPOINT_VERSION) {
            return Err(bad("unsupported checkpoint version"));
        }
        let kind: AgentKind = serde_json::from_value(v["kind"].clone()).map_err(|e| bad(&e.to_string()))?;
        let hidden = v["hidden"].as_u64().ok_or_else(|| bad("missing hidden width"))? as usize;
        let tensors = v["tensors"].as_array().ok_or_else(|| bad("missing tensors"))?;
        if kind == AgentKind::Rand {
            return Ok(PolicyParams { kind, hidden, data: Vec::new() });
        }
        let layout = Layout::new(hidden);
        if tensors.len() != layout.names.len() {
            return Err(bad("tensor count does not match the architecture"));
        }
        let mut data = Vec::with_capacity(layout.total);
        for (s, t) in tensors.iter().enumerate() {
            let name = t["name"].as_str().unwrap_or_default();
            let shape: Vec<usize> = serde_json::from_value(t["shape"].clone()).map_err(|e| bad(&e.to_string()))?;
            if name != layout.names[s] || shape != layout.shapes[s] {
                return Err(AgentError::Checkpoint(format!("tensor {s}: expected {} {:?}", layout.names[s], layout.shapes[s])));
            }
            let values: Vec<f64> = serde_json::from_value(t["data"].clone()).map_err(|e| bad(&e.to_string()))?;
            if values.len() != shape.iter().product::<usize>() {
                return Err(AgentError::Checkpoint(format!("tensor {name}: wrong element count")));
            }
            data.extend(values);
        }
        let p = PolicyParams { kind, hidden, data };
        if !p.is_finite() {
            return Err(bad("non-finite parameter"));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let text = serde_json::to_string(&self.to_json()).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Checkpoint(format!("{}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        Self::from_json(&v)
    }
}

/// Factorized action probabilities for one state. End probabilities are
/// kept for every unmasked start; masked starts hold an empty vector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ActionDistribution {
    pub p_op: [f64; OPS],
    pub p_start: Vec<f64>,
    pub p_end_given_start: Vec<Vec<f64>>,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl ActionDistribution {
    pub fn argmax_start(&self) -> usize {
        argmax(&self.p_start)
    }

    /// End distribution conditioned on `start`; empty for a masked start.
    pub fn p_end(&self, start: usize) -> &[f64] {
        &self.p_end_given_start[start]
    }

    /// Greedy action: argmax start, then argmax end given it, then argmax op.
    pub fn argmax_action(&self) -> FaceExtrude {
        let start = self.argmax_start();
        FaceExtrude { start, end: argmax(self.p_end(start)), op: BoolOp::ALL[argmax(&self.p_op)] }
    }

    /// `ln p_op + ln p_start + ln p_end`; negative infinity when masked.
    pub fn log_prob(&self, a: &FaceExtrude) -> f64 {
        let pe = self.p_end_given_start.get(a.start).and_then(|v| v.get(a.end)).copied().unwrap_or(0.0);
        let ps = self.p_start.get(a.start).copied().unwrap_or(0.0);
        self.p_op[a.op.index()].ln() + ps.ln() + pe.ln()
    }

    /// Every unmasked action with its log probability.
    pub fn actions(&self) -> Vec<(FaceExtrude, f64)> {
        let mut out = Vec::new();
        for (s, &ps) in self.p_start.iter().enumerate() {
            if ps <= 0.0 {
                continue;
            }
            for (e, &pe) in self.p_end(s).iter().enumerate() {
                if pe <= 0.0 {
                    continue;
                }
                for op in BoolOp::ALL {
                    let po = self.p_op[op.index()];
                    if po > 0.0 {
                        out.push((FaceExtrude { start: s, end: e, op }, po.ln() + ps.ln() + pe.ln()));
                    }
                }
            }
        }
        out
    }

    /// Draws start, then end given the start, then the operation.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> FaceExtrude {
        let start = categorical(&self.p_start, rng);
        let end = categorical(self.p_end(start), rng);
        FaceExtrude { start, end, op: BoolOp::ALL[categorical(&self.p_op, rng)] }
    }
}

/// Samples an index; zero-probability entries are never returned.
pub fn categorical(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &v) in p.iter().enumerate() {
        if v <= 0.0 {
            continue;
        }
        acc += v;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Operation mask: only NewBody is allowed on empty geometry.
pub fn op_mask(current: &FaceGraph) -> [bool; OPS] {
    let empty = current.nodes.is_empty();
    [true, !empty, !empty, !empty]
}

/// Face mask: only planar faces may start or end an extrusion.
pub fn face_mask(target: &FaceGraph) -> Vec<bool> {
    target.nodes.iter().map(|n| n.is_planar()).collect()
}

/// End mask for a start face: planar faces other than the start itself.
pub fn end_mask(faces: &[bool], start: usize) -> Vec<bool> {
    let mut m = faces.to_vec();
    m[start] = false;
    m
}

fn distribution_from_logits(
    op_logits: &[f64],
    start_logits: &[f64],
    end_logits: &[Vec<f64>],
    current: &FaceGraph,
    faces: &[bool],
) -> Result<ActionDistribution, AgentError> {
    let om = op_mask(current);
    let p_op = nn::masked_softmax(op_logits, &om).ok_or(AgentError::NoValidAction)?;
    let p_start = nn::masked_softmax(start_logits, faces).ok_or(AgentError::NoValidAction)?;
    let p_end_given_start = end_logits
        .iter()
        .enumerate()
        .map(|(s, l)| if faces[s] { nn::masked_softmax(l, &end_mask(faces, s)).ok_or(AgentError::NoValidAction) } else { Ok(Vec::new()) })
        .collect::<Result<_, _>>()?;
    Ok(ActionDistribution { p_op: p_op.try_into().expect("four ops"), p_start, p_end_given_start })
}

/// Uniform distribution over unmasked actions.
pub fn uniform_distribution(current: &FaceGraph, target: &FaceGraph) -> Result<ActionDistribution, AgentError> {
    let n = target.nodes.len();
    let zeros = vec![0.0; n];
    distribution_from_logits(&[0.0; OPS], &zeros, &vec![zeros.clone(); n], current, &face_mask(target))
}

/// Per-node embeddings of the chosen encoder, row-major `n × hidden`.
pub fn encode(params: &PolicyParams, target_side: bool, graph: &FaceGraph) -> Vec<f64> {
    let layout = params.layout();
    let g = nn::GraphBatch::new(&[graph]);
    let encoder = if target_side { nn::slot::TARGET } else { nn::slot::CURRENT };
    params.net(&layout).encode(encoder, &g, None).h
}

/// Action distribution for a state, with dropout disabled.
pub fn forward(params: &PolicyParams, current: &FaceGraph, target: &FaceGraph) -> Result<ActionDistribution, AgentError> {
    if target.nodes.is_empty() {
        return Err(AgentError::EmptyTarget);
    }
    if params.kind == AgentKind::Rand {
        return uniform_distribution(current, target);
    }
    let layout = params.layout();
    let net = params.net(&layout);
    let ctx = net.target_context(target);
    distribution_with_context(&net, &ctx, current)
}

fn distribution_with_context(net: &Net, ctx: &TargetContext, current: &FaceGraph) -> Result<ActionDistribution, AgentError> {
    let hc = net.current_vector(current);
    let l = net.logits(ctx, &hc, &ctx.planar);
    distribution_from_logits(&l.op, &l.start, &l.end, current, &ctx.planar)
}

/// Negative log-likelihood of a labelled action.
pub fn loss(d: &ActionDistribution, label: &FaceExtrude) -> Result<f64, AgentError> {
    let ps = *d.p_start.get(label.start).ok_or(AgentError::LabelOutOfRange)?;
    if d.p_op[label.op.index()] <= 0.0 {
        return Err(AgentError::MaskedLabel("op"));
    }
    if ps <= 0.0 {
        return Err(AgentError::MaskedLabel("start"));
    }
    let pe = *d.p_end(label.start).get(label.end).ok_or(AgentError::LabelOutOfRange)?;
    if pe <= 0.0 {
        return Err(AgentError::MaskedLabel("end"));
    }
    Ok(-(d.p_op[label.op.index()].ln() + ps.ln() + pe.ln()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedExample {
    pub current_graph: FaceGraph,
    pub target_graph: FaceGraph,
    pub label: FaceExtrude,
}

fn label_of(e: &SupervisedExample) -> Result<Label, AgentError> {
    let n = e.target_graph.nodes.len();
    if e.label.start >= n || e.label.end >= n {
        return Err(AgentError::LabelOutOfRange);
    }
    Ok(Label { op: e.label.op.index(), start: e.label.start, end: e.label.end })
}

/// Mean loss of a batch and its gradient, with dropout disabled.
pub fn loss_and_grad(params: &PolicyParams, batch: &[&SupervisedExample]) -> Result<(f64, Vec<f64>), AgentError> {
    let layout = params.layout();
    let mut grad = vec![0.0; layout.total];
    let l = batch_step(params, &layout, batch, None, &mut grad)?;
    Ok((l, grad))
}

fn batch_step(
    params: &PolicyParams,
    layout: &Layout,
    batch: &[&SupervisedExample],
    dropout: Option<&mut Dropout>,
    grad: &mut [f64],
) -> Result<f64, AgentError> {
    let labels = batch.iter().map(|e| label_of(e)).collect::<Result<Vec<_>, _>>()?;
    let currents: Vec<&FaceGraph> = batch.iter().map(|e| &e.current_graph).collect();
    let targets: Vec<&FaceGraph> = batch.iter().map(|e| &e.target_graph).collect();
    params.net(layout).loss_and_grad(&currents, &targets, &labels, dropout, grad).map_err(|(_, i)| label_error(i))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: AgentKind,
    pub learning_rate: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub plateau_factor: f64,
    pub plateau_window: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(kind: AgentKind, seed: u64) -> Self {
        TrainConfig {
            kind,
            learning_rate: 1e-4,
            dropout: 0.1,
            epochs: 100,
            plateau_factor: 0.1,
            plateau_window: 10,
            batch_size: 32,
            hidden: HIDDEN,
            seed,
        }
    }
}

/// Reduces the learning rate when the loss has not improved for a window
/// of epochs. An improvement must beat the best loss by a relative 1e-4.
#[derive(Clone, Debug, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub factor: f64,
    pub window: usize,
    best: f64,
    stale: usize,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, window: usize) -> Self {
        PlateauSchedule { lr, factor, window, best: f64::INFINITY, stale: 0 }
    }

    /// Records an epoch loss and returns the learning rate for the next epoch.
    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best * (1.0 - 1e-4) {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.window {
                self.lr *= self.factor;
                self.stale = 0;
            }
        }
        self.lr
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g;
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g * g;
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Parameters at the lowest epoch loss.
    pub params: PolicyParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
}

/// Adam on the mean imitation loss with seeded shuffling, dropout, plateau
/// decay, and a best-loss checkpoint. `progress` sees every finished epoch.
pub fn train(
    dataset: &[SupervisedExample],
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainReport, AgentError> {
    if dataset.is_empty() {
        return Err(AgentError::EmptyDataset);
    }
    let mut params = PolicyParams::init(config.kind, config.hidden, config.seed);
    if config.kind == AgentKind::Rand {
        return Ok(TrainReport { params, history: Vec::new(), best_epoch: None });
    }
    let layout = params.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_da7a);
    let mut adam = Adam::new(layout.total);
    let mut schedule = PlateauSchedule::new(config.learning_rate, config.plateau_factor, config.plateau_window);
    let mut grad = vec![0.0; layout.total];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let batch_size = config.batch_size.max(1);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = schedule.lr;
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(batch_size).enumerate() {
            let batch: Vec<&SupervisedExample> = chunk.iter().map(|&i| &dataset[i]).collect();
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut drop = Dropout { p: config.dropout, rng: &mut rng };
            let dropout = (config.dropout > 0.0).then_some(&mut drop);
            let l = batch_step(&params, &layout, &batch, dropout, &mut grad)?;
            if !l.is_finite() {
                return Err(AgentError::NonFiniteLoss { epoch, batch: bi, loss: l });
            }
            adam.step(&mut params.data, &grad, lr);
            total += l * chunk.len() as f64;
        }
        let loss = total / dataset.len() as f64;
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, epoch, params.data.clone()));
        }
        schedule.observe(loss);
        let stats = EpochStats { epoch, loss, learning_rate: lr };
        progress(&stats);
        history.push(stats);
    }
    let best_epoch = best.as_ref().map(|b| b.1);
    if let Some((_, _, data)) = best {
        params.data = data;
    }
    Ok(TrainReport { params, history, best_epoch })
}

#[derive(Clone, Debug, Default)]
pub struct ImitationDataset {
    pub examples: Vec<SupervisedExample>,
    pub designs: usize,
    pub convertible: usize,
    /// Index and reason of every skipped design.
    pub skipped: Vec<(usize, String)>,
}

impl ImitationDataset {
    pub fn convertible_fraction(&self) -> f64 {
        if self.designs == 0 {
            0.0
        } else {
            self.convertible as f64 / self.designs as f64
        }
    }
}

/// Replays each design's face-extrusion sequence and records one example per
/// prefix. Designs that cannot be converted or replayed are skipped.
pub fn build_imitation_dataset(corpus: &[Program]) -> ImitationDataset {
    let mut out = ImitationDataset { designs: corpus.len(), ..Default::default() };
    for (i, program) in corpus.iter().enumerate() {
        match design_examples(program) {
            Ok(ex) => {
                out.convertible += 1;
                out.examples.extend(ex);
            }
            Err(reason) => out.skipped.push((i, reason)),
        }
    }
    out
}

fn design_examples(program: &Program) -> Result<Vec<SupervisedExample>, String> {
    let actions = convert_to_face_extrusion(program).map_err(|e| e.to_string())?;
    let bodies = execute(program).map_err(|e| e.to_string())?.final_bodies().to_vec();
    let mut env = Env::new();
    let (target_graph, _) = env.set_target(bodies).map_err(|e| e.to_string())?;
    let mut examples = Vec::with_capacity(actions.len());
    for a in &actions {
        examples.push(SupervisedExample { current_graph: env.current_graph(), target_graph: target_graph.clone(), label: *a });
        let r = env.step_face_extrude(a).map_err(|e| e.to_string())?;
        if !r.valid {
            return Err(r.error.unwrap_or_else(|| "invalid replay step".into()));
        }
    }
    Ok(examples)
}

/// Source of action distributions during search.
pub trait Policy {
    fn set_target(&mut self, target: &FaceGraph) -> Result<(), AgentError>;

    /// Distribution for the current state; `depth` is the number of actions
    /// already taken in the sequence being extended.
    fn distribution(&mut self, current: &FaceGraph, depth: usize) -> Result<ActionDistribution, AgentError>;
}

/// Uniform over unmasked actions.
#[derive(Default)]
pub struct RandomPolicy {
    target: Option<FaceGraph>,
}

impl Policy for RandomPolicy {
    fn set_target(&mut self, target: &FaceGraph) -> Result<(), AgentError> {
        if target.nodes.is_empty() {
            return Err(AgentError::EmptyTarget);
        }
        self.target = Some(target.clone());
        Ok(())
    }

    fn distribution(&mut self, current: &FaceGraph, _depth: usize) -> Result<ActionDistribution, AgentError> {
        uniform_distribution(current, self.target.as_ref().ok_or(AgentError::NoTarget)?)
    }
}

/// Trained network; the target encoding is computed once per target.
pub struct NeuralPolicy {
    params: PolicyParams,
    layout: Layout,
    ctx: Option<TargetContext>,
    target: Option<FaceGraph>,
}

impl NeuralPolicy {
    pub fn new(params: PolicyParams) -> Self {
        let layout = params.layout();
        NeuralPolicy { params, layout, ctx: None, target: None }
    }
}

impl Policy for NeuralPolicy {
    fn set_target(&mut self, target: &FaceGraph) -> Result<(), AgentError> {
        if target.nodes.is_empty() {
            return Err(AgentError::EmptyTarget);
        }
        self.target = Some(target.clone());
        if self.params.kind != AgentKind::Rand {
            self.ctx = Some(self.params.net(&self.layout).target_context(target));
        }
        Ok(())
    }

    fn distribution(&mut self, current: &FaceGraph, _depth: usize) -> Result<ActionDistribution, AgentError> {
        let target = self.target.as_ref().ok_or(AgentError::NoTarget)?;
        match &self.ctx {
            Some(ctx) => distribution_with_context(&self.params.net(&self.layout), ctx, current),
            None => uniform_distribution(current, target),
        }
    }
}

/// Puts all mass on a fixed action sequence, indexed by depth.
pub struct OraclePolicy {
    pub actions: Vec<FaceExtrude>,
    n: usize,
}

impl OraclePolicy {
    pub fn new(actions: Vec<FaceExtrude>) -> Self {
        OraclePolicy { actions, n: 0 }
    }
}

impl Policy for OraclePolicy {
    fn set_target(&mut self, target: &FaceGraph) -> Result<(), AgentError> {
        self.n = target.nodes.len();
        Ok(())
    }

    fn distribution(&mut self, _current: &FaceGraph, depth: usize) -> Result<ActionDistribution, AgentError> {
        let a = self.actions.get(depth).ok_or(AgentError::NoValidAction)?;
        if a.start >= self.n || a.end >= self.n {
            return Err(AgentError::LabelOutOfRange);
        }
        let one_hot = |i: usize| (0..self.n).map(|k| if k == i { 1.0 } else { 0.0 }).collect::<Vec<_>>();
        let mut p_op = [0.0; OPS];
        p_op[a.op.index()] = 1.0;
        let p_end_given_start = (0..self.n).map(|s| if s == a.start { one_hot(a.end) } else { Vec::new() }).collect();
        Ok(ActionDistribution { p_op, p_start: one_hot(a.start), p_end_given_start })
    }
}

/// Boxed policy for an agent kind; rand ignores `params`.
pub fn policy_for(kind: AgentKind, params: Option<PolicyParams>) -> Result<Box<dyn Policy>, AgentError> {
    match (kind, params) {
        (AgentKind::Rand, _) => Ok(Box::new(RandomPolicy::default())),
        (_, Some(p)) if p.kind == kind => Ok(Box::new(NeuralPolicy::new(p))),
        (_, Some(p)) => Err(AgentError::Checkpoint(format!("checkpoint is a {} policy, not {kind}", p.kind))),
        (_, None) => Err(AgentError::Checkpoint(format!("{kind} agent needs a checkpoint"))),
    }
}

#[cfg(test)]
mod tests;

//! Deterministic decentralized SGD.
//!
//! Each step every node `i` draws one local sample index `j_t(i)` uniformly
//! from its shard, mixes its neighbours' weights through the step's gossip
//! matrix and takes a gradient step. Two update orders are supported:
//!
//! ```text
//! gossip-then-grad:   w'(i) = sum_l P_il w(l) - eta_t grad f(w(i); Z_{j_t(i)})
//! grad-inside-gossip: w'(i) = sum_l P_il [w(l) - eta_t grad f(w(l); Z_{j_t(l)})]
//! ```
//!
//! Sample indices come from a counter-based keyed stream: the index for
//! `(master_seed, role, node, step)` is a pure function of those four values,
//! so twin runs share their randomness structurally and results do not depend
//! on scheduling or thread count.

use std::sync::Arc;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{norm, project_in_place, LossError, LossModel, PartitionedDataset};
use crate::topology::{TopologyError, TopologySchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("node {node} left the domain ball at step {step}: ||w|| = {norm} > W_max = {radius}")]
    DomainExit { step: usize, node: usize, norm: f64, radius: f64 },
    #[error("non-finite weight on node {node} at step {step}")]
    Numerics { step: usize, node: usize },
    #[error("analysis needs every step recorded, trajectory stride is {stride}")]
    InsufficientTrace { stride: usize },
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// Stepsize sequence `eta_t`, `t >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// `1 / (t + 1)`
    InvT,
    /// `2 / (mu (t + 1))`
    InvTMu { mu: f64 },
    /// `1 / (beta (t + 1))`
    InvTBeta { beta: f64 },
    /// `2 / (gamma (t + 1))`
    InvTGamma { gamma: f64 },
}

impl StepSchedule {
    pub fn at(&self, t: usize) -> f64 {
        let tp1 = (t + 1) as f64;
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::InvT => 1.0 / tp1,
            StepSchedule::InvTMu { mu } => 2.0 / (mu * tp1),
            StepSchedule::InvTBeta { beta } => 1.0 / (beta * tp1),
            StepSchedule::InvTGamma { gamma } => 2.0 / (gamma * tp1),
        }
    }

    pub fn constant_eta(&self) -> Option<f64> {
        match *self {
            StepSchedule::Constant { eta } => Some(eta),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let param = match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::InvT => 1.0,
            StepSchedule::InvTMu { mu } => mu,
            StepSchedule::InvTBeta { beta } => beta,
            StepSchedule::InvTGamma { gamma } => gamma,
        };
        if param > 0.0 && param.is_finite() {
            Ok(())
        } else {
            Err(EngineError::Config(format!("stepsize parameter must be positive and finite: {self:?}")))
        }
    }

    /// `eta_1, ..., eta_len`.
    pub fn sequence(&self, len: usize) -> Vec<f64> {
        (1..=len).map(|t| self.at(t)).collect()
    }
}

/// Theorem stepsize preconditions a run can be checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepCap {
    /// `eta_t <= 2 / beta`
    Convex,
    /// `eta_t <= 1 / beta`
    StronglyConvex,
    /// No cap.
    Nonconvex,
    /// `eta_t = eta <= 1 / (3 beta)`
    NonconvexOptim,
    /// `eta_t <= 2 P^t_rr / beta` for every node `r`
    LocalConvex,
    /// `eta_t <= P^t_rr / beta` for every node `r`
    LocalStronglyConvex,
}

impl StepCap {
    /// Whether `eta_1..eta_T` satisfy the cap. Local caps are checked against every node's self-weight.
    pub fn holds(&self, schedule: &StepSchedule, beta: f64, topology: &TopologySchedule, iterations: usize) -> bool {
        const SLACK: f64 = 1e-12;
        (1..=iterations).all(|t| {
            let eta = schedule.at(t);
            match self {
                StepCap::Convex => eta <= 2.0 / beta + SLACK,
                StepCap::StronglyConvex => eta <= 1.0 / beta + SLACK,
                StepCap::Nonconvex => true,
                StepCap::NonconvexOptim => {
                    schedule.constant_eta().is_some() && eta <= 1.0 / (3.0 * beta) + SLACK
                }
                StepCap::LocalConvex | StepCap::LocalStronglyConvex => {
                    let factor = if *self == StepCap::LocalConvex { 2.0 } else { 1.0 };
                    match topology.at(t) {
                        Ok(p) => eta <= factor * p.min_diagonal() / beta + SLACK,
                        Err(_) => false,
                    }
                }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Mix the current weights, then subtract the gradient taken at the node's own weight.
    #[default]
    GossipThenGrad,
    /// Take the local gradient step first, then mix the updated weights.
    GradInsideGossip,
}

/// Which keyed stream a run draws its sample indices from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingRole {
    #[default]
    Primary,
    /// Shared by both trajectories of a coupled twin run.
    TwinShared,
}

impl SamplingRole {
    fn id(self) -> u64 {
        match self {
            SamplingRole::Primary => 0,
            SamplingRole::TwinShared => 1,
        }
    }
}

/// Uniform index in `0..n` for `(master_seed, role, node, step)`.
///
/// The four values form the 256-bit ChaCha key, so every `(node, step)` pair
/// reads an independent stream and the draw never depends on evaluation order.
pub fn sample_index(master_seed: u64, role: SamplingRole, node: usize, step: usize, n: usize) -> usize {
    assert!(n >= 1, "sample_index needs n >= 1");
    if n == 1 {
        return 0;
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&role.id().to_le_bytes());
    key[16..24].copy_from_slice(&(node as u64).to_le_bytes());
    key[24..].copy_from_slice(&(step as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key).random_range(0..n)
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: LossModel,
    pub dataset: Arc<PartitionedDataset>,
    pub schedule: StepSchedule,
    pub topology: TopologySchedule,
    pub iterations: usize,
    pub update_order: UpdateOrder,
    /// Radius of the projection ball when running projected D-SGD.
    pub projection: Option<f64>,
    pub master_seed: u64,
    pub role: SamplingRole,
    /// Shared initial weight of every node; zero when `None`.
    pub initial_w: Option<Vec<f64>>,
    /// Keep a snapshot every `stride` steps (the final state is always kept).
    pub stride: usize,
    /// Stepsize precondition this run is meant to satisfy.
    pub cap: Option<StepCap>,
}

impl RunConfig {
    pub fn new(
        model: LossModel,
        dataset: Arc<PartitionedDataset>,
        schedule: StepSchedule,
        topology: TopologySchedule,
        iterations: usize,
    ) -> Self {
        Self {
            model,
            dataset,
            schedule,
            topology,
            iterations,
            update_order: UpdateOrder::GossipThenGrad,
            projection: None,
            master_seed: 0,
            role: SamplingRole::Primary,
            initial_w: None,
            stride: 1,
            cap: None,
        }
    }

    pub fn m(&self) -> usize {
        self.dataset.m()
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.topology.m() != self.dataset.m() {
            return Err(EngineError::Config(format!(
                "topology has m = {}, dataset has m = {}",
                self.topology.m(),
                self.dataset.m()
            )));
        }
        if self.model.dim != self.dataset.dim() {
            return Err(EngineError::Config(format!(
                "model dim {} != dataset dim {}",
                self.model.dim,
                self.dataset.dim()
            )));
        }
        if let Some(w) = &self.initial_w {
            if w.len() != self.model.dim {
                return Err(EngineError::Config(format!("initial_w has dim {}, model has {}", w.len(), self.model.dim)));
            }
        }
        if self.stride == 0 {
            return Err(EngineError::Config("stride must be at least 1".into()));
        }
        if let Some(r) = self.projection {
            if !(r > 0.0 && r.is_finite()) {
                return Err(EngineError::Config(format!("projection radius must be positive, got {r}")));
            }
        }
        if let Some(h) = self.topology.horizon() {
            if h < self.iterations {
                return Err(EngineError::Config(format!("topology covers {h} steps, run needs {}", self.iterations)));
            }
        }
        self.schedule.validate()
    }

    /// Whether the declared cap holds; `None` when no cap is declared.
    pub fn precondition_met(&self) -> Result<Option<bool>, EngineError> {
        let Some(cap) = self.cap else { return Ok(None) };
        let beta = self.model.constants()?.smoothness;
        Ok(Some(cap.holds(&self.schedule, beta, &self.topology, self.iterations)))
    }

    fn initial(&self) -> Vec<f64> {
        self.initial_w.clone().unwrap_or_else(|| vec![0.0; self.model.dim])
    }
}

/// Node weights `w^t(i)` at the start of step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineState {
    pub t: usize,
    pub weights: Vec<Vec<f64>>,
}

impl EngineState {
    pub fn initial(config: &RunConfig) -> Self {
        Self { t: 1, weights: vec![config.initial(); config.m()] }
    }

    pub fn average(&self) -> Vec<f64> {
        average(&self.weights)
    }
}

/// What one call to [`step`] observed.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub eta: f64,
    /// `j_t(i)` for every node, 0-based.
    pub indices: Vec<usize>,
    /// `|| wbar^{t+1} - (wbar^t - eta_t/m sum_i g_i) ||`, `None` for projected runs.
    pub average_identity_residual: Option<f64>,
    /// Largest stochastic gradient norm used in this step.
    pub max_grad_norm: f64,
}

pub fn average(weights: &[Vec<f64>]) -> Vec<f64> {
    let m = weights.len() as f64;
    let dim = weights[0].len();
    let mut acc = vec![0.0; dim];
    for w in weights {
        acc.iter_mut().zip(w).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= m);
    acc
}

/// Advances `state` from step `t` to `t + 1`.
pub fn step(config: &RunConfig, state: &mut EngineState) -> Result<StepRecord, EngineError> {
    let t = state.t;
    let p = config.topology.at(t)?;
    let eta = config.schedule.at(t);
    let (m, dim, n) = (config.m(), config.model.dim, config.dataset.n());
    let indices: Vec<usize> = (0..m).map(|i| sample_index(config.master_seed, config.role, i, t, n)).collect();

    let mut grads = vec![vec![0.0; dim]; m];
    for (i, g) in grads.iter_mut().enumerate() {
        config.model.loss_grad_into(&state.weights[i], config.dataset.get(i, indices[i]), g)?;
    }
    let max_grad_norm = grads.iter().map(|g| norm(g)).fold(0.0, f64::max);

    let mut next = vec![vec![0.0; dim]; m];
    match config.update_order {
        UpdateOrder::GossipThenGrad => {
            for (i, out) in next.iter_mut().enumerate() {
                for (l, w) in state.weights.iter().enumerate() {
                    let pil = p.get(i, l);
                    if pil != 0.0 {
                        out.iter_mut().zip(w).for_each(|(o, v)| *o += pil * v);
                    }
                }
                out.iter_mut().zip(&grads[i]).for_each(|(o, g)| *o -= eta * g);
            }
        }
        UpdateOrder::GradInsideGossip => {
            let local: Vec<Vec<f64>> = state
                .weights
                .iter()
                .zip(&grads)
                .map(|(w, g)| w.iter().zip(g).map(|(v, gi)| v - eta * gi).collect())
                .collect();
            for (i, out) in next.iter_mut().enumerate() {
                for (l, u) in local.iter().enumerate() {
                    let pil = p.get(i, l);
                    if pil != 0.0 {
                        out.iter_mut().zip(u).for_each(|(o, v)| *o += pil * v);
                    }
                }
            }
        }
    }

    if let Some(radius) = config.projection {
        next.iter_mut().for_each(|w| project_in_place(w, radius));
    }
    for (i, w) in next.iter().enumerate() {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(EngineError::Numerics { step: t, node: i });
        }
        if config.projection.is_none() && config.model.family.lipschitz_is_local() {
            if let Some(radius) = config.model.domain_radius {
                let nw = norm(w);
                if nw > radius * (1.0 + 1e-12) {
                    return Err(EngineError::DomainExit { step: t, node: i, norm: nw, radius });
                }
            }
        }
    }

    let average_identity_residual = config.projection.is_none().then(|| {
        let before = average(&state.weights);
        let after = average(&next);
        let gsum = average(&grads);
        before
            .iter()
            .zip(&gsum)
            .zip(&after)
            .map(|((b, g), a)| (b - eta * g - a).powi(2))
            .sum::<f64>()
            .sqrt()
    });

    state.weights = next;
    state.t += 1;
    Ok(StepRecord { t, eta, indices, average_identity_residual, max_grad_norm })
}

/// Node weights and derived quantities at the start of step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: usize,
    pub node_weights: Vec<Vec<f64>>,
    pub average: Vec<f64>,
    pub consensus_error: f64,
}

impl Snapshot {
    fn of(state: &EngineState) -> Self {
        Self {
            t: state.t,
            average: state.average(),
            consensus_error: consensus_error(&state.weights),
            node_weights: state.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub stride: usize,
    pub iterations: usize,
    /// Snapshots at `t = 1, 1 + stride, ...`, always ending with `t = T + 1`.
    pub snapshots: Vec<Snapshot>,
    /// `indices[t - 1][i] = j_t(i)`, 0-based, for every step.
    pub indices: Vec<Vec<usize>>,
    /// `eta_t` for `t = 1..=T`.
    pub etas: Vec<f64>,
    /// Largest average-identity residual over all steps (unprojected runs only).
    pub max_average_identity_residual: Option<f64>,
    /// Largest stochastic gradient norm seen along the run.
    pub max_grad_norm: f64,
    pub precondition_met: Option<bool>,
}

impl Trajectory {
    /// `w^{T+1} = (1/m) sum_i w^{T+1}(i)`.
    pub fn final_average(&self) -> &[f64] {
        &self.snapshots.last().expect("trajectory always holds the final state").average
    }

    pub fn final_weights(&self) -> &[Vec<f64>] {
        &self.snapshots.last().expect("trajectory always holds the final state").node_weights
    }

    /// Averaged weights for every `t = 1..=T+1`; requires stride 1.
    pub fn averages(&self) -> Result<Vec<&[f64]>, EngineError> {
        if self.stride != 1 {
            return Err(EngineError::InsufficientTrace { stride: self.stride });
        }
        Ok(self.snapshots.iter().map(|s| s.average.as_slice()).collect())
    }
}

/// Runs `config.iterations` steps of D-SGD from the shared initial weight.
pub fn run(config: &RunConfig) -> Result<Trajectory, EngineError> {
    config.validate()?;
    let precondition_met = config.precondition_met()?;
    if precondition_met == Some(false) {
        warn!("stepsize schedule {:?} violates the {:?} precondition; results are exploratory", config.schedule, config.cap);
    }
    let mut state = EngineState::initial(config);
    let mut snapshots = vec![Snapshot::of(&state)];
    let mut indices = Vec::with_capacity(config.iterations);
    let mut etas = Vec::with_capacity(config.iterations);
    let mut max_residual: Option<f64> = None;
    let mut max_grad_norm: f64 = 0.0;
    for _ in 0..config.iterations {
        let rec = step(config, &mut state)?;
        indices.push(rec.indices);
        etas.push(rec.eta);
        max_grad_norm = max_grad_norm.max(rec.max_grad_norm);
        if let Some(r) = rec.average_identity_residual {
            max_residual = Some(max_residual.map_or(r, |m| m.max(r)));
        }
        let keep = (state.t - 1).is_multiple_of(config.stride) || state.t == config.iterations + 1;
        if keep {
            snapshots.push(Snapshot::of(&state));
        }
    }
    Ok(Trajectory {
        stride: config.stride,
        iterations: config.iterations,
        snapshots,
        indices,
        etas,
        max_average_identity_residual: max_residual,
        max_grad_norm,
        precondition_met,
    })
}

/// Stepsize-weighted average `sum_{t=1}^{T+1} eta_t w_t / sum eta_t` of the averaged weights.
pub fn average_iterate(trajectory: &Trajectory, schedule: &StepSchedule) -> Result<Vec<f64>, EngineError> {
    let averages = trajectory.averages()?;
    let dim = averages[0].len();
    let mut acc = vec![0.0; dim];
    let mut total = 0.0;
    for (idx, w) in averages.iter().enumerate() {
        let eta = schedule.at(idx + 1);
        total += eta;
        acc.iter_mut().zip(w.iter()).for_each(|(a, v)| *a += eta * v);
    }
    acc.iter_mut().for_each(|a| *a /= total);
    Ok(acc)
}

/// `[sum_i ||wbar - w(i)||^2]^{1/2}`.
pub fn consensus_error(weights: &[Vec<f64>]) -> f64 {
    let avg = average(weights);
    weights
        .iter()
        .map(|w| w.iter().zip(&avg).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

/// `2 sqrt(m) L sum_{q=1}^{t} eta_q lambda^{t-q}` bounding the consensus error of `w^{t+1}`.
pub fn consensus_bound(t: usize, schedule: &StepSchedule, lambda: f64, lipschitz: f64, m: usize) -> f64 {
    let mut acc = 0.0;
    for q in 1..=t {
        acc = acc * lambda + schedule.at(q);
    }
    2.0 * (m as f64).sqrt() * lipschitz * acc
}

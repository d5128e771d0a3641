//! Coupled twin runs on neighbouring datasets and the empirical stability
//! quantities built from them.

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{average, step, EngineError, EngineState, RunConfig, SamplingRole, StepCap};
use crate::losses::{distance, norm, LossError, LossModel, PartitionedDataset, Sample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("invalid neighbour: {0}")]
    Validation(String),
    #[error("twin runs drew different indices at step {step}, node {node}")]
    Coupling { step: usize, node: usize },
}

/// Position `(r, k)` (0-based) to replace and the sample that goes there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSpec {
    pub r: usize,
    pub k: usize,
    pub replacement: Sample,
}

pub fn make_neighbor(dataset: &PartitionedDataset, spec: &NeighborSpec) -> Result<PartitionedDataset, StabilityError> {
    dataset
        .with_replacement(spec.r, spec.k, spec.replacement.clone())
        .map_err(|e| StabilityError::Validation(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrace {
    pub r: usize,
    pub k: usize,
    /// `d_t = ||wbar^t - vbar^t||` for `t = 1..=T+1`.
    pub divergence: Vec<f64>,
    /// `delta^t(i) = ||w^t(i) - v^t(i)||` for `t = 1..=T+1`.
    pub node_divergence: Vec<Vec<f64>>,
    /// Steps `t` (1-based) at which node `r` drew index `k`.
    pub hits: Vec<usize>,
    /// `eta_t` for `t = 1..=T`.
    pub etas: Vec<f64>,
    pub final_w: Vec<f64>,
    pub final_v: Vec<f64>,
    pub final_nodes_w: Vec<Vec<f64>>,
    pub final_nodes_v: Vec<Vec<f64>>,
    /// Both runs drew the same index at every `(node, step)`.
    pub coupling_verified: bool,
    pub precondition_met: Option<bool>,
    pub topology: String,
    pub schedule: String,
}

impl StabilityTrace {
    pub fn iterations(&self) -> usize {
        self.etas.len()
    }

    pub fn terminal_divergence(&self) -> f64 {
        *self.divergence.last().expect("trace has at least d_1")
    }

    pub fn first_hit(&self) -> Option<usize> {
        self.hits.first().copied()
    }
}

/// Runs the algorithm on `S` and `S^(rk)` with shared sample indices, in lockstep.
pub fn twin_run(config: &RunConfig, spec: &NeighborSpec) -> Result<StabilityTrace, StabilityError> {
    config.validate()?;
    if config.stride != 1 {
        return Err(EngineError::InsufficientTrace { stride: config.stride }.into());
    }
    let precondition_met = config.precondition_met()?;
    if precondition_met == Some(false) {
        warn!("twin run for ({}, {}) violates its stepsize precondition", spec.r, spec.k);
    }
    let neighbour = make_neighbor(&config.dataset, spec)?;
    let mut cfg_w = config.clone();
    cfg_w.role = SamplingRole::TwinShared;
    let mut cfg_v = cfg_w.clone();
    cfg_v.dataset = Arc::new(neighbour);

    let mut w = EngineState::initial(&cfg_w);
    let mut v = EngineState::initial(&cfg_v);
    let t_max = config.iterations;
    let mut divergence = Vec::with_capacity(t_max + 1);
    let mut node_divergence = Vec::with_capacity(t_max + 1);
    let mut hits = Vec::new();
    let mut etas = Vec::with_capacity(t_max);
    let record = |w: &EngineState, v: &EngineState, d: &mut Vec<f64>, nd: &mut Vec<Vec<f64>>| {
        d.push(distance(&average(&w.weights), &average(&v.weights)));
        nd.push(w.weights.iter().zip(&v.weights).map(|(a, b)| distance(a, b)).collect());
    };
    record(&w, &v, &mut divergence, &mut node_divergence);
    for _ in 0..t_max {
        let rw = step(&cfg_w, &mut w)?;
        let rv = step(&cfg_v, &mut v)?;
        if let Some(node) = rw.indices.iter().zip(&rv.indices).position(|(a, b)| a != b) {
            return Err(StabilityError::Coupling { step: rw.t, node });
        }
        if rw.indices[spec.r] == spec.k {
            hits.push(rw.t);
        }
        etas.push(rw.eta);
        record(&w, &v, &mut divergence, &mut node_divergence);
    }
    Ok(StabilityTrace {
        r: spec.r,
        k: spec.k,
        divergence,
        node_divergence,
        hits,
        etas,
        final_w: w.average(),
        final_v: v.average(),
        final_nodes_w: w.weights,
        final_nodes_v: v.weights,
        coupling_verified: true,
        precondition_met,
        topology: format!("{:?}", config.topology.kind()),
        schedule: format!("{:?}", config.schedule),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseEps {
    /// `L ||w^{T+1} - v^{T+1}||`
    pub surrogate: f64,
    /// Largest `|f(w; Z) - f(v; Z)|` over the evaluation pool, training set and replacement.
    pub direct: f64,
    /// Largest `||grad f(w; Z) - grad f(v; Z)||` over the same points.
    pub gradient: f64,
    /// Set when no external pool was given and only training samples were used.
    pub training_only: bool,
}

pub fn pointwise_eps(
    trace: &StabilityTrace,
    model: &LossModel,
    dataset: &PartitionedDataset,
    replacement: &Sample,
    eval_pool: &[Sample],
) -> Result<PointwiseEps, StabilityError> {
    let lipschitz = model.constants()?.lipschitz;
    let surrogate = lipschitz * distance(&trace.final_w, &trace.final_v);
    let mut direct: f64 = 0.0;
    let mut gradient: f64 = 0.0;
    for z in eval_pool.iter().chain(dataset.samples()).chain(std::iter::once(replacement)) {
        let fw = model.loss_eval(&trace.final_w, z)?;
        let fv = model.loss_eval(&trace.final_v, z)?;
        direct = direct.max((fw - fv).abs());
        let gw = model.loss_grad(&trace.final_w, z)?;
        let gv = model.loss_grad(&trace.final_v, z)?;
        gradient = gradient.max(distance(&gw, &gv));
    }
    Ok(PointwiseEps { surrogate, direct, gradient, training_only: eval_pool.is_empty() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityAggregate {
    /// `eps[r][k]`
    pub eps: Vec<Vec<f64>>,
    /// `(1/mn) sum eps_rk`
    pub delta_mean: f64,
    /// `(1/mn) sum eps_rk^2`
    pub delta_sq: f64,
    pub rms: f64,
    /// `max eps_rk`
    pub eps_uniform: f64,
}

pub fn aggregate(eps: Vec<Vec<f64>>) -> Result<StabilityAggregate, StabilityError> {
    let count = eps.iter().map(Vec::len).sum::<usize>();
    if count == 0 {
        return Err(StabilityError::Validation("empty stability matrix".into()));
    }
    if eps.iter().flatten().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(StabilityError::Validation("stability entries must be finite and non-negative".into()));
    }
    let cells = count as f64;
    let delta_mean = eps.iter().flatten().sum::<f64>() / cells;
    let delta_sq = eps.iter().flatten().map(|e| e * e).sum::<f64>() / cells;
    let eps_uniform = eps.iter().flatten().copied().fold(0.0, f64::max);
    Ok(StabilityAggregate { eps, delta_mean, delta_sq, rms: delta_sq.sqrt(), eps_uniform })
}

/// Per-node divergence vectors `delta^t` of a twin run, checked against the local stepsize cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTrace {
    pub r: usize,
    pub k: usize,
    pub node_divergence: Vec<Vec<f64>>,
    pub hits: Vec<usize>,
    pub etas: Vec<f64>,
    pub cap_met: bool,
}

impl LocalTrace {
    /// `delta^t(r)` for `t = 1..=T+1`.
    pub fn own_node(&self) -> Vec<f64> {
        self.node_divergence.iter().map(|d| d[self.r]).collect()
    }
}

pub fn local_trace(config: &RunConfig, spec: &NeighborSpec) -> Result<LocalTrace, StabilityError> {
    let beta = config.model.constants()?.smoothness;
    let cap_met = StepCap::LocalConvex.holds(&config.schedule, beta, &config.topology, config.iterations);
    if !cap_met {
        warn!("local run for ({}, {}) exceeds eta_t <= 2 P_rr / beta", spec.r, spec.k);
    }
    let trace = twin_run(config, spec)?;
    Ok(LocalTrace {
        r: trace.r,
        k: trace.k,
        node_divergence: trace.node_divergence,
        hits: trace.hits,
        etas: trace.etas,
        cap_met,
    })
}

/// Largest norm among the stored node weights of both runs.
pub fn max_weight_norm(trace: &StabilityTrace) -> f64 {
    trace.final_nodes_w.iter().chain(&trace.final_nodes_v).map(|w| norm(w)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StepSchedule;
    use crate::losses::LossFamily;
    use crate::topology::{build_topology, TopologyKind, TopologySchedule};
    use approx::assert_abs_diff_eq;

    fn config(seed: u64) -> RunConfig {
        let shards = (0..2)
            .map(|r| {
                (0..4)
                    .map(|k| {
                        let a = (r * 4 + k) as f64;
                        let x = vec![(a * 0.7).cos() * 0.9, (a * 1.3).sin() * 0.4];
                        Sample::new(x, if k % 2 == 0 { 1.0 } else { -1.0 })
                    })
                    .collect()
            })
            .collect();
        let data = PartitionedDataset::new(shards, 1.0, None).unwrap();
        let mut cfg = RunConfig::new(
            LossModel::new(LossFamily::Logistic, 2, 100.0, 1.0),
            Arc::new(data),
            StepSchedule::Constant { eta: 0.1 },
            TopologySchedule::fixed(build_topology(&TopologyKind::Complete, 2).unwrap()),
            60,
        );
        cfg.master_seed = seed;
        cfg
    }

    #[test]
    fn identical_replacement_never_diverges() {
        let cfg = config(3);
        let spec = NeighborSpec { r: 1, k: 2, replacement: cfg.dataset.get(1, 2).clone() };
        assert_eq!(make_neighbor(&cfg.dataset, &spec).unwrap(), *cfg.dataset);
        let trace = twin_run(&cfg, &spec).unwrap();
        assert!(trace.divergence.iter().all(|d| *d == 0.0));
        let eps = pointwise_eps(&trace, &cfg.model, &cfg.dataset, &spec.replacement, &[]).unwrap();
        assert_eq!((eps.surrogate, eps.direct), (0.0, 0.0));
        assert!(eps.training_only);
    }

    #[test]
    fn divergence_starts_at_first_hit() {
        let cfg = config(11);
        let spec = NeighborSpec { r: 0, k: 1, replacement: Sample::new(vec![0.0, -0.8], 1.0) };
        let trace = twin_run(&cfg, &spec).unwrap();
        let first = trace.first_hit().expect("60 steps over 4 samples hit at least once");
        assert!(trace.divergence[..first].iter().all(|d| *d == 0.0));
        assert!(trace.divergence[first] > 0.0);
        for (d, nd) in trace.divergence.iter().zip(&trace.node_divergence) {
            assert!(*d <= nd.iter().sum::<f64>() / nd.len() as f64 + 1e-12);
        }
        let eps = pointwise_eps(&trace, &cfg.model, &cfg.dataset, &spec.replacement, &[]).unwrap();
        assert!(eps.direct <= eps.surrogate + 1e-9);
    }

    #[test]
    fn aggregate_arithmetic() {
        let agg = aggregate(vec![vec![0.0, 2.0]]).unwrap();
        assert_abs_diff_eq!(agg.delta_mean, 1.0);
        assert_abs_diff_eq!(agg.rms, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(agg.eps_uniform, 2.0);
        let flat = aggregate(vec![vec![0.3; 3]; 2]).unwrap();
        assert_abs_diff_eq!(flat.rms, 0.3, epsilon = 1e-15);
        assert!(aggregate(vec![vec![-1.0]]).is_err());
    }

    #[test]
    fn bad_replacement_rejected() {
        let cfg = config(0);
        let spec = NeighborSpec { r: 0, k: 0, replacement: Sample::new(vec![3.0, 0.0], 1.0) };
        assert!(matches!(twin_run(&cfg, &spec), Err(StabilityError::Validation(_))));
    }

    #[test]
    fn local_divergence_enters_at_r() {
        let cfg = config(5);
        let spec = NeighborSpec { r: 1, k: 3, replacement: Sample::new(vec![-0.5, 0.5], -1.0) };
        let lt = local_trace(&cfg, &spec).unwrap();
        assert!(lt.cap_met);
        let first = lt.hits[0];
        let nd = &lt.node_divergence[first];
        assert!(nd[1] > 0.0);
        assert_eq!(nd[0], 0.0);
    }
}

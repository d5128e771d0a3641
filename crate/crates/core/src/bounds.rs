//! Closed-form and direct-summation stability, generalization and
//! optimization bounds for D-SGD.
//!
//! Every `*_delta` function evaluates the theorem's general sum directly
//! (`O(T^2)`) and, when the schedule has one, the corollary closed form
//! alongside it. Past-stepsize sums `sum_{q<t} eta_q lambda^{t-q-1}` use
//! `0^0 = 1`, so at `lambda = 0` the `q = t - 1` term survives.

use std::f64::consts::E;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::StepSchedule;
use crate::topology::{shifted_nonconvex, shifted_strongly_convex, TopologyError, TopologySchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("C_lambda is singular at lambda = {0}; need 0 < lambda < 1")]
    Domain(f64),
    #[error("invalid bound parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Convex,
    StronglyConvex,
    Nonconvex,
}

/// `C_lambda = 1/(lambda ln(1/lambda)) * (8/(e^2 ln(1/lambda)) + 2)`.
pub fn c_lambda(lambda: f64) -> Result<f64, BoundsError> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(BoundsError::Domain(lambda));
    }
    let l = (1.0 / lambda).ln();
    Ok((8.0 / (E * E * l) + 2.0) / (lambda * l))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub lipschitz: f64,
    pub smoothness: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub loss_bound: f64,
    #[serde(default)]
    pub sigma: f64,
    pub m: usize,
    pub n: usize,
    pub iterations: usize,
    pub lambda: f64,
    pub schedule: StepSchedule,
    #[serde(default = "default_confidence")]
    pub delta_conf: f64,
}

fn default_confidence() -> f64 {
    0.1
}

impl BoundParams {
    pub fn new(lipschitz: f64, smoothness: f64, m: usize, n: usize, iterations: usize, lambda: f64, schedule: StepSchedule) -> Self {
        Self {
            lipschitz,
            smoothness,
            mu: 0.0,
            gamma: 0.0,
            loss_bound: 0.0,
            sigma: 0.0,
            m,
            n,
            iterations,
            lambda,
            schedule,
            delta_conf: default_confidence(),
        }
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        let mut bad = Vec::new();
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            bad.push("L must be non-negative");
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            bad.push("beta must be positive");
        }
        for v in [self.mu, self.gamma, self.loss_bound, self.sigma] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push("mu, gamma, M and sigma must be non-negative");
                break;
            }
        }
        if self.m == 0 || self.n == 0 {
            bad.push("m and n must be positive");
        }
        if !(0.0..1.0).contains(&self.lambda) {
            bad.push("lambda must lie in [0, 1)");
        }
        if !(self.delta_conf > 0.0 && self.delta_conf < 1.0) {
            bad.push("confidence delta must lie in (0, 1)");
        }
        if self.schedule.validate().is_err() {
            bad.push("stepsize schedule parameter must be positive");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(BoundsError::Params(bad.join("; ")))
        }
    }

    fn mn(&self) -> f64 {
        (self.m * self.n) as f64
    }

    fn etas(&self) -> Vec<f64> {
        self.schedule.sequence(self.iterations)
    }
}

/// One theorem evaluated on one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: String,
    /// `Delta_rk` from the theorem's general sum.
    pub delta: f64,
    /// Corollary closed form for the schedule, when one exists.
    pub closed_form: Option<f64>,
    /// `Delta^2_rk` from indicator traces, when supplied.
    pub delta_sq: Option<f64>,
    /// Natural log of `delta`; the only finite value when `overflow` is set.
    pub log_delta: f64,
    pub log_closed_form: Option<f64>,
    pub overflow: bool,
    pub precondition_met: bool,
    pub params: BoundParams,
}

/// Hit steps (1-based) of node `r` on index `k`, indexed `[r][k]`.
pub type IndicatorTraces = Vec<Vec<Vec<usize>>>;

/// `S_t = sum_{q=1}^{t-1} eta_q lambda^{t-q-1}` for `t = 1..=T`, summed term by term.
pub fn past_sums_direct(etas: &[f64], lambda: f64) -> Vec<f64> {
    (1..=etas.len())
        .map(|t| {
            let mut pow = 1.0;
            let mut acc = 0.0;
            for q in (1..t).rev() {
                acc += etas[q - 1] * pow;
                pow *= lambda;
            }
            acc
        })
        .collect()
}

/// Same as [`past_sums_direct`] via `S_{t+1} = lambda S_t + eta_t`.
pub fn past_sums(etas: &[f64], lambda: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(etas.len());
    let mut s = 0.0;
    for eta in etas {
        out.push(s);
        s = lambda * s + eta;
    }
    out
}

/// Per-step multiplier `a_t` of the divergence recursion.
fn growth(regime: Regime, eta: f64, mu: f64, beta: f64) -> f64 {
    match regime {
        Regime::Convex => 1.0,
        Regime::StronglyConvex => 1.0 - eta * mu / 2.0,
        Regime::Nonconvex => 1.0 + beta * eta,
    }
}

/// `ln prod_{s=t+1}^{T} a_s` for `t = 1..=T`.
fn log_tail_products(regime: Regime, etas: &[f64], mu: f64, beta: f64) -> Vec<f64> {
    let mut out = vec![0.0; etas.len()];
    let mut acc = 0.0;
    for t in (0..etas.len()).rev() {
        out[t] = acc;
        acc += growth(regime, etas[t], mu, beta).ln();
    }
    out
}

/// `sum_t exp(log_weights_t) * terms_t` evaluated as a log-sum-exp, returning `(ln value, value)`.
fn weighted_sum(log_weights: &[f64], terms: &[f64]) -> (f64, f64) {
    let logs: Vec<f64> = log_weights
        .iter()
        .zip(terms)
        .filter(|(_, c)| **c > 0.0)
        .map(|(w, c)| w + c.ln())
        .collect();
    if logs.is_empty() {
        return (f64::NEG_INFINITY, 0.0);
    }
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_value = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    (log_value, log_value.exp())
}

/// Per-cell `eps_rk = 2 L^2 sum_t (2 beta eta_t S_t + eta_t I_t / m) prod_{s>t} a_s`.
fn cell_eps(p: &BoundParams, etas: &[f64], sums: &[f64], logs: &[f64], hits: &[usize]) -> f64 {
    let mut ind = vec![0.0; etas.len()];
    for &t in hits {
        if (1..=etas.len()).contains(&t) {
            ind[t - 1] = 1.0;
        }
    }
    let l2 = p.lipschitz * p.lipschitz;
    let terms: Vec<f64> = (0..etas.len())
        .map(|i| 2.0 * l2 * (2.0 * p.smoothness * etas[i] * sums[i] + etas[i] * ind[i] / p.m as f64))
        .collect();
    weighted_sum(logs, &terms).1
}

fn delta_sq_from_traces(p: &BoundParams, regime: Regime, traces: &IndicatorTraces) -> Result<f64, BoundsError> {
    if traces.len() != p.m || traces.iter().any(|row| row.len() != p.n) {
        return Err(BoundsError::Params(format!("indicator traces must be {}x{}", p.m, p.n)));
    }
    let etas = p.etas();
    let sums = past_sums_direct(&etas, p.lambda);
    let logs = log_tail_products(regime, &etas, p.mu, p.smoothness);
    let total: f64 = traces
        .iter()
        .flatten()
        .map(|hits| cell_eps(p, &etas, &sums, &logs, hits).powi(2))
        .sum();
    Ok(total / p.mn())
}

/// Theorem general sum `4 beta L^2 sum_t eta_t S_t F_t + (2 L^2/mn) sum_t eta_t F_t`, `F_t = prod_{s>t} a_s`.
fn general_delta(p: &BoundParams, regime: Regime) -> (f64, f64) {
    let etas = p.etas();
    let sums = past_sums_direct(&etas, p.lambda);
    let logs = log_tail_products(regime, &etas, p.mu, p.smoothness);
    let l2 = p.lipschitz * p.lipschitz;
    let terms: Vec<f64> = etas
        .iter()
        .zip(&sums)
        .map(|(eta, s)| 4.0 * p.smoothness * l2 * eta * s + 2.0 * l2 * eta / p.mn())
        .collect();
    weighted_sum(&logs, &terms)
}

fn all_steps(p: &BoundParams, cap: impl Fn(f64) -> bool) -> bool {
    (1..=p.iterations).all(|t| cap(p.schedule.at(t)))
}

fn report(
    theorem: &str,
    p: &BoundParams,
    (log_delta, delta): (f64, f64),
    closed: Option<(f64, f64)>,
    delta_sq: Option<f64>,
    precondition_met: bool,
) -> BoundReport {
    let overflow = !delta.is_finite() || closed.is_some_and(|(_, v)| !v.is_finite());
    BoundReport {
        theorem: theorem.to_string(),
        delta,
        closed_form: closed.map(|(_, v)| v),
        delta_sq,
        log_delta,
        log_closed_form: closed.map(|(l, _)| l),
        overflow,
        precondition_met,
        params: *p,
    }
}

fn plain(v: f64) -> (f64, f64) {
    (v.ln(), v)
}

/// Decreasing-step closed form of the convex corollary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvexDecreasingForm {
    /// `2 L^2 (2 beta C_lambda T/(T+1) + ln(T+1)/mn)`
    #[default]
    WithCLambda,
    /// `2 L^2 (2 beta T/(T+1) + ln(T+1)/mn)`
    WithoutCLambda,
}

pub fn convex_delta(p: &BoundParams, traces: Option<&IndicatorTraces>) -> Result<BoundReport, BoundsError> {
    convex_delta_with(p, traces, ConvexDecreasingForm::WithCLambda)
}

pub fn convex_delta_with(
    p: &BoundParams,
    traces: Option<&IndicatorTraces>,
    form: ConvexDecreasingForm,
) -> Result<BoundReport, BoundsError> {
    p.validate()?;
    let (l2, beta, t, mn) = (p.lipschitz.powi(2), p.smoothness, p.iterations as f64, p.mn());
    let closed = match p.schedule {
        StepSchedule::Constant { eta } => Some(2.0 * l2 * eta * t * (2.0 * eta * beta / (1.0 - p.lambda) + 1.0 / mn)),
        StepSchedule::InvT => {
            let c = match form {
                ConvexDecreasingForm::WithCLambda => c_lambda(p.lambda).ok(),
                ConvexDecreasingForm::WithoutCLambda => Some(1.0),
            };
            c.map(|c| 2.0 * l2 * (2.0 * beta * c * t / (t + 1.0) + (t + 1.0).ln() / mn))
        }
        _ => None,
    };
    let delta_sq = traces.map(|tr| delta_sq_from_traces(p, Regime::Convex, tr)).transpose()?;
    Ok(report(
        "convex",
        p,
        general_delta(p, Regime::Convex),
        closed.map(plain),
        delta_sq,
        all_steps(p, |eta| eta <= 2.0 / beta + 1e-12),
    ))
}

/// Stability of the stepsize-weighted average iterate `sum_{t=1}^{T+1} eta_t w^t / sum eta_t`.
pub fn avg_weight_delta(p: &BoundParams, traces: Option<&IndicatorTraces>) -> Result<BoundReport, BoundsError> {
    p.validate()?;
    let (l, beta, t, mn) = (p.lipschitz, p.smoothness, p.iterations as f64, p.mn());
    let etas = p.schedule.sequence(p.iterations + 1);
    let sums = past_sums_direct(&etas, p.lambda);
    let per_step = |ind: &dyn Fn(usize) -> f64| {
        // E_t = sum_{s<t} eta_s (4 beta L S_s + 2 L I_s / m), the convex divergence bound at step t.
        let mut e = 0.0;
        let mut num = 0.0;
        for i in 0..etas.len() {
            num += etas[i] * e;
            e += etas[i] * (4.0 * beta * l * sums[i] + 2.0 * l * ind(i + 1) / p.m as f64);
        }
        l * num / etas.iter().sum::<f64>()
    };
    let general = per_step(&|_| 1.0 / p.n as f64);
    let closed = match p.schedule {
        StepSchedule::Constant { eta } => Some(2.0 * l * l * eta * t * (eta * beta / (1.0 - p.lambda) + 1.0 / mn)),
        StepSchedule::InvT => c_lambda(p.lambda).ok().map(|c| 4.0 * l * l * beta * c + l * l * (t + 2.0).ln() / mn),
        _ => None,
    };
    let delta_sq = match traces {
        None => None,
        Some(tr) => {
            if tr.len() != p.m || tr.iter().any(|row| row.len() != p.n) {
                return Err(BoundsError::Params(format!("indicator traces must be {}x{}", p.m, p.n)));
            }
            let total: f64 = tr
                .iter()
                .flatten()
                .map(|hits| per_step(&|s| if hits.contains(&s) { 1.0 } else { 0.0 }).powi(2))
                .sum();
            Some(total / mn)
        }
    };
    Ok(report(
        "average-weight",
        p,
        plain(general),
        closed.map(plain),
        delta_sq,
        all_steps(p, |eta| eta <= 2.0 / beta + 1e-12),
    ))
}

/// Strongly convex stability with `eta_t = 2/(mu (t+1))` as the decreasing schedule.
pub fn strongly_convex_delta(p: &BoundParams, traces: Option<&IndicatorTraces>) -> Result<BoundReport, BoundsError> {
    p.validate()?;
    if p.mu <= 0.0 {
        return Err(BoundsError::Params("strongly convex bounds need mu > 0".into()));
    }
    let (l2, beta, mu, t, mn) = (p.lipschitz.powi(2), p.smoothness, p.mu, p.iterations as f64, p.mn());
    let closed = match p.schedule {
        StepSchedule::Constant { eta } => Some(4.0 * l2 / mu * (2.0 * eta * beta / (1.0 - p.lambda) + 1.0 / mn)),
        StepSchedule::InvTMu { mu: s } if (s - mu).abs() <= 1e-15 * mu && p.iterations >= 1 => c_lambda(p.lambda)
            .ok()
            .map(|c| 16.0 * beta * l2 * c / (t * mu * mu) * (t.ln() + 1.0) + 4.0 * l2 / (mu * mn)),
        _ => None,
    };
    let delta_sq = traces.map(|tr| delta_sq_from_traces(p, Regime::StronglyConvex, tr)).transpose()?;
    Ok(report(
        "strongly-convex",
        p,
        general_delta(p, Regime::StronglyConvex),
        closed.map(plain),
        delta_sq,
        all_steps(p, |eta| eta <= 1.0 / beta + 1e-12),
    ))
}

/// Nonconvex stability; closed forms are evaluated in log domain.
pub fn nonconvex_delta(p: &BoundParams, traces: Option<&IndicatorTraces>) -> Result<BoundReport, BoundsError> {
    p.validate()?;
    let (l2, beta, t, mn) = (p.lipschitz.powi(2), p.smoothness, p.iterations as f64, p.mn());
    let closed_log = match p.schedule {
        StepSchedule::Constant { eta } => {
            Some((2.0 * l2 * (2.0 * eta / (1.0 - p.lambda) + 1.0 / (mn * beta))).ln() + t * (beta * eta).ln_1p())
        }
        StepSchedule::InvT => c_lambda(p.lambda)
            .ok()
            .map(|c| (4.0 * l2 * (4.0 * c + 1.0 / (beta * mn))).ln() + beta * (t + 1.0).ln()),
        StepSchedule::InvTBeta { beta: b } if (b - beta).abs() <= 1e-15 * beta => c_lambda(p.lambda)
            .ok()
            .map(|c| (4.0 * l2 * (t + 1.0) * (2.0 * c + 1.0 / (beta * mn))).ln()),
        _ => None,
    };
    let delta_sq = traces.map(|tr| delta_sq_from_traces(p, Regime::Nonconvex, tr)).transpose()?;
    Ok(report(
        "nonconvex",
        p,
        general_delta(p, Regime::Nonconvex),
        closed_log.map(|l| (l, l.exp())),
        delta_sq,
        true,
    ))
}

/// `e_1 = 0`, `e_{t+1} = a_t e_t + 4 eta_t beta L S_t + (2 eta_t L/m) 1[t in hits]`; returns `e_1..=e_{T+1}`.
pub fn per_step_envelope(regime: Regime, p: &BoundParams, hits: &[usize]) -> Vec<f64> {
    let etas = p.etas();
    let sums = past_sums(&etas, p.lambda);
    let mut out = Vec::with_capacity(etas.len() + 1);
    let mut e = 0.0;
    out.push(e);
    let mut next_hit = hits.iter().peekable();
    for (i, (&eta, s)) in etas.iter().zip(&sums).enumerate() {
        let t = i + 1;
        let mut hit = 0.0;
        while let Some(&&h) = next_hit.peek() {
            if h < t {
                next_hit.next();
            } else {
                if h == t {
                    hit = 1.0;
                }
                break;
            }
        }
        e = growth(regime, eta, p.mu, p.smoothness) * e
            + 4.0 * eta * p.smoothness * p.lipschitz * s
            + 2.0 * eta * p.lipschitz / p.m as f64 * hit;
        out.push(e);
    }
    out
}

/// The theorem's per-cell stability `eps_rk` for one indicator trace.
pub fn trace_eps(regime: Regime, p: &BoundParams, hits: &[usize]) -> f64 {
    let etas = p.etas();
    let sums = past_sums_direct(&etas, p.lambda);
    let logs = log_tail_products(regime, &etas, p.mu, p.smoothness);
    cell_eps(p, &etas, &sums, &logs, hits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationShape {
    pub value: f64,
    /// `M sqrt(ln(1/delta)) / sqrt(mn)`
    pub sampling_term: f64,
    /// `rms ln(mn) ln(1/delta)`
    pub stability_term: f64,
    pub constant: String,
}

/// High-probability generalization gap up to an absolute constant, which is set to 1.
pub fn generalization_bound(loss_bound: f64, mn: usize, delta_conf: f64, rms: f64) -> Result<GeneralizationShape, BoundsError> {
    if mn < 2 {
        return Err(BoundsError::Params("generalization shape needs mn >= 2".into()));
    }
    if !(delta_conf > 0.0 && delta_conf < 1.0) {
        return Err(BoundsError::Params("confidence delta must lie in (0, 1)".into()));
    }
    let inv = (1.0 / delta_conf).ln();
    let sampling_term = loss_bound * inv.sqrt() / (mn as f64).sqrt();
    let stability_term = rms * (mn as f64).ln() * inv;
    Ok(GeneralizationShape {
        value: sampling_term + stability_term,
        sampling_term,
        stability_term,
        constant: "unit (shape only)".to_string(),
    })
}

/// Expected-form uniform stability bound, which equals the convex `Delta_rk`.
pub fn uniform_eps_bound(p: &BoundParams) -> Result<f64, BoundsError> {
    let rep = convex_delta(p, None)?;
    Ok(rep.closed_form.unwrap_or(rep.delta))
}

/// `4 beta L^2 sum_t eta_t S_t + (2 L^2/m) max_{r,k} sum_t eta_t I[j_t(r)=k]` on realised traces.
pub fn realized_uniform_eps(p: &BoundParams, traces: &IndicatorTraces) -> Result<f64, BoundsError> {
    p.validate()?;
    let etas = p.etas();
    let sums = past_sums_direct(&etas, p.lambda);
    let l2 = p.lipschitz.powi(2);
    let first: f64 = 4.0 * p.smoothness * l2 * etas.iter().zip(&sums).map(|(e, s)| e * s).sum::<f64>();
    let max_hit = traces
        .iter()
        .flatten()
        .map(|hits| hits.iter().filter(|&&t| (1..=etas.len()).contains(&t)).map(|&t| etas[t - 1]).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(first + 2.0 * l2 / p.m as f64 * max_hit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub delta_mean: f64,
    pub rms: f64,
    pub eps_uniform: f64,
    /// `rms <= eps_uniform`
    pub holds: bool,
}

pub fn compare_pointwise_uniform(agg: &crate::stability::StabilityAggregate) -> OrderingReport {
    OrderingReport {
        delta_mean: agg.delta_mean,
        rms: agg.rms,
        eps_uniform: agg.eps_uniform,
        holds: agg.rms <= agg.eps_uniform,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptRhs {
    pub terms: [f64; 6],
    pub total: f64,
    /// `total / ((4 eta gamma / 3)(T+1))`, bounding the mean optimization gap; `None` when `gamma = 0`.
    pub corollary: Option<f64>,
    pub precondition_met: bool,
}

/// Right-hand side bounding `(eta/3) sum_{t=1}^{T+1} ||grad R_S(wbar^t)||^2` with probability `1 - delta`.
pub fn opt_rhs_constant(p: &BoundParams) -> Result<OptRhs, BoundsError> {
    p.validate()?;
    let Some(eta) = p.schedule.constant_eta() else {
        return Err(BoundsError::Params("the optimization bound needs a constant stepsize".into()));
    };
    let (l2, beta, s2) = (p.lipschitz.powi(2), p.smoothness, p.sigma.powi(2));
    let tp1 = p.iterations as f64 + 1.0;
    let log_term = (2.0 / p.delta_conf).ln();
    let gap = 1.0 - p.lambda;
    let terms = [
        2.0 * log_term * (eta * l2).max(s2 / beta),
        1.5 * beta * l2 * tp1 * eta.powi(4),
        1.5 * beta * s2 * tp1 * eta * eta,
        12.0 * l2 * beta * log_term,
        6.0 * beta.powi(3) * l2 * tp1 * eta.powi(4) / (gap * gap),
        2.0 * beta * l2 * eta * eta * tp1 / gap,
    ];
    let total = terms.iter().sum::<f64>();
    let corollary = (p.gamma > 0.0).then(|| total / (4.0 * eta * p.gamma / 3.0 * tp1));
    Ok(OptRhs { terms, total, corollary, precondition_met: eta <= 1.0 / (3.0 * beta) + 1e-12 })
}

/// Which product the local-model bound multiplies a hit at step `t` by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainConvention {
    /// `Q^T ... Q^t`, as the local theorems are stated.
    #[default]
    Inclusive,
    /// `Q^T ... Q^{t+1}`, the product the recursion actually unrolls to.
    Exclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBound {
    /// Bound on `delta^{T+1}(r)`: `2 L sum_t [Q^{T:t}]_rr eta_t 1[t in hits]`.
    pub divergence: f64,
    /// `L * divergence`.
    pub eps: f64,
    /// `(2 L^2/n) sum_t [Q^{T:t}]_rr eta_t`.
    pub mean_over_k: f64,
    /// `[Q^{T:t}]_rr` for `t = 1..=T`.
    pub chain_diagonal: Vec<f64>,
    pub precondition_met: bool,
}

/// Local-model bound for node `r` (0-based) under a possibly time-varying topology.
pub fn local_bound(
    regime: Regime,
    topology: &TopologySchedule,
    p: &BoundParams,
    r: usize,
    hits: &[usize],
    convention: ChainConvention,
) -> Result<LocalBound, BoundsError> {
    p.validate()?;
    let m = topology.m();
    if r >= m {
        return Err(BoundsError::Params(format!("node {r} out of range for m = {m}")));
    }
    let big_t = p.iterations;
    let etas = p.etas();
    let mut precondition_met = true;
    let mut mats = Vec::with_capacity(big_t);
    for t in 1..=big_t {
        let pt = topology.at(t)?;
        let eta = etas[t - 1];
        let q = match regime {
            Regime::Convex => {
                precondition_met &= eta <= 2.0 * pt.min_diagonal() / p.smoothness + 1e-12;
                pt.entries().clone()
            }
            Regime::StronglyConvex => {
                precondition_met &= eta <= pt.min_diagonal() / p.smoothness + 1e-12;
                shifted_strongly_convex(pt, eta, p.mu)?
            }
            Regime::Nonconvex => shifted_nonconvex(pt, eta, p.smoothness, r)?,
        };
        mats.push(q);
    }
    // Row r of Q^T ... Q^t, accumulated backwards.
    let mut row = DVector::<f64>::zeros(m).transpose();
    row[r] = 1.0;
    let mut chain_diagonal = vec![0.0; big_t];
    for t in (1..=big_t).rev() {
        let before = row[r];
        row = &row * &mats[t - 1];
        chain_diagonal[t - 1] = match convention {
            ChainConvention::Inclusive => row[r],
            ChainConvention::Exclusive => before,
        };
    }
    let l = p.lipschitz;
    let divergence = 2.0
        * l
        * hits
            .iter()
            .filter(|&&t| (1..=big_t).contains(&t))
            .map(|&t| chain_diagonal[t - 1] * etas[t - 1])
            .sum::<f64>();
    let mean_over_k =
        2.0 * l * l / p.n as f64 * chain_diagonal.iter().zip(&etas).map(|(c, e)| c * e).sum::<f64>();
    Ok(LocalBound { divergence, eps: l * divergence, mean_over_k, chain_diagonal, precondition_met })
}

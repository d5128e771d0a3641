//! The acceptance suite: fifteen numbered checks, each producing a pass/fail
//! verdict and a deterministic metric payload.

use std::sync::OnceLock;
use std::time::Instant;

use anyhow::{anyhow, Result};
use dsgd_core::bounds::{
    avg_weight_delta, c_lambda, convex_delta, local_bound, nonconvex_delta, per_step_envelope, strongly_convex_delta,
    BoundParams, BoundReport, ChainConvention, Regime,
};
use dsgd_core::engine::{consensus_bound, consensus_error, run, StepCap, StepSchedule};
use dsgd_core::losses::{
    distance, empirical_grad, empirical_risk, exact_variance, minimizer_oracle, norm, LossFamily, LossModel,
    PartitionedDataset, Sample,
};
use dsgd_core::stability::{aggregate, pointwise_eps, twin_run, NeighborSpec};
use dsgd_core::topology::{build_topology, symmetric_eigenvalues, TopologyKind, TopologySchedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{eval_pool, fresh_replacement};
use crate::scenario::Scenario;

pub const CRITERIA: [(u32, &str); 15] = [
    (1, "topology spectral quantity"),
    (2, "non-expansive gradient steps"),
    (3, "C_lambda summation lemma"),
    (4, "consensus error bound"),
    (5, "convex divergence envelope"),
    (6, "strongly convex envelope and closed form"),
    (7, "nonconvex divergence envelope"),
    (8, "pointwise versus uniform ordering"),
    (9, "closed forms against direct sums"),
    (10, "constant-step optimization bound"),
    (11, "decreasing-step optimization rate"),
    (12, "sampling-term scaling"),
    (13, "local-model bound"),
    (14, "determinism across runs and thread counts"),
    (15, "exact variance against Monte Carlo"),
];

const RECURSION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    /// Set when the criterion is known to fail for a documented reason.
    pub known_gap: Option<String>,
    pub metrics: Value,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} [{}] {}: {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail
        )
    }
}

/// A criterion result plus its wall-clock time, which is kept out of the metric payload.
#[derive(Debug, Clone)]
pub struct Timed {
    pub result: CriterionResult,
    pub seconds: f64,
}

fn title(id: u32) -> String {
    CRITERIA.iter().find(|(i, _)| *i == id).map(|(_, t)| t.to_string()).unwrap_or_default()
}

fn outcome(id: u32, passed: bool, detail: String, metrics: Value) -> CriterionResult {
    CriterionResult { id, title: title(id), passed, detail, known_gap: None, metrics }
}

/// Lazily computed twin-run grids shared by criteria 5 to 8.
#[derive(Default)]
pub struct Suite {
    convex: OnceLock<Result<Grid, String>>,
    strongly: OnceLock<Result<Grid, String>>,
    nonconvex: OnceLock<Result<Grid, String>>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    fn grid(&self, regime: Regime) -> Result<&Grid> {
        let cell = match regime {
            Regime::Convex => &self.convex,
            Regime::StronglyConvex => &self.strongly,
            Regime::Nonconvex => &self.nonconvex,
        };
        cell.get_or_init(|| stability_grid(regime).map_err(|e| format!("{e:#}")))
            .as_ref()
            .map_err(|e| anyhow!("{e}"))
    }

    pub fn run(&self, id: u32) -> CriterionResult {
        let res = match id {
            1 => c01_topology(),
            2 => c02_nonexpansive(),
            3 => c03_c_lambda(),
            4 => c04_consensus(),
            5 => self.grid(Regime::Convex).map(|g| envelope_result(5, g)),
            6 => self.grid(Regime::StronglyConvex).map(strongly_convex_result),
            7 => self.grid(Regime::Nonconvex).map(|g| envelope_result(7, g)),
            8 => self.c08_ordering(),
            9 => c09_closed_forms(),
            10 => c10_optimization(),
            11 => c11_decreasing_rate(),
            12 => c12_sampling_scaling(),
            13 => c13_local(),
            14 => c14_determinism(),
            15 => c15_variance(),
            _ => Err(anyhow!("no criterion {id}")),
        };
        res.unwrap_or_else(|e| outcome(id, false, format!("error: {e:#}"), json!({ "error": format!("{e:#}") })))
    }

    pub fn run_timed(&self, id: u32) -> Timed {
        let start = Instant::now();
        let result = self.run(id);
        Timed { result, seconds: start.elapsed().as_secs_f64() }
    }

    fn c08_ordering(&self) -> Result<CriterionResult> {
        let mut rows = Vec::new();
        let mut ok = true;
        for regime in [Regime::Convex, Regime::StronglyConvex, Regime::Nonconvex] {
            let g = self.grid(regime)?;
            let rms_ok = g.sweeps.iter().all(|s| s.rms <= s.eps_uniform);
            let direct_ok = g.max_direct_excess <= RECURSION_SLACK;
            ok &= rms_ok && direct_ok;
            rows.push(json!({
                "regime": regime,
                "sweeps": g.sweeps.len(),
                "rms_le_uniform": rms_ok,
                "max_direct_minus_surrogate": g.max_direct_excess,
                "max_rms_over_uniform": g.sweeps.iter().map(|s| s.rms / s.eps_uniform.max(f64::MIN_POSITIVE)).fold(0.0, f64::max),
            }));
        }
        let detail = format!("rms <= eps_uniform and direct <= surrogate on all {} sweeps", rows.iter().map(|r| r["sweeps"].as_u64().unwrap_or(0)).sum::<u64>());
        Ok(outcome(8, ok, detail, json!({ "regimes": rows })))
    }
}

/// Runs the criteria in `ids` on a rayon pool with `jobs` threads.
pub fn run_suite(ids: &[u32], jobs: usize) -> Result<Vec<Timed>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    Ok(pool.install(|| {
        let suite = Suite::new();
        ids.iter().map(|&id| suite.run_timed(id)).collect()
    }))
}

/// Serialized metric payload of a set of results; the bytes criterion 14 compares.
pub fn metric_payload(results: &[CriterionResult]) -> String {
    let v: Vec<Value> = results
        .iter()
        .map(|r| json!({ "id": r.id, "passed": r.passed, "metrics": r.metrics }))
        .collect();
    serde_json::to_string(&v).expect("metric payload serializes")
}

// ---------------------------------------------------------------- criterion 1

/// Cyclic Jacobi eigenvalues of a small symmetric matrix, used as an oracle independent of nalgebra.
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn c01_topology() -> Result<CriterionResult> {
    let mut complete = Vec::new();
    for m in [2, 4, 8] {
        complete.push((m, build_topology(&TopologyKind::Complete, m)?.lambda()));
    }
    let ring = build_topology(&TopologyKind::Ring, 4)?;
    let oracle = jacobi_eigenvalues(&ring.to_rows());
    let oracle_lambda = oracle[1].abs().max(oracle[oracle.len() - 1].abs());
    let nalgebra_values = symmetric_eigenvalues(ring.entries())?;
    let complete_ok = complete.iter().all(|(_, l)| *l == 0.0);
    let ring_ok = (ring.lambda() - 1.0 / 3.0).abs() <= 1e-12 && (ring.lambda() - oracle_lambda).abs() <= 1e-12;
    Ok(outcome(
        1,
        complete_ok && ring_ok,
        format!("complete lambda = {:?}; ring(4) lambda = {:.15} (oracle {:.15})", complete.iter().map(|c| c.1).collect::<Vec<_>>(), ring.lambda(), oracle_lambda),
        json!({
            "complete": complete.iter().map(|(m, l)| json!({"m": m, "lambda": l})).collect::<Vec<_>>(),
            "ring4_lambda": ring.lambda(),
            "ring4_oracle_lambda": oracle_lambda,
            "ring4_oracle_spectrum": oracle,
            "ring4_spectrum": nalgebra_values,
        }),
    ))
}

// ---------------------------------------------------------------- criterion 2

fn random_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let nv = norm(&v);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    v.iter().map(|x| x * r / nv).collect()
}

fn gradient_step(model: &LossModel, w: &[f64], z: &Sample, eta: f64) -> Result<Vec<f64>> {
    let g = model.loss_grad(w, z)?;
    Ok(w.iter().zip(&g).map(|(a, b)| a - eta * b).collect())
}

fn c02_nonexpansive() -> Result<CriterionResult> {
    const PAIRS: usize = 10_000;
    let cases: Vec<(&str, LossModel, bool)> = vec![
        ("logistic", LossModel::new(LossFamily::Logistic, 5, 10.0, 1.0), false),
        ("ridge-logistic", LossModel::new(LossFamily::RidgeLogistic { mu: 0.1 }, 5, 10.0, 1.0), true),
        ("quadratic", LossModel::new(LossFamily::Quadratic { mu: 1.0 }, 5, 10.0, 1.0).with_label_bound(2.0), false),
        ("quadratic-1d", LossModel::new(LossFamily::Quadratic { mu: 0.7 }, 1, 10.0, 1.0).with_label_bound(2.0), true),
    ];
    let mut rows = Vec::new();
    let mut ok = true;
    for (ci, (name, model, strongly)) in cases.into_iter().enumerate() {
        let c = model.constants()?;
        let mut rng = ChaCha8Rng::seed_from_u64(200 + ci as u64);
        let (mut expand_viol, mut contract_viol) = (0usize, 0usize);
        let (mut worst_expand, mut worst_contract) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let radius = model.domain_radius.unwrap_or(10.0);
        for _ in 0..PAIRS {
            let w = random_ball(&mut rng, model.dim, radius);
            let v = random_ball(&mut rng, model.dim, radius);
            let x = if model.dim == 1 {
                vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]
            } else {
                random_ball(&mut rng, model.dim, model.feature_bound)
            };
            let y = match model.family {
                LossFamily::Quadratic { .. } => rng.random_range(-model.label_bound..=model.label_bound),
                _ => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            let z = Sample::new(x, y);
            let d0 = distance(&w, &v);
            let eta = rng.random::<f64>() * 2.0 / c.smoothness;
            let d1 = distance(&gradient_step(&model, &w, &z, eta)?, &gradient_step(&model, &v, &z, eta)?);
            worst_expand = worst_expand.max(d1 - d0);
            if d1 > d0 + RECURSION_SLACK {
                expand_viol += 1;
            }
            if strongly {
                let eta = rng.random::<f64>() / c.smoothness;
                let d1 = distance(&gradient_step(&model, &w, &z, eta)?, &gradient_step(&model, &v, &z, eta)?);
                let bound = (1.0 - eta * c.strong_convexity / 2.0) * d0;
                worst_contract = worst_contract.max(d1 - bound);
                if d1 > bound + RECURSION_SLACK {
                    contract_viol += 1;
                }
            }
        }
        ok &= expand_viol == 0 && contract_viol == 0;
        rows.push(json!({
            "family": name,
            "pairs": PAIRS,
            "expansion_violations": expand_viol,
            "worst_expansion": worst_expand,
            "contraction_checked": strongly,
            "contraction_violations": contract_viol,
            "worst_contraction_excess": if strongly { json!(worst_contract) } else { Value::Null },
        }));
    }
    Ok(outcome(2, ok, format!("{PAIRS} pairs per family, zero violations required"), json!({ "families": rows })))
}

// ---------------------------------------------------------------- criterion 3

fn c03_c_lambda() -> Result<CriterionResult> {
    const T_MAX: usize = 10_000;
    let mut rows = Vec::new();
    let mut violations = 0usize;
    for i in 1..=9 {
        let lambda = i as f64 / 10.0;
        let c = c_lambda(lambda)?;
        let mut lhs = 0.0;
        let mut worst_ratio: f64 = 0.0;
        for t in 1..=T_MAX {
            // lhs = sum_{q=1}^{t-1} lambda^{t-1-q}/(q+1)
            if t >= 2 {
                lhs = lambda * lhs + 1.0 / t as f64;
            }
            let rhs = c / t as f64;
            worst_ratio = worst_ratio.max(lhs / rhs);
            if lhs > rhs {
                violations += 1;
            }
        }
        rows.push(json!({ "lambda": lambda, "c_lambda": c, "max_lhs_over_rhs": worst_ratio }));
    }
    Ok(outcome(
        3,
        violations == 0,
        format!("{violations} violations over lambda in 0.1..0.9, t <= {T_MAX}"),
        json!({ "violations": violations, "grid": rows }),
    ))
}

// ---------------------------------------------------------------- criterion 4

fn c04_consensus() -> Result<CriterionResult> {
    let cells: Vec<(TopologyKind, u64)> = [TopologyKind::Ring, TopologyKind::Complete]
        .into_iter()
        .flat_map(|k| (0..20).map(move |s| (k.clone(), s)))
        .collect();
    let rows: Vec<Result<(String, u64, usize, f64)>> = cells
        .par_iter()
        .map(|(kind, seed)| {
            let sc = Scenario::new(LossFamily::Logistic, 4, 16, kind.clone(), StepSchedule::Constant { eta: 0.1 }, 500, *seed);
            let (cfg, _) = sc.build()?;
            let lambda = cfg.topology.max_lambda();
            let lip = cfg.model.constants()?.lipschitz;
            let traj = run(&cfg)?;
            let mut violations = 0;
            let mut worst: f64 = f64::NEG_INFINITY;
            for snap in &traj.snapshots {
                let t = snap.t - 1;
                let bound = consensus_bound(t, &cfg.schedule, lambda, lip, cfg.m());
                let err = consensus_error(&snap.node_weights);
                worst = worst.max(err - bound);
                if err > bound + RECURSION_SLACK {
                    violations += 1;
                }
            }
            Ok((kind.to_string(), *seed, violations, worst))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let violations: usize = rows.iter().map(|r| r.2).sum();
    let worst = rows.iter().map(|r| r.3).fold(f64::NEG_INFINITY, f64::max);
    Ok(outcome(
        4,
        violations == 0,
        format!("{} runs x 501 steps, {violations} violations, worst error - bound = {worst:.3e}", rows.len()),
        json!({
            "runs": rows.iter().map(|(k, s, v, w)| json!({"topology": k, "seed": s, "violations": v, "worst_margin": w})).collect::<Vec<_>>(),
        }),
    ))
}

// ---------------------------------------------------------- criteria 5 to 8

#[derive(Debug, Clone)]
struct SweepSummary {
    seed: u64,
    m: usize,
    n: usize,
    lambda: f64,
    cells: usize,
    violations: usize,
    worst_margin: f64,
    /// Largest `d_t / e_t` over steps with a positive envelope.
    max_ratio: f64,
    max_terminal: f64,
    delta_mean: f64,
    rms: f64,
    eps_uniform: f64,
    closed_form: Option<f64>,
    closed_form_long: Option<f64>,
    closed_violations: usize,
    precondition_met: bool,
}

#[derive(Debug, Clone)]
struct Grid {
    regime: Regime,
    sweeps: Vec<SweepSummary>,
    max_direct_excess: f64,
}

fn grid_scenario(regime: Regime, m: usize, n: usize, seed: u64) -> Scenario {
    match regime {
        Regime::Convex => {
            let mut sc = Scenario::new(LossFamily::Logistic, m, n, TopologyKind::Ring, StepSchedule::Constant { eta: 0.1 }, 200, seed);
            sc.cap = Some(StepCap::Convex);
            sc
        }
        Regime::StronglyConvex => {
            let mut sc = Scenario::new(
                LossFamily::RidgeLogistic { mu: 0.1 },
                m,
                n,
                TopologyKind::Ring,
                StepSchedule::Constant { eta: 0.5 },
                200,
                seed,
            );
            sc.domain_radius = 2.0;
            sc.projected = true;
            sc.cap = Some(StepCap::StronglyConvex);
            sc
        }
        Regime::Nonconvex => {
            let mut sc = Scenario::new(
                LossFamily::SaturatingNonconvex,
                m,
                n,
                TopologyKind::Ring,
                StepSchedule::Constant { eta: 0.1 },
                100,
                seed,
            );
            sc.cap = Some(StepCap::Nonconvex);
            sc
        }
    }
}

fn stability_grid(regime: Regime) -> Result<Grid> {
    let cells: Vec<(u64, usize, usize)> = (0..10u64)
        .flat_map(|s| [(2, 8), (2, 16), (4, 8), (4, 16)].into_iter().map(move |(m, n)| (s, m, n)))
        .collect();
    let sweeps: Vec<Result<(SweepSummary, f64)>> = cells.par_iter().map(|&(seed, m, n)| sweep_cell(regime, m, n, seed)).collect();
    let mut out = Vec::new();
    let mut max_direct_excess = f64::NEG_INFINITY;
    for s in sweeps {
        let (summary, excess) = s?;
        max_direct_excess = max_direct_excess.max(excess);
        out.push(summary);
    }
    Ok(Grid { regime, sweeps: out, max_direct_excess })
}

fn sweep_cell(regime: Regime, m: usize, n: usize, seed: u64) -> Result<(SweepSummary, f64)> {
    let sc = grid_scenario(regime, m, n, seed);
    let (cfg, synth) = sc.build()?;
    let consts = cfg.model.constants()?;
    let lambda = cfg.topology.max_lambda();
    let mut params = BoundParams::new(consts.lipschitz, consts.smoothness, m, n, sc.iterations, lambda, sc.schedule);
    params.mu = consts.strong_convexity;
    let closed = |p: &BoundParams| -> Result<Option<f64>> {
        Ok(match regime {
            Regime::StronglyConvex => strongly_convex_delta(p, None)?.closed_form,
            _ => None,
        })
    };
    let closed_form = closed(&params)?;
    let closed_form_long = closed(&BoundParams { iterations: 2000, ..params })?;
    let pool = eval_pool(&sc.data_spec(), 32);
    let positions: Vec<(usize, usize)> = (0..m).flat_map(|r| (0..n).map(move |k| (r, k))).collect();
    let per_cell: Vec<Result<(usize, f64, f64, f64, f64, bool, f64)>> = positions
        .par_iter()
        .map(|&(r, k)| {
            let replacement = fresh_replacement(&sc.data_spec(), r, k);
            let spec = NeighborSpec { r, k, replacement: replacement.clone() };
            let trace = twin_run(&cfg, &spec)?;
            let env = per_step_envelope(regime, &params, &trace.hits);
            let mut violations = 0;
            let mut worst = f64::NEG_INFINITY;
            let mut ratio: f64 = 0.0;
            for (d, e) in trace.divergence.iter().zip(&env) {
                worst = worst.max(d - e);
                if *e > 0.0 {
                    ratio = ratio.max(d / e);
                }
                if *d > e + RECURSION_SLACK {
                    violations += 1;
                }
            }
            let eps = pointwise_eps(&trace, &cfg.model, &synth.dataset, &replacement, &pool)?;
            Ok((violations, worst, eps.surrogate, eps.direct - eps.surrogate, trace.terminal_divergence(), trace.precondition_met.unwrap_or(true), ratio))
        })
        .collect();
    let per_cell = per_cell.into_iter().collect::<Result<Vec<_>>>()?;
    let mut eps = vec![vec![0.0; n]; m];
    for (idx, c) in per_cell.iter().enumerate() {
        eps[idx / n][idx % n] = c.2;
    }
    let agg = aggregate(eps)?;
    let closed_violations = closed_form.map_or(0, |cf| per_cell.iter().filter(|c| c.2 > cf + RECURSION_SLACK).count());
    let summary = SweepSummary {
        seed,
        m,
        n,
        lambda,
        cells: per_cell.len(),
        violations: per_cell.iter().map(|c| c.0).sum(),
        worst_margin: per_cell.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max),
        max_ratio: per_cell.iter().map(|c| c.6).fold(0.0, f64::max),
        max_terminal: per_cell.iter().map(|c| c.4).fold(0.0, f64::max),
        delta_mean: agg.delta_mean,
        rms: agg.rms,
        eps_uniform: agg.eps_uniform,
        closed_form,
        closed_form_long,
        closed_violations,
        precondition_met: per_cell.iter().all(|c| c.5),
    };
    Ok((summary, per_cell.iter().map(|c| c.3).fold(f64::NEG_INFINITY, f64::max)))
}

fn sweep_json(s: &SweepSummary) -> Value {
    json!({
        "seed": s.seed, "m": s.m, "n": s.n, "lambda": s.lambda, "cells": s.cells,
        "violations": s.violations, "worst_margin": s.worst_margin, "max_divergence_over_envelope": s.max_ratio, "max_terminal_divergence": s.max_terminal,
        "delta_mean": s.delta_mean, "rms": s.rms, "eps_uniform": s.eps_uniform,
        "precondition_met": s.precondition_met,
    })
}

fn envelope_result(id: u32, g: &Grid) -> CriterionResult {
    let violations: usize = g.sweeps.iter().map(|s| s.violations).sum();
    let cells: usize = g.sweeps.iter().map(|s| s.cells).sum();
    let ratio = g.sweeps.iter().map(|s| s.max_ratio).fold(0.0, f64::max);
    let pre = g.sweeps.iter().all(|s| s.precondition_met);
    outcome(
        id,
        violations == 0 && pre,
        format!("{cells} twin runs, {violations} step violations, largest d_t / e_t = {ratio:.3}"),
        json!({ "regime": g.regime, "sweeps": g.sweeps.iter().map(sweep_json).collect::<Vec<_>>() }),
    )
}

fn strongly_convex_result(g: &Grid) -> CriterionResult {
    let mut base = envelope_result(6, g);
    let closed_violations: usize = g.sweeps.iter().map(|s| s.closed_violations).sum();
    let t_independent = g.sweeps.iter().all(|s| s.closed_form.is_some() && s.closed_form == s.closed_form_long);
    base.passed &= closed_violations == 0 && t_independent;
    base.detail = format!(
        "{}; {closed_violations} terminal eps above closed form; closed form T=200 vs T=2000 identical: {t_independent}",
        base.detail
    );
    if let Value::Object(map) = &mut base.metrics {
        map.insert("closed_form_violations".into(), json!(closed_violations));
        map.insert("closed_form_t_independent".into(), json!(t_independent));
        map.insert(
            "closed_forms".into(),
            json!(g.sweeps.iter().map(|s| json!({"m": s.m, "n": s.n, "seed": s.seed, "closed_form": s.closed_form})).collect::<Vec<_>>()),
        );
    }
    base
}

// ---------------------------------------------------------------- criterion 9

#[derive(Debug, Clone, Copy)]
enum Family {
    ConvexConstant,
    ConvexInvT,
    AverageConstant,
    AverageInvT,
    StronglyConstant,
    StronglyInvTMu,
    NonconvexConstant,
    NonconvexInvT,
    NonconvexInvTBeta,
}

impl Family {
    const ALL: [Family; 9] = [
        Family::ConvexConstant,
        Family::ConvexInvT,
        Family::AverageConstant,
        Family::AverageInvT,
        Family::StronglyConstant,
        Family::StronglyInvTMu,
        Family::NonconvexConstant,
        Family::NonconvexInvT,
        Family::NonconvexInvTBeta,
    ];

    fn name(self) -> &'static str {
        match self {
            Family::ConvexConstant => "convex/constant",
            Family::ConvexInvT => "convex/inv-t",
            Family::AverageConstant => "average-weight/constant",
            Family::AverageInvT => "average-weight/inv-t",
            Family::StronglyConstant => "strongly-convex/constant",
            Family::StronglyInvTMu => "strongly-convex/inv-t-mu",
            Family::NonconvexConstant => "nonconvex/constant",
            Family::NonconvexInvT => "nonconvex/inv-t",
            Family::NonconvexInvTBeta => "nonconvex/inv-t-beta",
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> BoundParams {
        let lipschitz: f64 = rng.random_range(0.5..2.0);
        let smoothness: f64 = rng.random_range(0.5..4.0);
        let m = rng.random_range(1..=16);
        let n = rng.random_range(1..=64);
        let iterations = rng.random_range(1..=300);
        let lambda = rng.random_range(0.05..0.95);
        let mu = rng.random_range(0.05..smoothness.min(1.0));
        let schedule = match self {
            Family::ConvexConstant | Family::AverageConstant => StepSchedule::Constant { eta: rng.random_range(0.01..1.0) * 2.0 / smoothness },
            Family::StronglyConstant => StepSchedule::Constant { eta: rng.random_range(0.01..1.0) / smoothness },
            Family::NonconvexConstant => StepSchedule::Constant { eta: rng.random_range(0.001..0.05) },
            Family::ConvexInvT | Family::AverageInvT | Family::NonconvexInvT => StepSchedule::InvT,
            Family::StronglyInvTMu => StepSchedule::InvTMu { mu },
            Family::NonconvexInvTBeta => StepSchedule::InvTBeta { beta: smoothness },
        };
        let mut p = BoundParams::new(lipschitz, smoothness, m, n, iterations, lambda, schedule);
        p.mu = mu;
        p
    }

    fn evaluate(self, p: &BoundParams) -> Result<BoundReport> {
        Ok(match self {
            Family::ConvexConstant | Family::ConvexInvT => convex_delta(p, None)?,
            Family::AverageConstant | Family::AverageInvT => avg_weight_delta(p, None)?,
            Family::StronglyConstant | Family::StronglyInvTMu => strongly_convex_delta(p, None)?,
            _ => nonconvex_delta(p, None)?,
        })
    }
}

pub const CLOSED_FORM_GAP: &str = "the corollary closed forms replace finite geometric and harmonic sums by their limits \
(1/(1-lambda), C_lambda/t, ln(T+1)), so they strictly dominate the theorem's direct sums and cannot match them to 1e-10; \
dominance and the spot values are checked instead";

fn c09_closed_forms() -> Result<CriterionResult> {
    let mut rows = Vec::new();
    let mut all_match = true;
    let mut all_dominate = true;
    for (fi, fam) in Family::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + fi as u64);
        let mut max_rel: f64 = 0.0;
        let mut min_ratio = f64::INFINITY;
        let mut dominated = 0usize;
        for _ in 0..100 {
            let p = fam.draw(&mut rng);
            let rep = fam.evaluate(&p)?;
            let closed = rep.closed_form.ok_or_else(|| anyhow!("{} has no closed form", fam.name()))?;
            let rel = ((closed - rep.delta) / rep.delta).abs();
            max_rel = max_rel.max(rel);
            min_ratio = min_ratio.min(closed / rep.delta);
            if closed >= rep.delta * (1.0 - 1e-12) {
                dominated += 1;
            }
        }
        all_match &= max_rel <= 1e-10;
        all_dominate &= dominated == 100;
        rows.push(json!({
            "family": fam.name(),
            "draws": 100,
            "max_relative_difference": max_rel,
            "min_closed_over_direct": min_ratio,
            "closed_dominates": dominated,
        }));
    }
    let base = |eta: f64, t: usize| BoundParams::new(1.0, 1.0, 4, 25, t, 1.0 / 3.0, StepSchedule::Constant { eta });
    let convex = convex_delta(&base(0.1, 100), None)?.closed_form.unwrap_or(f64::NAN);
    let strongly = strongly_convex_delta(&BoundParams { mu: 0.1, ..base(0.5, 100) }, None)?.closed_form.unwrap_or(f64::NAN);
    let nonconvex = nonconvex_delta(&base(0.1, 10), None)?.closed_form.unwrap_or(f64::NAN);
    let spots_ok = (convex - 6.2).abs() <= 1e-12 * 6.2
        && (strongly - 60.4).abs() <= 1e-12 * 60.4
        && (nonconvex - 2.0 * 0.31 * 1.1f64.powi(10)).abs() <= 1e-12
        && (nonconvex - 1.6081).abs() <= 5e-5;
    let passed = all_match && spots_ok;
    let mut res = outcome(
        9,
        passed,
        format!(
            "relative match within 1e-10: {all_match}; closed form dominates direct sum in all draws: {all_dominate}; spot values 6.2 / 60.4 / {nonconvex:.4}: {spots_ok}"
        ),
        json!({
            "families": rows,
            "spot_values": {"convex_constant": convex, "strongly_convex_constant": strongly, "nonconvex_constant_t10": nonconvex},
            "spots_ok": spots_ok,
            "all_dominate": all_dominate,
        }),
    );
    if !all_match {
        res.known_gap = Some(CLOSED_FORM_GAP.to_string());
    }
    Ok(res)
}

// --------------------------------------------------------------- criterion 10

fn c10_optimization() -> Result<CriterionResult> {
    let runs: Vec<Result<(u64, f64, f64, f64)>> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let mut sc = Scenario::new(LossFamily::RidgeLogistic { mu: 0.1 }, 4, 16, TopologyKind::Ring, StepSchedule::InvT, 99, seed);
            sc.domain_radius = 10.0;
            let beta = sc.model().constants()?.smoothness;
            sc.schedule = StepSchedule::Constant { eta: 1.0 / (3.0 * beta) };
            sc.cap = Some(StepCap::NonconvexOptim);
            let (cfg, synth) = sc.build()?;
            let traj = run(&cfg)?;
            let c = cfg.model.constants()?;
            let eta = 1.0 / (3.0 * beta);
            let mut lhs = 0.0;
            let mut sigma2: f64 = 0.0;
            for w in traj.averages()? {
                let g = empirical_grad(&cfg.model, &synth.dataset, w)?;
                lhs += g.iter().map(|v| v * v).sum::<f64>();
                sigma2 = sigma2.max(exact_variance(&cfg.model, &synth.dataset, w)?);
            }
            lhs *= eta / 3.0;
            let mut p = BoundParams::new(c.lipschitz, c.smoothness, 4, 16, 99, cfg.topology.max_lambda(), cfg.schedule);
            p.sigma = sigma2.sqrt();
            p.gamma = c.gradient_dominance;
            p.delta_conf = 0.1;
            let rhs = dsgd_core::bounds::opt_rhs_constant(&p)?;
            Ok((seed, lhs, rhs.total, p.sigma))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let held = runs.iter().filter(|r| r.1 <= r.2).count();
    let max_ratio = runs.iter().map(|r| r.1 / r.2).fold(0.0, f64::max);
    Ok(outcome(
        10,
        held >= 90,
        format!("bound held in {held}/100 runs (need >= 90), max lhs/rhs = {max_ratio:.3e}"),
        json!({
            "held": held,
            "max_lhs_over_rhs": max_ratio,
            "runs": runs.iter().map(|(s, l, r, sg)| json!({"seed": s, "lhs": l, "rhs": r, "sigma": sg})).collect::<Vec<_>>(),
        }),
    ))
}

// --------------------------------------------------------------- criterion 11

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c11_decreasing_rate() -> Result<CriterionResult> {
    const MU: f64 = 0.1;
    let horizons = [64usize, 128, 256, 512, 1024];
    let seeds: Vec<u64> = (0..20).collect();
    let optima: Vec<Result<f64>> = seeds
        .par_iter()
        .map(|&seed| {
            let sc = Scenario::new(LossFamily::RidgeLogistic { mu: MU }, 4, 16, TopologyKind::Ring, StepSchedule::InvT, 1, seed);
            let (cfg, synth) = sc.build()?;
            Ok(minimizer_oracle(&cfg.model, &synth.dataset, 1e-12)?.risk)
        })
        .collect();
    let optima = optima.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &t in &horizons {
        let gaps: Vec<Result<f64>> = seeds
            .par_iter()
            .map(|&seed| {
                let gamma = MU / 2.0;
                let mut sc = Scenario::new(LossFamily::RidgeLogistic { mu: MU }, 4, 16, TopologyKind::Ring, StepSchedule::InvTGamma { gamma }, t, seed);
                sc.domain_radius = 50.0;
                let (mut cfg, synth) = sc.build()?;
                cfg.stride = t;
                let traj = run(&cfg)?;
                let risk = empirical_risk(&cfg.model, &synth.dataset, traj.final_average())?;
                Ok((risk - optima[seed as usize]).max(0.0))
            })
            .collect();
        let gaps = gaps.into_iter().collect::<Result<Vec<_>>>()?;
        let med = median(gaps.clone());
        points.push((t as f64, med));
        rows.push(json!({ "T": t, "median_gap": med, "gaps": gaps }));
    }
    let slope = log_log_slope(&points);
    Ok(outcome(
        11,
        slope <= -0.8,
        format!("log-log slope of median optimization gap = {slope:.3} (need <= -0.8)"),
        json!({ "slope": slope, "horizons": rows, "optima": optima }),
    ))
}

// --------------------------------------------------------------- criterion 12

fn c12_sampling_scaling() -> Result<CriterionResult> {
    let cells: Vec<(usize, usize)> = [2usize, 4, 8].into_iter().flat_map(|m| [16usize, 32, 64].into_iter().map(move |n| (m, n))).collect();
    const SEEDS: u64 = 10;
    let rows: Vec<Result<(usize, usize, f64, f64, f64)>> = cells
        .par_iter()
        .map(|&(m, n)| {
            let t = m * n;
            let eta = 1.0 / (t as f64).sqrt();
            let mut second = 0.0;
            let mut first = 0.0;
            let mut lambda = 0.0;
            for seed in 0..SEEDS {
                let sc = Scenario::new(LossFamily::Logistic, m, n, TopologyKind::Ring, StepSchedule::Constant { eta }, t, seed);
                let (mut cfg, _) = sc.build()?;
                cfg.stride = t;
                let traj = run(&cfg)?;
                let c = cfg.model.constants()?;
                lambda = cfg.topology.max_lambda();
                let mut counts = vec![vec![0.0f64; n]; m];
                for step in &traj.indices {
                    for (r, &k) in step.iter().enumerate() {
                        counts[r][k] += 1.0;
                    }
                }
                let rms_hits = counts.iter().map(|row| (row.iter().map(|c| c * c).sum::<f64>() / n as f64).sqrt()).sum::<f64>() / m as f64;
                let l2 = c.lipschitz * c.lipschitz;
                second += 2.0 * 2f64.sqrt() * l2 * eta / m as f64 * rms_hits;
                first += 4.0 * 2f64.sqrt() * l2 * eta * eta * c.smoothness * t as f64 / (1.0 - lambda);
            }
            Ok((m, n, second / SEEDS as f64, first / SEEDS as f64, lambda))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let slope = log_log_slope(&rows.iter().map(|r| ((r.0 * r.1) as f64, r.2)).collect::<Vec<_>>());
    Ok(outcome(
        12,
        (slope + 0.5).abs() <= 0.1,
        format!("log-log slope of the sampling term in mn = {slope:.3} (need -0.5 +/- 0.1); consensus term reported only"),
        json!({
            "slope": slope,
            "cells": rows.iter().map(|(m, n, s, f, l)| json!({"m": m, "n": n, "sampling_term": s, "consensus_term": f, "lambda": l})).collect::<Vec<_>>(),
        }),
    ))
}

// --------------------------------------------------------------- criterion 13

fn c13_local() -> Result<CriterionResult> {
    const M: usize = 4;
    const N: usize = 8;
    const T: usize = 200;
    let cells: Vec<(u64, usize, usize)> = (0..10u64).flat_map(|s| (0..M).flat_map(move |r| (0..N).map(move |k| (s, r, k)))).collect();
    let rows: Vec<Result<(u64, usize, usize, f64, f64, f64, usize, bool)>> = cells
        .par_iter()
        .map(|&(seed, r, k)| {
            let mut sc = Scenario::new(LossFamily::Logistic, M, N, TopologyKind::Ring, StepSchedule::Constant { eta: 0.5 }, T, seed);
            sc.topology_cycle = vec![TopologyKind::Ring, TopologyKind::Complete];
            sc.cap = Some(StepCap::LocalConvex);
            let (cfg, _) = sc.build()?;
            let c = cfg.model.constants()?;
            let spec = NeighborSpec { r, k, replacement: fresh_replacement(&sc.data_spec(), r, k) };
            let lt = dsgd_core::stability::local_trace(&cfg, &spec)?;
            let params = BoundParams::new(c.lipschitz, c.smoothness, M, N, T, cfg.topology.max_lambda(), sc.schedule);
            let stated = local_bound(Regime::Convex, &cfg.topology, &params, r, &lt.hits, ChainConvention::Inclusive)?;
            let unrolled = local_bound(Regime::Convex, &cfg.topology, &params, r, &lt.hits, ChainConvention::Exclusive)?;
            let vector_violations = local_recursion_violations(&cfg.topology, &lt.node_divergence, &lt.hits, &lt.etas, c.lipschitz, r)?;
            let measured = lt.node_divergence[T][r];
            Ok((seed, r, k, measured, stated.divergence, unrolled.divergence, vector_violations, lt.cap_met && stated.precondition_met))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let stated_viol = rows.iter().filter(|r| r.3 > r.4 + RECURSION_SLACK).count();
    let unrolled_viol = rows.iter().filter(|r| r.3 > r.5 + RECURSION_SLACK).count();
    let vector_viol: usize = rows.iter().map(|r| r.6).sum();
    let cap_ok = rows.iter().all(|r| r.7);
    let max_ratio = rows.iter().filter(|r| r.4 > 0.0).map(|r| r.3 / r.4).fold(0.0, f64::max);
    let passed = stated_viol == 0 && cap_ok;
    Ok(outcome(
        13,
        passed,
        format!(
            "{} cells: stated chain P^(T:t) violated in {stated_viol} (largest divergence / bound {max_ratio:.3}), unrolled chain P^(T:t+1) violated in {unrolled_viol}, per-step vector recursion violations {vector_viol}",
            rows.len()
        ),
        json!({
            "stated_chain_violations": stated_viol,
            "unrolled_chain_violations": unrolled_viol,
            "vector_recursion_violations": vector_viol,
            "cap_met": cap_ok,
            "max_divergence_over_stated_bound": max_ratio,
            "cells": rows.iter().map(|(s, r, k, d, b1, b2, _, _)| json!({"seed": s, "r": r, "k": k, "divergence": d, "stated_bound": b1, "unrolled_bound": b2})).collect::<Vec<_>>(),
        }),
    ))
}

/// Steps where `delta^{t+1} <= P^t delta^t + 2 eta_t L I e_r` fails componentwise.
fn local_recursion_violations(
    topology: &TopologySchedule,
    deltas: &[Vec<f64>],
    hits: &[usize],
    etas: &[f64],
    lipschitz: f64,
    r: usize,
) -> Result<usize> {
    let mut violations = 0;
    for t in 1..deltas.len() {
        let p = topology.at(t)?;
        let prev = &deltas[t - 1];
        let next = &deltas[t];
        for i in 0..prev.len() {
            let mut bound: f64 = (0..prev.len()).map(|l| p.get(i, l) * prev[l]).sum();
            if i == r && hits.binary_search(&t).is_ok() {
                bound += 2.0 * etas[t - 1] * lipschitz;
            }
            if next[i] > bound + RECURSION_SLACK {
                violations += 1;
            }
        }
    }
    Ok(violations)
}

// --------------------------------------------------------------- criterion 14

fn c14_determinism() -> Result<CriterionResult> {
    Ok(determinism_runs(&others(), 8)?.1)
}

fn others() -> Vec<u32> {
    CRITERIA.iter().map(|c| c.0).filter(|&i| i != 14).collect()
}

/// Runs `ids` at `jobs` threads, then at a different count, then at `jobs` again.
/// Returns the first run and the determinism verdict.
pub fn determinism_runs(ids: &[u32], jobs: usize) -> Result<(Vec<Timed>, CriterionResult)> {
    let jobs = jobs.max(1);
    let other = if jobs == 1 { 8 } else { 1 };
    let a = run_suite(ids, jobs)?;
    let b = run_suite(ids, other)?;
    let c = run_suite(ids, jobs)?;
    let verdict = determinism_result(&a, &b, &c)?;
    Ok((a, verdict))
}

/// Runs `ids` in criterion order; all criteria when `ids` is empty.
/// Criterion 14 reuses the runs of the other selected criteria, or of all others when it is alone.
pub fn run_selected(ids: &[u32], jobs: usize) -> Result<Vec<Timed>> {
    let mut ids: Vec<u32> = if ids.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { ids.to_vec() };
    ids.sort_unstable();
    ids.dedup();
    if !ids.contains(&14) {
        return run_suite(&ids, jobs);
    }
    let rest: Vec<u32> = ids.iter().copied().filter(|&i| i != 14).collect();
    let start = Instant::now();
    let (mut results, verdict) = if rest.is_empty() {
        let (_, v) = determinism_runs(&others(), jobs)?;
        (Vec::new(), v)
    } else {
        determinism_runs(&rest, jobs)?
    };
    let own: f64 = results.iter().map(|t| t.seconds).sum();
    let seconds = (start.elapsed().as_secs_f64() - own).max(0.0);
    let pos = results.iter().position(|t| t.result.id > 14).unwrap_or(results.len());
    results.insert(pos, Timed { result: verdict, seconds });
    Ok(results)
}

/// Compares three suite runs: the first and third at the same thread count, the second at another.
pub fn determinism_result(a: &[Timed], b: &[Timed], c: &[Timed]) -> Result<CriterionResult> {
    let pa = metric_payload(&a.iter().map(|t| t.result.clone()).collect::<Vec<_>>());
    let pb = metric_payload(&b.iter().map(|t| t.result.clone()).collect::<Vec<_>>());
    let pc = metric_payload(&c.iter().map(|t| t.result.clone()).collect::<Vec<_>>());
    let across_jobs = pa == pb;
    let repeated = pa == pc;
    Ok(outcome(
        14,
        across_jobs && repeated,
        format!("payload identical across thread counts: {across_jobs}; across repeated runs: {repeated} ({} bytes)", pa.len()),
        json!({ "payload_bytes": pa.len(), "identical_across_jobs": across_jobs, "identical_repeated": repeated }),
    ))
}

// --------------------------------------------------------------- criterion 15

fn c15_variance() -> Result<CriterionResult> {
    const DRAWS: usize = 100_000;
    let sc = Scenario::new(LossFamily::Logistic, 4, 16, TopologyKind::Ring, StepSchedule::InvT, 1, 15);
    let (cfg, synth) = sc.build()?;
    let data: &PartitionedDataset = &synth.dataset;
    let rows: Vec<Result<(f64, f64, f64)>> = (0..10u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(1500 + i);
            let w = random_ball(&mut rng, cfg.model.dim, 3.0);
            let exact = exact_variance(&cfg.model, data, &w)?;
            let full = empirical_grad(&cfg.model, data, &w)?;
            let per_node: Vec<Vec<Vec<f64>>> = (0..data.m())
                .map(|r| data.node(r).iter().map(|z| cfg.model.loss_grad(&w, z)).collect::<Result<Vec<_>, _>>())
                .collect::<Result<Vec<_>, _>>()?;
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..DRAWS {
                let mut g = vec![0.0; cfg.model.dim];
                for node in &per_node {
                    let k = rng.random_range(0..node.len());
                    g.iter_mut().zip(&node[k]).for_each(|(a, b)| *a += b / data.m() as f64);
                }
                let e = distance(&g, &full).powi(2);
                sum += e;
                sum_sq += e * e;
            }
            let mean = sum / DRAWS as f64;
            let var = (sum_sq / DRAWS as f64 - mean * mean).max(0.0);
            Ok((exact, mean, (var / DRAWS as f64).sqrt()))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let within = rows.iter().filter(|(e, mc, se)| (e - mc).abs() <= 3.0 * se).count();
    Ok(outcome(
        15,
        within == rows.len(),
        format!("{within}/{} weights within 3 standard errors of a {DRAWS}-draw Monte Carlo", rows.len()),
        json!({ "points": rows.iter().map(|(e, mc, se)| json!({"exact": e, "monte_carlo": mc, "std_error": se})).collect::<Vec<_>>() }),
    ))
}

//! Turns a configuration into reports.

use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, Result};
use dsgd_core::bounds::{
    avg_weight_delta, convex_delta_with, generalization_bound, nonconvex_delta, opt_rhs_constant, per_step_envelope,
    strongly_convex_delta, BoundParams, BoundReport, Regime,
};
use dsgd_core::engine::{consensus_bound, run, RunConfig};
use dsgd_core::losses::{empirical_risk, norm, LossFamily, LossModel, PartitionedDataset, Sample};
use dsgd_core::stability::{aggregate, pointwise_eps, twin_run, NeighborSpec};
use log::info;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{BoundsRequest, DataSource, ExperimentKind, LoadedConfig, Theorem, TwinTarget};
use crate::data::{eval_pool, fresh_replacement, ingest_libsvm};
use crate::report::{cell, Report, Table};
use crate::scenario::Scenario;
use crate::verify;

const EVAL_POOL: usize = 32;

/// Reports produced by one experiment, plus the suite verdict for `verify-suite`.
#[derive(Debug)]
pub struct Outcome {
    pub reports: Vec<Report>,
    pub all_passed: Option<bool>,
    /// Human-readable result lines.
    pub lines: Vec<String>,
}

pub fn regime_of(family: LossFamily) -> Regime {
    match family {
        LossFamily::Logistic => Regime::Convex,
        LossFamily::RidgeLogistic { .. } | LossFamily::Quadratic { .. } => Regime::StronglyConvex,
        LossFamily::SaturatingNonconvex => Regime::Nonconvex,
    }
}

/// Engine configuration plus where replacement and evaluation samples come from.
struct Prepared {
    config: RunConfig,
    scenario: Scenario,
    synthetic: bool,
}

impl Prepared {
    fn new(sc: &Scenario, source: &DataSource) -> Result<Self> {
        let (mut config, _) = sc.build()?;
        let synthetic = match source {
            DataSource::Synthetic => true,
            DataSource::Libsvm { path } => {
                let data = ingest_libsvm(path, sc.m, sc.n, sc.feature_bound)?;
                config.model = LossModel::new(sc.loss, data.dim(), sc.domain_radius, sc.feature_bound)
                    .with_label_bound(data.samples().iter().map(|s| s.y.abs()).fold(0.0, f64::max));
                config.initial_w = None;
                config.dataset = Arc::new(data);
                false
            }
        };
        Ok(Self { config, scenario: sc.clone(), synthetic })
    }

    fn data(&self) -> &PartitionedDataset {
        &self.config.dataset
    }

    /// A fresh draw for synthetic data; otherwise the sample at the same slot of the next node.
    fn replacement(&self, r: usize, k: usize) -> Sample {
        if self.synthetic {
            fresh_replacement(&self.scenario.data_spec(), r, k)
        } else {
            self.data().get((r + 1) % self.data().m(), k).clone()
        }
    }

    fn pool(&self) -> Vec<Sample> {
        if self.synthetic {
            eval_pool(&self.scenario.data_spec(), EVAL_POOL)
        } else {
            Vec::new()
        }
    }

    fn params(&self) -> Result<BoundParams> {
        let c = self.config.model.constants()?;
        let sc = &self.scenario;
        let mut p = BoundParams::new(c.lipschitz, c.smoothness, sc.m, sc.n, sc.iterations, self.config.topology.max_lambda(), sc.schedule);
        p.mu = c.strong_convexity;
        p.gamma = c.gradient_dominance;
        p.loss_bound = c.loss_bound;
        Ok(p)
    }
}

fn with_seed(sc: &Scenario, seed: u64) -> Scenario {
    Scenario { seed, ..sc.clone() }
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

fn opt(v: Option<f64>) -> String {
    v.map(cell).unwrap_or_default()
}

pub fn run_experiment(cfg: &LoadedConfig, jobs: usize) -> Result<Outcome> {
    let start = Instant::now();
    let kind = cfg.kind();
    info!("running {} ({})", kind.as_str(), &cfg.hash()[..12]);
    let mut outcome = match kind {
        ExperimentKind::SingleRun => Outcome { reports: single_runs(cfg, jobs)?, all_passed: None, lines: Vec::new() },
        ExperimentKind::Twin => Outcome { reports: twins(cfg, jobs)?, all_passed: None, lines: Vec::new() },
        ExperimentKind::BoundEval => Outcome { reports: vec![bound_eval(cfg)?], all_passed: None, lines: Vec::new() },
        ExperimentKind::Sweep => Outcome { reports: sweep(cfg, jobs)?, all_passed: None, lines: Vec::new() },
        ExperimentKind::VerifySuite => verify_suite(cfg, jobs)?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    for r in &mut outcome.reports {
        r.timing.wall_clock_seconds = elapsed;
    }
    Ok(outcome)
}

fn run_section(cfg: &LoadedConfig) -> Result<&Scenario> {
    cfg.config.run.as_ref().ok_or_else(|| anyhow!("missing run section"))
}

fn seed_label(seeds: &[u64], seed: u64) -> String {
    if seeds.len() > 1 {
        format!("seed{seed}")
    } else {
        String::new()
    }
}

// ------------------------------------------------------------------ single run

fn single_runs(cfg: &LoadedConfig, jobs: usize) -> Result<Vec<Report>> {
    let base = run_section(cfg)?;
    let seeds = cfg.config.seeds.resolve(base.seed);
    let pool = pool(jobs)?;
    let reports: Vec<Result<Report>> =
        pool.install(|| seeds.par_iter().map(|&s| single_run(cfg, &with_seed(base, s), &seed_label(&seeds, s))).collect());
    reports.into_iter().collect()
}

fn single_run(cfg: &LoadedConfig, sc: &Scenario, label: &str) -> Result<Report> {
    let prep = Prepared::new(sc, &cfg.config.data)?;
    let traj = run(&prep.config)?;
    let consts = prep.config.model.constants()?;
    let lambda = prep.config.topology.max_lambda();
    let mut table = Table::new(["t", "risk", "average_norm", "consensus_error", "consensus_bound"]);
    for snap in &traj.snapshots {
        let risk = empirical_risk(&prep.config.model, prep.data(), &snap.average)?;
        let bound = consensus_bound(snap.t - 1, &sc.schedule, lambda, consts.lipschitz, sc.m);
        table.push(vec![
            snap.t.to_string(),
            cell(risk),
            cell(norm(&snap.average)),
            cell(snap.consensus_error),
            cell(bound),
        ]);
    }
    let final_risk = empirical_risk(&prep.config.model, prep.data(), traj.final_average())?;
    let mut report = Report::new(ExperimentKind::SingleRun.as_str(), label, cfg);
    report.precondition("stepsize_cap", traj.precondition_met);
    report.records.push(json!({
        "seed": sc.seed,
        "lambda": lambda,
        "lipschitz": consts.lipschitz,
        "smoothness": consts.smoothness,
        "max_grad_norm": traj.max_grad_norm,
        "max_average_identity_residual": traj.max_average_identity_residual,
        "final_risk": final_risk,
        "final_average": traj.final_average(),
        "final_consensus_error": traj.snapshots.last().map(|s| s.consensus_error),
    }));
    report.table = table;
    Ok(report)
}

// ------------------------------------------------------------------------ twin

fn twins(cfg: &LoadedConfig, jobs: usize) -> Result<Vec<Report>> {
    let base = run_section(cfg)?;
    let seeds = cfg.config.seeds.resolve(base.seed);
    let target = cfg.config.twin.ok_or_else(|| anyhow!("missing twin target"))?;
    let pool = pool(jobs)?;
    pool.install(|| {
        seeds
            .iter()
            .map(|&s| twin_report(cfg, &with_seed(base, s), target, &seed_label(&seeds, s)))
            .collect()
    })
}

struct TwinCell {
    r: usize,
    k: usize,
    hits: Vec<usize>,
    divergence: Vec<f64>,
    envelope: Vec<f64>,
    surrogate: f64,
    direct: f64,
    gradient: f64,
    coupled: bool,
    precondition: Option<bool>,
}

fn twin_cell(prep: &Prepared, params: &BoundParams, regime: Regime, pool: &[Sample], r: usize, k: usize) -> Result<TwinCell> {
    let replacement = prep.replacement(r, k);
    let spec = NeighborSpec { r, k, replacement: replacement.clone() };
    let trace = twin_run(&prep.config, &spec)?;
    let envelope = per_step_envelope(regime, params, &trace.hits);
    let eps = pointwise_eps(&trace, &prep.config.model, prep.data(), &replacement, pool)?;
    Ok(TwinCell {
        r,
        k,
        hits: trace.hits.clone(),
        divergence: trace.divergence.clone(),
        envelope,
        surrogate: eps.surrogate,
        direct: eps.direct,
        gradient: eps.gradient,
        coupled: trace.coupling_verified,
        precondition: trace.precondition_met,
    })
}

fn twin_report(cfg: &LoadedConfig, sc: &Scenario, target: TwinTarget, label: &str) -> Result<Report> {
    let prep = Prepared::new(sc, &cfg.config.data)?;
    let params = prep.params()?;
    let regime = regime_of(sc.loss);
    let eval = prep.pool();
    let positions: Vec<(usize, usize)> = match target {
        TwinTarget::Position { r, k } => vec![(r, k)],
        TwinTarget::FullSweep => (0..sc.m).flat_map(|r| (0..sc.n).map(move |k| (r, k))).collect(),
    };
    let cells = positions
        .par_iter()
        .map(|&(r, k)| twin_cell(&prep, &params, regime, &eval, r, k))
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new([
        "r",
        "k",
        "hits",
        "first_hit",
        "terminal_divergence",
        "terminal_envelope",
        "max_divergence_over_envelope",
        "eps_surrogate",
        "eps_direct",
        "eps_gradient",
    ]);
    let mut report = Report::new(ExperimentKind::Twin.as_str(), label, cfg);
    for c in &cells {
        let ratio = c
            .divergence
            .iter()
            .zip(&c.envelope)
            .filter(|(_, e)| **e > 0.0)
            .map(|(d, e)| d / e)
            .fold(0.0, f64::max);
        table.push(vec![
            c.r.to_string(),
            c.k.to_string(),
            c.hits.len().to_string(),
            c.hits.first().map(ToString::to_string).unwrap_or_default(),
            cell(*c.divergence.last().unwrap_or(&0.0)),
            cell(*c.envelope.last().unwrap_or(&0.0)),
            cell(ratio),
            cell(c.surrogate),
            cell(c.direct),
            cell(c.gradient),
        ]);
    }
    report.precondition("stepsize_cap", cells.first().and_then(|c| c.precondition));
    report.precondition("coupling_verified", Some(cells.iter().all(|c| c.coupled)));
    if let [c] = cells.as_slice() {
        report.records.push(json!({
            "r": c.r, "k": c.k, "regime": regime, "hits": c.hits,
            "divergence": c.divergence, "envelope": c.envelope,
        }));
    } else {
        let mut eps = vec![vec![0.0; sc.n]; sc.m];
        for c in &cells {
            eps[c.r][c.k] = c.surrogate;
        }
        let agg = aggregate(eps)?;
        let gen = generalization_bound(params.loss_bound, sc.m * sc.n, params.delta_conf, agg.rms)?;
        report.records.push(json!({
            "regime": regime,
            "delta_mean": agg.delta_mean,
            "delta_sq": agg.delta_sq,
            "rms": agg.rms,
            "eps_uniform": agg.eps_uniform,
            "generalization": gen,
        }));
    }
    report.table = table;
    Ok(report)
}

// ------------------------------------------------------------------ bound eval

fn bound_params(cfg: &LoadedConfig, req: &BoundsRequest) -> Result<BoundParams> {
    match (&req.params, &cfg.config.run) {
        (Some(p), _) => Ok(*p),
        (None, Some(sc)) => Prepared::new(sc, &cfg.config.data)?.params(),
        (None, None) => Err(anyhow!("bound-eval needs params or a run section")),
    }
}

fn bound_eval(cfg: &LoadedConfig) -> Result<Report> {
    let req = cfg.config.bounds.as_ref().ok_or_else(|| anyhow!("missing bounds section"))?;
    let p = bound_params(cfg, req)?;
    let mut report = Report::new(ExperimentKind::BoundEval.as_str(), "", cfg);
    let mut table = Table::new(["theorem", "delta", "closed_form", "log_delta", "log_closed_form", "overflow", "precondition_met"]);
    let push_stab = |table: &mut Table, report: &mut Report, b: BoundReport| {
        table.push(vec![
            b.theorem.clone(),
            cell(b.delta),
            opt(b.closed_form),
            cell(b.log_delta),
            opt(b.log_closed_form),
            b.overflow.to_string(),
            b.precondition_met.to_string(),
        ]);
        report.precondition(&b.theorem, Some(b.precondition_met));
        report.records.push(serde_json::to_value(&b).expect("bound report serializes"));
    };
    for th in &req.theorems {
        match th {
            Theorem::Convex => push_stab(&mut table, &mut report, convex_delta_with(&p, None, req.convex_form)?),
            Theorem::AverageWeight => push_stab(&mut table, &mut report, avg_weight_delta(&p, None)?),
            Theorem::StronglyConvex => push_stab(&mut table, &mut report, strongly_convex_delta(&p, None)?),
            Theorem::Nonconvex => push_stab(&mut table, &mut report, nonconvex_delta(&p, None)?),
            Theorem::Optimization => {
                let o = opt_rhs_constant(&p)?;
                table.push(vec![
                    "optimization".into(),
                    cell(o.total),
                    opt(o.corollary),
                    cell(o.total.ln()),
                    opt(o.corollary.map(f64::ln)),
                    "false".into(),
                    o.precondition_met.to_string(),
                ]);
                report.precondition("optimization", Some(o.precondition_met));
                report.records.push(json!({ "theorem": "optimization", "terms": o.terms, "total": o.total, "corollary": o.corollary }));
            }
            Theorem::Generalization => {
                let g = generalization_bound(p.loss_bound, p.m * p.n, p.delta_conf, req.rms)?;
                table.push(vec![
                    "generalization".into(),
                    cell(g.value),
                    String::new(),
                    cell(g.value.ln()),
                    String::new(),
                    "false".into(),
                    String::new(),
                ]);
                report.records.push(json!({ "theorem": "generalization", "shape": g }));
            }
        }
    }
    report.table = table;
    Ok(report)
}

// ----------------------------------------------------------------------- sweep

fn sweep(cfg: &LoadedConfig, jobs: usize) -> Result<Vec<Report>> {
    let base = run_section(cfg)?;
    let grid = cfg.config.sweep.as_ref().ok_or_else(|| anyhow!("missing sweep grid"))?;
    let or = |v: &Vec<usize>, d: usize| if v.is_empty() { vec![d] } else { v.clone() };
    let etas: Vec<Option<f64>> = if grid.eta.is_empty() { vec![None] } else { grid.eta.iter().copied().map(Some).collect() };
    let topologies = if grid.topology.is_empty() { vec![base.topology.clone()] } else { grid.topology.clone() };
    let mut cells = Vec::new();
    for &m in &or(&grid.m, base.m) {
        for &n in &or(&grid.n, base.n) {
            for &t in &or(&grid.iterations, base.iterations) {
                for eta in &etas {
                    for topo in &topologies {
                        let mut sc = base.clone();
                        sc.m = m;
                        sc.n = n;
                        sc.iterations = t;
                        sc.topology = topo.clone();
                        if let Some(eta) = eta {
                            sc.schedule = dsgd_core::engine::StepSchedule::Constant { eta: *eta };
                        }
                        cells.push(sc);
                    }
                }
            }
        }
    }
    let seeds = cfg.config.seeds.resolve(base.seed);
    let pool = pool(jobs)?;
    let reports: Vec<Result<Report>> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, sc)| sweep_cell(cfg, sc, &seeds, i))
            .collect()
    });
    reports.into_iter().collect()
}

fn sweep_cell(cfg: &LoadedConfig, sc: &Scenario, seeds: &[u64], index: usize) -> Result<Report> {
    let mut report = Report::new(ExperimentKind::Sweep.as_str(), format!("cell{index:03}"), cfg);
    let mut table = Table::new(["seed", "m", "n", "iterations", "topology", "lambda", "final_risk", "consensus_error", "max_grad_norm"]);
    let mut met = Some(true);
    for &seed in seeds {
        let sc = with_seed(sc, seed);
        let prep = Prepared::new(&sc, &cfg.config.data)?;
        let traj = run(&prep.config)?;
        let risk = empirical_risk(&prep.config.model, prep.data(), traj.final_average())?;
        met = match (met, traj.precondition_met) {
            (Some(a), Some(b)) => Some(a && b),
            _ => None,
        };
        table.push(vec![
            seed.to_string(),
            sc.m.to_string(),
            sc.n.to_string(),
            sc.iterations.to_string(),
            sc.topology.to_string(),
            cell(prep.config.topology.max_lambda()),
            cell(risk),
            cell(traj.snapshots.last().map_or(0.0, |s| s.consensus_error)),
            cell(traj.max_grad_norm),
        ]);
    }
    report.precondition("stepsize_cap", met);
    report.records.push(json!({ "scenario": sc }));
    report.table = table;
    Ok(report)
}

// ---------------------------------------------------------------- verify suite

fn verify_suite(cfg: &LoadedConfig, jobs: usize) -> Result<Outcome> {
    let results = verify::run_selected(&cfg.config.criteria, jobs)?;
    let mut report = Report::new(ExperimentKind::VerifySuite.as_str(), "", cfg);
    let mut table = Table::new(["id", "title", "passed", "known_gap", "detail"]);
    let mut lines = Vec::new();
    for t in &results {
        let r = &t.result;
        lines.push(r.line());
        table.push(vec![
            r.id.to_string(),
            r.title.clone(),
            r.passed.to_string(),
            r.known_gap.is_some().to_string(),
            r.detail.clone(),
        ]);
        report.records.push(serde_json::to_value(r)?);
        report.precondition(&format!("criterion_{}", r.id), Some(r.passed));
    }
    report.table = table;
    let all = results.iter().all(|t| t.result.passed);
    Ok(Outcome { reports: vec![report], all_passed: Some(all), lines })
}

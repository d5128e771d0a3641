use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dsgd_core::topology::{build_topology, TopologyKind};
use dsgd_harness::config::{self, ExperimentKind, Format, ValidationError};
use dsgd_harness::data::{generate_synthetic, LabelRule, SyntheticSpec};
use dsgd_harness::experiment::run_experiment;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "dsgd-lab", version, about = "Decentralized SGD stability and generalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a gossip matrix and print it with its lambda.
    Topology(TopologyArgs),
    /// Run D-SGD and record risk and consensus error.
    Run(Common),
    /// Twin runs on neighbouring datasets.
    Twin {
        #[command(flatten)]
        common: Common,
        /// Replaced position as `r,k` (0-based).
        #[arg(long, value_parser = parse_position, conflicts_with = "full_sweep")]
        position: Option<(usize, usize)>,
        /// Replace every position in turn.
        #[arg(long)]
        full_sweep: bool,
    },
    /// Evaluate the stability and optimization bounds.
    Bounds(Common),
    /// Run a grid of single runs.
    Sweep(Common),
    /// Run the acceptance criteria.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Criteria to run; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
    },
    /// Write a synthetic dataset in LIBSVM format.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set run.m=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output formats.
    #[arg(long, value_delimiter = ',', value_parser = parse_format)]
    format: Vec<Format>,
    /// Worker threads.
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Master seed of the run section.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TopologyArgs {
    /// complete, ring, path, torus2d or random-regular.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    m: usize,
    /// Rows of a 2-D torus; the most square factorization when omitted.
    #[arg(long)]
    rows: Option<usize>,
    /// Degree of a random regular graph.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_bound: f64,
    /// Sign labels flipped with this probability.
    #[arg(long, default_value_t = 0.1, conflicts_with = "noise")]
    flip: f64,
    /// Linear labels with Gaussian noise of this scale instead of sign labels.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_position(s: &str) -> Result<(usize, usize), String> {
    let (r, k) = s.split_once(',').ok_or("expected r,k")?;
    Ok((r.trim().parse().map_err(|e| format!("{e}"))?, k.trim().parse().map_err(|e| format!("{e}"))?))
}

fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown format {s:?}")),
    }
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_CRITERION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ValidationError>().is_some() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Topology(a) => topology(a),
        Command::GenData(a) => gen_data(a),
        Command::Run(c) => experiment(ExperimentKind::SingleRun, c, Vec::new()),
        Command::Bounds(c) => experiment(ExperimentKind::BoundEval, c, Vec::new()),
        Command::Sweep(c) => experiment(ExperimentKind::Sweep, c, Vec::new()),
        Command::Twin { common, position, full_sweep } => {
            let target = match (position, full_sweep) {
                (Some((r, k)), _) => Some(json!({ "position": { "r": r, "k": k } })),
                (None, true) => Some(json!("full-sweep")),
                (None, false) => None,
            };
            experiment(ExperimentKind::Twin, common, target.map(|t| ("twin".to_string(), t.to_string())).into_iter().collect())
        }
        Command::Verify { common, criteria } => {
            let extra = if criteria.is_empty() { Vec::new() } else { vec![("criteria".to_string(), json!(criteria).to_string())] };
            experiment(ExperimentKind::VerifySuite, common, extra)
        }
    }
}

fn experiment(kind: ExperimentKind, c: Common, extra: Vec<(String, String)>) -> Result<u8> {
    let mut raw = config::read_raw(c.config.as_deref())?;
    if let Some(existing) = raw.get("kind").and_then(Value::as_str) {
        if existing != kind.as_str() {
            return Err(ValidationError(format!("config kind {existing:?} does not match subcommand {:?}", kind.as_str())).into());
        }
    }
    let mut overrides = vec![("kind".to_string(), json!(kind.as_str()).to_string())];
    overrides.extend(extra);
    for s in &c.set {
        overrides.push(config::parse_set(s)?);
    }
    if let Some(seed) = c.seed {
        overrides.push(("run.seed".to_string(), seed.to_string()));
    }
    if let Some(out) = &c.out {
        overrides.push(("output.dir".to_string(), json!(out).to_string()));
    }
    if !c.format.is_empty() {
        overrides.push(("output.formats".to_string(), serde_json::to_string(&c.format)?));
    }
    for (k, v) in &overrides {
        config::apply_override(&mut raw, k, v)?;
    }
    let loaded = config::from_value(raw)?;
    let outcome = run_experiment(&loaded, c.jobs)?;
    let mut stdout = std::io::stdout().lock();
    for line in &outcome.lines {
        writeln!(stdout, "{line}")?;
    }
    for report in &outcome.reports {
        for path in report.write(&loaded.config.output.dir, &loaded.config.output.formats)? {
            writeln!(stdout, "wrote {}", path.display())?;
        }
    }
    Ok(match outcome.all_passed {
        Some(false) => EXIT_CRITERION,
        _ => 0,
    })
}

fn topology(a: TopologyArgs) -> Result<u8> {
    let kind = match a.kind.as_str() {
        "complete" => TopologyKind::Complete,
        "ring" => TopologyKind::Ring,
        "path" => TopologyKind::Path,
        "torus2d" | "torus" => TopologyKind::Torus2d { rows: a.rows },
        "random-regular" => TopologyKind::RandomRegular {
            degree: a.degree.ok_or_else(|| ValidationError("random-regular needs --degree".into()))?,
            seed: a.seed,
        },
        other => return Err(ValidationError(format!("unknown topology {other:?}")).into()),
    };
    let p = build_topology(&kind, a.m).map_err(|e| ValidationError(e.to_string()))?;
    let out = json!({ "kind": kind.to_string(), "m": p.m(), "lambda": p.lambda(), "matrix": p.to_rows() });
    writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(&out)?)?;
    Ok(0)
}

fn gen_data(a: GenDataArgs) -> Result<u8> {
    let label_rule = match a.noise {
        Some(noise) => LabelRule::Linear { noise },
        None => LabelRule::Sign { flip: a.flip },
    };
    let spec = SyntheticSpec { m: a.m, n: a.n, dim: a.dim, feature_bound: a.feature_bound, label_rule, seed: a.seed };
    let synth = generate_synthetic(&spec).map_err(|e| ValidationError(e.to_string()))?;
    let mut text = String::new();
    for s in synth.dataset.samples() {
        text.push_str(&format!("{:?}", s.y));
        for (i, v) in s.x.iter().enumerate() {
            if *v != 0.0 {
                text.push_str(&format!(" {}:{v:?}", i + 1));
            }
        }
        text.push('\n');
    }
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    writeln!(std::io::stdout(), "wrote {} rows to {}", synth.dataset.samples().len(), a.out.display())?;
    Ok(0)
}

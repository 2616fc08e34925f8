use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hermqv::analytic::{boundary_segment, classify_regime, Dominant, LimitLaw};
use hermqv::chaosor::{beta_tilde_checks, oracle_report, product_formula_sweep, BetaTildeCheck};
use hermqv::hermpath::{rescale_selfsimilar, GridSpec, PairGenerator, PathMeta, SimOptions};
use hermqv::mcharness::{compare, replicate, run_with_workers, ExperimentConfig, MCReport, Verdict};
use hermqv::quadvar::{write_qv_csv, QVDecomposition};
use hermqv::{Coupling, Dependence, Error, PairSpec, ScaleSchedule};
use serde::Serialize;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "hermqv", version, about = "Quadratic variation of sums of Hermite processes")]
struct Cli {
    /// Master seed; overrides the seed of a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write data here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Worker threads for replications (default: all processing units).
    #[arg(long, global = true, env = "HERMQV_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Dependent,
    Independent,
}

impl From<Mode> for Dependence {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Dependent => Dependence::Dependent,
            Mode::Independent => Dependence::Independent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    Subordinated,
    KernelGrid,
    Independent,
}

#[derive(Subcommand)]
enum Command {
    /// Dominant term, limit law and rate for a pair and schedule exponent.
    Classify {
        #[arg(long)]
        q: u32,
        #[arg(long)]
        h1: f64,
        #[arg(long)]
        h2: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long, value_enum)]
        dependence: Mode,
    },
    /// Points on the regime boundary in the (H1, H2) square.
    Boundary {
        #[arg(long)]
        q: u32,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
    /// One simulated path pair.
    Simulate(SimulateArgs),
    /// Per-replication decomposition V = V1 + V2 + 2 V3.
    Qv {
        #[arg(long)]
        config: PathBuf,
        /// Only this N instead of the whole grid.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Monte Carlo experiment with regression and verdict.
    Mc {
        #[arg(long)]
        config: PathBuf,
        /// Replications; overrides the config file.
        #[arg(long)]
        r: Option<usize>,
    },
    /// Analytic oracles: beta-tilde identity, product formula, exact sigma3.
    Oracle {
        #[arg(long, default_value_t = 1)]
        q: u32,
        #[arg(long, default_value_t = 0.85)]
        h1: f64,
        #[arg(long, default_value_t = 0.7)]
        h2: f64,
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Only the beta-tilde checks.
        #[arg(long, conflicts_with = "product")]
        beta_checks: bool,
        /// Only the product-formula sweep.
        #[arg(long)]
        product: bool,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    q: u32,
    #[arg(long)]
    h1: f64,
    /// Derived from H1 for the subordinated coupling.
    #[arg(long)]
    h2: Option<f64>,
    #[arg(long, value_enum, default_value = "subordinated")]
    coupling: CouplingArg,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    gamma: f64,
    #[arg(long)]
    n_inner: Option<usize>,
    #[arg(long)]
    cells_per_unit: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::GridTooCoarse { .. }
            | Error::EmbeddingFailure { .. }
            | Error::Calibration(_)
            | Error::DegenerateSd { .. } => 4,
            Error::QuadratureConvergence { .. } => 5,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(|e| config_error(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

fn read_json(path: &PathBuf) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

fn parse_config(value: Value, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut c: ExperimentConfig = serde_json::from_value(value).map_err(|e| config_error(format!("config: {e}")))?;
    if let Some(s) = seed {
        c.seed = s;
    }
    c.validate()?;
    Ok(c)
}

fn not_csv(format: Option<Format>, what: &str) -> Result<(), Failure> {
    if format == Some(Format::Csv) {
        return Err(config_error(format!("{what} has no CSV form")));
    }
    Ok(())
}

fn classify(cli: &Cli, q: u32, h1: f64, h2: f64, rho: f64, mode: Mode) -> Result<u8, Failure> {
    not_csv(cli.format, "classify")?;
    let spec = PairSpec::analytic(q, h1, h2, mode.into())?;
    let report = classify_regime(&spec, &ScaleSchedule::power(1.0, rho)?)?;
    emit_json(&mut *sink(&cli.output)?, &report)?;
    let unresolved = report.dominant == Dominant::Boundary || report.limit_law == LimitLaw::Indeterminate;
    Ok(if unresolved { 3 } else { 0 })
}

fn boundary(cli: &Cli, q: u32, mode: Mode, points: usize) -> Result<u8, Failure> {
    let seg = boundary_segment(q, mode.into(), points)?;
    let name = match mode {
        Mode::Dependent => "dependent",
        Mode::Independent => "independent",
    };
    let mut out = sink(&cli.output)?;
    if cli.format == Some(Format::Json) {
        let rows: Vec<Value> = seg
            .iter()
            .map(|(a, b)| serde_json::json!({"H1": a, "H2": b, "q": q, "mode": name}))
            .collect();
        emit_json(&mut *out, &rows)?;
    } else {
        writeln!(out, "H1,H2,q,mode")?;
        for (a, b) in seg {
            writeln!(out, "{a},{b},{q},{name}")?;
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct PathOutput {
    coupling: Coupling,
    component1: PathMeta,
    component2: PathMeta,
    t: Vec<f64>,
    z1: Vec<f64>,
    z2: Vec<f64>,
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<u8, Failure> {
    let spec = match a.coupling {
        CouplingArg::Subordinated => {
            let s = PairSpec::subordinated(a.q, a.h1)?;
            if let Some(h2) = a.h2 {
                if (h2 - s.h2).abs() > 1e-12 {
                    return Err(Error::Constraint(format!("subordinated pair needs H2 = {}, got {h2}", s.h2)).into());
                }
            }
            s
        }
        CouplingArg::KernelGrid => {
            if a.q != 1 {
                return Err(config_error("kernel-grid coupling needs q = 1"));
            }
            PairSpec::kernel_grid(a.h1, a.h2.ok_or_else(|| config_error("--h2 is required"))?)?
        }
        CouplingArg::Independent => {
            PairSpec::independent(a.q, a.h1, a.h2.ok_or_else(|| config_error("--h2 is required"))?)?
        }
    };
    let mut opts = SimOptions::default();
    if let Some(k) = a.n_inner {
        opts.n_inner = k;
    }
    let default_grid = GridSpec::default();
    opts.grid = GridSpec::new(
        a.cells_per_unit.unwrap_or(default_grid.cells_per_unit),
        a.horizon.unwrap_or(default_grid.horizon),
    )?;
    let seed = cli.seed.unwrap_or(0);
    let [unit, _] = PairGenerator::new(&spec, a.n, &opts)?.sample_two(&[seed]);
    let pair = rescale_selfsimilar(&unit, a.gamma, spec.h1, spec.h2)?;
    let mut out = sink(&cli.output)?;
    if cli.format == Some(Format::Json) {
        emit_json(
            &mut *out,
            &PathOutput {
                coupling: pair.coupling,
                component1: pair.component1.meta.clone(),
                component2: pair.component2.meta.clone(),
                t: pair.component1.times.clone(),
                z1: pair.component1.values.clone(),
                z2: pair.component2.values.clone(),
            },
        )?;
    } else {
        pair.write_csv(&mut out)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct QvRow {
    rep: usize,
    #[serde(flatten)]
    d: QVDecomposition,
}

fn qv(cli: &Cli, config: &PathBuf, n: Option<usize>) -> Result<u8, Failure> {
    let c = parse_config(read_json(config)?, cli.seed)?;
    let grid = match n {
        Some(n) => vec![n],
        None => c.n_grid.clone(),
    };
    let mut rows = Vec::new();
    for n in grid {
        let reps = replicate(&c, n, cli.workers)?;
        rows.extend(reps.into_iter().enumerate());
    }
    let mut out = sink(&cli.output)?;
    if cli.format == Some(Format::Json) {
        let v: Vec<QvRow> = rows.into_iter().map(|(rep, d)| QvRow { rep, d }).collect();
        emit_json(&mut *out, &v)?;
    } else {
        write_qv_csv(&mut out, &rows)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct McOutput {
    report: MCReport,
    verdict: Verdict,
    rms_dominant: Vec<Dominant>,
    ratios_decrease: bool,
}

fn mc_one(c: &ExperimentConfig, workers: Option<usize>) -> Result<McOutput, Failure> {
    let report = run_with_workers(c, workers)?;
    let verdict = compare(&report, &report.prediction);
    let rms_dominant: Vec<Dominant> = report.rows.iter().map(|r| r.rms_dominant()).collect();
    let ratios_decrease = report.ratios_decrease(*rms_dominant.last().unwrap());
    Ok(McOutput {
        report,
        verdict,
        rms_dominant,
        ratios_decrease,
    })
}

/// A config may carry `"rho_sweep": [..]`, running the experiment once per
/// schedule `γ_N = c·N^ρ`.
fn mc(cli: &Cli, config: &PathBuf, r: Option<usize>) -> Result<u8, Failure> {
    let mut value = read_json(config)?;
    let sweep = match value.as_object_mut().and_then(|o| o.remove("rho_sweep")) {
        Some(v) => Some(
            serde_json::from_value::<Vec<f64>>(v).map_err(|e| config_error(format!("rho_sweep: {e}")))?,
        ),
        None => None,
    };
    if let Some(r) = r {
        if let Some(o) = value.as_object_mut() {
            o.insert("R".into(), r.into());
        }
    }
    let base = parse_config(value, cli.seed)?;
    let configs: Vec<ExperimentConfig> = match &sweep {
        None => vec![base],
        Some(rhos) => rhos
            .iter()
            .map(|&rho| {
                let mut c = base.clone();
                c.schedule = ScaleSchedule::power(base.schedule.c, rho)?;
                Ok(c)
            })
            .collect::<Result<_, Error>>()?,
    };
    if sweep.is_some() && cli.format == Some(Format::Csv) {
        return Err(config_error("a rho sweep has no CSV form; use JSON"));
    }
    let results = configs
        .iter()
        .map(|c| mc_one(c, cli.workers))
        .collect::<Result<Vec<_>, _>>()?;
    for r in &results {
        eprintln!(
            "N_grid {:?}: slope {:.4} ± {:.4}, predicted {:.4}, verdict {}",
            r.report.config.n_grid,
            r.verdict.fitted_slope,
            r.verdict.slope_se,
            r.verdict.predicted_slope,
            if r.verdict.pass { "PASS" } else { "FAIL" }
        );
    }
    let indeterminate = results
        .iter()
        .any(|r| r.report.prediction.law == LimitLaw::Indeterminate);
    let mut out = sink(&cli.output)?;
    match (cli.format, sweep.is_some()) {
        (Some(Format::Csv), _) => results[0].report.write_csv(&mut out)?,
        (_, false) => emit_json(&mut *out, &results[0])?,
        (_, true) => emit_json(&mut *out, &results)?,
    }
    Ok(if indeterminate { 3 } else { 0 })
}

#[derive(Serialize)]
struct BetaChecksOutput {
    checks: Vec<BetaTildeCheck>,
    max_rel_err: f64,
}

#[allow(clippy::too_many_arguments)]
fn oracle(
    cli: &Cli,
    q: u32,
    h1: f64,
    h2: f64,
    n_grid: &[usize],
    gamma: f64,
    beta_only: bool,
    product_only: bool,
) -> Result<u8, Failure> {
    not_csv(cli.format, "oracle")?;
    let seed = cli.seed.unwrap_or(0);
    let mut out = sink(&cli.output)?;
    if beta_only {
        let checks = beta_tilde_checks(20, seed)?;
        let max_rel_err = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
        emit_json(&mut *out, &BetaChecksOutput { checks, max_rel_err })?;
    } else if product_only {
        let dev = product_formula_sweep(1000, seed);
        emit_json(&mut *out, &serde_json::json!({ "product_formula_max_dev": dev }))?;
    } else {
        emit_json(&mut *out, &oracle_report(q, h1, h2, n_grid, gamma, seed)?)?;
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Classify {
            q,
            h1,
            h2,
            rho,
            dependence,
        } => classify(cli, *q, *h1, *h2, *rho, *dependence),
        Command::Boundary { q, mode, points } => boundary(cli, *q, *mode, *points),
        Command::Simulate(a) => simulate(cli, a),
        Command::Qv { config, n } => qv(cli, config, *n),
        Command::Mc { config, r } => mc(cli, config, *r),
        Command::Oracle {
            q,
            h1,
            h2,
            n_grid,
            gamma,
            beta_checks,
            product,
        } => oracle(cli, *q, *h1, *h2, n_grid, *gamma, *beta_checks, *product),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

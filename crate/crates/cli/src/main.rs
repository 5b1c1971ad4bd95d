//! `proxsurr` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
//! failure.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proxsurr::baselines::{diagnose_surrogacy, surrogate_index_estimate, DiagnosticReport};
use proxsurr::data::{load_csv, load_full_csv, write_csv, write_full_csv};
use proxsurr::estimators::{estimate_many, make_folds, EstimateReport, EstimatorConfig, EstimatorKind};
use proxsurr::harness::{run_monte_carlo, MCReport, MonteCarloSpec};
use proxsurr::synth::{generate, generate_experimental, DGPConfig};
use proxsurr::{Error, Result};
use serde::Serialize;

use config::{parse_estimators, parse_regimes, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "proxsurr",
    version,
    about = "Long-term treatment effects with surrogates and proxies"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-fitted estimation on a combined CSV.
    Estimate(EstimateArgs),
    /// Monte Carlo study on the synthetic model.
    Simulate(SimulateArgs),
    /// OLS and IV surrogacy diagnostics on a fully observed experiment.
    Diagnose(DiagnoseArgs),
    /// Writes a synthetic dataset.
    GenData(GenDataArgs),
}

#[derive(Args, Debug, Default)]
struct FitFlags {
    /// Number of cross-fitting folds.
    #[arg(long = "k")]
    k_folds: Option<usize>,
    #[arg(long)]
    ridge_h: Option<f64>,
    #[arg(long)]
    ridge_q: Option<f64>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
}

impl FitFlags {
    fn apply(&self, cfg: &mut EstimatorConfig) {
        if let Some(k) = self.k_folds {
            cfg.k_folds = k;
        }
        if let Some(v) = self.ridge_h {
            cfg.ridge_h = v;
        }
        if let Some(v) = self.ridge_q {
            cfg.ridge_q = v;
        }
        if let Some(v) = self.clip_eps {
            cfg.clip_eps = v;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
    }
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Combined CSV (experimental and observational rows).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Estimator names (ob-or, ob-ipw, sb, mr, si, si-proxies) or `all`.
    #[arg(long = "estimator", value_delimiter = ',')]
    estimators: Vec<String>,
    /// Fold-assignment seed.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    fit: FitFlags,
    /// JSON report path.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Confounded,
    Unconfounded,
}

impl Preset {
    fn dgp(self) -> DGPConfig {
        match self {
            Preset::Confounded => DGPConfig::confounded(),
            Preset::Unconfounded => DGPConfig::unconfounded(),
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    /// Experimental share of each simulated dataset.
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Data seed of replication 0; replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Regime names or `all`.
    #[arg(long, value_delimiter = ',')]
    regimes: Vec<String>,
    #[arg(long = "estimator", value_delimiter = ',')]
    estimators: Vec<String>,
    /// Built-in model replacing the configured one.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Fully observed experimental CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    pi: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Writes an unmasked experiment (no `g` column) for `diagnose`.
    #[arg(long)]
    full: bool,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// CSV destination.
    #[arg(long)]
    output: Option<PathBuf>,
}

/// A failure together with the module it came from.
struct Failure {
    module: &'static str,
    error: Error,
}

trait Within<T> {
    fn within(self, module: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> Within<T> for Result<T> {
    fn within(self, module: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { module, error })
    }
}

type Outcome = std::result::Result<(), Failure>;

impl Failure {
    fn exit_code(&self) -> u8 {
        if self.error.is_validation() {
            1
        } else {
            2
        }
    }

    fn line(&self) -> String {
        match &self.error {
            Error::Fold { fold, stage, source } => {
                let module = match *stage {
                    "propensity" | "h-bar regression" | "h-bar refit" => "nuisance",
                    s if s.contains("bridge") => "bridge_solver",
                    _ => self.module,
                };
                format!("error[{module}, fold {fold}, {stage}]: {source}")
            }
            e => format!("error[{}]: {e}", self.module),
        }
    }
}

fn required(path: Option<PathBuf>, what: &str) -> std::result::Result<PathBuf, Failure> {
    path.ok_or_else(|| Error::Validation(format!("{what} is required")))
        .within("cli")
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Outcome {
    let Some(path) = path else { return Ok(()) };
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("cannot serialize report: {e}")))
        .within("cli")?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::from).within("cli")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    command: &'static str,
    data: String,
    estimator_config: &'a EstimatorConfig,
    reports: Vec<EstimateReport>,
}

fn estimate_table(reports: &[EstimateReport]) -> String {
    let mut out = format!(
        "{:<12} {:>12} {:>12} {:>12} {:>12}\n",
        "estimator", "tau_hat", "std_error", "ci_low", "ci_high"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<12} {:>12.6} {:>12} {:>12} {:>12}",
            r.estimator.name(),
            r.tau_hat,
            fmt_opt(r.std_error()),
            fmt_opt(r.ci.map(|c| c.0)),
            fmt_opt(r.ci.map(|c| c.1)),
        );
    }
    out
}

fn cmd_estimate(mut cfg: RunConfig, args: EstimateArgs) -> Outcome {
    args.fit.apply(&mut cfg.estimator);
    cfg.check_schema().within("cli")?;
    let sec = cfg.estimate;
    let data_path = required(args.data.or(sec.data), "--data")?;
    let names = if args.estimators.is_empty() {
        sec.estimators
    } else {
        args.estimators
    };
    let seed = args.seed.unwrap_or(sec.seed);
    let output = args.output.or(sec.output);
    let kinds = parse_estimators(&names).within("cli")?;

    let data = load_csv(&data_path, &cfg.schema).within("data_model")?;
    let cross: Vec<EstimatorKind> = kinds.iter().copied().filter(|k| k.is_cross_fitted()).collect();
    let mut fitted = if cross.is_empty() {
        Vec::new()
    } else {
        let folds = make_folds(&data, cfg.estimator.k_folds, seed).within("estimators")?;
        estimate_many(&cross, &data, &folds, &cfg.estimator).within("estimators")?
    };
    let mut reports = Vec::with_capacity(kinds.len());
    for kind in kinds {
        if kind.is_cross_fitted() {
            reports.push(fitted.remove(0));
        } else {
            let proxies = kind == EstimatorKind::SurrogateIndexProxies;
            reports.push(surrogate_index_estimate(&data, proxies).within("baselines")?);
        }
    }
    print!("{}", estimate_table(&reports));
    write_json(
        output.as_deref(),
        &EstimateOutput {
            command: "estimate",
            data: data_path.display().to_string(),
            estimator_config: &cfg.estimator,
            reports,
        },
    )
}

#[derive(Serialize)]
struct SimulateOutput<'a> {
    command: &'static str,
    spec: &'a MonteCarloSpec,
    report: MCReport,
}

fn cmd_simulate(mut cfg: RunConfig, args: SimulateArgs) -> Outcome {
    args.fit.apply(&mut cfg.estimator);
    cfg.estimator.validate().within("cli")?;
    let sec = cfg.simulate;
    let dgp = args.preset.map_or(cfg.dgp, Preset::dgp);
    dgp.validate().within("synth_dgp")?;
    let spec = MonteCarloSpec {
        dgp,
        n: args.n.unwrap_or(sec.n),
        pi: args.pi.unwrap_or(sec.pi),
        estimators: parse_estimators(if args.estimators.is_empty() {
            &sec.estimators
        } else {
            &args.estimators
        })
        .within("cli")?,
        regimes: parse_regimes(if args.regimes.is_empty() {
            &sec.regimes
        } else {
            &args.regimes
        })
        .within("cli")?,
        replications: args.replications.unwrap_or(sec.replications),
        base_seed: args.seed.unwrap_or(sec.base_seed),
        estimator_config: cfg.estimator,
    };
    let output = args.output.or(sec.output);
    let report = run_monte_carlo(&spec).within("design_harness")?;
    print!("{}", report.to_table());
    write_json(
        output.as_deref(),
        &SimulateOutput {
            command: "simulate",
            spec: &spec,
            report,
        },
    )
}

#[derive(Serialize)]
struct DiagnoseOutput {
    command: &'static str,
    data: String,
    report: DiagnosticReport,
}

fn diagnose_table(r: &DiagnosticReport) -> String {
    let mut out = format!(
        "{:<6} {:>12} {:>12} {:>10}\n",
        "model", "coef_on_a", "robust_se", "p_value"
    );
    for (name, c, se, p) in [
        ("OLS", r.ols_coef_on_a, r.ols_se, r.ols_p),
        ("IV", r.iv_coef_on_a, r.iv_se, r.iv_p),
    ] {
        let _ = writeln!(out, "{name:<6} {c:>12.6} {se:>12.6} {p:>10.4}");
    }
    let f: Vec<String> = r.first_stage_f.iter().map(|f| format!("{f:.2}")).collect();
    let _ = writeln!(out, "n = {}, first-stage F = {}", r.n, f.join(", "));
    out
}

fn cmd_diagnose(cfg: RunConfig, args: DiagnoseArgs) -> Outcome {
    let sec = cfg.diagnose;
    let data_path = required(args.data.or(sec.data), "--data")?;
    let output = args.output.or(sec.output);
    let source = load_full_csv(&data_path, &cfg.schema).within("data_model")?;
    let report = diagnose_surrogacy(&source).within("baselines")?;
    print!("{}", diagnose_table(&report));
    write_json(
        output.as_deref(),
        &DiagnoseOutput {
            command: "diagnose",
            data: data_path.display().to_string(),
            report,
        },
    )
}

fn cmd_gen_data(cfg: RunConfig, args: GenDataArgs) -> Outcome {
    let sec = cfg.gen_data;
    let dgp = args.preset.map_or(cfg.dgp, Preset::dgp);
    let n = args.n.unwrap_or(sec.n);
    let seed = args.seed.unwrap_or(sec.seed);
    let output = required(args.output.or(sec.output), "--output")?;
    let oracle = if args.full || sec.full {
        let (source, oracle) = generate_experimental(&dgp, n, seed).within("synth_dgp")?;
        write_full_csv(&source, &output).within("data_model")?;
        oracle
    } else {
        let (data, oracle) = generate(&dgp, n, args.pi.unwrap_or(sec.pi), seed).within("synth_dgp")?;
        write_csv(&data, &output).within("data_model")?;
        oracle
    };
    println!("wrote {} units to {}", n, output.display());
    println!("true_ate = {}", oracle.true_ate);
    println!("true_h_coeffs = {:?}", oracle.true_h_coeffs);
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).within("cli")?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Estimate(a) => cmd_estimate(cfg, a),
        Command::Simulate(a) => cmd_simulate(cfg, a),
        Command::Diagnose(a) => cmd_diagnose(cfg, a),
        Command::GenData(a) => cmd_gen_data(cfg, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.line());
            ExitCode::from(f.exit_code())
        }
    }
}

//! `detgen` command-line front end.
//!
//! Exit codes: 0 when every certified check passed, 1 when a bound check
//! failed, 2 for usage or input errors, 3 for numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use detgen::experiments::{self, emit_report, ReportFormat, Scenario, TrialConfig};
use detgen::interpolation::{
    dissimilarity_crude, dissimilarity_eig, dissimilarity_singleton, theorem1_report, DEFAULT_BOUND_TOL,
};
use detgen::maxmargin::{
    batch_bound_report, loo_report_with, sandwich_report, solve_hard_margin_with, SolverOptions, DEFAULT_ALPHA_CAP,
    DEFAULT_KKT_TOL, DEFAULT_MARGIN_TOL, DEFAULT_MAX_ITER,
};
use detgen::numerics::Seed;
use detgen::parametric::{
    check_metric_regularity, check_var_cvx, check_var_qg, default_rho, minimize, DeltaGrid, GridSpacing,
    QuadraticEvaluation,
};
use detgen::{load_csv, split_by_indices, Dataset, Error, KernelSpec, SplitPair, Task};

#[derive(Parser, Debug)]
#[command(name = "detgen", version, about = "Deterministic generalization certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Both interpolation bounds for a split of a regression dataset.
    InterpBound(InterpBoundArgs),
    /// Dissimilarity D^2 between the in-sample and out-sample points.
    Dissim(DissimArgs),
    /// Hard-margin SVM dual solve with strong-duality and KKT checks.
    SvmSolve(SvmSolveArgs),
    /// Leave-one-out hinge loss against R^2 |f_S|^2 / n.
    SvmLoo(SvmLooArgs),
    /// Batch margin bound and sandwich inequalities for a split.
    SvmBatchBound(SvmBatchArgs),
    /// Quadratic growth, metric regularity and localization for two
    /// least-squares evaluations.
    Parametric(ParametricArgs),
    /// Seeded Monte Carlo runs and bound sweeps.
    Montecarlo(MonteCarloArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KernelKind {
    Linear,
    Polynomial,
    Gaussian,
}

#[derive(Args, Debug, Clone)]
struct KernelArgs {
    #[arg(long, value_enum, default_value_t = KernelKind::Gaussian)]
    kernel: KernelKind,
    /// Gaussian width in exp(-gamma |a - b|^2).
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Polynomial degree.
    #[arg(long, default_value_t = 2)]
    degree: u32,
    /// Polynomial offset.
    #[arg(long, default_value_t = 1.0)]
    offset: f64,
}

impl KernelArgs {
    fn spec(&self) -> detgen::Result<KernelSpec> {
        match self.kernel {
            KernelKind::Linear => Ok(KernelSpec::Linear),
            KernelKind::Polynomial => KernelSpec::polynomial(self.degree, self.offset),
            KernelKind::Gaussian => KernelSpec::gaussian(self.gamma),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// CSV file: feature columns followed by the label column.
    #[arg(long)]
    data: PathBuf,
    /// The first CSV line is a header.
    #[arg(long, default_value_t = false)]
    header: bool,
}

#[derive(Args, Debug, Clone)]
struct SplitArgs {
    /// Zero-based row indices of the in-sample, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    split_in: Vec<usize>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// KKT tolerance of the dual solver.
    #[arg(long, default_value_t = DEFAULT_KKT_TOL)]
    solver_tol: f64,
    /// Maximum number of dual sweeps.
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
    /// Dual mass above which the problem is declared infeasible.
    #[arg(long, default_value_t = DEFAULT_ALPHA_CAP)]
    alpha_cap: f64,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver_tol,
            max_iter: self.max_iter,
            alpha_cap: self.alpha_cap,
        }
    }
}

#[derive(Args, Debug)]
struct InterpBoundArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Absolute slack allowed on both bounds. A negative value demands that
    /// much to spare.
    #[arg(long, default_value_t = DEFAULT_BOUND_TOL)]
    tol: f64,
    /// Write the JSON report here [default: none].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DissimMethod {
    Eig,
    Singleton,
    Crude,
}

#[derive(Args, Debug)]
struct DissimArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, value_enum, default_value_t = DissimMethod::Eig)]
    method: DissimMethod,
    /// Write the JSON report here [default: none].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SvmSolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Tolerance of the strong-duality and KKT checks.
    #[arg(long, default_value_t = DEFAULT_MARGIN_TOL)]
    tol: f64,
    /// Write the JSON report here [default: none].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SvmLooArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Absolute slack allowed on the bound. A negative value demands that
    /// much to spare.
    #[arg(long, default_value_t = DEFAULT_MARGIN_TOL)]
    tol: f64,
    /// Write the JSON report here [default: none].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SvmBatchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Absolute slack allowed on the bound and the sandwich gaps. A negative
    /// value demands that much to spare.
    #[arg(long, default_value_t = DEFAULT_MARGIN_TOL)]
    tol: f64,
    /// Write the JSON report here [default: none].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SpacingArg {
    Linear,
    Log,
}

#[derive(Args, Debug)]
struct ParametricArgs {
    /// In-sample CSV: design columns followed by the target.
    #[arg(long)]
    data_in: PathBuf,
    /// Out-sample CSV in the same layout.
    #[arg(long)]
    data_out: PathBuf,
    /// The first CSV line is a header.
    #[arg(long, default_value_t = false)]
    header: bool,
    /// Excess level of the out-sample near-minimizers.
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    /// Radius of the certified region; 0 picks the automatic radius.
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Random directions in the quadratic-growth check.
    #[arg(long, default_value_t = 20)]
    trial_dirs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DeltaGrid::default().start)]
    delta_start: f64,
    #[arg(long, default_value_t = DeltaGrid::default().stop)]
    delta_stop: f64,
    #[arg(long, default_value_t = DeltaGrid::default().count)]
    delta_count: usize,
    #[arg(long, value_enum, default_value_t = SpacingArg::Log)]
    spacing: SpacingArg,
    /// Write the JSON report here [default: none].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Unset flags fall back to the `--config` file and then to the preset of
/// the scenario.
#[derive(Args, Debug)]
struct MonteCarloArgs {
    /// JSON file with TrialConfig fields [default: none].
    #[arg(long)]
    config: Option<PathBuf>,
    /// [default: from --config, else interp_corollary]
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// [default: from --config, else 0]
    #[arg(long)]
    seed: Option<u64>,
    /// [default: from --config, else the scenario preset]
    #[arg(long)]
    trials: Option<usize>,
    /// Sample size [default: from --config, else the scenario preset]
    #[arg(long)]
    n: Option<usize>,
    /// Input dimension [default: from --config, else the scenario preset]
    #[arg(long)]
    d: Option<usize>,
    /// Teacher norm [default: from --config, else the scenario preset]
    #[arg(long = "B")]
    teacher_norm: Option<f64>,
    /// Input ball radius [default: from --config, else 2]
    #[arg(long)]
    radius: Option<f64>,
    /// Classification margin [default: from --config, else 1]
    #[arg(long)]
    margin: Option<f64>,
    /// Report format [default: from the --out extension, else json]
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Write the report here [default: none].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse::<Scenario>().map_err(|e| e.to_string())
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome = Result<bool, Failure>;

fn load(args: &DataArgs, task: Task) -> detgen::Result<Dataset> {
    load_csv(&args.data, task, args.header)
}

fn split(d: &Dataset, args: &SplitArgs) -> Result<SplitPair, Failure> {
    if let Some(&bad) = args.split_in.iter().find(|&&i| i >= d.len()) {
        return Err(Failure::Input(format!("split index {bad} is out of range for {} rows", d.len())));
    }
    Ok(split_by_indices(d, &args.split_in)?)
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), Failure> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Input(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn interp_bound(a: &InterpBoundArgs) -> Outcome {
    let d = load(&a.data, Task::Regression)?;
    let pair = split(&d, &a.split)?;
    let r = theorem1_report(&pair, &a.kernel.spec()?, a.tol)?;
    println!("lhs        {:.6e}", r.lhs);
    println!("d_sq       {:.6e}", r.d_sq);
    println!("slack_6    {:.6e}", r.slack_6);
    println!("slack_7    {:.6e}", r.slack_7);
    println!("tol        {:e}", r.tol);
    println!("{}", verdict(r.pass));
    write_json(a.out.as_deref(), &r)?;
    Ok(r.pass)
}

fn dissim(a: &DissimArgs) -> Outcome {
    let d = load(&a.data, Task::Regression)?;
    let pair = split(&d, &a.split)?;
    let k = a.kernel.spec()?;
    let r = match a.method {
        DissimMethod::Eig => dissimilarity_eig(&pair.s_in, &pair.s_out, &k)?,
        DissimMethod::Singleton => {
            if pair.s_out.len() != 1 {
                return Err(Failure::Input(format!(
                    "singleton method needs one out-sample point, got {}",
                    pair.s_out.len()
                )));
            }
            dissimilarity_singleton(&pair.s_in, &pair.s_out.examples()[0].x, &k)?
        }
        DissimMethod::Crude => dissimilarity_crude(&pair.s_out, &k)?,
    };
    println!("d_sq       {:.6e}", r.d_sq);
    println!("method     {:?}", r.method);
    write_json(a.out.as_deref(), &r)?;
    Ok(true)
}

#[derive(Serialize)]
struct SolveReport {
    norm_sq: f64,
    dual_sum: f64,
    identity_gap: f64,
    min_margin: f64,
    complementary_slackness: f64,
    converged: bool,
    iterations: usize,
    kkt_violation: f64,
    alpha: Vec<f64>,
    solver_tol: f64,
    tol: f64,
    pass: bool,
}

fn svm_solve(a: &SvmSolveArgs) -> Outcome {
    let d = load(&a.data, Task::Classification)?;
    let m = solve_hard_margin_with(&d, &a.kernel.spec()?, &a.solver.options())?;
    let margins = m.margins(&d)?;
    let identity_gap = (m.dual_sum() - m.norm_sq).abs();
    let slackness = margins
        .iter()
        .zip(m.alpha.iter())
        .map(|(mi, al)| (al * (mi - 1.0)).abs())
        .fold(0.0, f64::max);
    let min_margin = margins.min();
    let pass = identity_gap <= a.tol * (1.0 + m.norm_sq) && min_margin >= 1.0 - a.tol && slackness <= a.tol;
    println!("norm_sq    {:.6e}", m.norm_sq);
    println!("dual_sum   {:.6e}", m.dual_sum());
    println!("min_margin {:.6e}", min_margin);
    println!("slackness  {:.6e}", slackness);
    println!("iterations {}", m.iterations);
    println!("{}", verdict(pass));
    let report = SolveReport {
        norm_sq: m.norm_sq,
        dual_sum: m.dual_sum(),
        identity_gap,
        min_margin,
        complementary_slackness: slackness,
        converged: m.converged,
        iterations: m.iterations,
        kkt_violation: m.kkt_violation,
        alpha: m.alpha.as_slice().to_vec(),
        solver_tol: a.solver.solver_tol,
        tol: a.tol,
        pass,
    };
    write_json(a.out.as_deref(), &report)?;
    Ok(pass)
}

fn svm_loo(a: &SvmLooArgs) -> Outcome {
    let d = load(&a.data, Task::Classification)?;
    let r = loo_report_with(&d, &a.kernel.spec()?, &a.solver.options(), a.tol)?;
    println!("mean_hinge {}", r.mean_hinge);
    println!("bound      {}", r.bound);
    println!("{}", verdict(r.pass));
    write_json(a.out.as_deref(), &r)?;
    Ok(r.pass)
}

fn svm_batch_bound(a: &SvmBatchArgs) -> Outcome {
    let d = load(&a.data, Task::Classification)?;
    let pair = split(&d, &a.split)?;
    let k = a.kernel.spec()?;
    let batch = batch_bound_report(&pair, &k, None, a.tol)?;
    let sandwich = sandwich_report(&pair, &k, a.tol)?;
    println!("batch lhs  {:.6e}", batch.lhs);
    println!("batch rhs  {:.6e}", batch.rhs);
    println!("upper_gap  {:.6e}", sandwich.upper_gap);
    println!("lower_gap  {:.6e}", sandwich.lower_gap);
    let pass = batch.pass && sandwich.pass;
    println!("{}", verdict(pass));
    write_json(
        a.out.as_deref(),
        &serde_json::json!({ "batch_bound": batch, "sandwich": sandwich, "pass": pass }),
    )?;
    Ok(pass)
}

fn quadratic(path: &Path, header: bool) -> detgen::Result<QuadraticEvaluation> {
    QuadraticEvaluation::from_dataset(&load_csv(path, Task::Regression, header)?)
}

fn parametric(a: &ParametricArgs) -> Outcome {
    let q_in = quadratic(&a.data_in, a.header)?;
    let q_out = quadratic(&a.data_out, a.header)?;
    let rho = if a.rho > 0.0 { a.rho } else { default_rho(&q_in, &q_out)? };
    let qg = check_var_qg(&q_in, &q_out, a.eps, rho, a.trial_dirs, Seed(a.seed))?;
    let mr = check_metric_regularity(&q_in, &q_out)?;
    println!("var_qg     max_dist {:.6e} bound {:.6e} {}", qg.max_dist, qg.bound, verdict(qg.pass));
    println!("metric_reg lhs {:.6e} rhs {:.6e} {}", mr.lhs, mr.rhs, verdict(mr.pass));
    let grid = DeltaGrid {
        start: a.delta_start,
        stop: a.delta_stop,
        count: a.delta_count,
        spacing: match a.spacing {
            SpacingArg::Linear => GridSpacing::Linear,
            SpacingArg::Log => GridSpacing::Log,
        },
    };
    let unique = minimize(&q_in)?.unique && minimize(&q_out)?.unique;
    let cvx = if unique {
        let r = check_var_cvx(&q_in, &q_out, &grid)?;
        println!(
            "var_cvx    distance {:.6e} delta_star {:.6e}{} {}",
            r.distance,
            r.delta_star,
            if r.vacuous { " (vacuous)" } else { "" },
            verdict(r.pass)
        );
        Some(r)
    } else {
        println!("var_cvx    skipped: minimizers are not unique");
        None
    };
    let pass = qg.pass && mr.pass && cvx.as_ref().is_none_or(|r| r.pass);
    println!("{}", verdict(pass));
    write_json(
        a.out.as_deref(),
        &serde_json::json!({ "var_qg": qg, "metric_regularity": mr, "var_cvx": cvx, "pass": pass }),
    )?;
    Ok(pass)
}

fn montecarlo_config(a: &MonteCarloArgs) -> detgen::Result<TrialConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let mut cfg = TrialConfig::load(path)?;
            if let Some(s) = a.scenario {
                cfg.scenario = s;
            }
            cfg
        }
        None => TrialConfig::for_scenario(a.scenario.unwrap_or(Scenario::InterpCorollary)),
    };
    if let Some(v) = a.seed {
        cfg.seed = Seed(v);
    }
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.d {
        cfg.d = v;
    }
    if let Some(v) = a.teacher_norm {
        cfg.teacher_norm = v;
    }
    if let Some(v) = a.radius {
        cfg.radius = v;
    }
    if let Some(v) = a.margin {
        cfg.margin = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn montecarlo(a: &MonteCarloArgs) -> Outcome {
    let cfg = montecarlo_config(a)?;
    let rep = experiments::run(&cfg)?;
    println!("scenario   {} seed {} trials {}", cfg.scenario, cfg.seed.0, cfg.trials);
    for (k, v) in &rep.bounds {
        println!("bound      {k} = {v:.6e}");
    }
    for (k, v) in &rep.verdicts {
        println!(
            "verdict    {k}: {:.6e} <= {:.6e} {}{}",
            v.empirical,
            v.threshold,
            verdict(v.pass),
            if v.vacuous { " (vacuous)" } else { "" }
        );
    }
    if !rep.failing_seeds.is_empty() {
        println!("failing seeds:");
        for f in &rep.failing_seeds {
            println!("  trial {} seed {} check {}", f.trial, f.seed.0, f.check);
        }
    }
    if let Some(path) = &a.out {
        let format = match a.format {
            Some(FormatArg::Json) => ReportFormat::Json,
            Some(FormatArg::Csv) => ReportFormat::Csv,
            None if path.extension().is_some_and(|e| e == "csv") => ReportFormat::Csv,
            None => ReportFormat::Json,
        };
        emit_report(&rep, path, format)?;
    }
    println!("{}", verdict(rep.pass()));
    Ok(rep.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::InterpBound(a) => interp_bound(a),
        Command::Dissim(a) => dissim(a),
        Command::SvmSolve(a) => svm_solve(a),
        Command::SvmLoo(a) => svm_loo(a),
        Command::SvmBatchBound(a) => svm_batch_bound(a),
        Command::Parametric(a) => parametric(a),
        Command::Montecarlo(a) => montecarlo(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical error: {msg}");
            ExitCode::from(3)
        }
    }
}

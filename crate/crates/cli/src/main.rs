//! Command-line front end: solve, build anchors, certify, evaluate bounds and
//! estimators, and run experiment sweeps.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on invalid input or
//! configuration, 3 when a sweep has a cell with systematic solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anchorreg::analysis::{
    bound_cor2, bound_cor3, bound_cor4, bound_thm1, c_star, grad_moment_estimates, p_tau_estimate,
    rademacher_full_space, sigma_cone_norm, tau_cone_lower, AscentConeSpec, BoundReport, Estimate,
    LabeledValue, PTauReport,
};
use anchorreg::anchor::{
    anchor_from_gradient, anchor_from_hessian, anchor_sparse_threshold, oracle_anchor, AnchorResult,
    PowerIterationSettings,
};
use anchorreg::harness::{noise_curve, run_sweep, ExperimentConfig, OutputPaths};
use anchorreg::models::sigma_star_closed_form;
use anchorreg::solver::{certify, solve, CertifySettings, Regularizer, SolverConfig};
use anchorreg::{Error, ModelKind, ProblemInstance, RngStream};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "anchorreg", version, about = "Anchored regression for systems of convex equations")]
struct Cli {
    /// Worker threads for parallel work (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the anchored program for an instance and anchor.
    Solve(SolveArgs),
    /// Build an anchor vector from an instance.
    Anchor(AnchorArgs),
    /// Compute the KKT cone certificate of a solution.
    Certify(CertifyArgs),
    /// Evaluate the sample-complexity bounds for a closed-form model.
    Bounds(BoundsArgs),
    /// Run the Monte Carlo estimators of the complexity constants.
    Estimate(EstimateArgs),
    /// Run a recovery sweep over M and noise levels.
    Sweep(ExperimentArgs),
    /// Run a noise-robustness curve against the recovery error bound.
    NoiseCurve(ExperimentArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Anchor JSON: an anchor result or a bare array.
    #[arg(long)]
    anchor: PathBuf,
    /// `none` or `l1:<lambda>`.
    #[arg(long, default_value = "none")]
    reg: Regularizer,
    /// Risk budget c; overrides the solver config.
    #[arg(long)]
    budget: Option<f64>,
    /// Solver config JSON (fields default when absent).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Include the best-objective trace in the result.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnchorKind {
    Gradient,
    Hessian,
    SparseThreshold,
    Oracle,
}

#[derive(Args)]
struct AnchorArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value = "gradient")]
    method: AnchorKind,
    /// Support size for sparse-threshold.
    #[arg(long)]
    k: Option<usize>,
    /// Perturbation size for oracle anchors.
    #[arg(long, default_value_t = 0.3)]
    zeta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Solution JSON: a solve result or a bare array.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    anchor: PathBuf,
    #[arg(long, default_value = "none")]
    reg: Regularizer,
    /// Activity tolerance relative to `1 + |y_m|`.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// linear, square, relu, softplus, or a model JSON object.
    #[arg(long, value_parser = parse_model)]
    model: ModelKind,
    #[arg(long)]
    n: usize,
    /// Anchor quality δ defining the cone.
    #[arg(long)]
    delta: f64,
    /// Sparsity s of the ground truth; enables the ℓ1 cone.
    #[arg(long, requires = "lambda")]
    sparse: Option<usize>,
    #[arg(long, requires = "sparse")]
    lambda: Option<f64>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Confidence parameter (probability ≥ 1 − e^{−2t²}).
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Samples for the gradient moments of the sparse bound.
    #[arg(long, default_value_t = 200_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 50)]
    probes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Equations per draw for the Rademacher estimate (default 4N).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config's output paths.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Usage(_) | Error::DimensionMismatch { .. } | Error::Json(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    let json = if s.trim_start().starts_with('{') {
        s.to_string()
    } else {
        format!("{{\"kind\":\"{s}\"}}")
    };
    let kind: ModelKind = serde_json::from_str(&json).map_err(|e| format!("unknown model {s:?}: {e}"))?;
    kind.validate().map_err(|e| e.to_string())?;
    Ok(kind)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Reads a vector stored either bare or under `field` of a larger document.
fn read_vector(path: &Path, field: &str) -> CliResult<Vec<f64>> {
    let value: serde_json::Value = read_json(path)?;
    let inner = if value.is_array() { &value } else { &value[field] };
    serde_json::from_value(inner.clone())
        .map_err(|_| usage(format!("{}: expected an array or an object with {field:?}", path.display())))
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n").map_err(|e| Failure::from(Error::from(e))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run_solve(a: SolveArgs) -> CliResult<()> {
    let inst = ProblemInstance::load(&a.instance)?;
    let a0 = read_vector(&a.anchor, "a0")?;
    let mut config: SolverConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if let Some(b) = a.budget {
        config.budget = b;
    }
    config.record_trace |= a.trace;
    let res = solve(&inst, &a0, &a.reg, &config)?;
    emit(&res, a.out.as_deref())
}

fn run_anchor(a: AnchorArgs) -> CliResult<()> {
    let inst = ProblemInstance::load(&a.instance)?;
    let settings = PowerIterationSettings {
        max_iters: a.max_iters,
        tol: a.tol,
        ..PowerIterationSettings::default()
    };
    let res: AnchorResult = match a.method {
        AnchorKind::Gradient => anchor_from_gradient(&inst)?,
        AnchorKind::Hessian => anchor_from_hessian(&inst, settings)?,
        AnchorKind::SparseThreshold => {
            let k = a.k.ok_or_else(|| usage("sparse-threshold needs --k"))?;
            anchor_sparse_threshold(&inst, k, settings)?
        }
        AnchorKind::Oracle => {
            let x = inst
                .x_star
                .as_deref()
                .ok_or_else(|| usage("oracle anchors need an instance with x_star"))?;
            oracle_anchor(x, a.zeta, RngStream::new(a.seed, 0))?
        }
    };
    emit(&res, a.out.as_deref())
}

fn run_certify(a: CertifyArgs) -> CliResult<()> {
    let inst = ProblemInstance::load(&a.instance)?;
    let x_hat = read_vector(&a.solution, "x_hat")?;
    let a0 = read_vector(&a.anchor, "a0")?;
    let settings = CertifySettings {
        tol: a.tol,
        ..CertifySettings::default()
    };
    let cert = certify(&inst, &x_hat, &a0, &a.reg, &settings)?;
    emit(&cert, a.out.as_deref())
}

/// Unit-norm ground truth for the cone: `e₁`, or equal magnitudes on the
/// first `s` coordinates.
fn cone_spec(m: &ModelArgs) -> CliResult<(AscentConeSpec, Option<(usize, f64)>)> {
    if m.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let sparse = m.sparse.zip(m.lambda);
    let mut x = vec![0.0; m.n];
    let reg = match sparse {
        Some((s, lambda)) => {
            if s == 0 || s > m.n {
                return Err(usage(format!("--sparse must lie in [1, {}]", m.n)));
            }
            x.iter_mut().take(s).for_each(|v| *v = 1.0 / (s as f64).sqrt());
            Regularizer::L1 { lambda }
        }
        None => {
            x[0] = 1.0;
            Regularizer::None
        }
    };
    Ok((AscentConeSpec::new(m.delta, x, reg)?, sparse))
}

#[derive(Serialize)]
struct BoundsOutput {
    model: ModelKind,
    n: usize,
    delta: f64,
    t: f64,
    tau_cone: LabeledValue,
    sigma2_cone: LabeledValue,
    sigma_norm: f64,
    sigma_trace: f64,
    /// `τ²(A_δ)/(4ς²)`, used as `p_τ` at `τ = τ(A_δ)/2` below.
    paley_zygmund_floor: f64,
    /// The general recovery bound with `𝔠_M ≤ √tr Σ⋆`, `τ = τ(A_δ)/2`, `p_τ` = the floor.
    thm1: BoundReport,
    cor2: BoundReport,
    cor3: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    sparse: Option<SparseBound>,
}

#[derive(Serialize)]
struct SparseBound {
    s: usize,
    lambda: f64,
    c_star: f64,
    grad_head_sq: Estimate,
    grad_tail_inf_sq: Estimate,
    cor4: BoundReport,
}

fn run_bounds(a: BoundsArgs) -> CliResult<()> {
    let (spec, sparse) = cone_spec(&a.model)?;
    let kind = &a.model.model;
    let stream = RngStream::new(a.seed, 0);
    let tau = tau_cone_lower(kind, &spec, 1, 1, stream.child(0))?;
    if !(tau.value > 0.0) {
        return Err(usage(format!(
            "τ(A_δ) = {} is not positive at δ = {}; no bound applies",
            tau.value, a.model.delta
        )));
    }
    let sigma = sigma_star_closed_form(kind, &spec.x_star)?;
    let sigma2 = sigma_cone_norm(&spec, &sigma, 200, stream.child(1))?;
    let (norm, trace) = (sigma.op_norm(), sigma.trace());
    let floor = (tau.value * tau.value / (4.0 * sigma2.value)).min(1.0);
    let c_m = trace.sqrt();
    let sparse = match sparse {
        Some((s, lambda)) => {
            let support: Vec<usize> = (0..s).collect();
            let (head, tail) = grad_moment_estimates(kind, &spec.x_star, &support, a.samples, stream.child(2))?;
            let cs = c_star(spec.delta, lambda, &spec.x_star)?;
            let cor4 = bound_cor4(head.mean, tail.mean, cs, tau.value, sigma2.value, a.model.n, s, a.t)?;
            Some(SparseBound {
                s,
                lambda,
                c_star: cs,
                grad_head_sq: head,
                grad_tail_inf_sq: tail,
                cor4,
            })
        }
        None => None,
    };
    let out = BoundsOutput {
        model: kind.clone(),
        n: a.model.n,
        delta: a.model.delta,
        t: a.t,
        tau_cone: tau,
        sigma2_cone: sigma2,
        sigma_norm: norm,
        sigma_trace: trace,
        paley_zygmund_floor: floor,
        thm1: bound_thm1(c_m, 0.5 * tau.value, floor, a.t)?,
        cor2: bound_cor2(c_m, tau.value, sigma2.value, a.t)?,
        cor3: bound_cor3(norm, trace, tau.value, a.t)?,
        sparse,
    };
    emit(&out, a.out.as_deref())
}

#[derive(Serialize)]
struct EstimateOutput {
    model: ModelKind,
    n: usize,
    delta: f64,
    m: usize,
    rademacher_full_space: Estimate,
    tau_cone: LabeledValue,
    sigma2_cone: LabeledValue,
    /// Tail probabilities at `τ = τ(A_δ)/2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    p_tau: Option<PTauReport>,
}

fn run_estimate(a: EstimateArgs) -> CliResult<()> {
    let (spec, _) = cone_spec(&a.model)?;
    let kind = &a.model.model;
    let stream = RngStream::new(a.seed, 0);
    let m = a.m.unwrap_or(4 * a.model.n);
    let rad = rademacher_full_space(kind, &spec.x_star, m, a.trials, stream.child(0))?;
    let tau = tau_cone_lower(kind, &spec, a.probes, a.samples, stream.child(1))?;
    let sigma = match sigma_star_closed_form(kind, &spec.x_star) {
        Ok(s) => s,
        Err(Error::NoClosedForm(_)) => anchorreg::models::sigma_star_monte_carlo(
            kind,
            &spec.x_star,
            a.samples,
            &mut stream.child(2).generator(),
        )?,
        Err(e) => return Err(e.into()),
    };
    let sigma2 = sigma_cone_norm(&spec, &sigma, a.probes, stream.child(3))?;
    let p_tau = if tau.value > 0.0 {
        Some(p_tau_estimate(kind, &spec, 0.5 * tau.value, a.probes, a.samples, stream.child(4))?)
    } else {
        None
    };
    let out = EstimateOutput {
        model: kind.clone(),
        n: a.model.n,
        delta: a.model.delta,
        m,
        rademacher_full_space: rad,
        tau_cone: tau,
        sigma2_cone: sigma2,
        p_tau,
    };
    emit(&out, a.out.as_deref())
}

fn load_experiment(a: &ExperimentArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::from(e)))
}

fn run_sweep_cmd(a: ExperimentArgs) -> CliResult<u8> {
    let mut cfg = load_experiment(&a)?;
    if let Some(dir) = &a.out {
        out_dir(dir)?;
        cfg.output = OutputPaths {
            csv: Some(dir.join("trials.csv")),
            summary: Some(dir.join("summary.json")),
        };
    }
    let out = run_sweep(&cfg)?;
    out.write(&cfg.output)?;
    emit(&out.summary, None)?;
    Ok(if out.any_systematic_failure() { 3 } else { 0 })
}

fn run_noise_curve(a: ExperimentArgs) -> CliResult<()> {
    let cfg = load_experiment(&a)?;
    let curve = noise_curve(&cfg)?;
    match &a.out {
        Some(dir) => {
            out_dir(dir)?;
            emit(&curve, Some(&dir.join("noise_curve.json")))?;
            emit(&curve, None)
        }
        None => emit(&curve, None),
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Solve(a) => run_solve(a).map(|_| 0),
        Command::Anchor(a) => run_anchor(a).map(|_| 0),
        Command::Certify(a) => run_certify(a).map(|_| 0),
        Command::Bounds(a) => run_bounds(a).map(|_| 0),
        Command::Estimate(a) => run_estimate(a).map(|_| 0),
        Command::Sweep(a) => run_sweep_cmd(a),
        Command::NoiseCurve(a) => run_noise_curve(a).map(|_| 0),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

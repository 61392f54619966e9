//! Reproducible experiments: recovery trials, sweeps over `M` and noise
//! level, and noise-robustness curves checked against the recovery error
//! bound.
//!
//! Every trial draws from `RngStream::for_trial(base_seed, cell, trial)`, and
//! results are assembled by index, so outputs are a pure function of the
//! config regardless of thread count. Wall time is the one exception and is
//! only written when `record_wall_time` is set.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{bound_thm1, AscentConeSpec, ValueKind};
use crate::anchor::{
    anchor_from_gradient, anchor_from_hessian, anchor_quality, anchor_sparse_threshold, oracle_anchor,
    AnchorMethod, PowerIterationSettings,
};
use crate::error::{Error, Result};
use crate::instance::{NoiseSpec, ProblemInstance};
use crate::linalg::{add, dist2, norm2};
use crate::models::{sample_instance, sigma_star_closed_form, tau_from_correlation, ModelKind};
use crate::risk::risk_unchecked;
use crate::rng::{unit_vector, RngStream};
use crate::solver::{certify, solve, CertifySettings, Regularizer, SolveStatus, SolverConfig};

pub const CSV_HEADER: [&str; 11] = [
    "n",
    "m",
    "s",
    "noise_level",
    "trial",
    "seed",
    "delta_hat",
    "status",
    "rel_error",
    "cert_residual",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseSpec {
    pub s: usize,
    pub lambda: f64,
}

/// How the risk budget `c` is set for each instance.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BudgetRule {
    /// `c = E(−ξ)₊` under the cell's noise law (zero without noise).
    #[default]
    NoiseNegativePart,
    Fixed { value: f64 },
}

impl BudgetRule {
    pub fn budget(&self, noise: &NoiseSpec) -> f64 {
        match *self {
            BudgetRule::NoiseNegativePart => noise.expected_negative_part(),
            BudgetRule::Fixed { value } => value,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

fn default_zeta() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub n: usize,
    pub m: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse: Option<SparseSpec>,
    pub anchor: AnchorMethod,
    /// Perturbation size ζ for oracle anchors.
    #[serde(default = "default_zeta")]
    pub oracle_zeta: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Noise levels to sweep; empty means the level of `noise` only.
    #[serde(default)]
    pub noise_levels: Vec<f64>,
    #[serde(default)]
    pub budget: BudgetRule,
    pub trials: usize,
    pub base_seed: u64,
    /// Relative-error threshold for success; defaults per model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_threshold: Option<f64>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.m.is_empty() {
            return bad("the M list is empty".into());
        }
        if self.m.iter().any(|&m| m == 0) {
            return bad("every M must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if let Some(sp) = self.sparse {
            if sp.s == 0 || sp.s > self.n {
                return bad(format!("sparsity s must lie in [1, {}], got {}", self.n, sp.s));
            }
            if !(sp.lambda > 0.0 && sp.lambda.is_finite()) {
                return bad(format!("lambda must be positive, got {}", sp.lambda));
            }
        }
        if !(self.oracle_zeta >= 0.0 && self.oracle_zeta.is_finite()) {
            return bad(format!("oracle_zeta must be >= 0, got {}", self.oracle_zeta));
        }
        self.noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        for &l in &self.noise_levels {
            if !(l >= 0.0 && l.is_finite()) {
                return bad(format!("noise levels must be finite and >= 0, got {l}"));
            }
        }
        if !self.noise_levels.is_empty() && self.noise == NoiseSpec::None && self.noise_levels.iter().any(|l| *l > 0.0) {
            return bad("noise_levels need a noise law other than none".into());
        }
        if let BudgetRule::Fixed { value } = self.budget {
            if !(value >= 0.0 && value.is_finite()) {
                return bad(format!("fixed budget must be >= 0, got {value}"));
            }
        }
        let thr = self.threshold();
        if !(thr > 0.0 && thr < 1.0) {
            return bad(format!("success threshold must lie in (0, 1), got {thr}"));
        }
        self.solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// The configured threshold, or the default for the model: 5e-2 with
    /// sparsity, 1e-3 for Linear, 1e-2 otherwise.
    pub fn threshold(&self) -> f64 {
        self.success_threshold.unwrap_or(if self.sparse.is_some() {
            5e-2
        } else if matches!(self.model, ModelKind::Linear) {
            1e-3
        } else {
            1e-2
        })
    }

    pub fn regularizer(&self) -> Regularizer {
        match self.sparse {
            Some(sp) => Regularizer::L1 { lambda: sp.lambda },
            None => Regularizer::None,
        }
    }

    fn levels(&self) -> Vec<f64> {
        if self.noise_levels.is_empty() {
            vec![self.noise.level()]
        } else {
            self.noise_levels.clone()
        }
    }

    /// Cells ordered by noise level, then `M`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for noise_level in self.levels() {
            for &m in &self.m {
                out.push(Cell {
                    index: out.len() as u32,
                    m,
                    noise_level,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: u32,
    pub m: usize,
    pub noise_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub noise_level: f64,
    pub trial: u32,
    /// Stream index; `RngStream::new(base_seed, seed)` replays the trial.
    pub seed: u64,
    pub delta_hat: f64,
    pub status: String,
    /// For Square, `min(‖x̂ − x⋆‖, ‖x̂ + x⋆‖)/‖x⋆‖`.
    pub rel_error: f64,
    /// `NaN` unless the solve converged on a zero-budget program.
    pub cert_residual: f64,
    pub wall_ms: u64,
    /// `(1/M) Σ |ξ_m|`.
    pub mean_abs_noise: f64,
    /// `|c − R⁺_M(x⋆)|`.
    pub epsilon: f64,
}

impl TrialRecord {
    /// A converged solve within the relative-error threshold.
    pub fn succeeded(&self, threshold: f64) -> bool {
        self.status == "converged" && self.rel_error <= threshold
    }

    /// Statuses that count as the solver (or anchor) failing to finish, as
    /// opposed to a finished solve that misses the target.
    pub fn solver_failed(&self) -> bool {
        !matches!(self.status.as_str(), "converged" | "norm_cap_hit")
    }

    fn csv_fields(&self) -> [String; 11] {
        [
            self.n.to_string(),
            self.m.to_string(),
            self.s.to_string(),
            self.noise_level.to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            self.delta_hat.to_string(),
            self.status.clone(),
            self.rel_error.to_string(),
            self.cert_residual.to_string(),
            self.wall_ms.to_string(),
        ]
    }
}

fn ground_truth(cfg: &ExperimentConfig, stream: RngStream) -> Result<Vec<f64>> {
    let mut rng = stream.generator();
    match cfg.sparse {
        None => unit_vector(&mut rng, cfg.n),
        Some(sp) => {
            let mag = 1.0 / (sp.s as f64).sqrt();
            let mut x = vec![0.0; cfg.n];
            let mut support = sample(&mut rng, cfg.n, sp.s).into_vec();
            support.sort_unstable();
            for i in support {
                x[i] = if rng.random::<bool>() { mag } else { -mag };
            }
            Ok(x)
        }
    }
}

/// Relative error, sign-symmetric for the Square model.
pub fn relative_error(kind: &ModelKind, x_hat: &[f64], x_star: &[f64]) -> f64 {
    let xn = norm2(x_star);
    let direct = dist2(x_hat, x_star);
    let err = if matches!(kind, ModelKind::Square) {
        direct.min(norm2(&add(x_hat, x_star)))
    } else {
        direct
    };
    err / xn
}

fn build_anchor(cfg: &ExperimentConfig, inst: &ProblemInstance, x_star: &[f64], stream: RngStream) -> Result<Vec<f64>> {
    let settings = PowerIterationSettings::default();
    let res = match cfg.anchor {
        AnchorMethod::Gradient => anchor_from_gradient(inst)?,
        AnchorMethod::Hessian => anchor_from_hessian(inst, settings)?,
        AnchorMethod::SparseThreshold => {
            let k = cfg.sparse.map(|sp| sp.s).unwrap_or(cfg.n);
            anchor_sparse_threshold(inst, k, settings)?
        }
        AnchorMethod::Oracle => oracle_anchor(x_star, cfg.oracle_zeta, stream)?,
    };
    Ok(res.a0)
}

/// One recovery trial. Anchor and solver failures are recorded in `status`
/// rather than returned as errors.
pub fn run_trial(cfg: &ExperimentConfig, cell: &Cell, trial: u32) -> Result<TrialRecord> {
    let stream = RngStream::for_trial(cfg.base_seed, cell.index, trial);
    let started = Instant::now();
    let x_star = ground_truth(cfg, stream.child(1))?;
    let noise = cfg.noise.with_level(cell.noise_level);
    let inst = sample_instance(&cfg.model, &x_star, cell.m, &noise, stream.child(2))?;
    let budget = cfg.budget.budget(&noise);
    let mean_abs_noise = inst.mean_abs_noise();
    let epsilon = (budget - risk_unchecked(&x_star, &inst)).abs();
    let mut record = TrialRecord {
        n: cfg.n,
        m: cell.m,
        s: cfg.sparse.map(|sp| sp.s).unwrap_or(0),
        noise_level: cell.noise_level,
        trial,
        seed: stream.stream_index,
        delta_hat: f64::NAN,
        status: String::new(),
        rel_error: f64::NAN,
        cert_residual: f64::NAN,
        wall_ms: 0,
        mean_abs_noise,
        epsilon,
    };
    let finish = |mut r: TrialRecord| {
        if cfg.record_wall_time {
            r.wall_ms = started.elapsed().as_millis() as u64;
        }
        r
    };

    let a0 = match build_anchor(cfg, &inst, &x_star, stream.child(3)) {
        Ok(a) => a,
        Err(_) => {
            record.status = "anchor_failed".into();
            return Ok(finish(record));
        }
    };
    record.delta_hat = anchor_quality(&a0, &x_star)?;
    let reg = cfg.regularizer();
    let solver_cfg = SolverConfig {
        budget,
        ..cfg.solver.clone()
    };
    let res = match solve(&inst, &a0, &reg, &solver_cfg) {
        Ok(r) => r,
        Err(_) => {
            record.status = "solver_error".into();
            return Ok(finish(record));
        }
    };
    record.status = res.status.as_str().into();
    record.rel_error = relative_error(&cfg.model, &res.x_hat, &x_star);
    if res.status == SolveStatus::Converged && budget == 0.0 {
        if let Ok(c) = certify(&inst, &res.x_hat, &a0, &reg, &CertifySettings::default()) {
            record.cert_residual = c.residual;
        }
    }
    Ok(finish(record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub noise_level: f64,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub median_error: f64,
    pub solver_failures: usize,
    /// More than half of the trials ended without the solver finishing.
    pub systematic_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub threshold: f64,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub summary: SweepSummary,
}

impl SweepOutput {
    pub fn any_systematic_failure(&self) -> bool {
        self.summary.cells.iter().any(|c| c.systematic_failure)
    }

    pub fn csv(&self) -> Result<String> {
        records_to_csv(&self.records)
    }

    /// Writes the CSV and JSON summary to the configured paths, if any.
    pub fn write(&self, paths: &OutputPaths) -> Result<()> {
        if let Some(p) = &paths.csv {
            std::fs::write(p, self.csv()?)?;
        }
        if let Some(p) = &paths.summary {
            let mut f = std::fs::File::create(p)?;
            serde_json::to_writer_pretty(&mut f, &self.summary)?;
            f.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn records_to_csv(records: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Median of the finite values; `NaN` if there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn run_cells(cfg: &ExperimentConfig) -> Result<Vec<(Cell, Vec<TrialRecord>)>> {
    let cells = cfg.cells();
    let tasks: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials as u32).map(move |t| (c, t)))
        .collect();
    let records: Vec<TrialRecord> = tasks
        .par_iter()
        .map(|&(c, t)| run_trial(cfg, &cells[c], t))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cells.len());
    let mut it = records.into_iter();
    for cell in cells {
        out.push((cell, it.by_ref().take(cfg.trials).collect()));
    }
    Ok(out)
}

/// Runs every cell × trial (in parallel on the current rayon pool) and
/// summarizes each cell.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let threshold = cfg.threshold();
    let mut records = Vec::new();
    let mut cells = Vec::new();
    for (cell, recs) in run_cells(cfg)? {
        let successes = recs.iter().filter(|r| r.succeeded(threshold)).count();
        let failures = recs.iter().filter(|r| r.solver_failed()).count();
        let errors: Vec<f64> = recs.iter().map(|r| r.rel_error).collect();
        cells.push(CellSummary {
            n: cfg.n,
            m: cell.m,
            s: cfg.sparse.map(|sp| sp.s).unwrap_or(0),
            noise_level: cell.noise_level,
            trials: recs.len(),
            successes,
            success_rate: successes as f64 / recs.len() as f64,
            median_error: median(&errors),
            solver_failures: failures,
            systematic_failure: 2 * failures > recs.len(),
        });
        records.extend(recs);
    }
    Ok(SweepOutput {
        records,
        summary: SweepSummary { threshold, cells },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurveRow {
    pub m: usize,
    pub noise_level: f64,
    pub median_error: f64,
    pub median_mean_abs_noise: f64,
    pub median_epsilon: f64,
    /// `error_coefficient × (median mean|ξ| + median ε)`.
    pub bound: f64,
    /// `median_error / bound`.
    pub ratio: f64,
    pub holds: bool,
    /// Trials whose own error exceeds their own right-hand side.
    pub trial_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseCurve {
    /// `2/(τ p_τ)` at `τ = τ(A_δ)/2` and the Paley–Zygmund floor for `p_τ`.
    pub error_coefficient: f64,
    pub delta: f64,
    pub tau_cone: f64,
    pub sigma2: f64,
    pub rows: Vec<NoiseCurveRow>,
    /// Least-squares fit `err ≈ b₀ + b₁·e + b₂·e²` of the median errors
    /// against the median `mean|ξ|`; `None` with fewer than four levels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic_fit: Option<QuadraticFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub coefficients: [f64; 3],
    pub quadratic_stderr: f64,
    /// `|b₂| / stderr(b₂) < 2`.
    pub quadratic_insignificant: bool,
}

fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Option<QuadraticFit> {
    let k = xs.len();
    if k < 4 {
        return None;
    }
    let mut gram = [0.0; 9];
    let mut rhs = [0.0; 3];
    for (x, y) in xs.iter().zip(ys) {
        let phi = [1.0, *x, x * x];
        for i in 0..3 {
            rhs[i] += phi[i] * y;
            for j in 0..3 {
                gram[i * 3 + j] += phi[i] * phi[j];
            }
        }
    }
    // inverse diagonal entry for the quadratic coefficient's variance
    let mut g2 = gram;
    let mut e2 = [0.0, 0.0, 1.0];
    let mut coef = rhs;
    if !crate::linalg::cholesky_solve(&mut gram, &mut coef) || !crate::linalg::cholesky_solve(&mut g2, &mut e2) {
        return None;
    }
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - coef[0] - coef[1] * x - coef[2] * x * x).powi(2))
        .sum();
    let sigma2 = rss / (k - 3) as f64;
    let se = (sigma2 * e2[2]).sqrt();
    Some(QuadraticFit {
        coefficients: coef,
        quadratic_stderr: se,
        quadratic_insignificant: se == 0.0 && coef[2].abs() < 1e-12 || coef[2].abs() < 2.0 * se,
    })
}

/// Median error against noise level for every cell, compared with the
/// recovery bound `2/(τ p_τ)·(mean|ξ| + ε)`. The coefficient uses certified
/// lower bounds: `τ = τ(A_δ)/2` and the Paley–Zygmund floor
/// `p_τ ≥ τ²(A_δ)/(4ς²)`, with `δ` the smallest anchor quality observed.
pub fn noise_curve(cfg: &ExperimentConfig) -> Result<NoiseCurve> {
    cfg.validate()?;
    if cfg.noise == NoiseSpec::None {
        return Err(Error::Config("noise_curve needs a noise law".into()));
    }
    let cells = run_cells(cfg)?;
    let delta = cells
        .iter()
        .flat_map(|(_, r)| r.iter().map(|t| t.delta_hat))
        .filter(|d| d.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Degenerate(format!("anchor quality {delta} gives no cone")));
    }
    let unit = {
        let mut e = vec![0.0; cfg.n];
        e[0] = 1.0;
        e
    };
    let spec = AscentConeSpec::new(delta, unit.clone(), cfg.regularizer())?;
    let floor = spec.correlation_floor();
    let tau_cone = tau_from_correlation(&cfg.model, 1.0, floor.value)?;
    let sigma = sigma_star_closed_form(&cfg.model, &unit)?;
    let sigma2 = sigma.op_norm();
    if !(tau_cone > 0.0) || floor.kind == ValueKind::UpperBound {
        return Err(Error::Degenerate(format!("τ(A_δ) = {tau_cone} is not positive at δ = {delta}")));
    }
    let tau = 0.5 * tau_cone;
    let p_tau = (tau_cone * tau_cone / (4.0 * sigma2)).min(1.0);
    let c_m = sigma.trace().sqrt();
    let coefficient = bound_thm1(c_m, tau, p_tau, 1.0)?.error_coefficient;

    let mut rows = Vec::new();
    for (cell, recs) in &cells {
        let errs: Vec<f64> = recs.iter().map(|r| r.rel_error).collect();
        let noise: Vec<f64> = recs.iter().map(|r| r.mean_abs_noise).collect();
        let eps: Vec<f64> = recs.iter().map(|r| r.epsilon).collect();
        let median_error = median(&errs);
        let (mn, me) = (median(&noise), median(&eps));
        let bound = coefficient * (mn + me);
        let trial_violations = recs
            .iter()
            .filter(|r| !(r.rel_error <= coefficient * (r.mean_abs_noise + r.epsilon) + 1e-6))
            .count();
        rows.push(NoiseCurveRow {
            m: cell.m,
            noise_level: cell.noise_level,
            median_error,
            median_mean_abs_noise: mn,
            median_epsilon: me,
            bound,
            ratio: median_error / bound,
            // a noiseless cell can only be held to solver accuracy
            holds: median_error <= bound + 1e-6,
            trial_violations,
        });
    }
    let fit = if cfg.m.len() == 1 {
        let xs: Vec<f64> = rows.iter().map(|r| r.median_mean_abs_noise).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.median_error).collect();
        quadratic_fit(&xs, &ys)
    } else {
        None
    };
    Ok(NoiseCurve {
        error_coefficient: coefficient,
        delta,
        tau_cone,
        sigma2,
        rows,
        quadratic_fit: fit,
    })
}

//! The anchored-regression program
//!
//! ```text
//! maximize ⟨a₀, x⟩ − Ω(x)   subject to   R⁺_M(x) ≤ c
//! ```
//!
//! solved through the exact penalty `−⟨a₀,x⟩ + Ω(x) + ρ(R⁺_M(x) − c)₊` with
//! geometric escalation of ρ. Each penalized problem is handled either by
//! proximal subgradient steps or, by default, by accelerated proximal
//! gradient on a smoothed penalty with the smoothing driven to zero.

mod certify;
mod regularizer;
mod smoothed;

pub use certify::{certify, Certificate, CertifySettings};
pub use regularizer::{prox, Regularizer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::linalg::{dot, norm2, positive_part, scaled};
use crate::risk::{risk_and_subgradient, risk_unchecked};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `η_k = η₀/√k` on the raw subgradient.
    InvSqrt,
    /// Fixed-length normalized steps; the length is halved (restarting from
    /// the best penalized iterate) whenever `stall_window` iterations pass
    /// without improvement.
    #[default]
    Halving,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Proximal subgradient steps on the exact penalty, sized by `schedule`.
    Subgradient,
    /// FISTA on the Moreau-smoothed penalty with a decreasing smoothing
    /// parameter. Much faster to high accuracy, and detects unbounded
    /// programs reliably because linear ascent directions get accelerated.
    #[default]
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: SolverMethod,
    /// Budget `c` for the one-sided risk.
    pub budget: f64,
    pub rho0: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Initial step; `None` picks the schedule default.
    pub step0: Option<f64>,
    pub schedule: StepSchedule,
    /// Per inner solve (one penalty / smoothing level).
    pub max_inner_iters: usize,
    /// Across the whole run (smoothed method).
    pub max_total_iters: usize,
    pub stall_window: usize,
    /// Relative objective change that counts as stalled (InvSqrt) / smallest
    /// step relative to the problem scale (Halving).
    pub rel_tol: f64,
    pub feasibility_tol: f64,
    /// `None` means `10·max(‖x₀‖, β_fit)`.
    pub norm_cap: Option<f64>,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::Smoothed,
            budget: 0.0,
            rho0: 1.0,
            rho_growth: 10.0,
            rho_max: 1e8,
            step0: None,
            schedule: StepSchedule::Halving,
            max_inner_iters: 20_000,
            max_total_iters: 200_000,
            stall_window: 50,
            rel_tol: 1e-9,
            feasibility_tol: 1e-7,
            norm_cap: None,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho0", self.rho0),
            ("rho_max", self.rho_max),
            ("rel_tol", self.rel_tol),
            ("feasibility_tol", self.feasibility_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Usage(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.budget >= 0.0 && self.budget.is_finite()) {
            return Err(Error::Usage(format!("budget must be >= 0, got {}", self.budget)));
        }
        if !(self.rho_growth > 1.0) {
            return Err(Error::Usage("rho_growth must exceed 1".into()));
        }
        if self.max_inner_iters == 0 || self.max_total_iters == 0 || self.stall_window == 0 {
            return Err(Error::Usage("iteration limits must be positive".into()));
        }
        if let Some(s) = self.step0 {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Usage(format!("step0 must be positive, got {s}")));
            }
        }
        if let Some(r) = self.norm_cap {
            if !(r > 0.0) {
                return Err(Error::Usage(format!("norm_cap must be positive, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    PenaltyExhausted,
    NormCapHit,
    /// The iteration budget ran out before the stopping tests were met.
    IterationLimit,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::PenaltyExhausted => "penalty_exhausted",
            SolveStatus::NormCapHit => "norm_cap_hit",
            SolveStatus::IterationLimit => "iteration_limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub x_hat: Vec<f64>,
    /// `−⟨a₀, x̂⟩ + Ω(x̂)`
    pub objective: f64,
    /// Best true objective among feasible iterates so far, one entry per
    /// iteration once a feasible iterate exists. Empty unless requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
    /// `(R⁺_M(x̂) − c)₊`
    pub feasibility_gap: f64,
    pub penalty: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub initial_scale: f64,
}

/// Keeps the best iterate under the true objective: any feasible iterate beats
/// every infeasible one; among infeasible ones the smallest gap wins.
struct BestTracker {
    x: Vec<f64>,
    objective: f64,
    gap: f64,
    feasible: bool,
    tol: f64,
    trace: Option<Vec<f64>>,
}

impl BestTracker {
    fn new(x: &[f64], objective: f64, gap: f64, tol: f64, record: bool) -> Self {
        Self {
            x: x.to_vec(),
            objective,
            gap,
            feasible: gap <= tol,
            tol,
            trace: record.then(Vec::new),
        }
    }

    fn offer(&mut self, x: &[f64], objective: f64, gap: f64) {
        let feasible = gap <= self.tol;
        let better = match (self.feasible, feasible) {
            (false, true) => true,
            (true, true) => objective < self.objective,
            (false, false) => gap < self.gap,
            (true, false) => false,
        };
        if better {
            self.x.copy_from_slice(x);
            self.objective = objective;
            self.gap = gap;
            self.feasible = feasible;
        }
        if let Some(t) = self.trace.as_mut() {
            if self.feasible {
                t.push(self.objective);
            }
        }
    }
}

struct Problem<'a> {
    instance: &'a ProblemInstance,
    a0: &'a [f64],
    reg: Regularizer,
    budget: f64,
}

impl Problem<'_> {
    fn true_objective(&self, x: &[f64]) -> f64 {
        -dot(self.a0, x) + self.reg.value(x)
    }

    fn gap(&self, x: &[f64]) -> f64 {
        positive_part(risk_unchecked(x, self.instance) - self.budget)
    }

    fn risk_along(&self, beta: f64) -> f64 {
        risk_unchecked(&scaled(beta, self.a0), self.instance)
    }

    fn fit_along(&self, beta: f64) -> f64 {
        let x = scaled(beta, self.a0);
        self.instance
            .rows()
            .zip(&self.instance.y)
            .map(|(a, y)| (self.instance.model.eval(a, &x) - y).abs())
            .sum::<f64>()
            / self.instance.m as f64
    }
}

fn log_grid() -> Vec<f64> {
    (-32..=32).map(|k| 10f64.powf(k as f64 / 4.0)).collect()
}

/// Golden-section search for a minimizer of `f` on `[lo, hi]`.
fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Grid-then-golden minimizer of a one-dimensional function over `β ∈ ℝ`
/// (or `β ≥ 0` when `nonnegative`).
fn minimize_1d<F: Fn(f64) -> f64>(f: F, nonnegative: bool) -> f64 {
    let pos = log_grid();
    let mut pts: Vec<f64> = Vec::with_capacity(2 * pos.len() + 1);
    if !nonnegative {
        pts.extend(pos.iter().rev().map(|b| -b));
    }
    pts.push(0.0);
    pts.extend(pos.iter().copied());
    let vals: Vec<f64> = pts.iter().map(|&b| f(b)).collect();
    let mut k = 0;
    for i in 1..pts.len() {
        if vals[i] < vals[k] {
            k = i;
        }
    }
    let lo = pts[k.saturating_sub(1)];
    let hi = pts[(k + 1).min(pts.len() - 1)];
    if lo == hi {
        return pts[k];
    }
    let b = golden_section(&f, lo, hi, 100);
    if f(b) <= vals[k] {
        b
    } else {
        pts[k]
    }
}

/// Initial scale `β̂` for `x₀ = β̂a₀`: the minimizer of `β ↦ R⁺_M(βa₀)`, pushed
/// to the far end of the feasible interval `{β : R⁺_M(βa₀) ≤ c}` when that
/// interval is nonempty.
fn initial_scale(p: &Problem<'_>) -> f64 {
    let beta_min = minimize_1d(|b| p.risk_along(b), false);
    if p.risk_along(beta_min) > p.budget {
        return beta_min;
    }
    let grid = log_grid();
    let mut lo = beta_min;
    let mut hi = None;
    for g in grid.iter().map(|g| beta_min.max(0.0) + g) {
        if p.risk_along(g) > p.budget {
            hi = Some(g);
            break;
        }
        lo = g;
    }
    let Some(mut hi) = hi else {
        return lo;
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if p.risk_along(mid) > p.budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

struct InnerOutcome {
    x_best: Vec<f64>,
    iterations: usize,
    norm_cap_hit: bool,
}

fn penalized(p: &Problem<'_>, rho: f64, x: &[f64], risk: f64) -> f64 {
    p.true_objective(x) + rho * positive_part(risk - p.budget)
}

fn inner_loop(
    p: &Problem<'_>,
    cfg: &SolverConfig,
    rho: f64,
    start: &[f64],
    scale: f64,
    norm_cap: f64,
    tracker: &mut BestTracker,
) -> InnerOutcome {
    let n = start.len();
    let mut x = start.to_vec();
    let mut x_best = x.clone();
    let mut f_best = f64::INFINITY;
    let mut since = 0usize;
    let mut step = vec![0.0; n];

    let (step0, eta_min) = match cfg.schedule {
        StepSchedule::Halving => (cfg.step0.unwrap_or(0.1 * scale), cfg.rel_tol * scale),
        StepSchedule::InvSqrt => {
            let mean_grad = p
                .instance
                .rows()
                .map(|a| {
                    let mut g = vec![0.0; n];
                    p.instance.model.add_gradient(a, start, 1.0, &mut g);
                    norm2(&g)
                })
                .sum::<f64>()
                / p.instance.m as f64;
            (cfg.step0.unwrap_or(1.0 / (1.0 + mean_grad)), 0.0)
        }
    };
    let mut eta = step0;
    let mut window_ref = f64::INFINITY;

    for k in 1..=cfg.max_inner_iters {
        let (risk, grad_r) = risk_and_subgradient(&x, p.instance);
        let f = penalized(p, rho, &x, risk);
        tracker.offer(&x, p.true_objective(&x), positive_part(risk - p.budget));
        if f < f_best {
            if f < f_best - 1e-15 * f_best.abs() {
                since = 0;
            }
            f_best = f;
            x_best.copy_from_slice(&x);
        } else {
            since += 1;
        }

        match cfg.schedule {
            StepSchedule::Halving => {
                if since >= cfg.stall_window {
                    eta *= 0.5;
                    since = 0;
                    x.copy_from_slice(&x_best);
                    if eta < eta_min {
                        return InnerOutcome {
                            x_best,
                            iterations: k,
                            norm_cap_hit: false,
                        };
                    }
                    continue;
                }
            }
            StepSchedule::InvSqrt => {
                if k % cfg.stall_window == 0 {
                    let change = (window_ref - f_best).abs() / (1.0 + f_best.abs());
                    if change < cfg.rel_tol {
                        return InnerOutcome {
                            x_best,
                            iterations: k,
                            norm_cap_hit: false,
                        };
                    }
                    window_ref = f_best;
                }
            }
        }

        // subgradient of the non-prox part: −a₀ + ρ·∂(R⁺ − c)₊
        for i in 0..n {
            step[i] = -p.a0[i];
        }
        if risk > p.budget {
            crate::linalg::axpy(rho, &grad_r, &mut step);
        }
        let t = match cfg.schedule {
            StepSchedule::Halving => {
                let gn = norm2(&step);
                if gn > 0.0 {
                    eta / gn
                } else {
                    eta
                }
            }
            StepSchedule::InvSqrt => step0 / (k as f64).sqrt(),
        };
        for i in 0..n {
            x[i] -= t * step[i];
        }
        p.reg.prox_in_place(&mut x, t);
        if !crate::linalg::all_finite(&x) || norm2(&x) > norm_cap {
            return InnerOutcome {
                x_best,
                iterations: k,
                norm_cap_hit: true,
            };
        }
    }
    InnerOutcome {
        x_best,
        iterations: cfg.max_inner_iters,
        norm_cap_hit: false,
    }
}

fn run_subgradient(
    p: &Problem<'_>,
    config: &SolverConfig,
    x0: Vec<f64>,
    scale: f64,
    norm_cap: f64,
    tracker: &mut BestTracker,
) -> (SolveStatus, f64, usize) {
    let mut rho = config.rho0;
    let mut start = x0;
    let mut iterations = 0;
    let status = loop {
        let out = inner_loop(p, config, rho, &start, scale, norm_cap, tracker);
        iterations += out.iterations;
        let exhausted = rho * config.rho_growth > config.rho_max;
        if out.norm_cap_hit {
            // a weak penalty lets iterates escape along the anchor
            if exhausted {
                break SolveStatus::NormCapHit;
            }
            rho *= config.rho_growth;
            start = tracker.x.clone();
            continue;
        }
        if p.gap(&out.x_best) <= config.feasibility_tol {
            break SolveStatus::Converged;
        }
        if exhausted {
            break SolveStatus::PenaltyExhausted;
        }
        rho *= config.rho_growth;
        start = out.x_best;
    };

    (status, rho, iterations)
}

fn run_smoothed(
    p: &Problem<'_>,
    config: &SolverConfig,
    x0: Vec<f64>,
    norm_cap: f64,
    tracker: &mut BestTracker,
) -> (SolveStatus, f64, usize) {
    let y_scale = 1.0 + p.instance.y.iter().map(|v| v.abs()).sum::<f64>() / p.instance.m as f64;
    let mu_max = 0.1 * y_scale;
    let mu_min = 0.1 * config.feasibility_tol * y_scale;
    let mut rho = config.rho0;
    let mut mu = mu_max;
    let mut start = x0;
    let mut iterations = 0;
    let mut lip = 1.0;
    let status = loop {
        let s = smoothed::Smoothed { p, rho, mu };
        let out = smoothed::fista_stage(&s, config, &start, lip, config.rel_tol, norm_cap, tracker);
        iterations += out.iterations;
        lip = out.lipschitz;
        let exhausted = rho * config.rho_growth > config.rho_max;
        if let Some(gap) = out.norm_cap_gap {
            // Escaping while feasible means the feasible set is unbounded in
            // an ascent direction; escaping infeasibly means the penalty is
            // too soft, first because of smoothing, then because of ρ.
            if gap <= config.feasibility_tol {
                break SolveStatus::NormCapHit;
            }
            if mu > mu_min {
                mu = (0.1 * mu).max(mu_min);
            } else if exhausted {
                break SolveStatus::NormCapHit;
            } else {
                rho *= config.rho_growth;
                mu = mu_max;
            }
            continue;
        }
        if let Some(z) = feasible_ray_escape(p, &start, &out.x, norm_cap, config.feasibility_tol) {
            tracker.offer(&z, p.true_objective(&z), p.gap(&z));
            break SolveStatus::NormCapHit;
        }
        start = out.x;
        if iterations >= config.max_total_iters {
            break SolveStatus::IterationLimit;
        }
        if mu > mu_min {
            mu = (0.1 * mu).max(mu_min);
            continue;
        }
        if !out.converged {
            break SolveStatus::IterationLimit;
        }
        if p.gap(&start) <= config.feasibility_tol {
            break SolveStatus::Converged;
        }
        if exhausted {
            break SolveStatus::PenaltyExhausted;
        }
        rho *= config.rho_growth;
        mu = mu_max;
    };
    (status, rho, iterations)
}

/// Extrapolates a feasible stage end point along the stage's displacement to
/// just past the norm cap. A feasible, improving point out there proves the
/// feasible set reaches beyond the cap in an ascent direction; slow smoothed
/// steps would otherwise take very long to get there.
fn feasible_ray_escape(p: &Problem<'_>, from: &[f64], to: &[f64], norm_cap: f64, tol: f64) -> Option<Vec<f64>> {
    if p.gap(to) > tol {
        return None;
    }
    let d: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
    if norm2(&d) <= 1e-12 * (1.0 + norm2(to)) {
        return None;
    }
    let mut t = 1.0;
    let mut z = to.to_vec();
    for _ in 0..200 {
        z.iter_mut().zip(to.iter().zip(&d)).for_each(|(zi, (x, di))| *zi = x + t * di);
        if norm2(&z) > 1.01 * norm_cap {
            break;
        }
        t *= 2.0;
    }
    let escaped = norm2(&z) > norm_cap && p.gap(&z) <= tol && p.true_objective(&z) < p.true_objective(to);
    escaped.then_some(z)
}

/// Approximately solves the anchored-regression program.
pub fn solve(
    instance: &ProblemInstance,
    a0: &[f64],
    reg: &Regularizer,
    config: &SolverConfig,
) -> Result<SolveResult> {
    instance.validate()?;
    instance.check_point(a0)?;
    reg.validate()?;
    config.validate()?;
    let a0_norm = norm2(a0);
    if (a0_norm - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("anchor must be unit norm, got {a0_norm}")));
    }
    let p = Problem {
        instance,
        a0,
        reg: *reg,
        budget: config.budget,
    };

    let beta0 = initial_scale(&p);
    let x0 = scaled(beta0, a0);
    let beta_fit = minimize_1d(|b| p.fit_along(b), true);
    let scale = norm2(&x0).max(beta_fit.abs()).max(f64::MIN_POSITIVE);
    let norm_cap = config.norm_cap.unwrap_or(10.0 * scale);

    let mut tracker = BestTracker::new(
        &x0,
        p.true_objective(&x0),
        p.gap(&x0),
        config.feasibility_tol,
        config.record_trace,
    );
    let (status, rho, iterations) = match config.method {
        SolverMethod::Subgradient => run_subgradient(&p, config, x0, scale, norm_cap, &mut tracker),
        SolverMethod::Smoothed => run_smoothed(&p, config, x0, norm_cap, &mut tracker),
    };

    let x_hat = tracker.x;
    let feasibility_gap = p.gap(&x_hat);
    let status = match status {
        SolveStatus::Converged if feasibility_gap > config.feasibility_tol => {
            SolveStatus::PenaltyExhausted
        }
        s => s,
    };
    Ok(SolveResult {
        objective: p.true_objective(&x_hat),
        x_hat,
        objective_trace: tracker.trace.unwrap_or_default(),
        feasibility_gap,
        penalty: rho,
        iterations,
        status,
        initial_scale: beta0,
    })
}

//! Monte Carlo estimators for the complexity quantities (τ, ς², p_τ, 𝔠_M) and
//! deterministic sample-complexity / error-bound calculators.
//!
//! Exact infima and suprema over the cone `A_δ` are only available in closed
//! form for the Linear, Square and Relu models. Everything obtained from
//! sampled directions carries a [`ValueKind`] saying which side of the true
//! value it lies on, so no estimate silently overstates a guarantee.

use std::f64::consts::E;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, norm2, normalized, positive_part, CompensatedSum};
use crate::models::{sigma_star_closed_form, tau_from_correlation, ModelKind, SigmaStar};
use crate::rng::RngStream;
use crate::solver::Regularizer;

/// Samples per independent stream in the chunked estimators; fixed so that
/// results do not depend on the thread count.
const CHUNK: usize = 4096;

/// The set `A_δ` of directions `h` with
/// `√(1−δ²)‖h‖ + ⟨δx⋆/‖x⋆‖ − g, h⟩ ≥ 0` for every `g ∈ ∂Ω(x⋆)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AscentConeSpec {
    pub delta: f64,
    pub x_star: Vec<f64>,
    #[serde(default)]
    pub reg: Regularizer,
}

impl AscentConeSpec {
    pub fn new(delta: f64, x_star: Vec<f64>, reg: Regularizer) -> Result<Self> {
        let spec = Self { delta, x_star, reg };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Usage(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if norm2(&self.x_star) == 0.0 || !crate::linalg::all_finite(&self.x_star) {
            return Err(Error::Usage("x_star must be finite and nonzero".into()));
        }
        self.reg.validate()
    }

    pub fn dim(&self) -> usize {
        self.x_star.len()
    }

    pub fn direction(&self) -> Vec<f64> {
        crate::linalg::scaled(1.0 / norm2(&self.x_star), &self.x_star)
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.x_star[i] != 0.0).collect()
    }

    /// Left-hand side of the membership inequality at the worst-case
    /// subgradient (`λ·sgn(hᵢ)` off the support, `λ·sgn(x⋆ᵢ)` on it).
    pub fn margin(&self, h: &[f64]) -> Result<f64> {
        check_dim(self.dim(), h.len())?;
        let hn = norm2(h);
        if hn == 0.0 {
            return Err(Error::Usage("direction h must be nonzero".into()));
        }
        let xn = norm2(&self.x_star);
        let delta = self.delta;
        let mut v = (1.0 - delta * delta).max(0.0).sqrt() * hn + delta * dot(&self.x_star, h) / xn;
        let lambda = self.reg.lambda();
        if lambda > 0.0 {
            let worst: f64 = self
                .x_star
                .iter()
                .zip(h)
                .map(|(x, hi)| if *x != 0.0 { x.signum() * hi } else { hi.abs() })
                .sum();
            v -= lambda * worst;
        }
        Ok(v)
    }

    /// Smallest cosine `r(h)` with `x⋆` possible inside the cone. Exact
    /// without regularization; a lower bound for ℓ1.
    pub fn correlation_floor(&self) -> LabeledValue {
        let d = self.delta;
        let base = -(1.0 - d * d).max(0.0).sqrt() / d;
        match self.reg {
            Regularizer::None => LabeledValue::exact(base.max(-1.0)),
            Regularizer::L1 { lambda } => {
                let s = self.support().len() as f64;
                LabeledValue::lower((base - lambda * (2.0 * s.sqrt() - 1.0) / d).max(-1.0))
            }
        }
    }
}

/// Membership of `h` in `A_δ`, with a relative slack of 1e-12 for rounding.
pub fn cone_contains(spec: &AscentConeSpec, h: &[f64]) -> Result<bool> {
    let m = spec.margin(h)?;
    Ok(m >= -1e-12 * norm2(h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Exact,
    /// At most the true value (e.g. a certified lower bound on an infimum,
    /// or a sampled maximum standing in for a supremum).
    LowerBound,
    /// At least the true value (e.g. a sampled minimum standing in for an
    /// infimum).
    UpperBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledValue {
    pub value: f64,
    pub kind: ValueKind,
}

impl LabeledValue {
    pub fn exact(value: f64) -> Self {
        Self { value, kind: ValueKind::Exact }
    }
    pub fn lower(value: f64) -> Self {
        Self { value, kind: ValueKind::LowerBound }
    }
    pub fn upper(value: f64) -> Self {
        Self { value, kind: ValueKind::UpperBound }
    }
}

/// Monte Carlo mean with its standard error (`NaN` for a single sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        let ss = values.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().value();
        let stderr = if n > 1 {
            (ss / (n - 1) as f64 / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self { mean, stderr, n }
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn agrees_with(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

#[derive(Default, Clone, Copy)]
struct Moments {
    sum: f64,
    sum_sq: f64,
    n: usize,
}

impl Moments {
    fn estimate(parts: &[Moments]) -> Estimate {
        let n: usize = parts.iter().map(|p| p.n).sum();
        let sum = parts.iter().map(|p| p.sum).collect::<CompensatedSum>().value();
        let sum_sq = parts.iter().map(|p| p.sum_sq).collect::<CompensatedSum>().value();
        let mean = sum / n as f64;
        let stderr = if n > 1 {
            let var = ((sum_sq - n as f64 * mean * mean) / (n - 1) as f64).max(0.0);
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Estimate { mean, stderr, n }
    }
}

/// Runs `draw` `samples` times in fixed-size chunks, each chunk on its own
/// stream, and returns per-statistic estimates. Parallel but
/// schedule-independent.
fn chunked<const K: usize, F>(samples: usize, stream: RngStream, draw: F) -> [Estimate; K]
where
    F: Fn(&mut ChaCha8Rng, &mut Vec<f64>, &mut Vec<f64>) -> [f64; K] + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<[Moments; K]> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).generator();
            let count = CHUNK.min(samples - c * CHUNK);
            let mut acc = [Moments::default(); K];
            let (mut a, mut g) = (Vec::new(), Vec::new());
            let mut sums: [CompensatedSum; K] = std::array::from_fn(|_| CompensatedSum::new());
            let mut sq: [CompensatedSum; K] = std::array::from_fn(|_| CompensatedSum::new());
            for _ in 0..count {
                let v = draw(&mut rng, &mut a, &mut g);
                for k in 0..K {
                    sums[k].add(v[k]);
                    sq[k].add(v[k] * v[k]);
                }
            }
            for k in 0..K {
                acc[k] = Moments {
                    sum: sums[k].value(),
                    sum_sq: sq[k].value(),
                    n: count,
                };
            }
            acc
        })
        .collect();
    std::array::from_fn(|k| Moments::estimate(&parts.iter().map(|p| p[k]).collect::<Vec<_>>()))
}

/// Draws `a ~ Normal(0, I)` into `a` and writes `∇f(x⋆)` into `g`.
fn draw_gradient(kind: &ModelKind, x_star: &[f64], rng: &mut ChaCha8Rng, a: &mut Vec<f64>, g: &mut Vec<f64>) {
    let d = kind.data_dim(x_star.len()).expect("validated dimension");
    a.clear();
    a.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    g.clear();
    g.resize(x_star.len(), 0.0);
    kind.add_gradient(a, x_star, 1.0, g);
}

fn check_model(kind: &ModelKind, x_star: &[f64]) -> Result<()> {
    kind.validate()?;
    kind.data_dim(x_star.len())?;
    if !crate::linalg::all_finite(x_star) {
        return Err(Error::Usage("x_star must be finite".into()));
    }
    Ok(())
}

fn nonzero_direction(x_star: &[f64], h: &[f64]) -> Result<f64> {
    check_dim(x_star.len(), h.len())?;
    let hn = norm2(h);
    if hn == 0.0 {
        return Err(Error::Usage("direction h must be nonzero".into()));
    }
    Ok(hn)
}

/// `𝔠_M(ℝᴺ) = E‖(1/√M) Σ ε_m ∇f_m(x⋆)‖₂` over fresh data and Rademacher
/// signs, one stream per trial.
pub fn rademacher_full_space(
    kind: &ModelKind,
    x_star: &[f64],
    m: usize,
    trials: usize,
    stream: RngStream,
) -> Result<Estimate> {
    check_model(kind, x_star)?;
    if m == 0 || trials == 0 {
        return Err(Error::Usage("M and trials must be positive".into()));
    }
    let n = x_star.len();
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream.child(t as u64).generator();
            let (mut a, mut g) = (Vec::new(), Vec::new());
            let mut s = vec![0.0; n];
            for _ in 0..m {
                draw_gradient(kind, x_star, &mut rng, &mut a, &mut g);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                crate::linalg::axpy(sign, &g, &mut s);
            }
            norm2(&s) / (m as f64).sqrt()
        })
        .collect();
    Ok(Estimate::from_values(&values))
}

/// `τ(h) = E(⟨∇f(x⋆), h⟩)₊ / ‖h‖₂` by plain Monte Carlo.
pub fn tau_estimate(
    kind: &ModelKind,
    x_star: &[f64],
    h: &[f64],
    samples: usize,
    stream: RngStream,
) -> Result<Estimate> {
    check_model(kind, x_star)?;
    let hn = nonzero_direction(x_star, h)?;
    if samples == 0 {
        return Err(Error::Usage("samples must be positive".into()));
    }
    let [est] = chunked(samples, stream, |rng, a, g| {
        draw_gradient(kind, x_star, rng, a, g);
        [positive_part(dot(g, h)) / hn]
    });
    Ok(est)
}

/// `P(⟨∇f(x⋆), h⟩ ≥ τ‖h‖₂)` by Monte Carlo.
pub fn tail_probability(
    kind: &ModelKind,
    x_star: &[f64],
    h: &[f64],
    tau: f64,
    samples: usize,
    stream: RngStream,
) -> Result<Estimate> {
    check_model(kind, x_star)?;
    let hn = nonzero_direction(x_star, h)?;
    if samples == 0 {
        return Err(Error::Usage("samples must be positive".into()));
    }
    let [est] = chunked(samples, stream, |rng, a, g| {
        draw_gradient(kind, x_star, rng, a, g);
        [if dot(g, h) >= tau * hn { 1.0 } else { 0.0 }]
    });
    Ok(est)
}

/// Directions in `A_δ` spread over the admissible correlation range:
/// `h = r·u + √(1−r²)·w` with `u = x⋆/‖x⋆‖`, `w ⟂ u` Gaussian, and `r` on a
/// grid from the correlation floor to 1. Non-members are pulled toward `u`
/// (for ℓ1, the off-support part is shrunk first) until they are accepted.
pub fn sample_cone_directions(spec: &AscentConeSpec, count: usize, stream: RngStream) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let n = spec.dim();
    let u = spec.direction();
    let support = spec.support();
    let on_support: Vec<bool> = spec.x_star.iter().map(|x| *x != 0.0).collect();
    let sparse = spec.reg.lambda() > 0.0;
    let r_lo = spec.correlation_floor().value;
    let mut rng = stream.generator();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let r = if count == 1 {
            r_lo
        } else {
            r_lo + (1.0 - r_lo) * i as f64 / (count - 1) as f64
        };
        let mut w: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if sparse {
            // keep the support plus an equally sized random set off it
            let extra = support.len().max(1);
            let mut keep = on_support.clone();
            for _ in 0..extra {
                keep[rng.random_range(0..n)] = true;
            }
            w.iter_mut().zip(&keep).for_each(|(v, k)| {
                if !k {
                    *v = 0.0
                }
            });
        }
        let proj = dot(&w, &u);
        crate::linalg::axpy(-proj, &u, &mut w);
        let Some(w) = normalized(&w) else {
            out.push(u.clone());
            continue;
        };
        let mut accepted = None;
        let mut rr = r;
        let mut off_scale = 1.0;
        for _ in 0..60 {
            let perp = (1.0 - rr * rr).max(0.0).sqrt();
            let h: Vec<f64> = (0..n)
                .map(|j| {
                    let s = if on_support[j] || !sparse { 1.0 } else { off_scale };
                    rr * u[j] + perp * s * w[j]
                })
                .collect();
            if norm2(&h) > 0.0 && cone_contains(spec, &h)? {
                accepted = Some(h);
                break;
            }
            if sparse && off_scale > 1e-3 {
                off_scale *= 0.5;
            } else {
                rr += 0.1 * (1.0 - rr);
            }
        }
        out.push(accepted.unwrap_or_else(|| u.clone()));
    }
    Ok(out)
}

/// `τ(A_δ) = inf_{h ∈ A_δ} τ(h)`. Closed-form models use the monotonicity of
/// `τ` in the correlation `r`; others report the minimum of Monte Carlo
/// estimates over sampled cone directions (an upper bound on the infimum).
pub fn tau_cone_lower(
    kind: &ModelKind,
    spec: &AscentConeSpec,
    probes: usize,
    samples: usize,
    stream: RngStream,
) -> Result<LabeledValue> {
    spec.validate()?;
    check_model(kind, &spec.x_star)?;
    if probes == 0 {
        return Err(Error::Usage("probes must be positive".into()));
    }
    let floor = spec.correlation_floor();
    match tau_from_correlation(kind, norm2(&spec.x_star), floor.value) {
        Ok(v) => Ok(LabeledValue {
            value: v,
            kind: if matches!(kind, ModelKind::Linear) { ValueKind::Exact } else { floor.kind },
        }),
        Err(Error::NoClosedForm(_)) => {
            let dirs = sample_cone_directions(spec, probes, stream.child(0))?;
            let mut best = f64::INFINITY;
            for (i, h) in dirs.iter().enumerate() {
                let est = tau_estimate(kind, &spec.x_star, h, samples, stream.child(1 + i as u64))?;
                best = best.min(est.mean);
            }
            Ok(LabeledValue::upper(best))
        }
        Err(e) => Err(e),
    }
}

/// `ς²(A_δ) = sup_{h ∈ A_δ} hᵀΣ⋆h/‖h‖²`, capped by `‖Σ⋆‖`. Exact when a top
/// eigenvector of Σ⋆ lies in the cone (or Σ⋆ is isotropic); otherwise the
/// best sampled Rayleigh quotient, a lower bound on the supremum.
pub fn sigma_cone_norm(
    spec: &AscentConeSpec,
    sigma: &SigmaStar,
    probes: usize,
    stream: RngStream,
) -> Result<LabeledValue> {
    spec.validate()?;
    check_dim(spec.dim(), sigma.dim())?;
    if probes == 0 {
        return Err(Error::Usage("probes must be positive".into()));
    }
    let norm = sigma.op_norm();
    let top: Option<Vec<f64>> = match sigma {
        SigmaStar::IdentityPlusRankOne { spike, direction, .. } => {
            if *spike == 0.0 {
                // isotropic: every direction attains the norm
                return Ok(LabeledValue::exact(norm));
            }
            (*spike > 0.0).then(|| direction.clone())
        }
        SigmaStar::Empirical { n, .. } => {
            let start = vec![1.0 / (*n as f64).sqrt(); *n];
            match crate::eigen::top_eigenpair(|v| sigma.apply(v), &start, 5000, 1e-12) {
                Ok(e) => Some(e.vector),
                Err(Error::NonConvergence { best, .. }) => Some(best),
                Err(e) => return Err(e),
            }
        }
    };
    let mut best = f64::NEG_INFINITY;
    if let Some(v) = top {
        for s in [1.0, -1.0] {
            let h = crate::linalg::scaled(s, &v);
            if norm2(&h) > 0.0 && cone_contains(spec, &h)? {
                let q = sigma.quad_form(&h) / dot(&h, &h);
                if q >= norm * (1.0 - 1e-12) {
                    return Ok(LabeledValue::exact(norm));
                }
                best = best.max(q);
            }
        }
    }
    let mut candidates = sample_cone_directions(spec, probes, stream)?;
    candidates.push(spec.direction());
    for h in &candidates {
        if cone_contains(spec, h)? {
            best = best.max(sigma.quad_form(h) / dot(h, h));
        }
    }
    Ok(LabeledValue::lower(best.min(norm)))
}

fn sigma_star_for(kind: &ModelKind, x_star: &[f64], samples: usize, stream: RngStream) -> Result<SigmaStar> {
    match sigma_star_closed_form(kind, x_star) {
        Err(Error::NoClosedForm(_)) => {
            crate::models::sigma_star_monte_carlo(kind, x_star, samples.max(1), &mut stream.generator())
        }
        other => other,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PTauReport {
    pub tau: f64,
    /// Minimum over sampled cone directions of the tail probability: an
    /// upper bound on `p_τ(A_δ)`.
    pub sampled_min: LabeledValue,
    pub tau_cone: LabeledValue,
    pub sigma2_cone: LabeledValue,
    /// `τ²(A_δ)/(4ς²)`, a lower bound on `p_{τ(A_δ)/2}` by Paley–Zygmund.
    /// `None` when the certified `τ(A_δ)` is not positive.
    pub paley_zygmund_floor: Option<f64>,
}

/// `p_τ(A_δ) = inf_{h ∈ A_δ} P(⟨∇f(x⋆), h⟩ ≥ τ‖h‖)` by sampled directions,
/// together with the Paley–Zygmund floor.
pub fn p_tau_estimate(
    kind: &ModelKind,
    spec: &AscentConeSpec,
    tau: f64,
    probes: usize,
    samples: usize,
    stream: RngStream,
) -> Result<PTauReport> {
    spec.validate()?;
    check_model(kind, &spec.x_star)?;
    if !(tau > 0.0) {
        return Err(Error::Usage(format!("tau must be positive, got {tau}")));
    }
    if probes == 0 {
        return Err(Error::Usage("probes must be positive".into()));
    }
    let dirs = sample_cone_directions(spec, probes, stream.child(0))?;
    let mut min_p = f64::INFINITY;
    for (i, h) in dirs.iter().enumerate() {
        let est = tail_probability(kind, &spec.x_star, h, tau, samples, stream.child(10 + i as u64))?;
        min_p = min_p.min(est.mean);
    }
    let tau_cone = tau_cone_lower(kind, spec, probes, samples, stream.child(1))?;
    let sigma = sigma_star_for(kind, &spec.x_star, samples, stream.child(2))?;
    let sigma2_cone = sigma_cone_norm(spec, &sigma, probes, stream.child(3))?;
    // the floor needs an upper bound on ς²; fall back to ‖Σ⋆‖ unless exact
    let sigma2_upper = if sigma2_cone.kind == ValueKind::Exact {
        sigma2_cone.value
    } else {
        sigma.op_norm()
    };
    let certified_tau = tau_cone.kind != ValueKind::UpperBound && tau_cone.value > 0.0;
    let paley_zygmund_floor =
        certified_tau.then(|| tau_cone.value * tau_cone.value / (4.0 * sigma2_upper));
    Ok(PTauReport {
        tau,
        sampled_min: LabeledValue::upper(min_p),
        tau_cone,
        sigma2_cone,
        paley_zygmund_floor,
    })
}

/// Inputs echoed alongside a bound evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_trace: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_head_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_tail_inf_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m_required: f64,
    /// Multiplies `mean|ξ| + ε` in the error bound.
    pub error_coefficient: f64,
    pub inputs: BoundInputs,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{name} must be nonnegative, got {v}")))
    }
}

/// `M ≥ 4((2𝔠_M + tτ)/(τ p_τ))²`, error coefficient `2/(τ p_τ)`.
pub fn bound_thm1(c_m: f64, tau: f64, p_tau: f64, t: f64) -> Result<BoundReport> {
    positive("c_M", c_m)?;
    positive("tau", tau)?;
    positive("p_tau", p_tau)?;
    if p_tau > 1.0 {
        return Err(Error::Usage(format!("p_tau must be at most 1, got {p_tau}")));
    }
    nonnegative("t", t)?;
    let q = (2.0 * c_m + t * tau) / (tau * p_tau);
    Ok(BoundReport {
        m_required: 4.0 * q * q,
        error_coefficient: 2.0 / (tau * p_tau),
        inputs: BoundInputs {
            tau: Some(tau),
            c_m: Some(c_m),
            p_tau: Some(p_tau),
            t,
            ..Default::default()
        },
    })
}

/// `M ≥ 64ς⁴/τ⁴ (4𝔠_M/τ + t)²`, error coefficient `16ς²/τ³`.
pub fn bound_cor2(c_m: f64, tau_cone: f64, sigma2: f64, t: f64) -> Result<BoundReport> {
    positive("c_M", c_m)?;
    positive("tau", tau_cone)?;
    positive("sigma2", sigma2)?;
    nonnegative("t", t)?;
    Ok(BoundReport {
        m_required: cor2_m(4.0 * c_m, tau_cone, sigma2, t),
        error_coefficient: 16.0 * sigma2 / tau_cone.powi(3),
        inputs: BoundInputs {
            tau: Some(tau_cone),
            sigma2: Some(sigma2),
            c_m: Some(c_m),
            t,
            ..Default::default()
        },
    })
}

/// `64ς⁴/τ⁴ (width/τ + t)²`, shared by the corollaries.
fn cor2_m(width: f64, tau: f64, sigma2: f64, t: f64) -> f64 {
    let q = width / tau + t;
    64.0 * sigma2 * sigma2 / tau.powi(4) * q * q
}

/// [`bound_cor2`] with `ς² ≤ ‖Σ⋆‖` and `𝔠_M ≤ √tr(Σ⋆)`.
pub fn bound_cor3(sigma_norm: f64, sigma_trace: f64, tau_cone: f64, t: f64) -> Result<BoundReport> {
    positive("sigma_norm", sigma_norm)?;
    positive("sigma_trace", sigma_trace)?;
    positive("tau", tau_cone)?;
    nonnegative("t", t)?;
    Ok(BoundReport {
        m_required: cor2_m(4.0 * sigma_trace.sqrt(), tau_cone, sigma_norm, t),
        error_coefficient: 16.0 * sigma_norm / tau_cone.powi(3),
        inputs: BoundInputs {
            tau: Some(tau_cone),
            sigma_norm: Some(sigma_norm),
            sigma_trace: Some(sigma_trace),
            t,
            ..Default::default()
        },
    })
}

/// `C⋆_{δ,λ} = √(2e)(√(1−δ²)/λ + ‖δx⋆/‖x⋆‖ − λ·sgn(x⋆)‖₂/λ)`.
pub fn c_star(delta: f64, lambda: f64, x_star: &[f64]) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Usage(format!("delta must lie in (0, 1], got {delta}")));
    }
    positive("lambda", lambda)?;
    let xn = norm2(x_star);
    if xn == 0.0 {
        return Err(Error::Usage("x_star must be nonzero".into()));
    }
    let gap: f64 = x_star
        .iter()
        .map(|x| {
            let sgn = if *x == 0.0 { 0.0 } else { x.signum() };
            (delta * x / xn - lambda * sgn).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok((2.0 * E).sqrt() * ((1.0 - delta * delta).max(0.0).sqrt() / lambda + gap / lambda))
}

/// Sparse ℓ1 bound:
/// `M ≥ 64ς⁴/τ⁴ ((4√head + 4C⋆√(log N · tail))/τ + t)²`, error coefficient
/// `16ς²/τ³`. Requires `N − s ≥ 3`.
#[allow(clippy::too_many_arguments)]
pub fn bound_cor4(
    grad_head_sq: f64,
    grad_tail_inf_sq: f64,
    c_star: f64,
    tau_cone: f64,
    sigma2: f64,
    n: usize,
    s: usize,
    t: f64,
) -> Result<BoundReport> {
    positive("grad_head_sq", grad_head_sq)?;
    nonnegative("grad_tail_inf_sq", grad_tail_inf_sq)?;
    nonnegative("c_star", c_star)?;
    positive("tau", tau_cone)?;
    positive("sigma2", sigma2)?;
    nonnegative("t", t)?;
    if s == 0 || n < s + 3 {
        return Err(Error::Usage(format!("need s >= 1 and N - s >= 3, got N = {n}, s = {s}")));
    }
    let width = 4.0 * grad_head_sq.sqrt() + 4.0 * c_star * ((n as f64).ln() * grad_tail_inf_sq).sqrt();
    Ok(BoundReport {
        m_required: cor2_m(width, tau_cone, sigma2, t),
        error_coefficient: 16.0 * sigma2 / tau_cone.powi(3),
        inputs: BoundInputs {
            tau: Some(tau_cone),
            sigma2: Some(sigma2),
            grad_head_sq: Some(grad_head_sq),
            grad_tail_inf_sq: Some(grad_tail_inf_sq),
            c_star: Some(c_star),
            s: Some(s),
            n: Some(n),
            t,
            ..Default::default()
        },
    })
}

/// `(E‖∇f(x⋆)|_S‖₂², E‖∇f(x⋆)|_{Sᶜ}‖∞²)` by Monte Carlo.
pub fn grad_moment_estimates(
    kind: &ModelKind,
    x_star: &[f64],
    support: &[usize],
    samples: usize,
    stream: RngStream,
) -> Result<(Estimate, Estimate)> {
    check_model(kind, x_star)?;
    let n = x_star.len();
    if support.is_empty() {
        return Err(Error::Usage("support must be nonempty".into()));
    }
    if samples < 1000 {
        return Err(Error::Usage(format!("need at least 1000 samples, got {samples}")));
    }
    let mut in_s = vec![false; n];
    for &i in support {
        if i >= n {
            return Err(Error::Usage(format!("support index {i} out of range for N = {n}")));
        }
        in_s[i] = true;
    }
    let [head, tail] = chunked(samples, stream, |rng, a, g| {
        draw_gradient(kind, x_star, rng, a, g);
        let mut head = 0.0;
        let mut tail: f64 = 0.0;
        for (gi, s) in g.iter().zip(&in_s) {
            if *s {
                head += gi * gi;
            } else {
                tail = tail.max(gi * gi);
            }
        }
        [head, tail]
    });
    Ok((head, tail))
}

//! Anchor vectors built from data: the normalized negative gradient of the
//! squared-loss risk at the origin, the leading eigenvector of its negative
//! Hessian, and a diagonal-thresholding variant for sparse targets.

use serde::{Deserialize, Serialize};

use crate::eigen::{frobenius_estimate, shifted_power_iteration, Eigenpair};
use crate::error::{check_dim, Error, Result};
use crate::instance::ProblemInstance;
use crate::linalg::{dot, fix_sign, norm2, normalized, scaled};
use crate::models::{loss_hessian_vp_at_zero, ModelKind};
use crate::rng::{unit_vector, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMethod {
    Gradient,
    Hessian,
    Oracle,
    SparseThreshold,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnchorDiagnostics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResult {
    pub a0: Vec<f64>,
    pub method: AnchorMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_hat: Option<f64>,
    #[serde(default)]
    pub diagnostics: AnchorDiagnostics,
}

impl AnchorResult {
    fn new(a0: Vec<f64>, method: AnchorMethod, instance: &ProblemInstance) -> Self {
        let delta_hat = instance
            .x_star
            .as_deref()
            .and_then(|x| anchor_quality(&a0, x).ok());
        Self {
            a0,
            method,
            delta_hat,
            diagnostics: AnchorDiagnostics::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationSettings {
    pub max_iters: usize,
    pub tol: f64,
    /// Probes for the Frobenius-norm estimate that sets the shift.
    pub shift_probes: usize,
}

impl Default for PowerIterationSettings {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            shift_probes: 20,
        }
    }
}

/// `a₀ = −∇R_M(0) / ‖∇R_M(0)‖` with `∇R_M(0) = (1/M) Σ (f_m(0) − y_m) ∇f_m(0)`.
pub fn anchor_from_gradient(instance: &ProblemInstance) -> Result<AnchorResult> {
    instance.validate()?;
    let link = instance.model.link();
    if link.d1(0.0) == 0.0 {
        return Err(Error::Unsupported {
            model: instance.model.name().into(),
            op: "spiked-gradient anchor (the gradient at the origin vanishes; use the hessian anchor)",
        });
    }
    let zero = vec![0.0; instance.n];
    let mut neg_grad = vec![0.0; instance.n];
    let inv_m = 1.0 / instance.m as f64;
    for (a, y) in instance.rows().zip(&instance.y) {
        let f0 = instance.model.eval(a, &zero);
        instance
            .model
            .add_gradient(a, &zero, inv_m * (y - f0), &mut neg_grad);
    }
    let a0 = normalized(&neg_grad)
        .ok_or_else(|| Error::Degenerate("empirical gradient at the origin is zero".into()))?;
    Ok(AnchorResult::new(a0, AnchorMethod::Gradient, instance))
}

/// Start vector: normalized all-ones, or `e₁` when all-ones is already an
/// eigenvector of the operator.
fn start_vector<F: Fn(&[f64]) -> Vec<f64>>(op: &F, n: usize) -> Vec<f64> {
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let av = op(&ones);
    let lambda = dot(&ones, &av);
    let res = av
        .iter()
        .zip(&ones)
        .map(|(a, v)| (a - lambda * v).powi(2))
        .sum::<f64>()
        .sqrt();
    if res <= 1e-12 * (1.0 + lambda.abs()) && n > 1 {
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        e1
    } else {
        ones
    }
}

fn leading_eigenvector<F: Fn(&[f64]) -> Vec<f64>>(
    op: F,
    n: usize,
    settings: PowerIterationSettings,
    seed_tag: u64,
) -> Result<Eigenpair> {
    let mut rng = RngStream::new(0x5eed_5417, seed_tag).generator();
    let frob = frobenius_estimate(&op, n, settings.shift_probes, &mut rng)?;
    if frob == 0.0 || !frob.is_finite() {
        return Err(Error::Degenerate("the Hessian operator at the origin is zero".into()));
    }
    // ‖A‖_F ≥ ‖A‖; the 1.5 margin covers the probe error of the estimate.
    let shift = 1.5 * frob;
    let start = start_vector(&op, n);
    let mut e = shifted_power_iteration(&op, shift, &start, settings.max_iters, settings.tol)?;
    fix_sign(&mut e.vector);
    Ok(e)
}

/// Leading eigenvector of `−∇²R_M(0)` by shifted power iteration.
pub fn anchor_from_hessian(
    instance: &ProblemInstance,
    settings: PowerIterationSettings,
) -> Result<AnchorResult> {
    instance.validate()?;
    // surface unsupported models before any work
    loss_hessian_vp_at_zero(instance, &vec![0.0; instance.n])?;
    let op = |v: &[f64]| {
        let mut hv = loss_hessian_vp_at_zero(instance, v).expect("checked above");
        hv.iter_mut().for_each(|x| *x = -*x);
        hv
    };
    let e = leading_eigenvector(op, instance.n, settings, instance.n as u64)?;
    let mut out = AnchorResult::new(e.vector, AnchorMethod::Hessian, instance);
    out.diagnostics = AnchorDiagnostics {
        eigenvalue: Some(e.value),
        residual: Some(e.residual),
        iterations: Some(e.iterations),
        support: None,
    };
    Ok(out)
}

/// Diagonal of `−∇²R_M(0)` for the square link: `(2/M) Σ y_m a_{m,i}²`.
pub fn neg_hessian_diagonal(instance: &ProblemInstance) -> Result<Vec<f64>> {
    if instance.model != ModelKind::Square {
        return Err(Error::Unsupported {
            model: instance.model.name().into(),
            op: "diagonal thresholding",
        });
    }
    let mut diag = vec![0.0; instance.n];
    let scale = 2.0 / instance.m as f64;
    for (a, y) in instance.rows().zip(&instance.y) {
        for (d, ai) in diag.iter_mut().zip(a) {
            *d += scale * y * ai * ai;
        }
    }
    Ok(diag)
}

/// Diagonal thresholding: keep the `k` largest diagonal entries of
/// `−∇²R_M(0)`, then take the leading eigenvector of that principal submatrix.
pub fn anchor_sparse_threshold(
    instance: &ProblemInstance,
    k: usize,
    settings: PowerIterationSettings,
) -> Result<AnchorResult> {
    instance.validate()?;
    if k == 0 || k > instance.n {
        return Err(Error::Usage(format!(
            "support size k must lie in [1, {}], got {k}",
            instance.n
        )));
    }
    let diag = neg_hessian_diagonal(instance)?;
    if diag.iter().all(|d| *d == 0.0) {
        return Err(Error::Degenerate("the Hessian diagonal is zero".into()));
    }
    let mut order: Vec<usize> = (0..instance.n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]).then(i.cmp(&j)));
    let mut support: Vec<usize> = order[..k].to_vec();
    support.sort_unstable();

    let n = instance.n;
    let op = |vs: &[f64]| {
        let mut full = vec![0.0; n];
        for (&i, v) in support.iter().zip(vs) {
            full[i] = *v;
        }
        let hv = loss_hessian_vp_at_zero(instance, &full).expect("square model");
        support.iter().map(|&i| -hv[i]).collect::<Vec<f64>>()
    };
    let e = leading_eigenvector(op, k, settings, n as u64)?;
    let mut a0 = vec![0.0; n];
    for (&i, v) in support.iter().zip(&e.vector) {
        a0[i] = *v;
    }
    let a0 = normalized(&a0).expect("unit eigenvector");
    let mut out = AnchorResult::new(a0, AnchorMethod::SparseThreshold, instance);
    out.diagnostics = AnchorDiagnostics {
        eigenvalue: Some(e.value),
        residual: Some(e.residual),
        iterations: Some(e.iterations),
        support: Some(support),
    };
    Ok(out)
}

/// `normalize(x⋆/‖x⋆‖ + ζ·u)` with `u` a uniformly random unit vector, so the
/// correlation with `x⋆` is about `1/√(1+ζ²)`.
pub fn oracle_anchor(x_star: &[f64], zeta: f64, stream: RngStream) -> Result<AnchorResult> {
    let dir = normalized(x_star)
        .ok_or_else(|| Error::Degenerate("oracle anchor needs x_star != 0".into()))?;
    let mut rng = stream.generator();
    let u = unit_vector(&mut rng, x_star.len())?;
    let raw: Vec<f64> = dir.iter().zip(&u).map(|(d, e)| d + zeta * e).collect();
    let a0 = normalized(&raw)
        .ok_or_else(|| Error::Degenerate("perturbed oracle anchor vanished".into()))?;
    let delta_hat = anchor_quality(&a0, x_star).ok();
    Ok(AnchorResult {
        a0,
        method: AnchorMethod::Oracle,
        delta_hat,
        diagnostics: AnchorDiagnostics::default(),
    })
}

/// δ̂ = ⟨a₀, x⋆⟩ / ‖x⋆‖₂.
pub fn anchor_quality(a0: &[f64], x_star: &[f64]) -> Result<f64> {
    check_dim(x_star.len(), a0.len())?;
    let xn = norm2(x_star);
    if xn == 0.0 {
        return Err(Error::Degenerate("anchor quality is undefined for x_star = 0".into()));
    }
    Ok(dot(a0, x_star) / xn)
}

/// `2‖∇²R_M(0) − ∇²R(0)‖ / γ⋆`, the bound on `‖a₀a₀ᵀ − x⋆x⋆ᵀ/‖x⋆‖²‖`.
pub fn davis_kahan_quality_bound(hessian_deviation: f64, gamma_star: f64) -> Result<f64> {
    if !(gamma_star > 0.0) {
        return Err(Error::Usage(format!(
            "spectral gap must be positive, got {gamma_star}"
        )));
    }
    if !(hessian_deviation >= 0.0) {
        return Err(Error::Usage(format!(
            "operator-norm deviation must be nonnegative, got {hessian_deviation}"
        )));
    }
    Ok(2.0 * hessian_deviation / gamma_star)
}

/// `‖a₀a₀ᵀ − uuᵀ‖₂` for unit `a₀` and `u = x⋆/‖x⋆‖`; equals `√(1 − ⟨a₀,u⟩²)`.
pub fn projector_deviation(a0: &[f64], x_star: &[f64]) -> Result<f64> {
    let c = anchor_quality(a0, x_star)? / norm2(a0);
    Ok((1.0 - c * c).max(0.0).sqrt())
}

/// Rayleigh quotient `vᵀ(−∇²R_M(0))v / ‖v‖²`.
pub fn neg_hessian_rayleigh(instance: &ProblemInstance, v: &[f64]) -> Result<f64> {
    let hv = loss_hessian_vp_at_zero(instance, v)?;
    Ok(-dot(v, &hv) / dot(v, v))
}

/// Population `−∇²R(0) = 4x⋆x⋆ᵀ + 2‖x⋆‖²I` for the square link applied to `v`.
pub fn square_population_neg_hessian(x_star: &[f64], v: &[f64]) -> Vec<f64> {
    let xx = dot(x_star, x_star);
    let mut out = scaled(2.0 * xx, v);
    crate::linalg::axpy(4.0 * dot(x_star, v), x_star, &mut out);
    out
}

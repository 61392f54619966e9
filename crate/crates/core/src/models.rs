//! Observation-function families `f(x) = φ(aᵀx)` and the one-hidden-layer
//! sum `f(x) = Σ_k w_k φ(aᵀx_k)`, with value/gradient oracles, instance
//! sampling and the Gaussian closed forms for Σ⋆ and τ(h).

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::instance::{NoiseSpec, ProblemInstance, SeedInfo};
use crate::linalg::{dot, norm2, positive_part};
use crate::rng::{gaussian_vector, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftplusBase {
    /// `log₂(1 + e^u)`
    #[default]
    Two,
    /// `ln(1 + e^u)`
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Softplus,
}

/// Scalar link φ with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Linear,
    Square,
    /// Uses φ'(t) = 1(t ≥ 0); φ'' is undefined at the kink.
    Relu,
    Softplus(SoftplusBase),
}

impl Link {
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Link::Linear => z,
            Link::Square => z * z,
            Link::Relu => positive_part(z),
            Link::Softplus(base) => {
                let v = positive_part(z) + (-z.abs()).exp().ln_1p();
                match base {
                    SoftplusBase::Two => v / LN_2,
                    SoftplusBase::E => v,
                }
            }
        }
    }

    #[inline]
    pub fn d1(self, z: f64) -> f64 {
        match self {
            Link::Linear => 1.0,
            Link::Square => 2.0 * z,
            Link::Relu => {
                if z >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Link::Softplus(base) => {
                let s = logistic(z);
                match base {
                    SoftplusBase::Two => s / LN_2,
                    SoftplusBase::E => s,
                }
            }
        }
    }

    /// Second derivative, `None` where it does not exist.
    pub fn d2(self, z: f64) -> Option<f64> {
        match self {
            Link::Linear => Some(0.0),
            Link::Square => Some(2.0),
            Link::Relu => None,
            Link::Softplus(base) => {
                let s = logistic(z);
                let v = s * (1.0 - s);
                Some(match base {
                    SoftplusBase::Two => v / LN_2,
                    SoftplusBase::E => v,
                })
            }
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Observation family. Serialized as a tagged JSON object, e.g.
/// `{"kind":"square"}` or
/// `{"kind":"one_hidden_layer","weights":[1.0,0.5],"activation":"relu"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Square,
    Relu,
    Softplus {
        #[serde(default)]
        base: SoftplusBase,
    },
    OneHiddenLayer {
        weights: Vec<f64>,
        activation: Activation,
    },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Square => "square",
            ModelKind::Relu => "relu",
            ModelKind::Softplus { .. } => "softplus",
            ModelKind::OneHiddenLayer { .. } => "one_hidden_layer",
        }
    }

    pub fn softplus() -> Self {
        ModelKind::Softplus {
            base: SoftplusBase::Two,
        }
    }

    pub fn link(&self) -> Link {
        match self {
            ModelKind::Linear => Link::Linear,
            ModelKind::Square => Link::Square,
            ModelKind::Relu => Link::Relu,
            ModelKind::Softplus { base } => Link::Softplus(*base),
            ModelKind::OneHiddenLayer { activation, .. } => match activation {
                Activation::Relu => Link::Relu,
                Activation::Softplus => Link::Softplus(SoftplusBase::Two),
            },
        }
    }

    pub fn blocks(&self) -> usize {
        match self {
            ModelKind::OneHiddenLayer { weights, .. } => weights.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ModelKind::OneHiddenLayer { weights, .. } = self {
            if weights.is_empty() {
                return Err(Error::Usage("one_hidden_layer needs at least one block".into()));
            }
            if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                return Err(Error::Usage(
                    "one_hidden_layer weights must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Length of a data vector `a` for a parameter vector of length `n`.
    pub fn data_dim(&self, n: usize) -> Result<usize> {
        let k = self.blocks();
        if k == 0 || n % k != 0 {
            return Err(Error::Usage(format!(
                "parameter length {n} is not a multiple of the block count {k}"
            )));
        }
        Ok(n / k)
    }

    fn check_shapes(&self, a: &[f64], x: &[f64]) -> Result<()> {
        self.validate()?;
        check_dim(self.data_dim(x.len())?, a.len())
    }

    /// `f(x)` without shape checks.
    #[inline]
    pub(crate) fn eval(&self, a: &[f64], x: &[f64]) -> f64 {
        let link = self.link();
        match self {
            ModelKind::OneHiddenLayer { weights, .. } => {
                let d = a.len();
                weights
                    .iter()
                    .zip(x.chunks_exact(d))
                    .map(|(w, xk)| w * link.value(dot(a, xk)))
                    .sum()
            }
            _ => link.value(dot(a, x)),
        }
    }

    /// `out += coeff * ∇f(x)` without shape checks.
    #[inline]
    pub(crate) fn add_gradient(&self, a: &[f64], x: &[f64], coeff: f64, out: &mut [f64]) {
        let link = self.link();
        match self {
            ModelKind::OneHiddenLayer { weights, .. } => {
                let d = a.len();
                for ((w, xk), ok) in weights
                    .iter()
                    .zip(x.chunks_exact(d))
                    .zip(out.chunks_exact_mut(d))
                {
                    let s = coeff * w * link.d1(dot(a, xk));
                    crate::linalg::axpy(s, a, ok);
                }
            }
            _ => {
                let s = coeff * link.d1(dot(a, x));
                crate::linalg::axpy(s, a, out);
            }
        }
    }
}

pub fn f_value(kind: &ModelKind, a: &[f64], x: &[f64]) -> Result<f64> {
    kind.check_shapes(a, x)?;
    Ok(kind.eval(a, x))
}

pub fn f_gradient(kind: &ModelKind, a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    kind.check_shapes(a, x)?;
    let mut g = vec![0.0; x.len()];
    kind.add_gradient(a, x, 1.0, &mut g);
    Ok(g)
}

/// `∇²R_M(0)·v` for the squared loss `R_M(x) = (1/2M) Σ (f_m(x) − y_m)²`,
/// computed matrix-free.
pub fn loss_hessian_vp_at_zero(instance: &ProblemInstance, v: &[f64]) -> Result<Vec<f64>> {
    check_dim(instance.n, v.len())?;
    let link = instance.model.link();
    let d2 = link.d2(0.0).ok_or_else(|| Error::Unsupported {
        model: instance.model.name().into(),
        op: "second derivative at the origin",
    })?;
    let d1 = link.d1(0.0);
    let phi0 = link.value(0.0);
    let inv_m = 1.0 / instance.m as f64;
    let mut out = vec![0.0; instance.n];
    match &instance.model {
        ModelKind::OneHiddenLayer { weights, .. } => {
            // ∇f_m(0) stacks w_k φ'(0) a_m; ∇²f_m(0) is block-diagonal w_k φ''(0) a_m a_mᵀ.
            let d = instance.data_dim();
            let wsum: f64 = weights.iter().sum();
            for (a, y) in instance.rows().zip(&instance.y) {
                let f0 = wsum * phi0;
                let av: Vec<f64> = v.chunks_exact(d).map(|vk| dot(a, vk)).collect();
                let gv: f64 = weights.iter().zip(&av).map(|(w, p)| w * d1 * p).sum();
                for ((w, p), ok) in weights.iter().zip(&av).zip(out.chunks_exact_mut(d)) {
                    let s = inv_m * (w * d1 * gv + (f0 - y) * w * d2 * p);
                    crate::linalg::axpy(s, a, ok);
                }
            }
        }
        _ => {
            for (a, y) in instance.rows().zip(&instance.y) {
                let c = d1 * d1 + (phi0 - y) * d2;
                crate::linalg::axpy(inv_m * c * dot(a, v), a, &mut out);
            }
        }
    }
    Ok(out)
}

/// Σ⋆ = E[∇f(x⋆)∇f(x⋆)ᵀ].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SigmaStar {
    /// `scale·I + spike·u uᵀ` with `u` unit norm (or empty when `spike = 0`).
    IdentityPlusRankOne {
        n: usize,
        scale: f64,
        spike: f64,
        direction: Vec<f64>,
    },
    /// Dense symmetric `n×n`, row-major.
    Empirical { n: usize, matrix: Vec<f64> },
}

impl SigmaStar {
    pub fn dim(&self) -> usize {
        match self {
            SigmaStar::IdentityPlusRankOne { n, .. } | SigmaStar::Empirical { n, .. } => *n,
        }
    }

    pub fn apply(&self, h: &[f64]) -> Vec<f64> {
        match self {
            SigmaStar::IdentityPlusRankOne {
                scale,
                spike,
                direction,
                ..
            } => {
                let mut out = crate::linalg::scaled(*scale, h);
                if *spike != 0.0 {
                    crate::linalg::axpy(spike * dot(direction, h), direction, &mut out);
                }
                out
            }
            SigmaStar::Empirical { n, matrix } => {
                matrix.chunks_exact(*n).map(|row| dot(row, h)).collect()
            }
        }
    }

    pub fn quad_form(&self, h: &[f64]) -> f64 {
        dot(h, &self.apply(h))
    }

    pub fn trace(&self) -> f64 {
        match self {
            SigmaStar::IdentityPlusRankOne { n, scale, spike, .. } => *n as f64 * scale + spike,
            SigmaStar::Empirical { n, matrix } => (0..*n).map(|i| matrix[i * n + i]).sum(),
        }
    }

    /// Operator norm; exact for the closed form, power iteration otherwise.
    pub fn op_norm(&self) -> f64 {
        match self {
            SigmaStar::IdentityPlusRankOne { scale, spike, .. } => scale + spike.max(0.0),
            SigmaStar::Empirical { n, .. } => {
                let start = vec![1.0 / (*n as f64).sqrt(); *n];
                crate::eigen::top_eigenpair(|v| self.apply(v), &start, 5000, 1e-12)
                    .map(|e| e.value)
                    .unwrap_or_else(|e| match e {
                        Error::NonConvergence { best, .. } => self.quad_form(&best),
                        _ => f64::NAN,
                    })
            }
        }
    }
}

/// Closed-form Σ⋆ under `a ~ Normal(0, I)`.
pub fn sigma_star_closed_form(kind: &ModelKind, x_star: &[f64]) -> Result<SigmaStar> {
    let n = x_star.len();
    let xn = norm2(x_star);
    match kind {
        ModelKind::Linear => Ok(SigmaStar::IdentityPlusRankOne {
            n,
            scale: 1.0,
            spike: 0.0,
            direction: vec![],
        }),
        ModelKind::Square => Ok(if xn > 0.0 {
            SigmaStar::IdentityPlusRankOne {
                n,
                // ∇f = 2(aᵀx⋆)a: 4·E[(aᵀx⋆)² aaᵀ] = 4‖x⋆‖²I + 8x⋆x⋆ᵀ
                scale: 4.0 * xn * xn,
                spike: 8.0 * xn * xn,
                direction: crate::linalg::scaled(1.0 / xn, x_star),
            }
        } else {
            SigmaStar::IdentityPlusRankOne {
                n,
                scale: 0.0,
                spike: 0.0,
                direction: vec![],
            }
        }),
        // 1(aᵀx⋆ ≥ 0) keeps half of the isotropic mass; at x⋆ = 0 it keeps all of it.
        ModelKind::Relu => Ok(SigmaStar::IdentityPlusRankOne {
            n,
            scale: if xn > 0.0 { 0.5 } else { 1.0 },
            spike: 0.0,
            direction: vec![],
        }),
        other => Err(Error::NoClosedForm(other.name().into())),
    }
}

/// Monte Carlo Σ⋆ as an average of gradient outer products.
pub fn sigma_star_monte_carlo<R: Rng + ?Sized>(
    kind: &ModelKind,
    x_star: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<SigmaStar> {
    let n = x_star.len();
    let d = kind.data_dim(n)?;
    if samples == 0 {
        return Err(Error::Usage("samples must be positive".into()));
    }
    let mut matrix = vec![0.0; n * n];
    let mut g = vec![0.0; n];
    for _ in 0..samples {
        let a = gaussian_vector(rng, d)?;
        g.iter_mut().for_each(|v| *v = 0.0);
        kind.add_gradient(&a, x_star, 1.0, &mut g);
        for i in 0..n {
            if g[i] != 0.0 {
                crate::linalg::axpy(g[i], &g, &mut matrix[i * n..(i + 1) * n]);
            }
        }
    }
    let inv = 1.0 / samples as f64;
    matrix.iter_mut().for_each(|v| *v *= inv);
    Ok(SigmaStar::Empirical { n, matrix })
}

/// Cosine between `x⋆` and `h`.
pub fn correlation(x_star: &[f64], h: &[f64]) -> Result<f64> {
    let xn = norm2(x_star);
    let hn = norm2(h);
    if hn == 0.0 {
        return Err(Error::Usage("direction h must be nonzero".into()));
    }
    if xn == 0.0 {
        return Err(Error::Degenerate("x_star = 0 has no direction".into()));
    }
    Ok((dot(x_star, h) / (xn * hn)).clamp(-1.0, 1.0))
}

/// `z + (2/π)(√(1−z²) + z·arcsin z)`, increasing on [−1, 1].
pub fn square_tau_shape(r: f64) -> f64 {
    let r = r.clamp(-1.0, 1.0);
    r + (2.0 / PI) * ((1.0 - r * r).max(0.0).sqrt() + r * r.asin())
}

/// τ(h) as a function of the cosine `r` between `h` and `x⋆`.
pub fn tau_from_correlation(kind: &ModelKind, x_norm: f64, r: f64) -> Result<f64> {
    match kind {
        ModelKind::Linear => Ok(1.0 / (2.0 * PI).sqrt()),
        ModelKind::Relu => {
            if x_norm == 0.0 {
                Ok(1.0 / (2.0 * PI).sqrt())
            } else {
                Ok((1.0 + r) / (8.0 * PI).sqrt())
            }
        }
        // E(2(aᵀx⋆)(aᵀh))₊ = E[(aᵀx⋆)(aᵀh)] + E|(aᵀx⋆)(aᵀh)|
        ModelKind::Square => Ok(x_norm * square_tau_shape(r)),
        other => Err(Error::NoClosedForm(other.name().into())),
    }
}

/// τ(h) = E(⟨∇f(x⋆), h⟩)₊ / ‖h‖ under Gaussian data.
pub fn tau_closed_form(kind: &ModelKind, x_star: &[f64], h: &[f64]) -> Result<f64> {
    check_dim(x_star.len(), h.len())?;
    if norm2(h) == 0.0 {
        return Err(Error::Usage("direction h must be nonzero".into()));
    }
    let xn = norm2(x_star);
    let r = if xn > 0.0 { correlation(x_star, h)? } else { 0.0 };
    tau_from_correlation(kind, xn, r)
}

/// Draws `M` Gaussian data vectors and observations `y_m = f_m(x⋆) + ξ_m`.
pub fn sample_instance(
    kind: &ModelKind,
    x_star: &[f64],
    m: usize,
    noise: &NoiseSpec,
    stream: RngStream,
) -> Result<ProblemInstance> {
    kind.validate()?;
    noise.validate()?;
    if m == 0 {
        return Err(Error::Usage("M must be at least 1".into()));
    }
    if x_star.is_empty() || !crate::linalg::all_finite(x_star) {
        return Err(Error::Usage("x_star must be nonempty and finite".into()));
    }
    let n = x_star.len();
    let d = kind.data_dim(n)?;
    let mut rng = stream.generator();
    let mut data = Vec::with_capacity(m * d);
    for _ in 0..m {
        data.extend(gaussian_vector(&mut rng, d)?);
    }
    let xi = noise.sample(&mut rng, m);
    let y = data
        .chunks_exact(d)
        .zip(&xi)
        .map(|(a, e)| kind.eval(a, x_star) + e)
        .collect();
    Ok(ProblemInstance {
        model: kind.clone(),
        n,
        m,
        seed: Some(SeedInfo::from(stream)),
        x_star: Some(x_star.to_vec()),
        data,
        y,
        noise: if matches!(noise, NoiseSpec::None) {
            None
        } else {
            Some(xi)
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{axpy, scaled};

    fn rng_vec(seed: u64, n: usize) -> Vec<f64> {
        gaussian_vector(&mut RngStream::new(seed, 0).generator(), n).unwrap()
    }

    fn all_models() -> Vec<ModelKind> {
        vec![
            ModelKind::Linear,
            ModelKind::Square,
            ModelKind::Relu,
            ModelKind::softplus(),
            ModelKind::Softplus {
                base: SoftplusBase::E,
            },
            ModelKind::OneHiddenLayer {
                weights: vec![1.0, 0.5, 2.0],
                activation: Activation::Softplus,
            },
            ModelKind::OneHiddenLayer {
                weights: vec![0.3, 1.0],
                activation: Activation::Relu,
            },
        ]
    }

    #[test]
    fn values_match_direct_evaluation() {
        assert_eq!(f_value(&ModelKind::Square, &[1.0, 0.0], &[3.0, 4.0]).unwrap(), 9.0);
        assert_eq!(f_value(&ModelKind::Relu, &[1.0, 1.0], &[-2.0, 1.0]).unwrap(), 0.0);
        let sp = f_value(&ModelKind::softplus(), &[0.7, -2.0], &[0.0, 0.0]).unwrap();
        assert!((sp - 1.0).abs() < 1e-15);
        assert_eq!(
            f_gradient(&ModelKind::Square, &[1.0, 0.0], &[3.0, 4.0]).unwrap(),
            vec![6.0, 0.0]
        );
    }

    #[test]
    fn relu_gradient_at_kink_is_a() {
        let a = [1.0, -1.0];
        let g = f_gradient(&ModelKind::Relu, &a, &[1.0, 1.0]).unwrap();
        assert_eq!(g, a.to_vec());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(matches!(
            f_value(&ModelKind::Square, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let ohl = ModelKind::OneHiddenLayer {
            weights: vec![1.0, 1.0],
            activation: Activation::Relu,
        };
        assert!(f_value(&ohl, &[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        let bad = ModelKind::OneHiddenLayer {
            weights: vec![1.0, -1.0],
            activation: Activation::Relu,
        };
        assert!(f_value(&bad, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn smooth_gradients_match_central_differences() {
        let models = [
            ModelKind::Linear,
            ModelKind::Square,
            ModelKind::softplus(),
            ModelKind::OneHiddenLayer {
                weights: vec![1.0, 0.5, 2.0],
                activation: Activation::Softplus,
            },
        ];
        for (mi, kind) in models.iter().enumerate() {
            let k = kind.blocks();
            for probe in 0..100u64 {
                let d = 5;
                let a = rng_vec(1000 + probe, d);
                let x = rng_vec(5000 + probe * 7 + mi as u64, d * k);
                let g = f_gradient(kind, &a, &x).unwrap();
                let h = 1e-5;
                for i in 0..x.len() {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (kind.eval(&a, &xp) - kind.eval(&a, &xm)) / (2.0 * h);
                    let tol = 1e-6 * (1.0 + g[i].abs());
                    assert!((fd - g[i]).abs() <= tol, "{kind:?} coord {i}: fd {fd} vs {}", g[i]);
                }
            }
        }
    }

    #[test]
    fn every_model_is_midpoint_convex() {
        for kind in all_models() {
            let k = kind.blocks();
            for probe in 0..1000u64 {
                let a = rng_vec(probe, 4);
                let x = scaled(3.0, &rng_vec(10_000 + probe, 4 * k));
                let z = scaled(3.0, &rng_vec(20_000 + probe, 4 * k));
                let mid: Vec<f64> = x.iter().zip(&z).map(|(p, q)| 0.5 * (p + q)).collect();
                let lhs = kind.eval(&a, &mid);
                let rhs = 0.5 * (kind.eval(&a, &x) + kind.eval(&a, &z));
                assert!(lhs <= rhs + 1e-10 * (1.0 + rhs.abs()), "{kind:?}");
            }
        }
    }

    #[test]
    fn single_block_network_reduces_to_link() {
        for (act, single) in [
            (Activation::Relu, ModelKind::Relu),
            (Activation::Softplus, ModelKind::softplus()),
        ] {
            let net = ModelKind::OneHiddenLayer {
                weights: vec![1.0],
                activation: act,
            };
            for probe in 0..50u64 {
                let a = rng_vec(probe, 6);
                let x = rng_vec(100 + probe, 6);
                assert_eq!(net.eval(&a, &x), single.eval(&a, &x));
                assert_eq!(
                    f_gradient(&net, &a, &x).unwrap(),
                    f_gradient(&single, &a, &x).unwrap()
                );
            }
        }
    }

    fn tiny_instance(kind: ModelKind, rows: Vec<Vec<f64>>, y: Vec<f64>) -> ProblemInstance {
        let n = rows[0].len() * kind.blocks();
        ProblemInstance {
            model: kind,
            n,
            m: rows.len(),
            seed: None,
            x_star: None,
            data: rows.concat(),
            y,
            noise: None,
        }
    }

    #[test]
    fn hessian_vp_single_datum() {
        let inst = tiny_instance(ModelKind::Square, vec![vec![1.0, 0.0]], vec![1.0]);
        assert_eq!(
            loss_hessian_vp_at_zero(&inst, &[1.0, 0.0]).unwrap(),
            vec![-2.0, 0.0]
        );
        assert_eq!(
            loss_hessian_vp_at_zero(&inst, &[0.0, 0.0]).unwrap(),
            vec![0.0, 0.0]
        );
        let relu = tiny_instance(ModelKind::Relu, vec![vec![1.0, 0.0]], vec![1.0]);
        assert!(matches!(
            loss_hessian_vp_at_zero(&relu, &[1.0, 0.0]),
            Err(Error::Unsupported { .. })
        ));
        let lin = tiny_instance(ModelKind::Linear, vec![vec![1.0, 2.0]], vec![5.0]);
        assert_eq!(
            loss_hessian_vp_at_zero(&lin, &[1.0, 0.0]).unwrap(),
            vec![1.0, 2.0]
        );
    }

    #[test]
    fn hessian_vp_is_linear_and_symmetric() {
        let nets = [
            ModelKind::Square,
            ModelKind::softplus(),
            ModelKind::Linear,
            ModelKind::OneHiddenLayer {
                weights: vec![0.5, 1.5],
                activation: Activation::Softplus,
            },
        ];
        for kind in nets {
            let n = 6 * kind.blocks();
            let xs = rng_vec(3, n);
            let inst =
                sample_instance(&kind, &xs, 40, &NoiseSpec::None, RngStream::new(11, 0)).unwrap();
            for probe in 0..20u64 {
                let u = rng_vec(200 + probe, n);
                let v = rng_vec(300 + probe, n);
                let hu = loss_hessian_vp_at_zero(&inst, &u).unwrap();
                let hv = loss_hessian_vp_at_zero(&inst, &v).unwrap();
                assert!((dot(&u, &hv) - dot(&v, &hu)).abs() < 1e-10, "{kind:?}");
                let mut w = scaled(2.0, &u);
                axpy(-3.0, &v, &mut w);
                let hw = loss_hessian_vp_at_zero(&inst, &w).unwrap();
                for i in 0..n {
                    let lin = 2.0 * hu[i] - 3.0 * hv[i];
                    assert!((hw[i] - lin).abs() < 1e-10 * (1.0 + lin.abs()));
                }
            }
        }
    }

    #[test]
    fn closed_form_sigma_norms() {
        let x = [0.6, 0.8, 0.0];
        assert_eq!(sigma_star_closed_form(&ModelKind::Linear, &x).unwrap().op_norm(), 1.0);
        let sq = sigma_star_closed_form(&ModelKind::Square, &x).unwrap();
        assert!((sq.op_norm() - 12.0).abs() < 1e-12);
        assert!((sq.quad_form(&x) - 12.0).abs() < 1e-12);
        assert!((sq.trace() - (3.0 * 4.0 + 8.0)).abs() < 1e-12);
        assert_eq!(sigma_star_closed_form(&ModelKind::Relu, &x).unwrap().op_norm(), 0.5);
        assert!(matches!(
            sigma_star_closed_form(&ModelKind::softplus(), &x),
            Err(Error::NoClosedForm(_))
        ));
    }

    #[test]
    fn tau_closed_forms() {
        let x = [1.0, 0.0];
        let inv_sqrt_2pi = 1.0 / (2.0 * PI).sqrt();
        let lin = tau_closed_form(&ModelKind::Linear, &x, &[0.3, -2.0]).unwrap();
        assert!((lin - 0.39894).abs() < 1e-5);
        let relu = tau_closed_form(&ModelKind::Relu, &x, &x).unwrap();
        assert!((relu - inv_sqrt_2pi).abs() < 1e-15);
        let sq = tau_closed_form(&ModelKind::Square, &x, &x).unwrap();
        assert!((sq - 2.0).abs() < 1e-15);
        assert!(square_tau_shape(-1.0).abs() < 1e-15);
        assert!(tau_closed_form(&ModelKind::Square, &x, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn tau_is_scale_invariant_in_h() {
        let x = rng_vec(8, 5);
        for probe in 0..50u64 {
            let h = rng_vec(900 + probe, 5);
            for kind in [ModelKind::Linear, ModelKind::Square, ModelKind::Relu] {
                let t1 = tau_closed_form(&kind, &x, &h).unwrap();
                let t2 = tau_closed_form(&kind, &x, &scaled(4.0, &h)).unwrap();
                assert_eq!(t1, t2);
            }
        }
    }

    #[test]
    fn noiseless_instances_satisfy_model_exactly() {
        let x = rng_vec(1, 4);
        let inst =
            sample_instance(&ModelKind::Square, &x, 30, &NoiseSpec::None, RngStream::new(4, 2))
                .unwrap();
        for (a, y) in inst.rows().zip(&inst.y) {
            assert_eq!(*y, ModelKind::Square.eval(a, &x));
        }
        let zero = sample_instance(
            &ModelKind::Square,
            &[0.0; 4],
            30,
            &NoiseSpec::None,
            RngStream::new(4, 2),
        )
        .unwrap();
        assert!(zero.y.iter().all(|v| *v == 0.0));
        let again =
            sample_instance(&ModelKind::Square, &x, 30, &NoiseSpec::None, RngStream::new(4, 2))
                .unwrap();
        assert_eq!(
            serde_json::to_string(&inst).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
        assert!(sample_instance(&ModelKind::Square, &x, 0, &NoiseSpec::None, RngStream::new(4, 2))
            .is_err());
    }

    #[test]
    fn model_kind_json_is_tagged() {
        let net = ModelKind::OneHiddenLayer {
            weights: vec![1.0, 0.5],
            activation: Activation::Relu,
        };
        let s = serde_json::to_string(&net).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"one_hidden_layer","weights":[1.0,0.5],"activation":"relu"}"#
        );
        let sp: ModelKind = serde_json::from_str(r#"{"kind":"softplus"}"#).unwrap();
        assert_eq!(sp, ModelKind::softplus());
    }
}

//! Matrix-free power iteration for symmetric operators.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, normalized};
use crate::rng::gaussian_vector;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    /// Rayleigh quotient of `vector` under the unshifted operator.
    pub value: f64,
    pub vector: Vec<f64>,
    /// `‖Av − λv‖₂`
    pub residual: f64,
    pub iterations: usize,
}

fn residual_of(av: &[f64], v: &[f64], lambda: f64) -> f64 {
    av.iter()
        .zip(v)
        .map(|(a, x)| (a - lambda * x).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Power iteration on `A + shift·I`, returning the eigenpair of `A` with the
/// largest (algebraic) eigenvalue when `A + shift·I` is positive semidefinite.
///
/// On failure the error carries the best iterate seen (smallest residual).
pub fn shifted_power_iteration<F>(
    op: F,
    shift: f64,
    start: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<Eigenpair>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut v = normalized(start)
        .ok_or_else(|| Error::Usage("power iteration needs a nonzero start vector".into()))?;
    let mut best: Option<Eigenpair> = None;
    for it in 0..=max_iters {
        let av = op(&v);
        let lambda = dot(&v, &av);
        let res = residual_of(&av, &v, lambda);
        if best.as_ref().is_none_or(|b| res < b.residual) {
            best = Some(Eigenpair {
                value: lambda,
                vector: v.clone(),
                residual: res,
                iterations: it,
            });
        }
        if res <= tol {
            return Ok(Eigenpair {
                value: lambda,
                vector: v,
                residual: res,
                iterations: it,
            });
        }
        if it == max_iters {
            break;
        }
        let mut next = av;
        axpy(shift, &v, &mut next);
        v = match normalized(&next) {
            Some(u) => u,
            None => break,
        };
    }
    let best = best.expect("at least one iterate");
    Err(Error::NonConvergence {
        iterations: max_iters,
        residual: best.residual,
        best: best.vector,
    })
}

/// Power iteration without shift; suited to positive semidefinite operators.
pub fn top_eigenpair<F>(op: F, start: &[f64], max_iters: usize, tol: f64) -> Result<Eigenpair>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    shifted_power_iteration(op, 0.0, start, max_iters, tol)
}

/// Hutchinson estimate of `‖A‖_F` from `probes` Gaussian probes.
pub fn frobenius_estimate<F, R>(op: F, n: usize, probes: usize, rng: &mut R) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
    R: Rng + ?Sized,
{
    let mut acc = 0.0;
    for _ in 0..probes.max(1) {
        let z = gaussian_vector(rng, n)?;
        acc += norm2(&op(&z)).powi(2);
    }
    Ok((acc / probes.max(1) as f64).sqrt())
}

//! The one-sided empirical risk R⁺_M(x) = (1/M) Σ (f_m(x) − y_m)₊.

use crate::error::Result;
use crate::instance::ProblemInstance;
use crate::linalg::{positive_part, CompensatedSum};

pub fn one_sided_risk(x: &[f64], instance: &ProblemInstance) -> Result<f64> {
    instance.check_point(x)?;
    Ok(risk_unchecked(x, instance))
}

pub(crate) fn risk_unchecked(x: &[f64], instance: &ProblemInstance) -> f64 {
    let acc: CompensatedSum = instance
        .rows()
        .zip(&instance.y)
        .map(|(a, y)| positive_part(instance.model.eval(a, x) - y))
        .collect();
    acc.value() / instance.m as f64
}

/// `(1/M) Σ_{m : f_m(x) > y_m} ∇f_m(x)`. Equations with `f_m(x) = y_m`
/// contribute nothing.
pub fn one_sided_risk_subgradient(x: &[f64], instance: &ProblemInstance) -> Result<Vec<f64>> {
    instance.check_point(x)?;
    Ok(risk_and_subgradient(x, instance).1)
}

/// Risk value and subgradient from a single pass over the data.
pub(crate) fn risk_and_subgradient(x: &[f64], instance: &ProblemInstance) -> (f64, Vec<f64>) {
    let inv_m = 1.0 / instance.m as f64;
    let mut g = vec![0.0; instance.n];
    let mut acc = CompensatedSum::new();
    for (a, y) in instance.rows().zip(&instance.y) {
        let r = instance.model.eval(a, x) - y;
        if r > 0.0 {
            acc.add(r);
            instance.model.add_gradient(a, x, inv_m, &mut g);
        }
    }
    (acc.value() * inv_m, g)
}

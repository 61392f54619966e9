//! Numerical KKT certificate: distance from `a₀` to
//! `cone{∇f_m(x̂) : m active} + ∂Ω(x̂)`.

use serde::{Deserialize, Serialize};

use super::Regularizer;
use crate::error::{Error, Result};
use crate::instance::ProblemInstance;
use crate::linalg::{axpy, cholesky_solve, dot, norm2};
use crate::risk::risk_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifySettings {
    /// Activity / feasibility tolerance, relative to `1 + |y_m|`.
    pub tol: f64,
    /// Coordinates with `|x̂_i| > support_tol·‖x̂‖_∞` count as the ℓ1 support;
    /// smaller entries are solver residue and get the box subgradient.
    pub support_tol: f64,
    pub max_iters: usize,
    /// Stop once the residual drops below this value.
    pub target: f64,
}

impl Default for CertifySettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            support_tol: 1e-6,
            max_iters: 20_000,
            target: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `min ‖a₀ − Σ λ_m ∇f_m(x̂) − g‖₂` over `λ ≥ 0`, `g ∈ ∂Ω(x̂)`.
    pub residual: f64,
    pub active: Vec<usize>,
    /// Multipliers aligned with `active`.
    pub multipliers: Vec<f64>,
    pub reg_subgradient: Vec<f64>,
    pub iterations: usize,
}

struct ConeProblem {
    /// Active gradients, one per entry.
    cols: Vec<Vec<f64>>,
    /// Off-support coordinates with a box-constrained subgradient.
    free: Vec<usize>,
    bound: f64,
    target: Vec<f64>,
}

impl ConeProblem {
    fn residual(&self, lambda: &[f64], z: &[f64]) -> Vec<f64> {
        let mut r = self.target.clone();
        for (c, l) in self.cols.iter().zip(lambda) {
            if *l != 0.0 {
                axpy(-l, c, &mut r);
            }
        }
        for (&i, zi) in self.free.iter().zip(z) {
            r[i] -= zi;
        }
        r
    }

    fn project(&self, lambda: &mut [f64], z: &mut [f64]) {
        lambda.iter_mut().for_each(|l| *l = l.max(0.0));
        z.iter_mut().for_each(|v| *v = v.clamp(-self.bound, self.bound));
    }

    fn lipschitz(&self) -> f64 {
        let n = self.target.len();
        if self.cols.is_empty() {
            return 1.0;
        }
        let gram = |v: &[f64]| {
            let mut out = vec![0.0; n];
            for c in &self.cols {
                axpy(dot(c, v), c, &mut out);
            }
            out
        };
        let start = vec![1.0; n];
        let top = match crate::eigen::top_eigenpair(gram, &start, 200, 1e-6) {
            Ok(e) => e.value,
            Err(Error::NonConvergence { best, .. }) => {
                let gv: f64 = self.cols.iter().map(|c| dot(c, &best).powi(2)).sum();
                gv / dot(&best, &best)
            }
            Err(_) => 0.0,
        };
        // slack for the power-iteration underestimate
        1.05 * top + if self.free.is_empty() { 0.0 } else { 1.0 } + 1e-300
    }

    /// Accelerated projected gradient with adaptive restart. The residual is
    /// affine in the variables, so the extrapolated residual is formed from
    /// the two latest ones instead of another product with the gradients.
    fn solve(&self, settings: &CertifySettings) -> (Vec<f64>, Vec<f64>, usize) {
        let p = self.cols.len();
        let q = self.free.len();
        let step = 1.0 / self.lipschitz();
        let mut lam = vec![0.0; p];
        let mut z = vec![0.0; q];
        let mut lam_y = lam.clone();
        let mut z_y = z.clone();
        let mut r_x = self.target.clone();
        let mut r_y = r_x.clone();
        let mut theta = 1.0f64;
        let mut best = norm2(&r_x);
        let mut window_start = best;
        let mut iters = 0;
        for it in 1..=settings.max_iters {
            iters = it;
            let mut lam_new: Vec<f64> = self
                .cols
                .iter()
                .zip(&lam_y)
                .map(|(c, l)| l + step * dot(c, &r_y))
                .collect();
            let mut z_new: Vec<f64> = self
                .free
                .iter()
                .zip(&z_y)
                .map(|(&i, v)| v + step * r_y[i])
                .collect();
            self.project(&mut lam_new, &mut z_new);
            let r_new = self.residual(&lam_new, &z_new);
            let obj = norm2(&r_new);
            let restart = obj > norm2(&r_x);
            let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = if restart { 0.0 } else { (theta - 1.0) / theta_new };
            theta = if restart { 1.0 } else { theta_new };
            for i in 0..p {
                lam_y[i] = lam_new[i] + beta * (lam_new[i] - lam[i]);
            }
            for i in 0..q {
                z_y[i] = z_new[i] + beta * (z_new[i] - z[i]);
            }
            for i in 0..r_y.len() {
                r_y[i] = r_new[i] + beta * (r_new[i] - r_x[i]);
            }
            lam = lam_new;
            z = z_new;
            r_x = r_new;
            best = best.min(obj);
            if obj <= settings.target {
                break;
            }
            if it % 500 == 0 {
                if window_start - best <= 1e-3 * window_start {
                    break;
                }
                window_start = best;
            }
        }
        (lam, z, iters)
    }

    /// Least-squares solve over the currently free variables with the others
    /// held at their bounds; kept only if it stays feasible and improves.
    fn polish(&self, lam: &mut Vec<f64>, z: &mut Vec<f64>) {
        let n = self.target.len();
        let free_lam: Vec<usize> = (0..lam.len()).filter(|&i| lam[i] > 0.0).collect();
        let free_z: Vec<usize> = (0..z.len()).filter(|&j| z[j].abs() < self.bound).collect();
        let k = free_lam.len() + free_z.len();
        if k == 0 || k > n {
            return;
        }
        // residual with the free variables zeroed
        let mut lam_fixed = lam.clone();
        free_lam.iter().for_each(|&i| lam_fixed[i] = 0.0);
        let mut z_fixed = z.clone();
        free_z.iter().for_each(|&j| z_fixed[j] = 0.0);
        let r0 = self.residual(&lam_fixed, &z_fixed);

        let column = |c: usize| -> Vec<f64> {
            if c < free_lam.len() {
                self.cols[free_lam[c]].clone()
            } else {
                let mut e = vec![0.0; n];
                e[self.free[free_z[c - free_lam.len()]]] = 1.0;
                e
            }
        };
        let basis: Vec<Vec<f64>> = (0..k).map(column).collect();
        let mut gram = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v = dot(&basis[i], &basis[j]);
                gram[i * k + j] = v;
                gram[j * k + i] = v;
            }
        }
        let mut rhs: Vec<f64> = basis.iter().map(|b| dot(b, &r0)).collect();
        if !cholesky_solve(&mut gram, &mut rhs) {
            return;
        }
        let mut lam_new = lam_fixed;
        let mut z_new = z_fixed;
        for (c, w) in rhs.iter().enumerate() {
            if c < free_lam.len() {
                lam_new[free_lam[c]] = *w;
            } else {
                z_new[free_z[c - free_lam.len()]] = *w;
            }
        }
        let feasible = lam_new.iter().all(|l| *l >= 0.0)
            && z_new.iter().all(|v| v.abs() <= self.bound);
        if feasible && norm2(&self.residual(&lam_new, &z_new)) < norm2(&self.residual(lam, z)) {
            *lam = lam_new;
            *z = z_new;
        }
    }
}

/// Distance from `a₀` to the cone of active gradients plus the regularizer's
/// subdifferential at `x̂`.
pub fn certify(
    instance: &ProblemInstance,
    x_hat: &[f64],
    a0: &[f64],
    reg: &Regularizer,
    settings: &CertifySettings,
) -> Result<Certificate> {
    instance.validate()?;
    instance.check_point(x_hat)?;
    instance.check_point(a0)?;
    reg.validate()?;
    if !(settings.tol > 0.0) {
        return Err(Error::Usage("certificate tolerance must be positive".into()));
    }
    let mean_abs_y = instance.y.iter().map(|v| v.abs()).sum::<f64>() / instance.m as f64;
    let risk = risk_unchecked(x_hat, instance);
    if risk > settings.tol * (1.0 + mean_abs_y) {
        return Err(Error::Usage(format!(
            "x_hat is infeasible: one-sided risk {risk:e} exceeds the tolerance"
        )));
    }

    let n = instance.n;
    let values = instance.values(x_hat);
    let active: Vec<usize> = values
        .iter()
        .zip(&instance.y)
        .enumerate()
        .filter(|(_, (f, y))| (*f - *y).abs() <= settings.tol * (1.0 + y.abs()))
        .map(|(m, _)| m)
        .collect();
    let cols: Vec<Vec<f64>> = active
        .iter()
        .map(|&m| {
            let mut g = vec![0.0; n];
            instance.model.add_gradient(instance.row(m), x_hat, 1.0, &mut g);
            g
        })
        .collect();

    let lambda = reg.lambda();
    let mut fixed = vec![0.0; n];
    let mut free = Vec::new();
    if lambda > 0.0 {
        let cutoff = settings.support_tol * x_hat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            if x_hat[i].abs() > cutoff {
                fixed[i] = lambda * x_hat[i].signum();
            } else {
                free.push(i);
            }
        }
    }
    let target: Vec<f64> = a0.iter().zip(&fixed).map(|(a, g)| a - g).collect();
    let cone = ConeProblem {
        cols,
        free,
        bound: lambda,
        target,
    };
    let (mut lam, mut z, iterations) = cone.solve(settings);
    cone.polish(&mut lam, &mut z);
    let residual = norm2(&cone.residual(&lam, &z));
    let mut reg_subgradient = fixed;
    for (&i, v) in cone.free.iter().zip(&z) {
        reg_subgradient[i] = *v;
    }
    Ok(Certificate {
        residual,
        active,
        multipliers: lam,
        reg_subgradient,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn orthogonal_anchor_has_unit_residual() {
        let inst =
            ProblemInstance::from_rows(ModelKind::Linear, 2, &[vec![1.0, 0.0]], vec![1.0]).unwrap();
        let c = certify(&inst, &[1.0, 0.0], &[0.0, 1.0], &Regularizer::None, &CertifySettings::default())
            .unwrap();
        assert!((c.residual - 1.0).abs() < 1e-12);
        assert_eq!(c.active, vec![0]);
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let inst =
            ProblemInstance::from_rows(ModelKind::Linear, 2, &[vec![1.0, 0.0]], vec![1.0]).unwrap();
        assert!(matches!(
            certify(&inst, &[2.0, 0.0], &[1.0, 0.0], &Regularizer::None, &CertifySettings::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn l1_box_absorbs_small_off_support_entries() {
        // x̂ = e₁, one active gradient e₁, λ = 0.5: a₀ = (0.8, 0.3) is certified
        // by λ₁ = 0.3 (with fixed g₁ = 0.5) and g₂ = 0.3.
        let inst =
            ProblemInstance::from_rows(ModelKind::Linear, 2, &[vec![1.0, 0.0]], vec![1.0]).unwrap();
        let reg = Regularizer::L1 { lambda: 0.5 };
        let c = certify(&inst, &[1.0, 0.0], &[0.8, 0.3], &reg, &CertifySettings::default()).unwrap();
        assert!(c.residual < 1e-10, "{c:?}");
        assert!((c.reg_subgradient[1] - 0.3).abs() < 1e-9);
        let far = certify(&inst, &[1.0, 0.0], &[0.8, 0.9], &reg, &CertifySettings::default()).unwrap();
        assert!((far.residual - 0.4).abs() < 1e-9, "{far:?}");
    }
}

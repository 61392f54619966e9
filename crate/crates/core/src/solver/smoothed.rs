//! Smoothed exact penalty with accelerated proximal gradient steps.
//!
//! Every hinge `(t)₊` is replaced by its Moreau envelope
//! `h_μ(t) = 0 | t²/2μ | t − μ/2`, which is convex, below `(t)₊`, within
//! `μ/2` of it, and has a `1/μ`-Lipschitz derivative. For a fixed penalty the
//! smoothed problem is minimized by FISTA with backtracking and adaptive
//! restart; `μ` is then shrunk geometrically with warm starts.

use super::{BestTracker, Problem, SolverConfig};
use crate::linalg::{dot, norm2, positive_part};

fn huber(t: f64, mu: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t <= mu {
        (0.5 * t * t / mu, t / mu)
    } else {
        (t - 0.5 * mu, 1.0)
    }
}

pub(super) struct Smoothed<'a, 'b> {
    pub p: &'a Problem<'b>,
    pub rho: f64,
    pub mu: f64,
}

pub(super) struct Eval {
    /// Smooth part `−⟨a₀,x⟩ + ρ·penalty_μ(x)`.
    pub value: f64,
    /// Unsmoothed `(R⁺_M(x) − c)₊`.
    pub gap: f64,
}

impl Smoothed<'_, '_> {
    /// Value (and optionally gradient) of the smooth part.
    pub fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> Eval {
        let inst = self.p.instance;
        let inv_m = 1.0 / inst.m as f64;
        let mut weights = Vec::with_capacity(inst.m);
        let mut smooth_risk = 0.0;
        let mut risk = 0.0;
        for (a, y) in inst.rows().zip(&inst.y) {
            let t = inst.model.eval(a, x) - y;
            let (h, dh) = huber(t, self.mu);
            smooth_risk += h;
            risk += positive_part(t);
            weights.push(dh);
        }
        smooth_risk *= inv_m;
        risk *= inv_m;
        let (outer, d_outer) = if self.p.budget > 0.0 {
            huber(smooth_risk - self.p.budget, self.mu)
        } else {
            (smooth_risk, 1.0)
        };
        let value = -dot(self.p.a0, x) + self.rho * outer;
        if let Some(g) = grad {
            for (gi, ai) in g.iter_mut().zip(self.p.a0) {
                *gi = -ai;
            }
            let coeff = self.rho * d_outer * inv_m;
            if coeff > 0.0 {
                for ((a, _), w) in inst.rows().zip(&inst.y).zip(&weights) {
                    if *w > 0.0 {
                        inst.model.add_gradient(a, x, coeff * w, g);
                    }
                }
            }
        }
        Eval {
            value,
            gap: positive_part(risk - self.p.budget),
        }
    }
}

pub(super) struct StageOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// True feasibility gap of the iterate that crossed the norm cap.
    pub norm_cap_gap: Option<f64>,
    /// Stopped on the gradient-mapping or stagnation test, not the limit.
    pub converged: bool,
    /// Lipschitz estimate to warm-start the next stage.
    pub lipschitz: f64,
}

/// FISTA with backtracking and function-value restart on one smoothed
/// problem. Stops when the gradient mapping falls below `grad_tol`.
pub(super) fn fista_stage(
    s: &Smoothed<'_, '_>,
    cfg: &SolverConfig,
    start: &[f64],
    lipschitz0: f64,
    grad_tol: f64,
    norm_cap: f64,
    tracker: &mut BestTracker,
) -> StageOutcome {
    let n = start.len();
    let reg = s.p.reg;
    let mut x = start.to_vec();
    let mut y = x.clone();
    let mut g = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut lip = lipschitz0.max(1e-12);
    // θ = 1 marks a fresh (restarted) momentum sequence
    let mut theta = 1.0f64;
    let mut phi_x = s.eval(&x, None).value + reg.value(&x);

    for k in 1..=cfg.max_inner_iters {
        let fy = s.eval(&y, Some(&mut g)).value;
        let (e_new, d_norm) = loop {
            let step = 1.0 / lip;
            for i in 0..n {
                x_new[i] = y[i] - step * g[i];
            }
            reg.prox_in_place(&mut x_new, step);
            let mut lin = 0.0;
            let mut dd = 0.0;
            for i in 0..n {
                let d = x_new[i] - y[i];
                lin += g[i] * d;
                dd += d * d;
            }
            let e = s.eval(&x_new, None);
            let model = fy + lin + 0.5 * lip * dd;
            if e.value <= model + 1e-12 * (1.0 + fy.abs()) || !e.value.is_finite() && lip > 1e300 {
                break (e, dd.sqrt());
            }
            lip *= 2.0;
        };
        tracker.offer(&x_new, s.p.true_objective(&x_new), e_new.gap);
        let phi_new = e_new.value + reg.value(&x_new);

        if !crate::linalg::all_finite(&x_new) || norm2(&x_new) > norm_cap {
            return StageOutcome {
                x,
                iterations: k,
                norm_cap_gap: Some(if e_new.gap.is_finite() { e_new.gap } else { f64::INFINITY }),
                converged: false,
                lipschitz: lip,
            };
        }
        if lip * d_norm <= grad_tol {
            return StageOutcome {
                x: x_new,
                iterations: k,
                norm_cap_gap: None,
                converged: true,
                lipschitz: lip,
            };
        }
        if phi_new > phi_x {
            // restart momentum from the last accepted point; a restart right
            // after a restart means the objective is at rounding level
            if theta == 1.0 {
                return StageOutcome {
                    x,
                    iterations: k,
                    norm_cap_gap: None,
                    converged: true,
                    lipschitz: lip,
                };
            }
            theta = 1.0;
            y.copy_from_slice(&x);
            continue;
        }
        let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_new;
        for i in 0..n {
            y[i] = x_new[i] + beta * (x_new[i] - x[i]);
        }
        x.copy_from_slice(&x_new);
        phi_x = phi_new;
        theta = theta_new;
        lip *= 0.95;
    }
    StageOutcome {
        x,
        iterations: cfg.max_inner_iters,
        norm_cap_gap: None,
        converged: false,
        lipschitz: lip,
    }
}

use std::f64::consts::PI;

use anchorreg::analysis::*;
use anchorreg::linalg::{dot, norm2};
use anchorreg::models::{sigma_star_closed_form, tau_closed_form};
use anchorreg::rng::{unit_vector, RngStream};
use anchorreg::solver::Regularizer;
use anchorreg::ModelKind;
use rand::Rng;

fn e1(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

fn std_normal_sf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    1.0 - Normal::new(0.0, 1.0).unwrap().cdf(x)
}

#[test]
fn tau_linear_matches_inverse_sqrt_two_pi() {
    let x = e1(5);
    let h = vec![0.3, -1.0, 0.2, 0.0, 0.5];
    let est = tau_estimate(&ModelKind::Linear, &x, &h, 1_000_000, RngStream::new(11, 0)).unwrap();
    assert!((est.mean - 0.3989).abs() < 0.0015, "{est:?}");
}

#[test]
fn tau_relu_orthogonal_direction() {
    let x = e1(4);
    let h = vec![0.0, 1.0, 0.0, 0.0];
    let est = tau_estimate(&ModelKind::Relu, &x, &h, 1_000_000, RngStream::new(12, 0)).unwrap();
    assert!((est.mean - 1.0 / (8.0 * PI).sqrt()).abs() < 0.002, "{est:?}");
}

#[test]
fn tau_square_along_ground_truth() {
    let x = e1(3);
    let est = tau_estimate(&ModelKind::Square, &x, &x, 200_000, RngStream::new(13, 0)).unwrap();
    assert!((est.mean - 2.0).abs() < 0.02, "{est:?}");
}

#[test]
fn tau_estimate_rejects_zero_direction() {
    assert!(tau_estimate(&ModelKind::Linear, &e1(2), &[0.0, 0.0], 10, RngStream::new(0, 0)).is_err());
}

#[test]
fn rademacher_linear_lies_between_chi_bounds() {
    let n = 25;
    let x = e1(n);
    let est = rademacher_full_space(&ModelKind::Linear, &x, 100, 200, RngStream::new(14, 0)).unwrap();
    let lo = ((n - 1) as f64).sqrt() - 3.0 * est.stderr;
    let hi = (n as f64).sqrt() + 3.0 * est.stderr;
    assert!(est.mean >= lo && est.mean <= hi, "{est:?}");
    let trace = sigma_star_closed_form(&ModelKind::Linear, &x).unwrap().trace();
    assert!(est.mean <= trace.sqrt() + 3.0 * est.stderr);
}

#[test]
fn rademacher_single_draw_equals_gradient_norm() {
    // with M = 1 the sign does not change the norm, and for Linear the
    // gradient is the data vector itself
    let x = vec![0.5, -0.5, 0.1];
    let stream = RngStream::new(15, 0);
    let est = rademacher_full_space(&ModelKind::Linear, &x, 1, 1, stream).unwrap();
    let mut rng = stream.child(0).generator();
    let a: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    assert!((est.mean - norm2(&a)).abs() < 1e-12);
}

#[test]
fn tau_cone_closed_forms() {
    let x = e1(6);
    for delta in [0.3, 0.7, 1.0] {
        let spec = AscentConeSpec::new(delta, x.clone(), Regularizer::None).unwrap();
        let v = tau_cone_lower(&ModelKind::Linear, &spec, 1, 1, RngStream::new(0, 0)).unwrap();
        assert!((v.value - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert_eq!(v.kind, ValueKind::Exact);
    }
    let spec = AscentConeSpec::new(1.0 / 2f64.sqrt(), x, Regularizer::None).unwrap();
    let v = tau_cone_lower(&ModelKind::Relu, &spec, 1, 1, RngStream::new(0, 0)).unwrap();
    assert!(v.value.abs() < 1e-12);
}

#[test]
fn tau_cone_square_agrees_with_sampled_infimum() {
    let x = e1(8);
    let spec = AscentConeSpec::new(0.95, x.clone(), Regularizer::None).unwrap();
    let closed = tau_cone_lower(&ModelKind::Square, &spec, 1, 1, RngStream::new(0, 0)).unwrap();
    let dirs = sample_cone_directions(&spec, 1000, RngStream::new(16, 0)).unwrap();
    let mut min_mc = f64::INFINITY;
    let mut min_se = 0.0;
    for (i, h) in dirs.iter().enumerate() {
        assert!(cone_contains(&spec, h).unwrap());
        let est = tau_estimate(&ModelKind::Square, &x, h, 2000, RngStream::new(17, i as u64)).unwrap();
        // the certified infimum never exceeds any direction's value
        assert!(closed.value <= est.mean + 3.0 * est.stderr, "{} vs {est:?}", closed.value);
        if est.mean < min_mc {
            min_mc = est.mean;
            min_se = est.stderr;
        }
    }
    // the grid reaches the boundary, so the sampled minimum sits on the closed form
    let at_floor = tau_closed_form(&ModelKind::Square, &x, &dirs[0]).unwrap();
    assert!((at_floor - closed.value).abs() < 1e-9);
    assert!((min_mc - closed.value).abs() <= 3.0 * min_se + 0.02, "{min_mc} vs {}", closed.value);
}

#[test]
fn tau_cone_without_closed_form_is_labeled_upper_bound() {
    let x = vec![0.6, 0.0, 0.8];
    let spec = AscentConeSpec::new(0.9, x, Regularizer::None).unwrap();
    let v = tau_cone_lower(&ModelKind::softplus(), &spec, 5, 2000, RngStream::new(18, 0)).unwrap();
    assert_eq!(v.kind, ValueKind::UpperBound);
    assert!(v.value > 0.0);
}

#[test]
fn sigma_cone_examples() {
    let x = vec![0.0, 2.0, 0.0, 0.0];
    let spec = AscentConeSpec::new(0.8, x.clone(), Regularizer::None).unwrap();
    for (kind, expected) in [
        (ModelKind::Linear, 1.0),
        (ModelKind::Square, 12.0 * 4.0),
        (ModelKind::Relu, 0.5),
    ] {
        let sigma = sigma_star_closed_form(&kind, &x).unwrap();
        let v = sigma_cone_norm(&spec, &sigma, 20, RngStream::new(19, 0)).unwrap();
        assert!((v.value - expected).abs() < 1e-12, "{kind:?}: {v:?}");
        assert!(v.value <= sigma.op_norm() + 1e-12);
    }
}

#[test]
fn sigma_cone_never_exceeds_operator_norm() {
    let mut rng = RngStream::new(20, 0).generator();
    for i in 0..20 {
        let x = unit_vector(&mut rng, 6).unwrap();
        let sigma =
            anchorreg::models::sigma_star_monte_carlo(&ModelKind::softplus(), &x, 500, &mut rng).unwrap();
        let spec = AscentConeSpec::new(0.5 + 0.02 * i as f64, x, Regularizer::None).unwrap();
        let v = sigma_cone_norm(&spec, &sigma, 10, RngStream::new(21, i)).unwrap();
        assert!(v.value <= sigma.op_norm() + 1e-12);
    }
}

#[test]
fn tail_probability_examples() {
    let x = e1(3);
    let h = vec![0.0, 1.0, 1.0];
    let zero = tail_probability(&ModelKind::Linear, &x, &h, 0.0, 100_000, RngStream::new(22, 0)).unwrap();
    assert!((zero.mean - 0.5).abs() < 0.01);
    let tau = 1.0 / (2.0 * PI).sqrt();
    let p = tail_probability(&ModelKind::Linear, &x, &h, tau, 100_000, RngStream::new(23, 0)).unwrap();
    assert!((p.mean - 0.345).abs() < 0.01, "{p:?}");
    assert!((p.mean - std_normal_sf(tau)).abs() < 0.01);
}

#[test]
fn paley_zygmund_floor_for_linear() {
    let spec = AscentConeSpec::new(0.6, e1(4), Regularizer::None).unwrap();
    let r = p_tau_estimate(&ModelKind::Linear, &spec, 0.2, 4, 20_000, RngStream::new(24, 0)).unwrap();
    let floor = r.paley_zygmund_floor.unwrap();
    assert!((floor - 1.0 / (2.0 * PI) / 4.0).abs() < 1e-12);
    assert!((floor - 0.0398).abs() < 1e-4);
    assert!(r.sampled_min.value >= floor);
    assert!((r.sampled_min.value - std_normal_sf(0.2)).abs() < 0.02);
}

#[test]
fn bound_calculator_golden_values() {
    let r = bound_thm1(10.0, 0.4, 0.04, 1.0).unwrap();
    assert!((r.m_required - 6_502_500.0).abs() < 1e-6 * 6_502_500.0);
    assert!((r.error_coefficient - 125.0).abs() < 1e-9);
    let half = bound_thm1(10.0, 0.4, 0.08, 1.0).unwrap();
    assert!((r.m_required / half.m_required - 4.0).abs() < 1e-12);

    let tau = 1.0 / (2.0 * PI).sqrt();
    let c3 = bound_cor3(1.0, 100.0, tau, 1.0).unwrap();
    let literal = 64.0 * (2.0 * PI).powi(2) * (40.0 * (2.0 * PI).sqrt() + 1.0).powi(2);
    assert!((c3.m_required - literal).abs() < 1e-9 * literal);
    assert!((c3.m_required - 2.5909e7).abs() < 1e3, "{}", c3.m_required);
    assert!((c3.error_coefficient - 16.0 * (2.0 * PI).powf(1.5)).abs() < 1e-9);
    assert!((c3.error_coefficient - 252.0).abs() < 0.5);

    // the general bound with Linear inputs reproduces the Linear closed form
    let c2 = bound_cor2(10.0, tau, 1.0, 1.0).unwrap();
    assert!((c2.m_required - c3.m_required).abs() < 1e-9 * c3.m_required);
    assert_eq!(c2.error_coefficient, c3.error_coefficient);
    // trace = N·norm
    let n = 37.0;
    let eq = bound_cor3(2.5, 2.5 * n, 0.3, 0.5).unwrap();
    let by_hand = 64.0 * 2.5f64.powi(2) / 0.3f64.powi(4) * (4.0 * (2.5 * n).sqrt() / 0.3 + 0.5).powi(2);
    assert!((eq.m_required - by_hand).abs() < 1e-9 * by_hand);
    let smaller_t = bound_cor3(2.5, 2.5 * n, 0.3, 0.25).unwrap();
    assert!(smaller_t.m_required < eq.m_required);
}

#[test]
fn cor2_is_increasing_in_sigma() {
    let mut rng = RngStream::new(25, 0).generator();
    for _ in 0..100 {
        let c: f64 = rng.random_range(0.1..10.0);
        let tau: f64 = rng.random_range(0.05..2.0);
        let s2: f64 = rng.random_range(0.1..10.0);
        let t: f64 = rng.random_range(0.0..3.0);
        let a = bound_cor2(c, tau, s2, t).unwrap();
        let b = bound_cor2(c, tau, s2 * 1.01, t).unwrap();
        assert!(a.m_required >= 0.0 && b.m_required > a.m_required);
    }
}

#[test]
fn bounds_are_scale_invariant() {
    // f → s·f scales τ, ς, 𝔠 by s
    for s in [0.1, 3.0, 17.0] {
        let a = bound_thm1(2.0, 0.3, 0.2, 1.0).unwrap();
        let b = bound_thm1(2.0 * s, 0.3 * s, 0.2, 1.0).unwrap();
        assert!((a.m_required - b.m_required).abs() < 1e-9 * a.m_required);
        assert!((a.error_coefficient / s - b.error_coefficient).abs() < 1e-9 * b.error_coefficient);
        let a = bound_cor2(2.0, 0.3, 1.5, 1.0).unwrap();
        let b = bound_cor2(2.0 * s, 0.3 * s, 1.5 * s * s, 1.0).unwrap();
        assert!((a.m_required - b.m_required).abs() < 1e-9 * a.m_required);
        assert!((a.error_coefficient / s - b.error_coefficient).abs() < 1e-9 * b.error_coefficient);
    }
}

#[test]
fn c_star_hand_evaluation() {
    let s = 5usize;
    let n = 20;
    let lambda = 0.3 / (s as f64).sqrt();
    let delta = 0.9;
    let mut x = vec![0.0; n];
    for i in 0..s {
        x[2 * i] = if i % 2 == 0 { 1.0 } else { -1.0 } / (s as f64).sqrt();
    }
    // each support coordinate contributes (δ/√s − λ)² in magnitude
    let per = delta / (s as f64).sqrt() - lambda;
    let norm = (s as f64 * per * per).sqrt();
    let expected = (2.0 * std::f64::consts::E).sqrt() * ((1.0 - delta * delta).sqrt() / lambda + norm / lambda);
    let c = c_star(delta, lambda, &x).unwrap();
    assert!((c - expected).abs() < 1e-12);
    // √(1−δ²)/λ shrinks when λ doubles
    let doubled = c_star(delta, 2.0 * lambda, &x).unwrap();
    assert!(doubled < c);

    let r = bound_cor4(5.0, 2.0 * (n as f64).ln(), c, 0.3, 1.0, n, s, 1.0).unwrap();
    let width = 4.0 * 5f64.sqrt() + 4.0 * c * ((n as f64).ln() * 2.0 * (n as f64).ln()).sqrt();
    let m = 64.0 / 0.3f64.powi(4) * (width / 0.3 + 1.0).powi(2);
    assert!((r.m_required - m).abs() < 1e-9 * m);
}

#[test]
fn gradient_moments() {
    let s = 4;
    let n = 1004;
    let mut x = vec![0.0; n];
    for i in 0..s {
        x[i] = 0.5;
    }
    let support: Vec<usize> = (0..s).collect();
    let (head, tail) =
        grad_moment_estimates(&ModelKind::Linear, &x, &support, 5000, RngStream::new(26, 0)).unwrap();
    assert!(head.agrees_with(s as f64, 3.0), "{head:?}");
    let scale = 2.0 * 1000f64.ln();
    assert!(tail.mean >= 0.3 * scale && tail.mean <= 1.5 * scale, "{tail:?}");

    let x = e1(3);
    let (head, _) = grad_moment_estimates(&ModelKind::Square, &x, &[0], 200_000, RngStream::new(27, 0)).unwrap();
    assert!(head.agrees_with(12.0, 4.0), "{head:?}");
    assert!(grad_moment_estimates(&ModelKind::Linear, &x, &[], 5000, RngStream::new(0, 0)).is_err());
    assert!(grad_moment_estimates(&ModelKind::Linear, &x, &[0], 10, RngStream::new(0, 0)).is_err());
}

#[test]
fn cone_properties() {
    let mut rng = RngStream::new(28, 0).generator();
    let x = unit_vector(&mut rng, 5).unwrap();
    let lo = AscentConeSpec::new(0.5, x.clone(), Regularizer::None).unwrap();
    let hi = AscentConeSpec::new(0.9, x.clone(), Regularizer::None).unwrap();
    let sparse = AscentConeSpec::new(0.9, x, Regularizer::L1 { lambda: 0.2 }).unwrap();
    for _ in 0..1000 {
        let h = unit_vector(&mut rng, 5).unwrap();
        let scaled: Vec<f64> = h.iter().map(|v| v * 7.5).collect();
        for spec in [&lo, &hi, &sparse] {
            assert_eq!(cone_contains(spec, &h).unwrap(), cone_contains(spec, &scaled).unwrap());
        }
        if cone_contains(&hi, &h).unwrap() {
            assert!(cone_contains(&lo, &h).unwrap());
        }
        // every ℓ1 cone member respects the (lower-bound) correlation floor
        if cone_contains(&sparse, &h).unwrap() {
            let r = dot(&h, &sparse.direction());
            assert!(r >= sparse.correlation_floor().value - 1e-12);
        }
    }
}

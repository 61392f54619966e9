use anchorreg::anchor::*;
use anchorreg::instance::{NoiseSpec, ProblemInstance};
use anchorreg::linalg::{dot, norm2};
use anchorreg::models::{loss_hessian_vp_at_zero, sample_instance, sigma_star_closed_form, sigma_star_monte_carlo};
use anchorreg::rng::{unit_vector, RngStream};
use anchorreg::{Error, ModelKind};
use rand::seq::index::sample;

fn e1(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v
}

#[test]
fn monte_carlo_sigma_matches_closed_forms() {
    let mut rng = RngStream::new(1, 0).generator();
    let x = unit_vector(&mut rng, 5).unwrap();
    for kind in [ModelKind::Linear, ModelKind::Square, ModelKind::Relu] {
        let exact = sigma_star_closed_form(&kind, &x).unwrap().op_norm();
        let mc = sigma_star_monte_carlo(&kind, &x, 100_000, &mut rng).unwrap().op_norm();
        assert!((mc / exact - 1.0).abs() < 0.05, "{kind:?}: {mc} vs {exact}");
    }
}

#[test]
fn square_hessian_rayleigh_quotient_near_six() {
    let x = e1(8);
    let inst = sample_instance(&ModelKind::Square, &x, 100_000, &NoiseSpec::None, RngStream::new(2, 0)).unwrap();
    let hv = loss_hessian_vp_at_zero(&inst, &x).unwrap();
    let rq = -dot(&x, &hv);
    assert!((rq / 6.0 - 1.0).abs() < 0.05, "{rq}");
    assert_eq!(loss_hessian_vp_at_zero(&inst, &[0.0; 8]).unwrap(), vec![0.0; 8]);
}

#[test]
fn gradient_anchor_quality_at_large_m() {
    for (kind, seed) in [(ModelKind::Linear, 3), (ModelKind::Relu, 4)] {
        let mut rng = RngStream::new(seed, 0).generator();
        let x = unit_vector(&mut rng, 10).unwrap();
        let inst = sample_instance(&kind, &x, 100_000, &NoiseSpec::None, RngStream::new(seed, 1)).unwrap();
        let a = anchor_from_gradient(&inst).unwrap();
        assert!(a.delta_hat.unwrap() >= 0.99, "{kind:?}: {:?}", a.delta_hat);
    }
}

#[test]
fn hessian_anchor_quality_at_n_log_n() {
    let n = 32;
    let m = (32.0 * 10.0 * 32f64.ln()).round() as usize;
    let mut good = 0;
    for t in 0..50 {
        let stream = RngStream::for_trial(5, 0, t);
        let x = unit_vector(&mut stream.child(1).generator(), n).unwrap();
        let inst = sample_instance(&ModelKind::Square, &x, m, &NoiseSpec::None, stream.child(2)).unwrap();
        let a = anchor_from_hessian(&inst, PowerIterationSettings::default()).unwrap();
        if anchor_quality(&a.a0, &x).unwrap().abs() >= 0.7 {
            good += 1;
        }
    }
    assert!(good >= 45, "{good}/50");
}

#[test]
fn hessian_anchor_on_expected_operator() {
    // rows ±√3 e₁ and unit rows elsewhere with y chosen so that the empirical
    // operator is exactly diag(6, 2, …, 2)
    let n = 4;
    let mut rows = vec![];
    let mut y = vec![];
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        rows.push(a);
        y.push(if i == 0 { 3.0 } else { 1.0 });
    }
    let inst = ProblemInstance::from_rows(ModelKind::Square, n, &rows, y).unwrap();
    // −∇²R(0) = (2/M) Σ y_m a_m a_mᵀ = diag(6, 2, 2, 2)/2 with M = 4
    let r = anchor_from_hessian(&inst, PowerIterationSettings::default()).unwrap();
    assert!((r.a0[0].abs() - 1.0).abs() < 1e-6, "{:?}", r.a0);
    assert!((r.diagnostics.eigenvalue.unwrap() - 1.5).abs() < 1e-6);
    let s = anchor_sparse_threshold(&inst, 1, PowerIterationSettings::default()).unwrap();
    assert_eq!(s.diagnostics.support.as_deref(), Some(&[0usize][..]));
    assert!((s.a0[0].abs() - 1.0).abs() < 1e-12);
}

#[test]
fn zero_data_is_degenerate() {
    let x = vec![0.0; 5];
    let inst = sample_instance(&ModelKind::Square, &x, 40, &NoiseSpec::None, RngStream::new(6, 0)).unwrap();
    assert!(matches!(
        anchor_from_hessian(&inst, PowerIterationSettings::default()),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn davis_kahan_bound_holds_on_square_instances() {
    let n = 16;
    for t in 0..20 {
        let stream = RngStream::for_trial(7, 0, t);
        let x = unit_vector(&mut stream.child(1).generator(), n).unwrap();
        let inst = sample_instance(&ModelKind::Square, &x, 2048, &NoiseSpec::None, stream.child(2)).unwrap();
        let a = anchor_from_hessian(&inst, PowerIterationSettings::default()).unwrap();
        // spectral norm of the deviation from the population operator by
        // power iteration on (H_emp − H)²
        let dev = |v: &[f64]| {
            let mut hv = loss_hessian_vp_at_zero(&inst, v).unwrap();
            hv.iter_mut().for_each(|z| *z = -*z);
            let pop = square_population_neg_hessian(&x, v);
            hv.iter().zip(&pop).map(|(a, b)| a - b).collect::<Vec<f64>>()
        };
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut norm = 0.0;
        for _ in 0..300 {
            let w = dev(&dev(&v));
            let wn = norm2(&w);
            norm = wn.sqrt();
            v = w.iter().map(|z| z / wn).collect();
        }
        let bound = davis_kahan_quality_bound(norm, 4.0).unwrap();
        let realized = projector_deviation(&a.a0, &x).unwrap();
        assert!(realized <= bound * 1.01 + 1e-9, "trial {t}: {realized} > {bound}");
    }
}

#[test]
fn sparse_threshold_finds_support() {
    let (n, s, m) = (64, 3, 400);
    let mut hits = 0;
    for t in 0..50 {
        let stream = RngStream::for_trial(8, 0, t);
        let mut rng = stream.child(1).generator();
        let mut x = vec![0.0; n];
        let support = sample(&mut rng, n, s).into_vec();
        for &i in &support {
            x[i] = 1.0 / (s as f64).sqrt();
        }
        let inst = sample_instance(&ModelKind::Square, &x, m, &NoiseSpec::None, stream.child(2)).unwrap();
        let a = anchor_sparse_threshold(&inst, s, PowerIterationSettings::default()).unwrap();
        let found = a.diagnostics.support.unwrap();
        if support.iter().all(|i| found.contains(i)) {
            hits += 1;
        }
    }
    assert!(hits >= 40, "{hits}/50");
}

#[test]
fn full_support_threshold_agrees_with_hessian_anchor() {
    let mut rng = RngStream::new(9, 0).generator();
    let x = unit_vector(&mut rng, 12).unwrap();
    let inst = sample_instance(&ModelKind::Square, &x, 300, &NoiseSpec::None, RngStream::new(9, 1)).unwrap();
    let settings = PowerIterationSettings::default();
    let a = anchor_from_hessian(&inst, settings).unwrap();
    let b = anchor_sparse_threshold(&inst, 12, settings).unwrap();
    assert!((dot(&a.a0, &b.a0).abs() - 1.0).abs() < 1e-6);
}

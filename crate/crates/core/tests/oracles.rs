use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use topeq_core::bounded_solver::{bounded_linear, bounded_nonlinear, LinearOptions, NonlinearOptions};
use topeq_core::conjugacy::{verify_equivalence, verify_flow_identity, Fault, SolutionSample};
use topeq_core::dichotomy::green;
use topeq_core::lin_sys::{solution_residual, trajectory, vec_norm};
use topeq_core::scenarios::{bisect_fixed_point, oracle_scalar_fixed_point};
use topeq_core::{
    make_scenario, ConjugacyEngine, Dichotomy, DichotomyCertificate, LinearSystem, Perturbation, Sampler, Tolerances,
    Window,
};

/// Root of z/2 − 0.1 sin z = 1, from a Newton solve outside this crate.
const SINE_ROOT: f64 = 2.165646494384257;

fn w(a: i64, b: i64) -> Window {
    Window::new(a, b).unwrap()
}

fn newton(mut z: f64) -> f64 {
    for _ in 0..60 {
        z -= (z / 2.0 - 0.1 * z.sin() - 1.0) / (0.5 - 0.1 * z.cos());
    }
    z
}

fn half_system(window: Window) -> Dichotomy {
    let sys = LinearSystem::constant(DMatrix::from_element(1, 1, 0.5), window).unwrap();
    let cert = DichotomyCertificate::alpha(DMatrix::identity(1, 1), 1.0, std::f64::consts::LN_2).unwrap();
    Dichotomy::certify(sys, cert, 1e-9).unwrap()
}

#[test]
fn scalar_sine_fixed_point_three_ways() {
    let map = |z: f64| z / 2.0 + 0.1 * z.sin() + 1.0;
    let damped = oracle_scalar_fixed_point(&map, 0.6).unwrap();
    let bisected = bisect_fixed_point(&map, 0.0, 5.0).unwrap();
    assert!((newton(2.0) - SINE_ROOT).abs() <= 1e-15);
    assert!((damped - SINE_ROOT).abs() <= 1e-14);
    assert!((bisected - SINE_ROOT).abs() <= 1e-14);
}

#[test]
fn nonlinear_scalar_solution_is_the_fixed_point() {
    let window = w(-200, 200);
    let dich = half_system(window);
    let q = |_: i64, z: &DVector<f64>| z.map(|v| 0.1 * v.sin() + 1.0);
    let opts = NonlinearOptions { eps: 1e-12, ..Default::default() };
    let sol = bounded_nonlinear(&dich, &q, &|_| 1.1, &|_| 0.1, &opts).unwrap();
    for n in window.interior().indices() {
        assert!((sol.values[window.pos(n)][0] - SINE_ROOT).abs() <= 1e-8, "n = {n}");
    }
}

#[test]
fn constant_forcing_on_split_system() {
    let window = w(-200, 200);
    let s = make_scenario("const_alpha", &BTreeMap::new(), window).unwrap();
    let dich = Dichotomy::certify(s.sys, s.cert, 1e-9).unwrap();
    let sol = bounded_linear(&dich, &|_| DVector::from_vec(vec![1.0, 1.0]), &LinearOptions::default()).unwrap();
    for n in window.interior().indices() {
        let z = &sol.values[window.pos(n)];
        assert!((z[0] - 2.0).abs() <= 1e-10 && (z[1] + 1.0).abs() <= 1e-10, "n = {n}: {z}");
    }
}

#[test]
fn chi_against_a_linear_system_is_the_green_sum() {
    let window = w(-30, 30);
    let s = make_scenario("paper_diag", &BTreeMap::new(), window).unwrap();
    let dich = Dichotomy::certify(s.sys.clone(), s.cert.clone(), 1e-9).unwrap();
    let e = ConjugacyEngine::new(dich, s.f.clone(), Perturbation::zero(2), 1e-12).unwrap();
    let xi = DVector::from_vec(vec![0.3, -0.7]);
    let m = 4;
    let x = trajectory(&s.sys, &s.f, m, &xi).unwrap();
    let chi = e.chi_solution(m, &xi).unwrap();
    for n in window.interior().indices() {
        let mut sum = DVector::zeros(2);
        for k in window.n_min..window.n_max {
            sum -= green(&s.sys, &s.cert, n, k + 1).unwrap() * s.f.eval(k, &x[window.pos(k)]);
        }
        assert!(vec_norm(&(&chi.values[window.pos(n)] - sum)) <= 1e-9, "n = {n}");
    }
}

#[test]
fn zero_perturbations_give_the_identity() {
    let s = make_scenario("const_alpha", &BTreeMap::new(), w(-30, 30)).unwrap();
    let dich = Dichotomy::certify(s.sys, s.cert, 1e-9).unwrap();
    let e = ConjugacyEngine::with_default_eps(dich, Perturbation::zero(2), Perturbation::zero(2)).unwrap();
    let mut sampler = Sampler::new(1);
    for (n, xi) in sampler.points(20, w(-24, 24), 2, 2.0) {
        assert_eq!(e.h_map(n, &xi).unwrap(), xi);
        assert_eq!(e.l_map(n, &xi).unwrap(), xi);
    }
}

#[test]
fn harmonic_diagonal_passes_at_default_tolerances() {
    let window = w(-40, 40);
    let s = make_scenario("paper_diag", &BTreeMap::new(), window).unwrap();
    let dich = Dichotomy::certify(s.sys.clone(), s.cert.clone(), 1e-9).unwrap();
    let e = ConjugacyEngine::with_default_eps(dich, s.f.clone(), s.g.clone()).unwrap();
    let mut sampler = Sampler::new(2);
    let inner = window.interior();
    let points = sampler.points(10, inner, 2, 1.0);
    let solutions = sampler.solutions(3, inner, 2, 1.0, 4);
    let tol = Tolerances { round_trip: 1e-6, residual: 1e-6 };
    let rep = verify_equivalence(&e, &solutions, &points, tol).unwrap();
    assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());

    // Independent residual: map a solution of the f-system through H and
    // evaluate the g-system recurrence on the result.
    let xi = DVector::from_vec(vec![0.2, 0.5]);
    let x = trajectory(&s.sys, &s.f, 0, &xi).unwrap();
    let lo = inner.n_min;
    let mapped: Vec<DVector<f64>> = (lo..=inner.n_max).map(|n| e.h_map(n, &x[window.pos(n)]).unwrap()).collect();
    let sub = s.sys.with_window(w(lo, inner.n_max)).unwrap();
    assert!(solution_residual(&sub, &s.g, &mapped).unwrap() <= 1e-6);

    let flows = sampler.flow_samples(10, inner, 2, 1.0, 5);
    let flow = verify_flow_identity(&e, &flows, 1e-7).unwrap();
    assert!(flow.passed());
}

#[test]
fn corrupted_h_is_flagged() {
    let window = w(-30, 30);
    let s = make_scenario("paper_diag", &BTreeMap::new(), window).unwrap();
    let dich = Dichotomy::certify(s.sys, s.cert, 1e-9).unwrap();
    let e = ConjugacyEngine::with_default_eps(dich, s.f, s.g).unwrap().with_fault(Fault { n: 2, offset: 0.1 });
    let sample = SolutionSample { m: 0, start: DVector::from_vec(vec![0.1, 0.1]), span: 4 };
    let rep = verify_equivalence(&e, &[sample], &[], Tolerances::default()).unwrap();
    let worst = rep.max_measured("solution_map_h").unwrap();
    assert!(worst >= 0.01, "{worst}");
    assert!(!rep.passed());
}

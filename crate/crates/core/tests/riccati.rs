mod common;

use common::*;
use mflq::model::{benchmarks, derived_weights, ProblemParts, ScalarCoefficients};
use mflq::riccati::{
    algebraic_pair, are_residual, classify_solution, solve_are, solve_dre, AreCoefficients,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn p0_matches_exponential(p: &mflq::ProblemData, horizon: f64, steps: usize) -> (f64, f64) {
    let path = solve_dre(p, horizon, steps).unwrap();
    let want_p = dre_by_exponential(p.a(), p.b(), p.r(), p.q(), p.rho(), horizon);
    let q_bar = derived_weights(p).q_bar;
    let want_pi = dre_by_exponential(&p.a_plus_g(), p.b(), p.r(), &q_bar, p.rho(), horizon);
    ((path.p0() - want_p).amax(), (path.pi0() - want_pi).amax())
}

#[test]
fn scalar_p0_against_exponential() {
    // inside the existence interval of the scalar benchmark
    let (dp, dpi) = p0_matches_exponential(&benchmarks::scalar(), 2.5, 2500);
    assert!(dp < 1e-8, "{dp}");
    assert!(dpi < 1e-8, "{dpi}");
}

#[test]
fn random_planar_p0_against_exponential() {
    for seed in 0..5 {
        let (dp, dpi) = p0_matches_exponential(&random_planar(seed), 2.0, 4000);
        assert!(dp < 1e-8, "seed {seed}: {dp}");
        assert!(dpi < 1e-8, "seed {seed}: {dpi}");
    }
}

#[test]
fn whole_path_against_exponential() {
    let p = benchmarks::planar();
    let path = solve_dre(&p, 5.0, 2000).unwrap();
    for k in (0..=2000).step_by(250) {
        let tau = 5.0 - path.grid.t(k);
        let want = dre_by_exponential(p.a(), p.b(), p.r(), p.q(), p.rho(), tau);
        assert!((&path.p[k] - want).amax() < 1e-8);
    }
}

#[test]
fn pi_equals_p_plus_k() {
    for (p, t, m) in [(benchmarks::scalar(), 2.5, 2500), (benchmarks::planar(), 10.0, 4000)] {
        let path = solve_dre(&p, t, m).unwrap();
        assert!(path.k_identity_defect <= 1e-8, "{}", path.k_identity_defect);
    }
}

#[test]
fn long_horizon_settles_at_algebraic_solution() {
    let p = benchmarks::planar();
    let path = solve_dre(&p, 50.0, 5000).unwrap();
    let (own, pi) = algebraic_pair(&p).unwrap();
    assert!((path.p0() - &own.x).amax() < 1e-6);
    assert!((path.pi0() - &pi.x).amax() < 1e-6);
}

#[test]
fn benchmark_roots() {
    let (own, pi) = algebraic_pair(&benchmarks::scalar()).unwrap();
    assert!((own.x[(0, 0)] - max_root(0.8, 1.0, -0.1, 0.6)).abs() < 1e-12);
    assert!((pi.x[(0, 0)] - max_root(0.6, 1.0, -0.064, 0.6)).abs() < 1e-12);
}

fn scalar_strategy() -> impl Strategy<Value = (f64, f64, f64, f64, f64)> {
    (-2.0..2.0f64, 0.2..2.0f64, -1.0..2.0f64, 0.3..3.0f64, 0.1..1.5f64)
        .prop_filter("imaginary-axis free", |&(a, b, q, r, rho)| {
            (a - rho / 2.0).powi(2) + b * b / r * q > 1e-3
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalar_solver_matches_quadratic_formula((a, b, q, r, rho) in scalar_strategy()) {
        let c = AreCoefficients {
            a_eff: DMatrix::from_element(1, 1, a),
            s: DMatrix::from_element(1, 1, b * b / r),
            q_eff: DMatrix::from_element(1, 1, q),
            rho,
        };
        let sol = solve_are(&c).unwrap();
        let want = max_root(a, b * b / r, q, rho);
        prop_assert!((sol.x[(0, 0)] - want).abs() <= 1e-10 * want.abs().max(1.0));
        prop_assert_eq!(sol.is_rho_stabilizing, a - b * b * want / r - rho / 2.0 < 0.0);
        prop_assert_eq!(classify_solution(&sol, &c).maximal, Some(true));
    }

    #[test]
    fn planar_solutions_are_symmetric_and_solve(seed in 0u64..10_000) {
        let p = random_planar(seed);
        if let Ok((own, pi)) = algebraic_pair(&p) {
            for (sol, c) in [(&own, AreCoefficients::own(&p)), (&pi, AreCoefficients::aggregate(&p))] {
                prop_assert!((&sol.x - sol.x.transpose()).amax() < 1e-9);
                let res = are_residual(&sol.x, &c.a_eff, &c.s, &c.q_eff, c.rho);
                prop_assert!(res < 1e-8 * sol.x.norm().max(1.0), "residual {}", res);
            }
        }
    }

    #[test]
    fn dre_solution_symmetric(seed in 0u64..10_000) {
        let p = random_planar(seed);
        if let Ok(path) = solve_dre(&p, 1.0, 400) {
            for m in path.p.iter().chain(&path.pi) {
                prop_assert!((m - m.transpose()).amax() < 1e-12);
            }
        }
    }
}

#[test]
fn positive_q_gives_positive_root() {
    let p = ProblemParts::scalar(ScalarCoefficients {
        a: 1.3,
        q: 0.5,
        rho: 0.4,
        ..Default::default()
    })
    .validate()
    .unwrap();
    let (own, _) = algebraic_pair(&p).unwrap();
    assert!(own.x[(0, 0)] > 0.0);
    assert!(own.is_rho_stabilizing);
}

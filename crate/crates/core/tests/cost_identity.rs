mod common;

use mflq::control::{centralized_law_finite, decentralized_law_finite};
use mflq::cost::analytic_social_cost;
use mflq::meanfield::finite_mean_field;
use mflq::model::{benchmarks, ProblemData};
use mflq::riccati::solve_dre;
use mflq::simulator::{simulate, SimulationConfig};

fn identity_z(p: &ProblemData, horizon: f64, steps: usize, agents: usize, reps: usize) -> f64 {
    let path = solve_dre(p, horizon, steps).unwrap();
    let mf = finite_mean_field(p, &path).unwrap();
    let law = decentralized_law_finite(p, &path, &mf).unwrap();
    let res = simulate(p, &law, &SimulationConfig::new(agents, horizon, steps, reps, 17)).unwrap();
    let analytic = analytic_social_cost(p, &path, agents, res.epsilon_hat).unwrap();
    let se = (res.j_soc_se.powi(2) + (agents as f64 * res.epsilon_se).powi(2)).sqrt();
    (res.j_soc_mean - analytic.total) / se
}

#[test]
fn scalar_cost_identity_inside_existence_interval() {
    let z = identity_z(&benchmarks::scalar(), 2.5, 4000, 30, 400);
    assert!(z.abs() < 3.0, "z = {z}");
}

#[test]
fn planar_cost_identity() {
    let z = identity_z(&benchmarks::planar(), 5.0, 4000, 30, 400);
    assert!(z.abs() < 3.0, "z = {z}");
}

#[test]
fn decentralized_not_better_than_centralized() {
    let p = benchmarks::scalar();
    let path = solve_dre(&p, 2.5, 2500).unwrap();
    let mf = finite_mean_field(&p, &path).unwrap();
    let cfg = SimulationConfig::new(10, 2.5, 2500, 200, 5);
    let dec = simulate(&p, &decentralized_law_finite(&p, &path, &mf).unwrap(), &cfg).unwrap();
    let cen = simulate(&p, &centralized_law_finite(&p, &path, &mf).unwrap(), &cfg).unwrap();
    let se = (dec.j_soc_se.powi(2) + cen.j_soc_se.powi(2)).sqrt();
    assert!(dec.j_soc_mean >= cen.j_soc_mean - 3.0 * se);
}

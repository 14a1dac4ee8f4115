//! Euler–Maruyama Monte Carlo for the N-agent system
//!
//!   dx_i = (A x_i + G x^(N) + B u_i + f) dt + σ dW_i,
//!
//! with one scalar Brownian motion per agent.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::control::{ControlLaw, GainPath};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::linalg;
use crate::model::ProblemData;

#[derive(Debug, Clone, Serialize)]
pub struct SimulationConfig {
    pub agents: usize,
    pub horizon: f64,
    pub steps: usize,
    pub replications: usize,
    pub seed: u64,
    /// Number of agents of replication 0 whose paths are kept.
    pub record_agents: usize,
}

impl SimulationConfig {
    pub fn new(agents: usize, horizon: f64, steps: usize, replications: usize, seed: u64) -> Self {
        SimulationConfig {
            agents,
            horizon,
            steps,
            replications,
            seed,
            record_agents: 0,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.steps)
    }

    fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.replications == 0 {
            return Err(Error::InvalidArgument(
                "agents and replications must be at least 1".into(),
            ));
        }
        self.grid().map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerTimeStats {
    pub times: Vec<f64>,
    pub xbar: Vec<Vec<f64>>,
    /// Mean over replications of x^(N)(t).
    pub xn_mean: Vec<Vec<f64>>,
    /// Mean over replications of ‖x^(N)(t) − x̄(t)‖².
    pub deviation: Vec<f64>,
}

/// Paths of the first few agents of replication 0, `values[k][i][j]`.
#[derive(Debug, Clone, Serialize)]
pub struct SamplePaths {
    pub agents: usize,
    pub values: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub agents: usize,
    pub replications: usize,
    pub j_soc_mean: f64,
    pub j_soc_se: f64,
    pub consistency_sup: f64,
    pub consistency_int: f64,
    pub consistency_int_se: f64,
    pub epsilon_hat: f64,
    pub epsilon_se: f64,
    /// Set for infinite-horizon laws when the truncated tail may matter.
    pub tail_flag: Option<bool>,
    #[serde(skip)]
    pub per_time: PerTimeStats,
    #[serde(skip)]
    pub samples: Option<SamplePaths>,
    #[serde(skip)]
    pub replication_costs: Vec<f64>,
}

/// All states and controls of one replication, indexed
/// `states[(k·N + i)·n + j]`, `controls[(k·N + i)·r + j]`.
#[derive(Debug, Clone)]
pub struct Trajectories {
    pub grid: TimeGrid,
    pub agents: usize,
    pub n: usize,
    pub r: usize,
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
}

impl Trajectories {
    pub fn state(&self, k: usize, i: usize) -> DVector<f64> {
        let off = (k * self.agents + i) * self.n;
        DVector::from_column_slice(&self.states[off..off + self.n])
    }

    pub fn control(&self, k: usize, i: usize) -> DVector<f64> {
        let off = (k * self.agents + i) * self.r;
        DVector::from_column_slice(&self.controls[off..off + self.r])
    }

    pub fn average(&self) -> Vec<DVector<f64>> {
        (0..self.grid.len())
            .map(|k| {
                (0..self.agents).fold(DVector::zeros(self.n), |acc, i| acc + self.state(k, i))
                    / self.agents as f64
            })
            .collect()
    }
}

pub(crate) struct ReplicationOutput {
    pub cost: f64,
    pub epsilon: f64,
    pub consistency_int: f64,
    pub deviation: Vec<f64>,
    pub xn: Vec<f64>,
    pub terminal_second_moment: f64,
    pub samples: Option<Vec<Vec<Vec<f64>>>>,
    pub trajectories: Option<Trajectories>,
}

const TAG_INIT: u64 = 1;
const TAG_NOISE: u64 = 2;

/// Independent stream for (seed, replication, agent, purpose); adding
/// agents or replications never shifts an existing stream.
pub fn stream(seed: u64, replication: u64, agent: u64, tag: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    key[16..24].copy_from_slice(&agent.to_le_bytes());
    key[24..].copy_from_slice(&tag.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

#[inline]
fn matvec_add(m: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate().take(rows) {
        let row = &m[i * cols..(i + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

#[inline]
fn quad(m: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut acc = 0.0;
    for i in 0..d {
        let row = &m[i * d..(i + 1) * d];
        acc += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    acc
}

/// Per-step data sampled once on the grid.
struct Tables {
    f: Vec<f64>,
    eta: Vec<f64>,
    sigma: Vec<f64>,
    xbar: Vec<f64>,
    gap: Option<Vec<f64>>,
}

fn tables(p: &ProblemData, law: &ControlLaw) -> Tables {
    let grid = law.grid;
    let flat = |sig: &crate::model::Signal| -> Vec<f64> {
        grid.times().flat_map(|t| sig.at(t).iter().copied().collect::<Vec<_>>()).collect()
    };
    // ‖BᵀK d‖²_{R⁻¹} = dᵀ (K S K) d
    let gap = law.gap_weight.as_ref().map(|k: &GainPath| {
        (0..grid.len())
            .flat_map(|i| {
                let kk = k.at(i);
                row_major(&(kk.transpose() * p.control_weight() * kk))
            })
            .collect()
    });
    Tables {
        f: flat(p.f()),
        eta: flat(p.eta()),
        sigma: flat(p.sigma()),
        xbar: law.reference.iter().flat_map(|v| v.iter().copied().collect::<Vec<_>>()).collect(),
        gap,
    }
}

/// One replication; `record` keeps every state and control.
pub(crate) fn simulate_replication(
    p: &ProblemData,
    law: &ControlLaw,
    cfg: &SimulationConfig,
    rep: usize,
    record: bool,
) -> Result<ReplicationOutput> {
    let flat = law.flatten();
    let tabs = tables(p, law);
    let chol = linalg::psd_sqrt(p.init_cov(), "init_cov")?;
    run_replication(p, law, &flat, &tabs, &chol, cfg, rep, record)
}

#[allow(clippy::too_many_arguments)]
fn run_replication(
    p: &ProblemData,
    law: &ControlLaw,
    flat: &crate::control::FlatLaw,
    tabs: &Tables,
    chol: &DMatrix<f64>,
    cfg: &SimulationConfig,
    rep: usize,
    record: bool,
) -> Result<ReplicationOutput> {
    let grid = law.grid;
    let (n, r, big_n) = (flat.n, flat.r, cfg.agents);
    let h = grid.step();
    let sqrt_h = h.sqrt();
    let rho = p.rho();

    let a = row_major(p.a());
    let b = row_major(p.b());
    let g = row_major(p.g());
    let q = row_major(p.q());
    let rm = row_major(p.r());
    let gamma = row_major(p.gamma());
    let chol = row_major(chol);

    let mut x = vec![0.0; big_n * n];
    let mut noise = Vec::with_capacity(big_n);
    let mut z = vec![0.0; n];
    for i in 0..big_n {
        let mut rng = stream(cfg.seed, rep as u64, i as u64, TAG_INIT);
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let xi = &mut x[i * n..(i + 1) * n];
        xi.copy_from_slice(p.init_mean().as_slice());
        matvec_add(&chol, n, n, &z, xi);
        noise.push(stream(cfg.seed, rep as u64, i as u64, TAG_NOISE));
    }

    let keep = if rep == 0 { cfg.record_agents.min(big_n) } else { 0 };
    let mut samples = (keep > 0).then(|| Vec::with_capacity(grid.len()));
    let mut traj = record.then(|| Trajectories {
        grid,
        agents: big_n,
        n,
        r,
        states: Vec::with_capacity(grid.len() * big_n * n),
        controls: Vec::with_capacity(grid.len() * big_n * r),
    });

    let mut xn = vec![0.0; n];
    let mut xn_all = Vec::with_capacity(grid.len() * n);
    let mut deviation = Vec::with_capacity(grid.len());
    let (mut cost, mut eps, mut cons) = (0.0, 0.0, 0.0);
    let mut dev = vec![0.0; n];
    let mut common_u = vec![0.0; r];
    let mut target = vec![0.0; n];
    let mut common_drift = vec![0.0; n];
    let mut u = vec![0.0; r];
    let mut y = vec![0.0; n];
    let mut drift = vec![0.0; n];

    for k in 0..grid.len() {
        let t = grid.t(k);
        xn.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..big_n {
            for j in 0..n {
                xn[j] += x[i * n + j];
            }
        }
        xn.iter_mut().for_each(|v| *v /= big_n as f64);
        xn_all.extend_from_slice(&xn);
        let xbar = &tabs.xbar[k * n..(k + 1) * n];
        for j in 0..n {
            dev[j] = xn[j] - xbar[j];
        }
        let dev_sq: f64 = dev.iter().map(|v| v * v).sum();
        deviation.push(dev_sq);
        if let Some(s) = samples.as_mut() {
            s.push((0..keep).map(|i| x[i * n..(i + 1) * n].to_vec()).collect::<Vec<_>>());
        }

        // u_i = own·x_i + common; common = bias (+ agg·x^(N) when live)
        common_u.copy_from_slice(&flat.bias[k * r..(k + 1) * r]);
        if flat.live {
            matvec_add(&flat.agg[k * r * n..(k + 1) * r * n], r, n, &xn, &mut common_u);
        }
        let own = &flat.own[k * r * n..(k + 1) * r * n];

        if k == grid.steps() {
            if let Some(tr) = traj.as_mut() {
                tr.states.extend_from_slice(&x);
                for i in 0..big_n {
                    u.copy_from_slice(&common_u);
                    matvec_add(own, r, n, &x[i * n..(i + 1) * n], &mut u);
                    tr.controls.extend_from_slice(&u);
                }
            }
            break;
        }

        let weight = (-rho * t).exp() * h;
        cons += weight * dev_sq;
        if let Some(gap) = &tabs.gap {
            eps += weight * quad(&gap[k * n * n..(k + 1) * n * n], &dev);
        }

        // Γx^(N) + η and G x^(N) + f are shared by all agents
        target.copy_from_slice(&tabs.eta[k * n..(k + 1) * n]);
        matvec_add(&gamma, n, n, &xn, &mut target);
        common_drift.copy_from_slice(&tabs.f[k * n..(k + 1) * n]);
        matvec_add(&g, n, n, &xn, &mut common_drift);
        let sigma = &tabs.sigma[k * n..(k + 1) * n];

        if let Some(tr) = traj.as_mut() {
            tr.states.extend_from_slice(&x);
        }
        let mut running = 0.0;
        for i in 0..big_n {
            let xi = &mut x[i * n..(i + 1) * n];
            u.copy_from_slice(&common_u);
            matvec_add(own, r, n, xi, &mut u);
            for j in 0..n {
                y[j] = xi[j] - target[j];
            }
            running += quad(&q, &y) + quad(&rm, &u);

            drift.copy_from_slice(&common_drift);
            matvec_add(&a, n, n, xi, &mut drift);
            matvec_add(&b, n, r, &u, &mut drift);
            let dw: f64 = noise[i].sample::<f64, _>(StandardNormal) * sqrt_h;
            for j in 0..n {
                xi[j] += drift[j] * h + sigma[j] * dw;
            }
            if let Some(tr) = traj.as_mut() {
                tr.controls.extend_from_slice(&u);
            }
        }
        cost += weight * running;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState {
                step: k + 1,
                time: grid.t(k + 1),
            });
        }
    }

    let terminal_second_moment = x.iter().map(|v| v * v).sum::<f64>();
    Ok(ReplicationOutput {
        cost,
        epsilon: eps,
        consistency_int: cons,
        deviation,
        xn: xn_all,
        terminal_second_moment,
        samples,
        trajectories: traj,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Mean and standard error of per-replication social costs.
pub fn social_cost_mc(costs: &[f64]) -> (f64, f64) {
    mean_se(costs)
}

/// Σ_i ∫ e^{−ρt}(‖x_i − Γx^(N) − η‖²_Q + ‖u_i‖²_R) dt by left-endpoint
/// quadrature on recorded trajectories.
pub fn trajectory_cost(p: &ProblemData, tr: &Trajectories) -> f64 {
    let h = tr.grid.step();
    let avg = tr.average();
    let mut total = 0.0;
    for (k, xn) in avg.iter().enumerate().take(tr.grid.steps()) {
        let t = tr.grid.t(k);
        let target = p.gamma() * xn + p.eta().at(t);
        let mut running = 0.0;
        for i in 0..tr.agents {
            let y = tr.state(k, i) - &target;
            let u = tr.control(k, i);
            running += linalg::quad_form(&y, p.q()) + linalg::quad_form(&u, p.r());
        }
        total += (-p.rho() * t).exp() * h * running;
    }
    total
}

/// (max_k mean ‖x^(N) − x̄‖², mean ∫e^{−ρt}‖x^(N) − x̄‖²dt) over the given
/// replications of the empirical average.
pub fn consistency_error(
    averages: &[Vec<DVector<f64>>],
    xbar: &[DVector<f64>],
    grid: &TimeGrid,
    rho: f64,
) -> (f64, f64) {
    let reps = averages.len() as f64;
    let h = grid.step();
    let mut sup = 0.0f64;
    let mut int = 0.0;
    for k in 0..grid.len() {
        let mean = averages.iter().map(|a| (&a[k] - &xbar[k]).norm_squared()).sum::<f64>() / reps;
        sup = sup.max(mean);
        if k < grid.steps() {
            int += (-rho * grid.t(k)).exp() * h * mean;
        }
    }
    (sup, int)
}

/// Mean over replications of ∫e^{−ρt}‖BᵀK(x^(N) − x̄)‖²_{R⁻¹}dt.
pub fn gap_epsilon(
    averages: &[Vec<DVector<f64>>],
    k_path: &GainPath,
    xbar: &[DVector<f64>],
    p: &ProblemData,
    grid: &TimeGrid,
) -> f64 {
    let reps = averages.len() as f64;
    let h = grid.step();
    let mut total = 0.0;
    for a in averages {
        for k in 0..grid.steps() {
            let d = &a[k] - &xbar[k];
            let w = p.b().transpose() * k_path.at(k) * d;
            total += (-p.rho() * grid.t(k)).exp() * h * linalg::quad_form(&w, p.r_inv());
        }
    }
    total / reps
}

fn check_grid(law: &ControlLaw, cfg: &SimulationConfig) -> Result<()> {
    cfg.validate()?;
    law.grid.ensure_same(&cfg.grid()?, "law grid vs simulation config")
}

/// Runs all replications with the default execution (parallel when the
/// `parallel` feature is on).
pub fn simulate(p: &ProblemData, law: &ControlLaw, cfg: &SimulationConfig) -> Result<SimulationResult> {
    simulate_with(p, law, cfg, Execution::default())
}

pub fn simulate_with(
    p: &ProblemData,
    law: &ControlLaw,
    cfg: &SimulationConfig,
    exec: Execution,
) -> Result<SimulationResult> {
    check_grid(law, cfg)?;
    let flat = law.flatten();
    let tabs = tables(p, law);
    let chol = linalg::psd_sqrt(p.init_cov(), "init_cov")?;
    let one = |rep: usize| run_replication(p, law, &flat, &tabs, &chol, cfg, rep, false);

    let outputs: Vec<ReplicationOutput> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..cfg.replications).into_par_iter().map(one).collect::<Result<_>>()?
        }
        _ => (0..cfg.replications).map(one).collect::<Result<_>>()?,
    };
    Ok(reduce(p, law, cfg, outputs))
}

// Reduction runs in replication order, so the result is independent of how
// the replications were scheduled.
fn reduce(p: &ProblemData, law: &ControlLaw, cfg: &SimulationConfig, outputs: Vec<ReplicationOutput>) -> SimulationResult {
    let grid = law.grid;
    let n = p.state_dim();
    let reps = outputs.len() as f64;
    let costs: Vec<f64> = outputs.iter().map(|o| o.cost).collect();
    let (j_mean, j_se) = mean_se(&costs);
    let (eps, eps_se) = mean_se(&outputs.iter().map(|o| o.epsilon).collect::<Vec<_>>());
    let (cint, cint_se) = mean_se(&outputs.iter().map(|o| o.consistency_int).collect::<Vec<_>>());

    let mut deviation = vec![0.0; grid.len()];
    let mut xn_mean = vec![vec![0.0; n]; grid.len()];
    for o in &outputs {
        for k in 0..grid.len() {
            deviation[k] += o.deviation[k];
            for (acc, v) in xn_mean[k].iter_mut().zip(&o.xn[k * n..(k + 1) * n]) {
                *acc += v;
            }
        }
    }
    deviation.iter_mut().for_each(|v| *v /= reps);
    xn_mean.iter_mut().flatten().for_each(|v| *v /= reps);
    let sup = deviation.iter().copied().fold(0.0, f64::max);

    let tail_flag = matches!(
        law.kind,
        crate::control::LawKind::DecentralizedInfinite | crate::control::LawKind::LegacyFeedback
    )
    .then(|| {
        let m2 = outputs.iter().map(|o| o.terminal_second_moment).sum::<f64>() / reps;
        (-p.rho() * grid.horizon()).exp() * m2 > 1e-6 * j_mean.abs()
    });

    let samples = outputs
        .into_iter()
        .next()
        .and_then(|o| o.samples)
        .map(|values| SamplePaths {
            agents: cfg.record_agents.min(cfg.agents),
            values,
        });

    SimulationResult {
        agents: cfg.agents,
        replications: cfg.replications,
        j_soc_mean: j_mean,
        j_soc_se: j_se,
        consistency_sup: sup,
        consistency_int: cint,
        consistency_int_se: cint_se,
        epsilon_hat: eps,
        epsilon_se: eps_se,
        tail_flag,
        per_time: PerTimeStats {
            times: grid.times().collect(),
            xbar: law.reference.iter().map(|v| v.iter().copied().collect()).collect(),
            xn_mean,
            deviation,
        },
        samples,
        replication_costs: costs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{centralized_law_finite, decentralized_law_finite, decentralized_law_infinite};
    use crate::meanfield::{finite_mean_field, infinite_mean_field};
    use crate::model::{benchmarks, ProblemParts, ScalarCoefficients, Signal};
    use crate::riccati::{algebraic_pair, solve_dre};

    fn infinite_setup(p: &ProblemData, t: f64, m: usize) -> ControlLaw {
        let (own, agg) = algebraic_pair(p).unwrap();
        let mf = infinite_mean_field(p, &agg, t, m).unwrap();
        decentralized_law_infinite(p, &own, &agg, &mf).unwrap()
    }

    #[test]
    fn streams_are_keyed() {
        let mut a = stream(7, 0, 3, TAG_NOISE);
        let mut b = stream(7, 0, 3, TAG_NOISE);
        let mut c = stream(7, 0, 4, TAG_NOISE);
        let (x, y, z): (f64, f64, f64) = (a.random(), b.random(), c.random());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn inline_statistics_match_recorded_trajectories() {
        let p = benchmarks::planar();
        let law = infinite_setup(&p, 4.0, 400);
        let cfg = SimulationConfig::new(5, 4.0, 400, 3, 11);
        let res = simulate_with(&p, &law, &cfg, Execution::Sequential).unwrap();
        let mut avgs = Vec::new();
        let mut costs = Vec::new();
        for rep in 0..3 {
            let out = simulate_replication(&p, &law, &cfg, rep, true).unwrap();
            let tr = out.trajectories.unwrap();
            costs.push(trajectory_cost(&p, &tr));
            avgs.push(tr.average());
        }
        let (mean, _) = social_cost_mc(&costs);
        assert!((mean - res.j_soc_mean).abs() < 1e-9 * mean.abs());
        let (sup, int) = consistency_error(&avgs, &law.reference, &law.grid, p.rho());
        assert!((sup - res.consistency_sup).abs() < 1e-12);
        assert!((int - res.consistency_int).abs() < 1e-12);
        let eps = gap_epsilon(&avgs, law.gap_weight.as_ref().unwrap(), &law.reference, &p, &law.grid);
        assert!((eps - res.epsilon_hat).abs() < 1e-12);
    }

    #[test]
    fn deterministic_collapse_refines() {
        // σ = 0 and a point initial law: every agent follows x̄ up to Euler error
        let mut parts = benchmarks::scalar().to_parts();
        parts.sigma = Signal::zeros(1);
        parts.init_cov = DMatrix::zeros(1, 1);
        let p = parts.validate().unwrap();
        let sup = |m: usize| {
            let law = infinite_setup(&p, 5.0, m);
            let cfg = SimulationConfig::new(3, 5.0, m, 1, 0);
            simulate(&p, &law, &cfg).unwrap().consistency_sup
        };
        let (coarse, fine) = (sup(500), sup(1000));
        assert!(fine < coarse);
        // O(h) state error, squared
        assert!(fine < 0.3 * coarse, "{coarse} {fine}");
        let law = infinite_setup(&p, 5.0, 500);
        let cfg = SimulationConfig::new(3, 5.0, 500, 1, 0);
        assert!(simulate(&p, &law, &cfg).unwrap().epsilon_hat < 1e-6);
    }

    #[test]
    fn zero_state_zero_cost() {
        let p = ProblemParts::scalar(ScalarCoefficients {
            a: -1.0,
            q: 1.0,
            ..Default::default()
        })
        .validate()
        .unwrap();
        let law = infinite_setup(&p, 2.0, 100);
        let cfg = SimulationConfig::new(4, 2.0, 100, 2, 0);
        let res = simulate(&p, &law, &cfg).unwrap();
        assert_eq!(res.j_soc_mean, 0.0);
        assert_eq!(res.j_soc_se, 0.0);
    }

    #[test]
    fn single_agent_full_coupling_pays_control_only() {
        let mut parts = benchmarks::scalar().to_parts();
        parts.gamma = DMatrix::identity(1, 1);
        parts.eta = Signal::zeros(1);
        parts.q = DMatrix::from_element(1, 1, 1.0);
        let p = parts.validate().unwrap();
        let path = solve_dre(&p, 2.0, 200).unwrap();
        let mf = finite_mean_field(&p, &path).unwrap();
        let law = decentralized_law_finite(&p, &path, &mf).unwrap();
        let cfg = SimulationConfig::new(1, 2.0, 200, 1, 5);
        let tr = simulate_replication(&p, &law, &cfg, 0, true).unwrap().trajectories.unwrap();
        let mut energy = 0.0;
        for k in 0..200 {
            let u = tr.control(k, 0);
            energy += (-p.rho() * tr.grid.t(k)).exp() * tr.grid.step() * u.norm_squared();
        }
        assert!((trajectory_cost(&p, &tr) - energy).abs() < 1e-12 * energy.max(1.0));
    }

    #[test]
    fn exchangeable_under_relabeling() {
        // statistics only see the average and sums over agents; relabeling
        // the recorded agents leaves the cost unchanged
        let p = benchmarks::planar();
        let law = infinite_setup(&p, 2.0, 200);
        let cfg = SimulationConfig::new(4, 2.0, 200, 1, 3);
        let tr = simulate_replication(&p, &law, &cfg, 0, true).unwrap().trajectories.unwrap();
        let perm = [2usize, 0, 3, 1];
        let mut shuffled = tr.clone();
        for k in 0..tr.grid.len() {
            for (new, &old) in perm.iter().enumerate() {
                for j in 0..tr.n {
                    shuffled.states[(k * 4 + new) * tr.n + j] = tr.states[(k * 4 + old) * tr.n + j];
                }
                for j in 0..tr.r {
                    shuffled.controls[(k * 4 + new) * tr.r + j] = tr.controls[(k * 4 + old) * tr.r + j];
                }
            }
        }
        let (a, b) = (trajectory_cost(&p, &tr), trajectory_cost(&p, &shuffled));
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn centralized_equals_decentralized_without_noise() {
        let mut parts = benchmarks::planar().to_parts();
        parts.sigma = Signal::zeros(2);
        parts.init_cov = DMatrix::zeros(2, 2);
        let p = parts.validate().unwrap();
        let path = solve_dre(&p, 3.0, 3000).unwrap();
        let mf = finite_mean_field(&p, &path).unwrap();
        let dec = decentralized_law_finite(&p, &path, &mf).unwrap();
        let cen = centralized_law_finite(&p, &path, &mf).unwrap();
        let cfg = SimulationConfig::new(3, 3.0, 3000, 1, 0);
        let a = simulate_replication(&p, &dec, &cfg, 0, true).unwrap().trajectories.unwrap();
        let b = simulate_replication(&p, &cen, &cfg, 0, true).unwrap().trajectories.unwrap();
        let dev = a.states.iter().zip(&b.states).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        // both follow x̄ up to the O(h) Euler/RK4 gap
        assert!(dev < 1e-2, "{dev}");
    }

    #[test]
    fn grid_mismatch_rejected() {
        let p = benchmarks::scalar();
        let law = infinite_setup(&p, 2.0, 100);
        let cfg = SimulationConfig::new(2, 2.0, 200, 1, 0);
        assert!(matches!(simulate(&p, &law, &cfg), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn parallel_matches_sequential() {
        let p = benchmarks::scalar();
        let law = infinite_setup(&p, 3.0, 300);
        let cfg = SimulationConfig::new(6, 3.0, 300, 8, 42);
        let a = simulate_with(&p, &law, &cfg, Execution::Sequential).unwrap();
        let b = simulate_with(&p, &law, &cfg, Execution::Parallel).unwrap();
        assert_eq!(a.j_soc_mean.to_bits(), b.j_soc_mean.to_bits());
        assert_eq!(a.epsilon_hat.to_bits(), b.epsilon_hat.to_bits());
    }
}

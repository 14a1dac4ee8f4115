//! Command-line front end: scenario loading, subcommand dispatch and
//! artifact emission.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::control::{
    centralized_law_finite, decentralized_law_finite, decentralized_law_infinite, legacy_law,
    representation_check, ControlLaw,
};
use crate::cost::{analytic_social_cost, asymptotic_average_optimum, q_infinite};
use crate::diagnostics::stabilization_report;
use crate::error::{Error, Result};
use crate::meanfield::{finite_mean_field, infinite_mean_field, MeanFieldPath};
use crate::model::ProblemData;
use crate::output::{emit_csv, Cell, Table};
use crate::riccati::{algebraic_pair, solve_dre, AlgebraicSolution, FiniteRiccatiPath};
use crate::scenario::{parse_scenario, Horizon, LawChoice, OutputFormat, Scenario};
use crate::simulator::{simulate, SimulationConfig, SimulationResult};

/// Environment variable that overrides the scenario's output directory.
pub const OUT_DIR_ENV: &str = "MFLQ_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Riccati, offset and mean-field tables plus the analytic cost
    Solve,
    /// Stabilization report
    Diagnose,
    /// Monte Carlo run of the configured law
    Simulate,
    /// Monte Carlo runs over the scenario's agent counts
    Sweep,
    /// Co-simulation of the decentralized and fixed-point laws
    Compare,
}

#[derive(Debug, Clone, Parser)]
#[command(name = "mflq", version, about = "Mean-field LQ social control toolkit")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed, overrides the scenario
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of agents, overrides the scenario
    #[arg(long)]
    pub agents: Option<usize>,
    /// Number of time steps, overrides the scenario
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Suppress the summary on stdout
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub seed: Option<u64>,
    pub agents: Option<usize>,
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Scenario with command-line overrides applied.
pub fn resolve(mut sc: Scenario, flags: &Flags) -> Result<Scenario> {
    if let Some(seed) = flags.seed {
        sc.simulation.seed = seed;
    }
    if let Some(n) = flags.agents {
        sc.simulation.agents = n;
    }
    if let Some(m) = flags.steps {
        sc.grid_steps = m;
    }
    if sc.grid_steps < 2 || sc.simulation.agents == 0 {
        return Err(Error::InvalidArgument("steps must be ≥ 2 and agents ≥ 1".into()));
    }
    match sc.outputs.format {
        OutputFormat::Csv => {}
    }
    Ok(sc)
}

fn out_dir(sc: &Scenario, flags: &Flags) -> PathBuf {
    flags
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&sc.outputs.dir))
}

enum Solved {
    Finite {
        path: FiniteRiccatiPath,
        mf: MeanFieldPath,
    },
    Infinite {
        own: AlgebraicSolution,
        pi: AlgebraicSolution,
        mf: MeanFieldPath,
    },
}

impl Solved {
    fn mf(&self) -> &MeanFieldPath {
        match self {
            Solved::Finite { mf, .. } | Solved::Infinite { mf, .. } => mf,
        }
    }
}

fn solve_scenario(p: &ProblemData, sc: &Scenario) -> Result<Solved> {
    match sc.horizon {
        Horizon::Finite(t) => {
            let path = solve_dre(p, t, sc.grid_steps)?;
            let mf = finite_mean_field(p, &path)?;
            Ok(Solved::Finite { path, mf })
        }
        Horizon::Infinite(t) => {
            let (own, pi) = algebraic_pair(p)?;
            let mf = infinite_mean_field(p, &pi, t, sc.grid_steps)?;
            Ok(Solved::Infinite { own, pi, mf })
        }
    }
}

fn build_law(p: &ProblemData, solved: &Solved, choice: LawChoice) -> Result<ControlLaw> {
    match (solved, choice) {
        (Solved::Finite { path, mf }, LawChoice::Decentralized) => decentralized_law_finite(p, path, mf),
        (Solved::Finite { path, mf }, LawChoice::Centralized) => centralized_law_finite(p, path, mf),
        (Solved::Infinite { own, pi, mf }, LawChoice::Decentralized) => decentralized_law_infinite(p, own, pi, mf),
        (Solved::Infinite { .. }, LawChoice::Centralized) => Err(Error::InvalidArgument(
            "the centralized law is only available on a finite horizon".into(),
        )),
    }
}

fn sim_config(sc: &Scenario, agents: usize) -> SimulationConfig {
    SimulationConfig {
        agents,
        horizon: sc.horizon.length(),
        steps: sc.grid_steps,
        replications: sc.simulation.replications,
        seed: sc.simulation.seed,
        record_agents: sc.simulation.record_agents,
    }
}

fn matrix_columns(name: &str, n: usize) -> Vec<String> {
    (1..=n)
        .flat_map(|i| (1..=n).map(move |j| format!("{name}_{i}_{j}")))
        .collect()
}

fn vector_columns(name: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{name}_{i}")).collect()
}

fn matrix_cells(m: &DMatrix<f64>) -> impl Iterator<Item = Cell> + '_ {
    m.row_iter().flat_map(|r| r.iter().map(|v| Cell::Float(*v)).collect::<Vec<_>>())
}

fn vector_cells(v: &DVector<f64>) -> impl Iterator<Item = Cell> + '_ {
    v.iter().map(|x| Cell::Float(*x))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, files: &mut Vec<PathBuf>) -> Result<String> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    let path = dir.join(name);
    fs::write(&path, &text)?;
    files.push(path);
    Ok(text)
}

fn write_table(dir: &Path, name: &str, table: &Table, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    emit_csv(table, &path)?;
    files.push(path);
    Ok(())
}

fn cmd_solve(p: &ProblemData, sc: &Scenario, dir: &Path, files: &mut Vec<PathBuf>) -> Result<String> {
    let n = p.state_dim();
    let solved = solve_scenario(p, sc)?;
    let mf = solved.mf();

    let mut header = vec!["t".to_string()];
    header.extend(matrix_columns("P", n));
    header.extend(matrix_columns("Pi", n));
    header.extend(matrix_columns("K", n));
    header.extend(vector_columns("s", n));
    let mut riccati = Table::new(header);
    for (k, t) in mf.grid.times().enumerate() {
        let (pm, pim): (&DMatrix<f64>, &DMatrix<f64>) = match &solved {
            Solved::Finite { path, .. } => (&path.p[k], &path.pi[k]),
            Solved::Infinite { own, pi, .. } => (&own.x, &pi.x),
        };
        let km = pim - pm;
        let mut row = vec![Cell::Float(t)];
        row.extend(matrix_cells(pm));
        row.extend(matrix_cells(pim));
        row.extend(matrix_cells(&km));
        row.extend(vector_cells(&mf.s[k]));
        riccati.push(row);
    }
    write_table(dir, "riccati.csv", &riccati, files)?;

    let mut header = vec!["t".to_string()];
    header.extend(vector_columns("xbar", n));
    header.extend(vector_columns("s", n));
    let mut mean = Table::new(header);
    for (k, t) in mf.grid.times().enumerate() {
        let mut row = vec![Cell::Float(t)];
        row.extend(vector_cells(&mf.xbar[k]));
        row.extend(vector_cells(&mf.s[k]));
        mean.push(row);
    }
    write_table(dir, "meanfield.csv", &mean, files)?;

    let vec_of = |v: &DVector<f64>| v.iter().copied().collect::<Vec<_>>();
    let report = match &solved {
        Solved::Finite { path, mf } => json!({
            "horizon": "finite",
            "s0": vec_of(&mf.s0),
            "rho_integrable": mf.rho_integrable,
            "k_identity_defect": path.k_identity_defect,
            "refinement_change": path.refinement_change,
            "cost": analytic_social_cost(p, path, sc.simulation.agents, 0.0)?,
        }),
        Solved::Infinite { own, pi, mf } => json!({
            "horizon": "infinite",
            "s0": vec_of(&mf.s0),
            "rho_integrable": mf.rho_integrable,
            "closed_loop_abscissa": mf.closed_loop_abscissa,
            "xbar_limit": mf.xbar_limit.as_ref().map(vec_of),
            "p_rho_stabilizing": own.is_rho_stabilizing,
            "pi_rho_stabilizing": pi.is_rho_stabilizing,
            "q_infinite": q_infinite(p, own, pi, mf)?,
            "asymptotic_average": asymptotic_average_optimum(p, own, pi, mf)?,
        }),
    };
    write_json(dir, "solve.json", &report, files)
}

fn cmd_diagnose(p: &ProblemData, dir: &Path, files: &mut Vec<PathBuf>) -> Result<String> {
    let report = stabilization_report(p)?;
    write_json(dir, "report.json", &report, files)
}

fn summary_row(res: &SimulationResult) -> Vec<Cell> {
    vec![
        Cell::from(res.agents),
        res.j_soc_mean.into(),
        res.j_soc_se.into(),
        res.consistency_sup.into(),
        res.consistency_int.into(),
        res.epsilon_hat.into(),
        res.epsilon_se.into(),
    ]
}

const SUMMARY_HEADER: [&str; 7] = [
    "N",
    "j_soc_mean",
    "j_soc_se",
    "consistency_sup",
    "consistency_int",
    "epsilon_hat",
    "epsilon_se",
];

fn cmd_simulate(p: &ProblemData, sc: &Scenario, dir: &Path, files: &mut Vec<PathBuf>) -> Result<String> {
    let n = p.state_dim();
    let solved = solve_scenario(p, sc)?;
    let law = build_law(p, &solved, sc.simulation.law)?;
    let res = simulate(p, &law, &sim_config(sc, sc.simulation.agents))?;

    let mut header = vec!["t".to_string()];
    header.extend(vector_columns("xbar", n));
    header.extend(vector_columns("xN", n));
    let mut per_time = Table::new(header);
    let stats = &res.per_time;
    for k in 0..stats.times.len() {
        let mut row = vec![Cell::Float(stats.times[k])];
        row.extend(stats.xbar[k].iter().map(|v| Cell::Float(*v)));
        row.extend(stats.xn_mean[k].iter().map(|v| Cell::Float(*v)));
        per_time.push(row);
    }
    write_table(dir, "per_time.csv", &per_time, files)?;

    let mut summary = Table::new(SUMMARY_HEADER);
    summary.push(summary_row(&res));
    write_table(dir, "summary.csv", &summary, files)?;

    if let Some(samples) = &res.samples {
        let mut header = vec!["t".to_string(), "agent".to_string()];
        header.extend(vector_columns("x", n));
        let mut table = Table::new(header);
        for (k, at_t) in samples.values.iter().enumerate() {
            for (i, x) in at_t.iter().enumerate() {
                let mut row = vec![Cell::Float(stats.times[k]), Cell::from(i)];
                row.extend(x.iter().map(|v| Cell::Float(*v)));
                table.push(row);
            }
        }
        write_table(dir, "samples.csv", &table, files)?;
    }
    Ok(format!(
        "N = {}  J_soc = {:.6} ± {:.6}  consistency_int = {:.6e}  epsilon = {:.6e}{}\n",
        res.agents,
        res.j_soc_mean,
        res.j_soc_se,
        res.consistency_int,
        res.epsilon_hat,
        match res.tail_flag {
            Some(true) => "  (truncation tail not negligible)",
            _ => "",
        }
    ))
}

/// Summary table of one simulation per agent count.
pub fn sweep_table(p: &ProblemData, sc: &Scenario, agents: &[usize]) -> Result<Table> {
    let solved = solve_scenario(p, sc)?;
    let law = build_law(p, &solved, sc.simulation.law)?;
    let mut table = Table::new(SUMMARY_HEADER);
    for &n in agents {
        let res = simulate(p, &law, &sim_config(sc, n))?;
        table.push(summary_row(&res));
    }
    Ok(table)
}

fn cmd_sweep(p: &ProblemData, sc: &Scenario, dir: &Path, files: &mut Vec<PathBuf>) -> Result<String> {
    let agents = sc
        .sweep
        .clone()
        .ok_or_else(|| Error::InvalidArgument("scenario has no sweep list".into()))?;
    let table = sweep_table(p, sc, &agents)?;
    write_table(dir, "sweep.csv", &table, files)?;
    let mut buf = Vec::new();
    crate::output::write_csv(&table, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn cmd_compare(p: &ProblemData, sc: &Scenario, dir: &Path, files: &mut Vec<PathBuf>) -> Result<String> {
    let (own, pi) = algebraic_pair(p)?;
    let mf = infinite_mean_field(p, &pi, sc.horizon.length(), sc.grid_steps)?;
    let decentralized = decentralized_law_infinite(p, &own, &pi, &mf)?;
    let (legacy, parts) = legacy_law(p, &own, &mf.grid)?;
    let cfg = sim_config(sc, sc.simulation.agents);
    let rep = representation_check(&decentralized, &legacy, p, &cfg)?;
    let max_gap = |a: &[DVector<f64>], b: &[DVector<f64>]| {
        a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
    };
    let report = json!({
        "kbar_minus_pi_plus_p": (&parts.kbar.x - (&pi.x - &own.x)).amax(),
        "phi_minus_s": max_gap(&parts.phi, &mf.s),
        "xdagger_minus_xbar": max_gap(&parts.x_dagger, &mf.xbar),
        "representation": rep,
    });
    write_json(dir, "compare.json", &report, files)
}

/// Runs one subcommand on a resolved scenario, writing artifacts to the
/// output directory.
pub fn run(cmd: Command, sc: &Scenario, flags: &Flags) -> Result<RunOutput> {
    let sc = resolve(sc.clone(), flags)?;
    let p = sc.build_problem()?;
    let dir = out_dir(&sc, flags);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let summary = match cmd {
        Command::Solve => cmd_solve(&p, &sc, &dir, &mut files)?,
        Command::Diagnose => cmd_diagnose(&p, &dir, &mut files)?,
        Command::Simulate => cmd_simulate(&p, &sc, &dir, &mut files)?,
        Command::Sweep => cmd_sweep(&p, &sc, &dir, &mut files)?,
        Command::Compare => cmd_compare(&p, &sc, &dir, &mut files)?,
    };
    Ok(RunOutput { files, summary })
}

/// One-line JSON error record for the diagnostic stream.
pub fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

/// Full entry point; returns the process exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_record("UsageError", &e.to_string()));
            return 2;
        }
    };
    let flags = Flags {
        seed: args.seed,
        agents: args.agents,
        steps: args.steps,
        out: args.out.clone(),
        quiet: args.quiet,
    };
    let result = fs::read_to_string(&args.config)
        .map_err(Error::from)
        .and_then(|text| parse_scenario(&text))
        .and_then(|sc| run(args.command, &sc, &flags));
    match result {
        Ok(out) => {
            if !flags.quiet {
                print!("{}", out.summary);
                for f in &out.files {
                    println!("wrote {}", f.display());
                }
            }
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            1
        }
    }
}

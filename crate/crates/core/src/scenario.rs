//! JSON scenario files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_problem, ProblemData, ProblemSpec};

pub const DEFAULT_GRID_STEPS: usize = 4000;
pub const DEFAULT_REPLICATIONS: usize = 64;
pub const DEFAULT_AGENTS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Horizon {
    Finite(f64),
    /// Infinite horizon, simulated and tabulated up to the given time.
    Infinite(f64),
}

impl Horizon {
    pub fn length(&self) -> f64 {
        match *self {
            Horizon::Finite(t) | Horizon::Infinite(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LawChoice {
    #[default]
    Decentralized,
    Centralized,
}

fn default_replications() -> usize {
    DEFAULT_REPLICATIONS
}

fn default_agents() -> usize {
    DEFAULT_AGENTS
}

fn default_grid_steps() -> usize {
    DEFAULT_GRID_STEPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSpec {
    #[serde(default = "default_agents")]
    pub agents: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_agents: usize,
    #[serde(default)]
    pub law: LawChoice,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            agents: DEFAULT_AGENTS,
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            record_agents: 0,
            law: LawChoice::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_dir(),
            format: OutputFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub problem: ProblemSpec,
    pub horizon: Horizon,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    #[serde(default)]
    pub simulation: SimulationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<usize>>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl Scenario {
    pub fn build_problem(&self) -> Result<ProblemData> {
        build_problem(&self.problem)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

/// Text between the first pair of backticks in a serde message.
fn quoted(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        let line = e.line();
        if msg.starts_with("unknown field") || msg.starts_with("unknown variant") {
            if let Some(field) = quoted(&msg) {
                return Error::UnknownField { field, line };
            }
        }
        if msg.starts_with("missing field") {
            if let Some(field) = quoted(&msg) {
                return Error::MissingField { field, line };
            }
        }
        Error::Parse {
            line,
            column: e.column(),
            message: msg,
        }
    })?;
    if sc.grid_steps < 2 {
        return Err(Error::InvalidArgument("grid_steps must be at least 2".into()));
    }
    if !(sc.horizon.length() > 0.0 && sc.horizon.length().is_finite()) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if sc.simulation.agents == 0 || sc.simulation.replications == 0 {
        return Err(Error::InvalidArgument("agents and replications must be at least 1".into()));
    }
    if let Some(sweep) = &sc.sweep {
        if sweep.is_empty() || sweep.contains(&0) {
            return Err(Error::InvalidArgument("sweep needs positive agent counts".into()));
        }
    }
    Ok(sc)
}

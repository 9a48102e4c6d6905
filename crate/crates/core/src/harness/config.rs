use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, Algorithm};
use crate::env::{deepsea_spec, riverswim_spec, DeepSeaConfig, RiverSwimConfig};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    RiverSwim(RiverSwimConfig),
    DeepSea(DeepSeaConfig),
}

impl EnvConfig {
    pub fn name(&self) -> String {
        match self {
            EnvConfig::RiverSwim(cfg) => cfg.name(),
            EnvConfig::DeepSea(cfg) => cfg.name(),
        }
    }

    pub fn build(&self) -> Result<TabularMdp> {
        match self {
            EnvConfig::RiverSwim(cfg) => riverswim_spec(cfg),
            EnvConfig::DeepSea(cfg) => deepsea_spec(cfg),
        }
    }
}

/// One agent or a list of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AgentSection {
    // Listed first: a sequence would otherwise deserialize as a struct.
    Many(Vec<AgentConfig>),
    One(AgentConfig),
}

impl AgentSection {
    pub fn agents(&self) -> Vec<AgentConfig> {
        match self {
            AgentSection::One(cfg) => vec![cfg.clone()],
            AgentSection::Many(cfgs) => cfgs.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub plots: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            episodes: 1000,
            seeds: vec![0],
            out_dir: PathBuf::from("results"),
            plots: true,
        }
    }
}

/// Values swept per field. Each field only applies to the agents that use
/// it, so a `sigma2` grid leaves an LSVI-UCB agent untouched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub sigma2: Vec<f64>,
    pub m: Vec<usize>,
    pub beta: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SweepGrid {
    /// Cartesian expansion of every base agent, without duplicates, in a
    /// deterministic order.
    pub fn expand(&self, bases: &[AgentConfig]) -> Vec<AgentConfig> {
        let mut out: Vec<AgentConfig> = Vec::new();
        for base in bases {
            let mut cells = vec![base.clone()];
            let perturbed = matches!(base.algo, Algorithm::LsviPhe | Algorithm::Rlsvi);
            let linear = base.algo != Algorithm::Optimal;
            if perturbed {
                cells = product(cells, &self.sigma2, |c, v| c.sigma2 = *v);
            }
            if base.algo == Algorithm::LsviPhe {
                cells = product(cells, &self.m, |c, v| c.m = Some(*v));
            }
            if base.algo == Algorithm::LsviUcb {
                cells = product(cells, &self.beta, |c, v| c.beta = *v);
            }
            if base.algo == Algorithm::EpsilonGreedy {
                cells = product(cells, &self.epsilon, |c, v| c.epsilon = *v);
            }
            if linear {
                cells = product(cells, &self.lambda, |c, v| c.lambda = *v);
            }
            for cell in cells {
                if !out.contains(&cell) {
                    out.push(cell);
                }
            }
        }
        out
    }
}

fn product<T, F>(cells: Vec<AgentConfig>, values: &[T], set: F) -> Vec<AgentConfig>
where
    F: Fn(&mut AgentConfig, &T),
{
    if values.is_empty() {
        return cells;
    }
    cells
        .into_iter()
        .flat_map(|cell| {
            values.iter().map(|v| {
                let mut c = cell.clone();
                set(&mut c, v);
                c
            }).collect::<Vec<_>>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub agent: AgentSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub sweep: SweepGrid,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.episodes == 0 {
            return Err(Error::Config("run.episodes must be at least 1".into()));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        let agents = self.agent.agents();
        if agents.is_empty() {
            return Err(Error::Config("at least one agent is required".into()));
        }
        for cfg in self.sweep.expand(&agents) {
            cfg.validate()?;
        }
        self.env.build()?;
        Ok(())
    }

    /// Agent cells to run: the base agents, or their sweep expansion.
    pub fn cells(&self, expand: bool) -> Vec<AgentConfig> {
        let agents = self.agent.agents();
        if expand {
            self.sweep.expand(&agents)
        } else {
            agents
        }
    }
}

//! Experiment runner: builds environments and agents from a JSON
//! configuration, runs every `(cell, seed)` pair, and writes CSV rows and
//! SVG plots.
//!
//! A cell is one fully resolved agent configuration on one environment.
//! Its random streams derive from the seed and a hash of the cell's
//! description, so results do not depend on the order or parallelism of
//! execution.

mod config;
mod csv_io;
mod plot;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use config::{AgentSection, EnvConfig, ExperimentConfig, RunSection, SweepGrid};
pub use csv_io::{emit_csv, format_float, read_csv, CSV_HEADER};
pub use plot::{emit_plots, render_svg, Metric};

use crate::agents::{act, action_probs, Agent, AgentConfig};
use crate::env::{tabular_features, FeatureMap};
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, optimal_values, run_episode_with, RegretLedger, TabularMdp};
use crate::rng::{label_of, Purpose, StreamKey};

/// One episode of one seed of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub algo: String,
    pub env: String,
    pub params_json: String,
    pub seed: u64,
    /// 1-based.
    pub episode: usize,
    pub episode_return: f64,
    pub value_exact: f64,
    pub regret_cum: f64,
}

impl Row {
    pub fn cell_key(&self) -> (String, String, String) {
        (self.env.clone(), self.algo.clone(), self.params_json.clone())
    }
}

/// Mean and standard error across seeds at one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub mean: f64,
    pub stderr: f64,
}

impl Band {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub env: String,
    pub algo: String,
    pub params_json: String,
    pub seeds: usize,
    pub episode_return: Vec<Band>,
    pub value_exact: Vec<Band>,
    pub regret_cum: Vec<Band>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunResult {
    pub rows: Vec<Row>,
}

impl RunResult {
    /// Per-cell, per-episode statistics across seeds, cells in order of
    /// first appearance.
    pub fn summary(&self) -> Vec<CellSummary> {
        let mut order: Vec<(String, String, String)> = Vec::new();
        let mut grouped: BTreeMap<(String, String, String), BTreeMap<u64, Vec<&Row>>> =
            BTreeMap::new();
        for row in &self.rows {
            let key = row.cell_key();
            if !grouped.contains_key(&key) {
                order.push(key.clone());
            }
            grouped
                .entry(key)
                .or_default()
                .entry(row.seed)
                .or_default()
                .push(row);
        }
        order
            .into_iter()
            .map(|key| {
                let by_seed = &grouped[&key];
                let episodes = by_seed.values().map(Vec::len).min().unwrap_or(0);
                let band = |f: &dyn Fn(&Row) -> f64| -> Vec<Band> {
                    (0..episodes)
                        .map(|k| {
                            let vals: Vec<f64> = by_seed.values().map(|rows| f(rows[k])).collect();
                            Band::of(&vals)
                        })
                        .collect()
                };
                CellSummary {
                    seeds: by_seed.len(),
                    episode_return: band(&|r| r.episode_return),
                    value_exact: band(&|r| r.value_exact),
                    regret_cum: band(&|r| r.regret_cum),
                    env: key.0,
                    algo: key.1,
                    params_json: key.2,
                }
            })
            .collect()
    }
}

/// Canonical JSON of an agent configuration, used in CSV rows and to
/// derive random streams.
pub fn params_json(cfg: &AgentConfig) -> String {
    serde_json::to_string(cfg).expect("agent config serializes")
}

/// Runs `episodes` episodes of one agent on one environment.
pub fn run_cell(
    mdp: &TabularMdp,
    features: &FeatureMap,
    env_name: &str,
    cfg: &AgentConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<Row>> {
    let params = params_json(cfg);
    let root = StreamKey::root(seed).child(label_of(&format!("{env_name}|{params}")));
    let v_star = optimal_values(mdp).v(0, mdp.initial_state());
    let mut agent = Agent::new(cfg, mdp, features)?;
    let epsilon = agent.epsilon();
    let na = mdp.n_actions();
    let mut ledger = RegretLedger::new();
    let mut rows = Vec::with_capacity(episodes);

    for k in 0..episodes {
        let key = root.episode(k);
        let q = agent.plan(key.purpose(Purpose::Planning))?;
        let mut act_rng = key.purpose(Purpose::Acting).rng();
        let mut env_rng = key.purpose(Purpose::Transitions).rng();
        let traj = run_episode_with(mdp, k, &mut env_rng, |h, s| {
            act(&q, h, s, na, epsilon, &mut act_rng)
        })?;
        let exact = evaluate_policy(mdp, |h, s, p| action_probs(&q, h, s, epsilon, p))
            .v(0, mdp.initial_state());
        let record = ledger.record(&traj, v_star, Some(exact));
        rows.push(Row {
            algo: cfg.algo.name().to_string(),
            env: env_name.to_string(),
            params_json: params.clone(),
            seed,
            episode: k + 1,
            episode_return: record.episode_return,
            value_exact: record.value_exact,
            regret_cum: record.regret_cum,
        });
        agent.observe(&traj)?;
    }
    Ok(rows)
}

/// Runs every `(cell, seed)` pair of `cfg`, expanding the sweep grid when
/// `expand` is set. Rows are ordered by cell, then seed, then episode.
pub fn run_sweep(cfg: &ExperimentConfig, expand: bool) -> Result<RunResult> {
    cfg.validate()?;
    let mdp = cfg.env.build()?;
    let features = tabular_features(&mdp);
    let env_name = cfg.env.name();
    let cells = cfg.cells(expand);
    let jobs: Vec<(&AgentConfig, u64)> = cells
        .iter()
        .flat_map(|c| cfg.run.seeds.iter().map(move |s| (c, *s)))
        .collect();
    let chunks = jobs
        .par_iter()
        .map(|(cell, seed)| run_cell(&mdp, &features, &env_name, cell, cfg.run.episodes, *seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunResult {
        rows: chunks.into_iter().flatten().collect(),
    })
}

/// Applies a `--seeds` override.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds = text
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<u64>()
                .map_err(|_| Error::Config(format!("invalid seed {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

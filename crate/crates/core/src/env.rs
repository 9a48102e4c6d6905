//! Hard-exploration benchmarks and the tabular feature map.
//!
//! Both environments use action `0` for "left" and action `1` for "right".

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

const CONFIG_TOLERANCE: f64 = 1e-12;

/// A chain of states with a weak reward at the left end and a strong
/// reward at the right end that is only reachable by swimming against the
/// current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiverSwimConfig {
    pub n_states: usize,
    pub horizon: usize,
    /// Interior "right" probabilities.
    pub p_right: f64,
    pub p_stay: f64,
    pub p_left: f64,
    /// "Right" from the leftmost state.
    pub first_stay: f64,
    pub first_advance: f64,
    /// "Right" from the rightmost state.
    pub last_stay: f64,
    pub last_slip: f64,
    pub r_left_state: f64,
    pub r_goal: f64,
}

impl Default for RiverSwimConfig {
    fn default() -> Self {
        Self {
            n_states: 6,
            horizon: 20,
            p_right: 0.3,
            p_stay: 0.6,
            p_left: 0.1,
            first_stay: 0.7,
            first_advance: 0.3,
            last_stay: 0.7,
            last_slip: 0.3,
            r_left_state: 0.005,
            r_goal: 1.0,
        }
    }
}

impl RiverSwimConfig {
    pub fn with_size(n_states: usize, horizon: usize) -> Self {
        Self {
            n_states,
            horizon,
            ..Self::default()
        }
    }

    pub fn name(&self) -> String {
        format!("riverswim-{}", self.n_states)
    }

    fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(Error::invalid("RiverSwim needs at least 2 states"));
        }
        let rows = [
            ("interior right", self.p_right + self.p_stay + self.p_left),
            ("first-state right", self.first_stay + self.first_advance),
            ("last-state right", self.last_stay + self.last_slip),
        ];
        for (name, total) in rows {
            if (total - 1.0).abs() > CONFIG_TOLERANCE {
                return Err(Error::invalid(format!(
                    "RiverSwim {name} probabilities sum to {total}, not 1"
                )));
            }
        }
        if !(self.r_goal > self.r_left_state) {
            return Err(Error::invalid(
                "RiverSwim goal reward must exceed the left-state reward",
            ));
        }
        Ok(())
    }
}

pub fn riverswim_spec(cfg: &RiverSwimConfig) -> Result<TabularMdp> {
    cfg.validate()?;
    let n = cfg.n_states;
    let na = 2;
    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    let row = |s: usize, a: usize| (s * na + a) * n;
    for s in 0..n {
        transition[row(s, LEFT) + s.saturating_sub(1)] = 1.0;
        let r = row(s, RIGHT);
        if s == 0 {
            transition[r] += cfg.first_stay;
            transition[r + 1] += cfg.first_advance;
        } else if s == n - 1 {
            transition[r + s] += cfg.last_stay;
            transition[r + s - 1] += cfg.last_slip;
        } else {
            transition[r + s - 1] += cfg.p_left;
            transition[r + s] += cfg.p_stay;
            transition[r + s + 1] += cfg.p_right;
        }
    }
    reward[LEFT] = cfg.r_left_state;
    reward[(n - 1) * na + RIGHT] = cfg.r_goal;
    TabularMdp::stationary(n, na, cfg.horizon, 0, &transition, &reward)
}

/// An `N x N` grid descended one row per step. Moving right forgoes a small
/// reward that moving left pays; the bottom-right cell pays the goal reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepSeaConfig {
    pub depth: usize,
    /// Defaults to `0.01 / depth` when absent.
    pub move_right_cost: Option<f64>,
    pub goal_reward: f64,
}

impl Default for DeepSeaConfig {
    fn default() -> Self {
        Self {
            depth: 10,
            move_right_cost: None,
            goal_reward: 1.0,
        }
    }
}

impl DeepSeaConfig {
    pub fn with_depth(depth: usize) -> Self {
        Self {
            depth,
            ..Self::default()
        }
    }

    pub fn name(&self) -> String {
        format!("deepsea-{}", self.depth)
    }

    pub fn cost(&self) -> f64 {
        self.move_right_cost
            .unwrap_or(0.01 / self.depth.max(1) as f64)
    }
}

/// State index of grid cell `(row, col)`.
pub fn deepsea_state(depth: usize, row: usize, col: usize) -> usize {
    row * depth + col
}

pub fn deepsea_spec(cfg: &DeepSeaConfig) -> Result<TabularMdp> {
    let n = cfg.depth;
    if n < 2 {
        return Err(Error::invalid("DeepSea depth must be at least 2"));
    }
    let cost = cfg.cost();
    if !(0.0..=1.0).contains(&cost) {
        return Err(Error::invalid("DeepSea move_right_cost must lie in [0, 1]"));
    }
    if !(cfg.goal_reward > 0.0 && cfg.goal_reward <= 1.0) {
        return Err(Error::invalid("DeepSea goal_reward must lie in (0, 1]"));
    }
    let ns = n * n;
    let na = 2;
    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for row in 0..n {
        for col in 0..n {
            let s = deepsea_state(n, row, col);
            // The bottom row ends the episode; its successor is never used
            // for planning, so it wraps back to the start cell.
            let (left, right) = if row + 1 < n {
                (
                    deepsea_state(n, row + 1, col.saturating_sub(1)),
                    deepsea_state(n, row + 1, (col + 1).min(n - 1)),
                )
            } else {
                (0, 0)
            };
            transition[(s * na + LEFT) * ns + left] = 1.0;
            transition[(s * na + RIGHT) * ns + right] = 1.0;
            if row == n - 1 && col == n - 1 {
                reward[s * na + LEFT] = cfg.goal_reward;
                reward[s * na + RIGHT] = cfg.goal_reward;
            } else {
                reward[s * na + LEFT] = cost;
                reward[s * na + RIGHT] = 0.0;
            }
        }
    }
    TabularMdp::stationary(ns, na, n, 0, &transition, &reward)
}

/// A feature vector for every `(s, a)` of a finite domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    dim: usize,
    n_states: usize,
    n_actions: usize,
    rows: Vec<DVector<f64>>,
}

impl FeatureMap {
    /// Tabulates `f(s, a)`; every vector must have length `dim` and
    /// Euclidean norm at most 1.
    pub fn from_fn<F>(n_states: usize, n_actions: usize, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> DVector<f64>,
    {
        let mut rows = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                let phi = f(s, a);
                if phi.len() != dim {
                    return Err(Error::invalid(format!(
                        "feature ({s}, {a}) has length {}, expected {dim}",
                        phi.len()
                    )));
                }
                if phi.norm() > 1.0 + 1e-12 {
                    return Err(Error::invalid(format!(
                        "feature ({s}, {a}) has norm {} > 1",
                        phi.norm()
                    )));
                }
                rows.push(phi);
            }
        }
        Ok(Self {
            dim,
            n_states,
            n_actions,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn phi(&self, s: usize, a: usize) -> &DVector<f64> {
        &self.rows[s * self.n_actions + a]
    }

    /// All features stacked as rows, in `(s, a)` row-major order.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.dim, |i, j| self.rows[i][j])
    }

    pub fn max_norm(&self) -> f64 {
        self.rows.iter().map(|r| r.norm()).fold(0.0, f64::max)
    }
}

/// One-hot features of dimension `n_states * n_actions`.
pub fn tabular_features(mdp: &TabularMdp) -> FeatureMap {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    FeatureMap::from_fn(ns, na, ns * na, |s, a| {
        let mut e = DVector::zeros(ns * na);
        e[s * na + a] = 1.0;
        e
    })
    .expect("one-hot features are unit vectors")
}

//! Episode-level planners over a linear feature map.
//!
//! Every planner runs a backward pass over the steps of the episode. At
//! step `h` it regresses the targets `r + V_{h+1}(s')` of all previous
//! episodes on the step-`h` features and turns the fit into a clipped
//! action-value table:
//!
//! | algorithm        | value at `(s, a)`                                     |
//! |------------------|-------------------------------------------------------|
//! | `lsvi-phe`       | max over `M` perturbed fits `phi^T theta_tilde_j`     |
//! | `rlsvi`          | the same with `M = 1`                                 |
//! | `lsvi-ucb`       | `phi^T theta_hat + beta ||phi||_{Lambda^{-1}}`          |
//! | `epsilon-greedy` | `phi^T theta_hat`, acted on ε-greedily                |
//!
//! Values at step `h` (0-based) are clipped to `[0, horizon - h]`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::FeatureMap;
use crate::error::{Error, Result};
use crate::mdp::{optimal_values, ActionValues, TabularMdp, Trajectory, Transition, ValueTable};
use crate::perturbed::{
    ridge_solve, sample_perturbed_weights_direct, sample_perturbed_weights_via_rewards,
    theoretical_m, GramState, RegressionTargetSet, WeightVector,
};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    LsviPhe,
    Rlsvi,
    LsviUcb,
    EpsilonGreedy,
    /// Plays the exact optimal policy; a zero-regret reference.
    Optimal,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LsviPhe => "lsvi-phe",
            Algorithm::Rlsvi => "rlsvi",
            Algorithm::LsviUcb => "lsvi-ucb",
            Algorithm::EpsilonGreedy => "epsilon-greedy",
            Algorithm::Optimal => "optimal",
        }
    }
}

/// How perturbed weights are drawn. Both paths have the same law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingPath {
    Direct,
    ViaRewards,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algo: Algorithm,
    /// Perturbation variance for `lsvi-phe` and `rlsvi`.
    pub sigma2: f64,
    /// Number of perturbed fits for `lsvi-phe`; `None` selects
    /// [`theoretical_m`] with the configured `delta`.
    pub m: Option<usize>,
    pub beta: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub delta: f64,
    pub sampling: SamplingPath,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algo: Algorithm::LsviPhe,
            sigma2: 1.0,
            m: None,
            beta: 1.0,
            epsilon: 0.1,
            lambda: 1.0,
            delta: 0.1,
            sampling: SamplingPath::Direct,
        }
    }
}

impl AgentConfig {
    pub fn phe(sigma2: f64, m: usize) -> Self {
        Self {
            algo: Algorithm::LsviPhe,
            sigma2,
            m: Some(m),
            ..Self::default()
        }
    }

    pub fn rlsvi(sigma2: f64) -> Self {
        Self {
            algo: Algorithm::Rlsvi,
            sigma2,
            m: Some(1),
            ..Self::default()
        }
    }

    pub fn ucb(beta: f64) -> Self {
        Self {
            algo: Algorithm::LsviUcb,
            beta,
            ..Self::default()
        }
    }

    pub fn epsilon_greedy(epsilon: f64) -> Self {
        Self {
            algo: Algorithm::EpsilonGreedy,
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        match self.algo {
            Algorithm::LsviPhe | Algorithm::Rlsvi => {
                if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
                    return bad(format!("sigma2 must be positive, got {}", self.sigma2));
                }
                if self.m == Some(0) {
                    return bad("m must be at least 1".into());
                }
                if self.m.is_none() && !(self.delta > 0.0 && self.delta <= 1.0) {
                    return bad(format!("delta must lie in (0, 1], got {}", self.delta));
                }
            }
            Algorithm::LsviUcb => {
                if !(self.beta >= 0.0 && self.beta.is_finite()) {
                    return bad(format!("beta must be nonnegative, got {}", self.beta));
                }
            }
            Algorithm::EpsilonGreedy => {
                if !(0.0..=1.0).contains(&self.epsilon) {
                    return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
                }
            }
            Algorithm::Optimal => {}
        }
        Ok(())
    }

    /// Number of perturbed fits per step for a feature dimension `dim`.
    pub fn resolved_m(&self, dim: usize) -> Result<usize> {
        match self.algo {
            Algorithm::Rlsvi => Ok(1),
            _ => match self.m {
                Some(m) => Ok(m),
                None => theoretical_m(dim, self.delta),
            },
        }
    }

    /// Exploration probability used when acting.
    pub fn acting_epsilon(&self) -> f64 {
        match self.algo {
            Algorithm::EpsilonGreedy => self.epsilon,
            _ => 0.0,
        }
    }
}

/// Observed transitions, bucketed by step.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    steps: Vec<Vec<Transition>>,
}

impl History {
    pub fn new(horizon: usize) -> Self {
        Self {
            steps: vec![Vec::new(); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Number of completed episodes.
    pub fn episodes(&self) -> usize {
        self.steps.first().map_or(0, Vec::len)
    }

    pub fn step(&self, h: usize) -> &[Transition] {
        &self.steps[h]
    }

    pub fn push(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.transitions.len() != self.horizon() {
            return Err(Error::invalid(format!(
                "trajectory has {} steps, history horizon is {}",
                traj.transitions.len(),
                self.horizon()
            )));
        }
        for (h, t) in traj.transitions.iter().enumerate() {
            if t.h != h {
                return Err(Error::invalid("trajectory steps out of order"));
            }
            self.steps[h].push(*t);
        }
        Ok(())
    }
}

/// The model fitted at one step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepModel {
    Perturbed(Vec<WeightVector>),
    Bonus { theta_hat: WeightVector, beta: f64 },
    Table,
}

/// Clipped action values for every step of one episode, plus the models
/// they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct QEstimate {
    n_states: usize,
    n_actions: usize,
    models: Vec<StepModel>,
    /// `[h][s][a]`, already clipped.
    values: Vec<f64>,
}

impl QEstimate {
    pub fn horizon(&self) -> usize {
        self.models.len()
    }

    pub fn model(&self, h: usize) -> &StepModel {
        &self.models[h]
    }

    pub fn value(&self, h: usize, s: usize) -> f64 {
        let start = (h * self.n_states + s) * self.n_actions;
        self.values[start..start + self.n_actions]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Wraps an exact value table, e.g. `Q*`.
    pub fn from_table(table: &ValueTable, n_states: usize, n_actions: usize) -> Self {
        let horizon = table.horizon();
        let mut values = Vec::with_capacity(horizon * n_states * n_actions);
        for h in 0..horizon {
            for s in 0..n_states {
                values.extend_from_slice(table.q_row(h, s));
            }
        }
        Self {
            n_states,
            n_actions,
            models: vec![StepModel::Table; horizon],
            values,
        }
    }
}

impl ActionValues for QEstimate {
    fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.n_states + s) * self.n_actions + a]
    }
}

/// `min(max(x, 0), cap)`, the nonnegative part of the value clipped at
/// the remaining horizon.
pub fn clip_value(x: f64, cap: f64) -> f64 {
    x.min(cap).max(0.0)
}

/// Greedy action with probability `1 - epsilon`, otherwise uniform. The
/// stream is only consumed when `epsilon > 0`.
pub fn act<Q, R>(q: &Q, h: usize, s: usize, n_actions: usize, epsilon: f64, rng: &mut R) -> usize
where
    Q: ActionValues + ?Sized,
    R: Rng + ?Sized,
{
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..n_actions)
    } else {
        q.greedy(h, s, n_actions)
    }
}

/// Action distribution of [`act`], for exact policy evaluation.
pub fn action_probs<Q: ActionValues + ?Sized>(
    q: &Q,
    h: usize,
    s: usize,
    epsilon: f64,
    probs: &mut [f64],
) {
    let n = probs.len();
    probs.iter_mut().for_each(|p| *p = epsilon / n as f64);
    probs[q.greedy(h, s, n)] += 1.0 - epsilon;
}

/// Linear value iteration planner with incremental per-step Gram matrices.
#[derive(Debug, Clone)]
pub struct LinearAgent {
    cfg: AgentConfig,
    features: FeatureMap,
    feature_matrix: DMatrix<f64>,
    grams: Vec<GramState>,
    history: History,
    m: usize,
}

impl LinearAgent {
    pub fn new(cfg: AgentConfig, features: FeatureMap, horizon: usize) -> Result<Self> {
        cfg.validate()?;
        if cfg.algo == Algorithm::Optimal {
            return Err(Error::Config("the optimal agent is not a linear planner".into()));
        }
        let dim = features.dim();
        let grams = (0..horizon)
            .map(|_| GramState::new(dim, cfg.lambda))
            .collect::<Result<Vec<_>>>()?;
        let m = cfg.resolved_m(dim)?;
        Ok(Self {
            feature_matrix: features.matrix(),
            cfg,
            features,
            grams,
            history: History::new(horizon),
            m,
        })
    }

    /// Rebuilds the planner state from an existing history.
    pub fn with_history(cfg: AgentConfig, features: FeatureMap, history: &History) -> Result<Self> {
        let mut agent = Self::new(cfg, features, history.horizon())?;
        for h in 0..history.horizon() {
            for t in history.step(h) {
                agent.grams[h].update(agent.features.phi(t.state, t.action))?;
            }
        }
        agent.history = history.clone();
        Ok(agent)
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gram(&self, h: usize) -> &GramState {
        &self.grams[h]
    }

    pub fn observe(&mut self, traj: &Trajectory) -> Result<()> {
        self.history.push(traj)?;
        for t in &traj.transitions {
            self.grams[t.h].update(self.features.phi(t.state, t.action))?;
        }
        Ok(())
    }

    /// Backward pass producing this episode's action values. Step `h`
    /// draws its noise from `key.child(h)`.
    pub fn plan(&mut self, key: StreamKey) -> Result<QEstimate> {
        let horizon = self.history.horizon();
        let (ns, na) = (self.features.n_states(), self.features.n_actions());
        let dim = self.features.dim();
        let sigma = self.cfg.sigma2.sqrt();
        let mut values = vec![0.0; horizon * ns * na];
        let mut models = vec![StepModel::Table; horizon];
        let mut v_next = vec![0.0; ns];

        for h in (0..horizon).rev() {
            let cap = (horizon - h) as f64;
            let data = self.history.step(h);
            let mut targets = RegressionTargetSet::with_capacity(dim, data.len());
            for t in data {
                targets.push(
                    self.features.phi(t.state, t.action),
                    t.reward + v_next[t.next_state],
                )?;
            }
            let gram = &mut self.grams[h];
            let theta_hat = ridge_solve(gram, targets.moment())?;
            let layer = &mut values[h * ns * na..(h + 1) * ns * na];

            match self.cfg.algo {
                Algorithm::LsviPhe | Algorithm::Rlsvi => {
                    let mut rng = key.child(h as u64).rng();
                    let weights = match self.cfg.sampling {
                        SamplingPath::Direct => {
                            sample_perturbed_weights_direct(gram, &theta_hat, sigma, self.m, &mut rng)?
                        }
                        SamplingPath::ViaRewards => {
                            sample_perturbed_weights_via_rewards(gram, &targets, sigma, self.m, &mut rng)?
                        }
                    };
                    let stacked = DMatrix::from_fn(dim, weights.len(), |i, j| weights[j].theta[i]);
                    let evals = &self.feature_matrix * stacked;
                    for (i, q) in layer.iter_mut().enumerate() {
                        let best = evals.row(i).max();
                        *q = clip_value(best, cap);
                    }
                    models[h] = StepModel::Perturbed(weights);
                }
                Algorithm::LsviUcb | Algorithm::EpsilonGreedy => {
                    let beta = match self.cfg.algo {
                        Algorithm::LsviUcb => self.cfg.beta,
                        _ => 0.0,
                    };
                    let fitted = &self.feature_matrix * &theta_hat.theta;
                    for (i, q) in layer.iter_mut().enumerate() {
                        let bonus = if beta > 0.0 {
                            beta * gram.weighted_norm(&self.feature_matrix.row(i).transpose())
                        } else {
                            0.0
                        };
                        *q = clip_value(fitted[i] + bonus, cap);
                    }
                    models[h] = StepModel::Bonus { theta_hat, beta };
                }
                Algorithm::Optimal => unreachable!("rejected in LinearAgent::new"),
            }

            for (s, v) in v_next.iter_mut().enumerate() {
                *v = layer[s * na..(s + 1) * na]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
            }
        }

        Ok(QEstimate {
            n_states: ns,
            n_actions: na,
            models,
            values,
        })
    }
}

/// One-shot LSVI-PHE planning from a history.
pub fn plan_lsvi_phe(
    history: &History,
    features: &FeatureMap,
    cfg: &AgentConfig,
    key: StreamKey,
) -> Result<QEstimate> {
    let cfg = AgentConfig {
        algo: Algorithm::LsviPhe,
        ..cfg.clone()
    };
    LinearAgent::with_history(cfg, features.clone(), history)?.plan(key)
}

/// RLSVI is LSVI-PHE with a single perturbed fit.
pub fn plan_rlsvi(
    history: &History,
    features: &FeatureMap,
    cfg: &AgentConfig,
    key: StreamKey,
) -> Result<QEstimate> {
    let cfg = AgentConfig {
        m: Some(1),
        ..cfg.clone()
    };
    plan_lsvi_phe(history, features, &cfg, key)
}

pub fn plan_lsvi_ucb(
    history: &History,
    features: &FeatureMap,
    cfg: &AgentConfig,
    key: StreamKey,
) -> Result<QEstimate> {
    let cfg = AgentConfig {
        algo: Algorithm::LsviUcb,
        ..cfg.clone()
    };
    LinearAgent::with_history(cfg, features.clone(), history)?.plan(key)
}

/// Any of the supported agents behind one interface.
#[derive(Debug, Clone)]
pub enum Agent {
    Linear(LinearAgent),
    Optimal { q_star: QEstimate, epsilon: f64 },
}

impl Agent {
    pub fn new(cfg: &AgentConfig, mdp: &TabularMdp, features: &FeatureMap) -> Result<Self> {
        cfg.validate()?;
        match cfg.algo {
            Algorithm::Optimal => Ok(Agent::Optimal {
                q_star: QEstimate::from_table(&optimal_values(mdp), mdp.n_states(), mdp.n_actions()),
                epsilon: 0.0,
            }),
            _ => Ok(Agent::Linear(LinearAgent::new(
                cfg.clone(),
                features.clone(),
                mdp.horizon(),
            )?)),
        }
    }

    pub fn plan(&mut self, key: StreamKey) -> Result<QEstimate> {
        match self {
            Agent::Linear(agent) => agent.plan(key),
            Agent::Optimal { q_star, .. } => Ok(q_star.clone()),
        }
    }

    pub fn observe(&mut self, traj: &Trajectory) -> Result<()> {
        match self {
            Agent::Linear(agent) => agent.observe(traj),
            Agent::Optimal { .. } => Ok(()),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Agent::Linear(agent) => agent.config().acting_epsilon(),
            Agent::Optimal { epsilon, .. } => *epsilon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{riverswim_spec, tabular_features, RiverSwimConfig};
    use crate::mdp::run_episode;

    fn riverswim() -> (TabularMdp, FeatureMap) {
        let mdp = riverswim_spec(&RiverSwimConfig::with_size(4, 5)).unwrap();
        let phi = tabular_features(&mdp);
        (mdp, phi)
    }

    #[test]
    fn empty_history_values_are_clipped() {
        let (mdp, phi) = riverswim();
        let history = History::new(mdp.horizon());
        let q = plan_lsvi_phe(&history, &phi, &AgentConfig::phe(4.0, 3), StreamKey::root(1)).unwrap();
        for h in 0..mdp.horizon() {
            let cap = (mdp.horizon() - h) as f64;
            for s in 0..4 {
                for a in 0..2 {
                    let v = q.q(h, s, a);
                    assert!((0.0..=cap).contains(&v));
                }
            }
            match q.model(h) {
                StepModel::Perturbed(w) => assert_eq!(w.len(), 3),
                other => panic!("unexpected model {other:?}"),
            }
        }
    }

    #[test]
    fn rlsvi_is_phe_with_one_sample() {
        let (mdp, phi) = riverswim();
        let mut agent = LinearAgent::new(AgentConfig::phe(1.0, 1), phi.clone(), mdp.horizon()).unwrap();
        let mut rng = StreamKey::root(3).rng();
        for k in 0..5 {
            let q = agent.plan(StreamKey::root(10).episode(k)).unwrap();
            let traj = run_episode(&q, &mdp, k, &mut rng).unwrap();
            agent.observe(&traj).unwrap();
        }
        let key = StreamKey::root(99);
        let a = plan_rlsvi(agent.history(), &phi, &AgentConfig::rlsvi(1.0), key).unwrap();
        let b = plan_lsvi_phe(agent.history(), &phi, &AgentConfig::phe(1.0, 1), key).unwrap();
        assert_eq!(a, b);
        assert_eq!(AgentConfig::rlsvi(1.0).resolved_m(12).unwrap(), 1);
    }

    #[test]
    fn ucb_bonus_on_empty_history() {
        let (mdp, phi) = riverswim();
        let history = History::new(mdp.horizon());
        let q = plan_lsvi_ucb(&history, &phi, &AgentConfig::ucb(0.75), StreamKey::root(0)).unwrap();
        for h in 0..mdp.horizon() {
            for s in 0..4 {
                assert_eq!(q.q(h, s, 1), 0.75);
            }
        }
    }

    #[test]
    fn act_rules() {
        let (mdp, phi) = riverswim();
        let history = History::new(mdp.horizon());
        let q = plan_lsvi_ucb(&history, &phi, &AgentConfig::ucb(0.0), StreamKey::root(0)).unwrap();
        let mut rng = StreamKey::root(0).rng();
        assert_eq!(act(&q, 0, 0, 2, 0.0, &mut rng), 0);

        let n = 100_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            counts[act(&q, 0, 0, 2, 1.0, &mut rng)] += 1;
        }
        assert!((counts[1] as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn action_probs_mixture() {
        let table = QEstimate {
            n_states: 1,
            n_actions: 3,
            models: vec![StepModel::Table],
            values: vec![0.0, 2.0, 1.0],
        };
        let mut probs = [0.0; 3];
        action_probs(&table, 0, 0, 0.3, &mut probs);
        assert!((probs[1] - 0.8).abs() < 1e-15);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let mut rng = StreamKey::root(0).rng();
        assert_eq!(act(&table, 0, 0, 3, 0.0, &mut rng), 1);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig { sigma2: 0.0, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { m: Some(0), ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig { lambda: -1.0, ..AgentConfig::default() }.validate().is_err());
        assert!(AgentConfig::epsilon_greedy(1.5).validate().is_err());
        assert!(AgentConfig::ucb(-1.0).validate().is_err());
        assert!(AgentConfig::ucb(5.0).validate().is_ok());
    }

    #[test]
    fn history_rejects_short_trajectories() {
        let mut history = History::new(3);
        let traj = Trajectory {
            episode: 0,
            transitions: vec![],
            episode_return: 0.0,
        };
        assert!(history.push(&traj).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = AgentConfig::phe(0.2, 8);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"lsvi-phe\""));
        let back: AgentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let partial: AgentConfig = serde_json::from_str(r#"{"algo":"lsvi-ucb","beta":5.0}"#).unwrap();
        assert_eq!(partial, AgentConfig::ucb(5.0));
    }
}

//! Finite-horizon episodic MDPs.
//!
//! Steps are 0-based throughout the crate: an episode visits steps
//! `0..horizon`, and the value at step `h` is bounded by `horizon - h`.
//! Transition and reward tables are indexed by step so that
//! time-inhomogeneous models are first class; [`TabularMdp::stationary`]
//! broadcasts a single model over all steps.

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on probability rows. Rows outside it are rejected, never
/// renormalized.
pub const PROB_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    initial_state: usize,
    /// Flattened `[h][s][a][s']`.
    transition: Vec<f64>,
    /// Flattened `[h][s][a]`.
    reward: Vec<f64>,
}

impl TabularMdp {
    /// Builds a time-inhomogeneous MDP from flattened `[h][s][a][s']`
    /// transitions and `[h][s][a]` rewards.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        initial_state: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(Error::invalid(
                "n_states, n_actions and horizon must all be positive",
            ));
        }
        if initial_state >= n_states {
            return Err(Error::invalid(format!(
                "initial state {initial_state} out of range for {n_states} states"
            )));
        }
        let rows = horizon * n_states * n_actions;
        if transition.len() != rows * n_states {
            return Err(Error::invalid(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                rows * n_states
            )));
        }
        if reward.len() != rows {
            return Err(Error::invalid(format!(
                "reward table has {} entries, expected {rows}",
                reward.len()
            )));
        }
        for (row, probs) in transition.chunks(n_states).enumerate() {
            if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::invalid(format!(
                    "transition row {row} has a negative or non-finite entry"
                )));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > PROB_TOLERANCE {
                return Err(Error::invalid(format!(
                    "transition row {row} sums to {total}, not 1"
                )));
            }
        }
        if let Some(i) = reward
            .iter()
            .position(|r| !r.is_finite() || !(0.0..=1.0).contains(r))
        {
            return Err(Error::invalid(format!(
                "reward entry {i} = {} outside [0, 1]",
                reward[i]
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            initial_state,
            transition,
            reward,
        })
    }

    /// Broadcasts a stationary `[s][a][s']` / `[s][a]` model over every step.
    pub fn stationary(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        initial_state: usize,
        transition: &[f64],
        reward: &[f64],
    ) -> Result<Self> {
        let transition = transition.repeat(horizon);
        let reward = reward.repeat(horizon);
        Self::new(
            n_states,
            n_actions,
            horizon,
            initial_state,
            transition,
            reward,
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    fn sa_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.n_states + s) * self.n_actions + a
    }

    pub fn check_index(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon || s >= self.n_states || a >= self.n_actions {
            return Err(Error::invalid(format!(
                "index (h={h}, s={s}, a={a}) out of range for H={}, S={}, A={}",
                self.horizon, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Next-state distribution. Panics on out-of-range indices; use
    /// [`TabularMdp::check_index`] first for untrusted input.
    pub fn transition_row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.sa_index(h, s, a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward[self.sa_index(h, s, a)]
    }
}

/// Samples one transition by inverse CDF over the stored probability row.
pub fn step<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    h: usize,
    s: usize,
    a: usize,
    rng: &mut R,
) -> Result<(usize, f64)> {
    mdp.check_index(h, s, a)?;
    let row = mdp.transition_row(h, s, a);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (next, p) in row.iter().enumerate() {
        if *p > 0.0 {
            last_positive = next;
            acc += p;
            if u < acc {
                return Ok((next, mdp.reward(h, s, a)));
            }
        }
    }
    // u landed in the rounding gap above the accumulated mass.
    Ok((last_positive, mdp.reward(h, s, a)))
}

/// Anything that assigns a value to `(h, s, a)`.
pub trait ActionValues {
    fn q(&self, h: usize, s: usize, a: usize) -> f64;

    /// Greedy action with ties broken toward the lowest index.
    fn greedy(&self, h: usize, s: usize, n_actions: usize) -> usize {
        let mut best = 0;
        let mut best_q = self.q(h, s, 0);
        for a in 1..n_actions {
            let q = self.q(h, s, a);
            if q > best_q {
                best = a;
                best_q = q;
            }
        }
        best
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// State and action values for every step. `v` has `horizon + 1` layers,
/// the last of which is identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTable {
    fn zeros(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        Self {
            n_states,
            n_actions,
            horizon,
            v: vec![0.0; (horizon + 1) * n_states],
            q: vec![0.0; horizon * n_states * n_actions],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.n_states + s]
    }

    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.n_states + s) * self.n_actions;
        &self.q[start..start + self.n_actions]
    }
}

impl ActionValues for ValueTable {
    fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.n_states + s) * self.n_actions + a]
    }
}

fn expected_next(row: &[f64], v_next: &[f64]) -> f64 {
    row.iter().zip(v_next).map(|(p, v)| p * v).sum()
}

/// Exact `Q*` and `V*` by backward induction.
pub fn optimal_values(mdp: &TabularMdp) -> ValueTable {
    let (ns, na, horizon) = (mdp.n_states, mdp.n_actions, mdp.horizon);
    let mut table = ValueTable::zeros(ns, na, horizon);
    for h in (0..horizon).rev() {
        let (head, tail) = table.v.split_at_mut((h + 1) * ns);
        let v_next = &tail[..ns];
        let v_here = &mut head[h * ns..];
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..na {
                let q = mdp.reward(h, s, a) + expected_next(mdp.transition_row(h, s, a), v_next);
                table.q[(h * ns + s) * na + a] = q;
                best = best.max(q);
            }
            v_here[s] = best;
        }
    }
    table
}

/// Exact values of a (possibly stochastic) policy. `policy(h, s, probs)`
/// must fill `probs` with a distribution over actions.
pub fn evaluate_policy<P>(mdp: &TabularMdp, mut policy: P) -> ValueTable
where
    P: FnMut(usize, usize, &mut [f64]),
{
    let (ns, na, horizon) = (mdp.n_states, mdp.n_actions, mdp.horizon);
    let mut table = ValueTable::zeros(ns, na, horizon);
    let mut probs = vec![0.0; na];
    for h in (0..horizon).rev() {
        let (head, tail) = table.v.split_at_mut((h + 1) * ns);
        let v_next = &tail[..ns];
        let v_here = &mut head[h * ns..];
        for s in 0..ns {
            probs.iter_mut().for_each(|p| *p = 0.0);
            policy(h, s, &mut probs);
            let mut v = 0.0;
            for a in 0..na {
                let q = mdp.reward(h, s, a) + expected_next(mdp.transition_row(h, s, a), v_next);
                table.q[(h * ns + s) * na + a] = q;
                v += probs[a] * q;
            }
            v_here[s] = v;
        }
    }
    table
}

/// Exact values of the greedy policy induced by `q`.
pub fn evaluate_greedy<Q: ActionValues + ?Sized>(mdp: &TabularMdp, q: &Q) -> ValueTable {
    let na = mdp.n_actions;
    evaluate_policy(mdp, |h, s, probs| probs[q.greedy(h, s, na)] = 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub h: usize,
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode: usize,
    pub transitions: Vec<Transition>,
    pub episode_return: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> usize {
        self.transitions[0].state
    }
}

/// Rolls out one episode, asking `choose(h, s)` for each action.
pub fn run_episode_with<R, C>(
    mdp: &TabularMdp,
    episode: usize,
    rng: &mut R,
    mut choose: C,
) -> Result<Trajectory>
where
    R: Rng + ?Sized,
    C: FnMut(usize, usize) -> usize,
{
    let mut transitions = Vec::with_capacity(mdp.horizon);
    let mut s = mdp.initial_state;
    let mut episode_return = 0.0;
    for h in 0..mdp.horizon {
        let a = choose(h, s);
        let (next, r) = step(mdp, h, s, a, rng)?;
        transitions.push(Transition {
            h,
            state: s,
            action: a,
            reward: r,
            next_state: next,
        });
        episode_return += r;
        s = next;
    }
    Ok(Trajectory {
        episode,
        transitions,
        episode_return,
    })
}

/// Greedy rollout under `q`.
pub fn run_episode<Q, R>(q: &Q, mdp: &TabularMdp, episode: usize, rng: &mut R) -> Result<Trajectory>
where
    Q: ActionValues + ?Sized,
    R: Rng + ?Sized,
{
    let na = mdp.n_actions;
    run_episode_with(mdp, episode, rng, |h, s| q.greedy(h, s, na))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedgerRecord {
    pub episode: usize,
    pub episode_return: f64,
    pub v_star: f64,
    /// Exact value of the executed policy, when it was computed; otherwise
    /// the realized return stands in for it.
    pub value_exact: f64,
    pub regret: f64,
    pub regret_cum: f64,
    pub regret_proxy: f64,
    pub regret_cum_proxy: f64,
}

/// Per-episode regret accounting, both exact and realized-return based.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLedger {
    records: Vec<LedgerRecord>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, traj: &Trajectory, v_star: f64, value_exact: Option<f64>) -> &LedgerRecord {
        let (prev_exact, prev_proxy) = self
            .records
            .last()
            .map_or((0.0, 0.0), |r| (r.regret_cum, r.regret_cum_proxy));
        let value_exact = value_exact.unwrap_or(traj.episode_return);
        let regret = v_star - value_exact;
        let regret_proxy = v_star - traj.episode_return;
        self.records.push(LedgerRecord {
            episode: traj.episode,
            episode_return: traj.episode_return,
            v_star,
            value_exact,
            regret,
            regret_cum: prev_exact + regret,
            regret_proxy,
            regret_cum_proxy: prev_proxy + regret_proxy,
        });
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

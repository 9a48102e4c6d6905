mod common;

use lsvi_phe::agents::{
    act, plan_lsvi_phe, plan_lsvi_ucb, plan_rlsvi, Agent, AgentConfig, History, QEstimate,
};
use lsvi_phe::env::{riverswim_spec, tabular_features, FeatureMap, RiverSwimConfig};
use lsvi_phe::mdp::{optimal_values, run_episode_with, ActionValues, TabularMdp};
use lsvi_phe::perturbed::{theoretical_m, theoretical_sigma};
use lsvi_phe::rng::{Purpose, StreamKey};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_state() -> TabularMdp {
    let transition = [0.6, 0.4, 0.1, 0.9, 0.5, 0.5, 0.3, 0.7];
    let reward = [0.2, 0.0, 0.0, 0.8];
    TabularMdp::stationary(2, 2, 3, 0, &transition, &reward).unwrap()
}

fn random_history(mdp: &TabularMdp, episodes: usize, seed: u64) -> History {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = History::new(mdp.horizon());
    for k in 0..episodes {
        let mut choice = ChaCha8Rng::seed_from_u64(seed ^ (k as u64 + 1));
        let traj = run_episode_with(mdp, k, &mut rng, |_, _| {
            choice.random_range(0..mdp.n_actions())
        })
        .unwrap();
        history.push(&traj).unwrap();
    }
    history
}

/// Unperturbed least-squares value iteration with dense solves, returning
/// `[h][s][a]` values clipped to `[0, H - h]`.
fn lsvi_oracle(history: &History, features: &FeatureMap, lambda: f64, beta: f64) -> Vec<f64> {
    let (ns, na, dim) = (features.n_states(), features.n_actions(), features.dim());
    let horizon = history.horizon();
    let mut q = vec![0.0; horizon * ns * na];
    let mut v_next = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let data = history.step(h);
        let phis: Vec<DVector<f64>> = data.iter().map(|t| features.phi(t.state, t.action).clone()).collect();
        let mut gram = nalgebra::DMatrix::identity(dim, dim) * lambda;
        let mut rhs = DVector::zeros(dim);
        for (phi, t) in phis.iter().zip(data) {
            gram += phi * phi.transpose();
            rhs += phi * (t.reward + v_next[t.next_state]);
        }
        let inv = common::gauss_jordan_inverse(&gram);
        let theta = &inv * rhs;
        let cap = (horizon - h) as f64;
        for s in 0..ns {
            for a in 0..na {
                let phi = features.phi(s, a);
                let bonus = beta * phi.dot(&(&inv * phi)).sqrt();
                q[(h * ns + s) * na + a] = (phi.dot(&theta) + bonus).max(0.0).min(cap);
            }
            v_next[s] = (0..na).map(|a| q[(h * ns + s) * na + a]).fold(f64::MIN, f64::max);
        }
    }
    q
}

fn max_gap(q: &QEstimate, reference: &[f64], ns: usize, na: usize) -> f64 {
    let mut gap: f64 = 0.0;
    for h in 0..q.horizon() {
        for s in 0..ns {
            for a in 0..na {
                gap = gap.max((q.q(h, s, a) - reference[(h * ns + s) * na + a]).abs());
            }
        }
    }
    gap
}

#[test]
fn vanishing_noise_recovers_unperturbed_lsvi() {
    let mdp = two_state();
    let features = tabular_features(&mdp);
    let history = random_history(&mdp, 400, 1);
    let oracle = lsvi_oracle(&history, &features, 1.0, 0.0);
    let cfg = AgentConfig::phe(1e-24, 3);
    let q = plan_lsvi_phe(&history, &features, &cfg, StreamKey::root(4)).unwrap();
    assert!(max_gap(&q, &oracle, 2, 2) < 1e-6);
}

#[test]
fn ucb_matches_the_dense_oracle() {
    let mdp = two_state();
    let features = tabular_features(&mdp);
    let history = random_history(&mdp, 50, 2);
    for beta in [0.0, 0.7] {
        let oracle = lsvi_oracle(&history, &features, 1.0, beta);
        let q = plan_lsvi_ucb(&history, &features, &AgentConfig::ucb(beta), StreamKey::root(0)).unwrap();
        assert!(max_gap(&q, &oracle, 2, 2) < 1e-10, "beta = {beta}");
    }
}

#[test]
fn rlsvi_and_single_sample_phe_coincide() {
    let mdp = two_state();
    let features = tabular_features(&mdp);
    let history = random_history(&mdp, 30, 3);
    let key = StreamKey::root(8);
    let a = plan_rlsvi(&history, &features, &AgentConfig::rlsvi(1.0), key).unwrap();
    let b = plan_lsvi_phe(&history, &features, &AgentConfig::phe(1.0, 1), key).unwrap();
    assert_eq!(max_gap(&a, &flat_values(&b, 2, 2), 2, 2), 0.0);
}

fn flat_values(q: &QEstimate, ns: usize, na: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for h in 0..q.horizon() {
        for s in 0..ns {
            for a in 0..na {
                out.push(q.q(h, s, a));
            }
        }
    }
    out
}

#[test]
fn more_samples_never_lower_the_values() {
    let mdp = riverswim_spec(&RiverSwimConfig::with_size(4, 5)).unwrap();
    let features = tabular_features(&mdp);
    let history = random_history(&mdp, 25, 4);
    let key = StreamKey::root(12);
    let mut prev: Option<Vec<f64>> = None;
    for m in 1..=6 {
        let q = plan_lsvi_phe(&history, &features, &AgentConfig::phe(0.5, m), key).unwrap();
        let values = flat_values(&q, 4, 2);
        if let Some(prev) = prev {
            for (now, before) in values.iter().zip(&prev) {
                assert!(now >= before, "M={m}: {now} < {before}");
            }
        }
        prev = Some(values);
    }
}

#[test]
fn values_are_clipped_to_the_remaining_horizon() {
    let mdp = riverswim_spec(&RiverSwimConfig::with_size(4, 6)).unwrap();
    let features = tabular_features(&mdp);
    for episodes in [0, 3, 40] {
        let history = random_history(&mdp, episodes, 5);
        for cfg in [AgentConfig::phe(50.0, 4), AgentConfig::ucb(10.0), AgentConfig::rlsvi(100.0)] {
            let q = plan_lsvi_phe_or_ucb(&history, &features, &cfg);
            for h in 0..6 {
                for s in 0..4 {
                    for a in 0..2 {
                        let v = q.q(h, s, a);
                        assert!((0.0..=(6 - h) as f64).contains(&v), "{v}");
                    }
                }
            }
        }
    }
}

fn plan_lsvi_phe_or_ucb(history: &History, features: &FeatureMap, cfg: &AgentConfig) -> QEstimate {
    match cfg.algo {
        lsvi_phe::agents::Algorithm::LsviUcb => {
            plan_lsvi_ucb(history, features, cfg, StreamKey::root(1)).unwrap()
        }
        _ => plan_lsvi_phe(history, features, cfg, StreamKey::root(1)).unwrap(),
    }
}

#[test]
fn uniform_exploration_when_epsilon_is_one() {
    let q = QEstimate::from_table(&optimal_values(&two_state()), 2, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let ones = (0..n).filter(|_| act(&q, 0, 0, 2, 1.0, &mut rng) == 1).count();
    assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
}

fn action_sequence(cfg: &AgentConfig, seed: u64) -> Vec<usize> {
    let mdp = riverswim_spec(&RiverSwimConfig::with_size(4, 6)).unwrap();
    let features = tabular_features(&mdp);
    let mut agent = Agent::new(cfg, &mdp, &features).unwrap();
    let root = StreamKey::root(seed);
    let mut actions = Vec::new();
    for k in 0..30 {
        let key = root.episode(k);
        let q = agent.plan(key.purpose(Purpose::Planning)).unwrap();
        let mut act_rng = key.purpose(Purpose::Acting).rng();
        let mut env_rng = key.purpose(Purpose::Transitions).rng();
        let traj = run_episode_with(&mdp, k, &mut env_rng, |h, s| {
            act(&q, h, s, 2, agent.epsilon(), &mut act_rng)
        })
        .unwrap();
        actions.extend(traj.transitions.iter().map(|t| t.action));
        agent.observe(&traj).unwrap();
    }
    actions
}

#[test]
fn identical_seeds_give_identical_actions() {
    for cfg in [AgentConfig::phe(0.3, 3), AgentConfig::epsilon_greedy(0.2)] {
        assert_eq!(action_sequence(&cfg, 9), action_sequence(&cfg, 9));
    }
    assert_ne!(
        action_sequence(&AgentConfig::phe(0.3, 3), 9),
        action_sequence(&AgentConfig::phe(0.3, 3), 10)
    );
}

#[test]
fn theoretical_noise_keeps_values_optimistic() {
    let mdp = riverswim_spec(&RiverSwimConfig::with_size(6, 20)).unwrap();
    let features = tabular_features(&mdp);
    let dim = features.dim();
    let sigma = theoretical_sigma(mdp.horizon(), dim);
    let cfg = AgentConfig {
        m: Some(theoretical_m(dim, 0.1).unwrap()),
        sigma2: sigma * sigma,
        ..AgentConfig::phe(1.0, 1)
    };
    let q_star = optimal_values(&mdp);
    let mut agent = Agent::new(&cfg, &mdp, &features).unwrap();
    let root = StreamKey::root(21);
    let (mut optimistic, mut total) = (0usize, 0usize);
    for k in 0..200 {
        let key = root.episode(k);
        let q = agent.plan(key.purpose(Purpose::Planning)).unwrap();
        for h in 0..mdp.horizon() {
            for s in 0..6 {
                for a in 0..2 {
                    total += 1;
                    if q.q(h, s, a) >= q_star.q(h, s, a) - 1e-9 {
                        optimistic += 1;
                    }
                }
            }
        }
        let mut env_rng = key.purpose(Purpose::Transitions).rng();
        let traj = run_episode_with(&mdp, k, &mut env_rng, |h, s| q.greedy(h, s, 2)).unwrap();
        agent.observe(&traj).unwrap();
    }
    let rate = optimistic as f64 / total as f64;
    assert!(rate > 0.9, "optimism rate {rate}");
}

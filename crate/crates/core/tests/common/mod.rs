//! Reference computations and fixtures shared by the integration tests and
//! the acceptance suite. The oracles do not call into the library's
//! numerics.

#![allow(dead_code)]

use lsvi_phe::agents::History;
use lsvi_phe::gfa::{confidence_region_check, perturbed_fit, FiniteFunctionClass, TableFn};
use lsvi_phe::mdp::{step, TabularMdp, Trajectory, Transition};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Standard normal CDF from its Maclaurin series,
/// `Phi(x) = 1/2 + (1 / sqrt(2 pi)) sum_n (-1)^n x^(2n+1) / (2^n n! (2n+1))`.
pub fn normal_cdf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = 0.0;
    let mut n = 0u32;
    while term.abs() > 1e-18 || n < 4 {
        sum += term / (2 * n + 1) as f64;
        n += 1;
        term *= -x * x / (2.0 * n as f64);
        assert!(n < 500, "series did not converge at x = {x}");
    }
    0.5 + sum / (2.0 * std::f64::consts::PI).sqrt()
}

/// Value of the initial state under every deterministic Markov policy,
/// computed by pushing the state distribution forward.
pub fn brute_force_optimal_value(mdp: &TabularMdp) -> f64 {
    let (ns, na, horizon) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let slots = ns * horizon;
    let total = na.pow(slots as u32);
    let mut best = f64::NEG_INFINITY;
    let mut choice = vec![0usize; slots];
    for code in 0..total {
        let mut c = code;
        for slot in choice.iter_mut() {
            *slot = c % na;
            c /= na;
        }
        let mut dist = vec![0.0; ns];
        dist[mdp.initial_state()] = 1.0;
        let mut value = 0.0;
        for h in 0..horizon {
            let mut next = vec![0.0; ns];
            for s in 0..ns {
                if dist[s] == 0.0 {
                    continue;
                }
                let a = choice[h * ns + s];
                value += dist[s] * mdp.reward(h, s, a);
                for (s2, p) in mdp.transition_row(h, s, a).iter().enumerate() {
                    next[s2] += dist[s] * p;
                }
            }
            dist = next;
        }
        best = best.max(value);
    }
    best
}

/// Random MDP with uniform-then-normalized transition rows.
pub fn random_mdp<R: Rng>(rng: &mut R, ns: usize, na: usize, horizon: usize) -> TabularMdp {
    let mut transition = Vec::with_capacity(horizon * ns * na * ns);
    for _ in 0..horizon * ns * na {
        let row: Vec<f64> = (0..ns).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = row.iter().sum();
        let mut row: Vec<f64> = row.iter().map(|p| p / total).collect();
        // Put the rounding residue on the last entry so the row sums to 1.
        let head: f64 = row[..ns - 1].iter().sum();
        row[ns - 1] = 1.0 - head;
        transition.extend(row);
    }
    let reward = (0..horizon * ns * na).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(ns, na, horizon, 0, transition, reward).unwrap()
}

/// Random vector of norm at most one.
pub fn unit_ball_vector<R: Rng>(rng: &mut R, dim: usize) -> DVector<f64> {
    let v = DVector::from_fn(dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    let norm = v.norm();
    let radius: f64 = rng.random::<f64>().max(0.05);
    v * (radius / norm.max(1e-12))
}

/// `lambda I + sum phi phi^T`, accumulated densely.
pub fn dense_gram(features: &[DVector<f64>], lambda: f64) -> DMatrix<f64> {
    let dim = features[0].len();
    let mut gram = DMatrix::identity(dim, dim) * lambda;
    for phi in features {
        gram += phi * phi.transpose();
    }
    gram
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::identity(n, n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        a.swap_rows(col, pivot);
        inv.swap_rows(col, pivot);
        let p = a[(col, col)];
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = a[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(i, j)] -= f * a[(col, j)];
                        inv[(i, j)] -= f * inv[(col, j)];
                    }
                }
            }
        }
    }
    inv
}

/// Sample covariance of the columns' deviation from `center`.
pub fn covariance_about(samples: &[DVector<f64>], center: &DVector<f64>) -> DMatrix<f64> {
    let dim = center.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for x in samples {
        let d = x - center;
        cov += &d * d.transpose();
    }
    cov / samples.len() as f64
}

pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Least-squares slope of `ln y` against `ln x` over positive points.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Standard error of the mean with the sample standard deviation.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

/// Tiny one-step regression problem for confidence-region coverage: the
/// true function is `f*(s, a) = r(s, a) + sum_s' P(s' | s, a) V(s')` for a
/// fixed `V`, and the finite class holds every table within a grid of
/// offsets around `f*`.
pub struct CoverageFixture {
    pub class: FiniteFunctionClass,
    pub truth: TableFn,
    pub transition: Vec<Vec<f64>>,
    pub reward: Vec<f64>,
    pub v_next: Vec<f64>,
    pub samples: usize,
    pub sigma: f64,
    pub lambda: f64,
}

impl CoverageFixture {
    pub fn new() -> Self {
        let transition = vec![
            vec![0.7, 0.3],
            vec![0.2, 0.8],
            vec![0.5, 0.5],
            vec![0.9, 0.1],
        ];
        let reward = vec![0.4, 0.5, 0.6, 0.45];
        let v_next = vec![0.0, 1.0];
        let truth: Vec<f64> = (0..4)
            .map(|i| reward[i] + transition[i][0] * v_next[0] + transition[i][1] * v_next[1])
            .collect();
        let offsets = [-0.3, -0.15, 0.0, 0.15, 0.3];
        let mut members = Vec::new();
        for code in 0..offsets.len().pow(4) {
            let mut c = code;
            let values = truth
                .iter()
                .map(|t| {
                    let o = offsets[c % offsets.len()];
                    c /= offsets.len();
                    t + o
                })
                .collect();
            members.push(TableFn::new(2, values));
        }
        let anchors = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        let class = FiniteFunctionClass::new(2, 2, members, anchors, 3.0).unwrap();
        Self {
            class,
            truth: TableFn::new(2, truth),
            transition,
            reward,
            v_next,
            samples: 20,
            sigma: 0.3,
            lambda: 1.0,
        }
    }

    /// One replication: sample data, fit with perturbation, and return the
    /// region statistic of the true function around the fit.
    pub fn statistic<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut data = Vec::with_capacity(self.samples);
        for _ in 0..self.samples {
            let i = rng.random_range(0..4);
            let next = if rng.random::<f64>() < self.transition[i][0] { 0 } else { 1 };
            data.push(((i / 2, i % 2), self.reward[i] + self.v_next[next]));
        }
        let fit = perturbed_fit(&self.class, &data, self.sigma, self.lambda, rng).unwrap();
        let inputs: Vec<_> = data.iter().map(|(x, _)| *x).collect();
        confidence_region_check(&self.class, &fit, &self.truth, &inputs, self.lambda, 0.0).statistic
    }
}

/// Empirical `level`-quantile (upper order statistic).
pub fn upper_quantile(values: &mut [f64], level: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let idx = ((level * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    values[idx]
}

/// Calibrates `beta` as the `1 - delta / 2` quantile of the statistic over
/// `reps` replications, then returns `(beta, coverage)` measured over
/// `reps` fresh replications.
pub fn calibrated_coverage(fixture: &CoverageFixture, delta: f64, reps: usize, seed: u64) -> (f64, f64) {
    let mut calib_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut calib: Vec<f64> = (0..reps).map(|_| fixture.statistic(&mut calib_rng)).collect();
    let beta = upper_quantile(&mut calib, 1.0 - delta / 2.0);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let inside = (0..reps)
        .filter(|_| fixture.statistic(&mut eval_rng) <= beta)
        .count();
    (beta, inside as f64 / reps as f64)
}

/// Two states with rewards bounded away from zero and a synthetic history
/// that visits every pair at every step, so values stay strictly inside
/// `(0, H - h)`.
pub fn interior_fixture() -> (TabularMdp, History) {
    let transition = [0.6, 0.4, 0.3, 0.7, 0.5, 0.5, 0.8, 0.2];
    let reward = [0.35, 0.5, 0.45, 0.4];
    let mdp = TabularMdp::stationary(2, 2, 3, 0, &transition, &reward).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut history = History::new(3);
    for k in 0..60 {
        let transitions = (0..3)
            .map(|h| {
                let (state, action) = (k % 2, (k / 2) % 2);
                let (next_state, reward) = step(&mdp, h, state, action, &mut rng).unwrap();
                Transition { h, state, action, reward, next_state }
            })
            .collect::<Vec<_>>();
        let episode_return = transitions.iter().map(|t| t.reward).sum();
        history
            .push(&Trajectory { episode: k, transitions, episode_return })
            .unwrap();
    }
    (mdp, history)
}

//! Perturbed least-squares value iteration over a general function class.
//!
//! A [`RegressionOracle`] solves
//! `argmin_f sum_i (f(x_i) - y_i - eps_i)^2 + lambda sum_j (p_j(f) + xi_j)^2`
//! for given noise realizations; [`perturbed_fit`] draws the noise.
//! [`LinearOracle`] recovers the linear planner, and [`FiniteFunctionClass`]
//! is an explicit, exhaustively scanned class for small domains.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::agents::History;
use crate::env::FeatureMap;
use crate::error::{Error, Result};
use crate::mdp::ActionValues;
use crate::perturbed::GramState;
use crate::rng::StreamKey;

/// A regression input: `(state, action)`.
pub type StateAction = (usize, usize);

pub trait StateActionFn {
    fn eval(&self, s: usize, a: usize) -> f64;
}

pub trait RegressionOracle {
    type Fit: StateActionFn + Clone;

    /// Number of regularizer functionals `p_j`.
    fn n_regularizer_terms(&self) -> usize;

    /// Minimizer for fixed noise: `target_noise[i]` is added to `data[i].1`
    /// and `reg_noise[j]` to `p_j(f)`.
    fn fit_with_noise(
        &self,
        data: &[(StateAction, f64)],
        target_noise: &[f64],
        reg_noise: &[f64],
        lambda: f64,
    ) -> Result<Self::Fit>;

    /// `R(f - g)`.
    fn regularizer_of_difference(&self, f: &Self::Fit, g: &Self::Fit) -> f64;
}

/// Fits `oracle` on `data` with i.i.d. `N(0, sigma^2)` noise on every
/// target and every regularizer functional. Target noises are drawn first,
/// in data order, then the regularizer noises.
pub fn perturbed_fit<O, R>(
    oracle: &O,
    data: &[(StateAction, f64)],
    sigma: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<O::Fit>
where
    O: RegressionOracle + ?Sized,
    R: Rng + ?Sized,
{
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let mut draw = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let target_noise = draw(data.len());
    let reg_noise = draw(oracle.n_regularizer_terms());
    oracle.fit_with_noise(data, &target_noise, &reg_noise, lambda)
}

fn check_noise_lengths(data: usize, target: usize, reg: usize, expected_reg: usize) -> Result<()> {
    if target != data || reg != expected_reg {
        return Err(Error::invalid(format!(
            "noise lengths ({target}, {reg}) do not match data ({data}) and regularizer ({expected_reg})"
        )));
    }
    Ok(())
}

/// Linear functions `phi(s, a)^T theta` with `R(theta) = ||theta||^2`.
///
/// The regularizer functionals are `p_j(theta) = -theta_j`, so the
/// perturbed normal equations read
/// `Lambda theta = sum (y_i + eps_i) phi_i + lambda xi`.
#[derive(Debug, Clone)]
pub struct LinearOracle {
    features: Arc<FeatureMap>,
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub theta: DVector<f64>,
    features: Arc<FeatureMap>,
}

impl StateActionFn for LinearFit {
    fn eval(&self, s: usize, a: usize) -> f64 {
        self.features.phi(s, a).dot(&self.theta)
    }
}

impl LinearOracle {
    pub fn new(features: FeatureMap) -> Self {
        Self {
            features: Arc::new(features),
        }
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }
}

impl RegressionOracle for LinearOracle {
    type Fit = LinearFit;

    fn n_regularizer_terms(&self) -> usize {
        self.features.dim()
    }

    fn fit_with_noise(
        &self,
        data: &[(StateAction, f64)],
        target_noise: &[f64],
        reg_noise: &[f64],
        lambda: f64,
    ) -> Result<LinearFit> {
        let dim = self.features.dim();
        check_noise_lengths(data.len(), target_noise.len(), reg_noise.len(), dim)?;
        if !(lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        let mut gram = DMatrix::identity(dim, dim) * lambda;
        let mut rhs = DVector::from_column_slice(reg_noise) * lambda;
        for (((s, a), y), eps) in data.iter().zip(target_noise) {
            let phi = self.features.phi(*s, *a);
            gram.ger(1.0, phi, phi, 1.0);
            rhs.axpy(y + eps, phi, 1.0);
        }
        let theta = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("regularized Gram matrix not positive definite".into()))?
            .solve(&rhs);
        Ok(LinearFit {
            theta,
            features: Arc::clone(&self.features),
        })
    }

    fn regularizer_of_difference(&self, f: &LinearFit, g: &LinearFit) -> f64 {
        (&f.theta - &g.theta).norm_squared()
    }
}

/// A function tabulated over `S x A`.
#[derive(Debug, Clone, PartialEq)]
pub struct TableFn {
    n_actions: usize,
    values: Vec<f64>,
}

impl TableFn {
    /// `values` in `(s, a)` row-major order.
    pub fn new(n_actions: usize, values: Vec<f64>) -> Self {
        Self { n_actions, values }
    }

    pub fn constant(n_states: usize, n_actions: usize, c: f64) -> Self {
        Self::new(n_actions, vec![c; n_states * n_actions])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl StateActionFn for TableFn {
    fn eval(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }
}

/// An explicit list of candidate tables with `R(f) = sum_j f(x_j)^2` over
/// a fixed anchor set.
#[derive(Debug, Clone)]
pub struct FiniteFunctionClass {
    n_states: usize,
    n_actions: usize,
    members: Vec<TableFn>,
    anchors: Vec<StateAction>,
}

impl FiniteFunctionClass {
    /// Every member must take values in `[0, value_bound]`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        members: Vec<TableFn>,
        anchors: Vec<StateAction>,
        value_bound: f64,
    ) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("function class is empty"));
        }
        for (i, f) in members.iter().enumerate() {
            if f.values.len() != n_states * n_actions || f.n_actions != n_actions {
                return Err(Error::invalid(format!("member {i} has the wrong shape")));
            }
            if f.values.iter().any(|v| !(0.0..=value_bound).contains(v)) {
                return Err(Error::invalid(format!(
                    "member {i} leaves [0, {value_bound}]"
                )));
            }
        }
        if anchors.iter().any(|(s, a)| *s >= n_states || *a >= n_actions) {
            return Err(Error::invalid("anchor out of range"));
        }
        Ok(Self {
            n_states,
            n_actions,
            members,
            anchors,
        })
    }

    pub fn members(&self) -> &[TableFn] {
        &self.members
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn regularizer(&self, f: &TableFn) -> f64 {
        self.anchors.iter().map(|(s, a)| f.eval(*s, *a).powi(2)).sum()
    }

    /// Perturbed objective of member `f`.
    pub fn objective(
        &self,
        f: &TableFn,
        data: &[(StateAction, f64)],
        target_noise: &[f64],
        reg_noise: &[f64],
        lambda: f64,
    ) -> f64 {
        let loss: f64 = data
            .iter()
            .zip(target_noise)
            .map(|(((s, a), y), eps)| (f.eval(*s, *a) - y - eps).powi(2))
            .sum();
        let reg: f64 = self
            .anchors
            .iter()
            .zip(reg_noise)
            .map(|((s, a), xi)| (f.eval(*s, *a) + xi).powi(2))
            .sum();
        loss + lambda * reg
    }

    /// Index of the minimizing member; the lowest index wins ties.
    pub fn argmin_with_noise(
        &self,
        data: &[(StateAction, f64)],
        target_noise: &[f64],
        reg_noise: &[f64],
        lambda: f64,
    ) -> Result<usize> {
        check_noise_lengths(data.len(), target_noise.len(), reg_noise.len(), self.anchors.len())?;
        let mut best = 0;
        let mut best_obj = f64::INFINITY;
        for (i, f) in self.members.iter().enumerate() {
            let obj = self.objective(f, data, target_noise, reg_noise, lambda);
            if obj < best_obj {
                best = i;
                best_obj = obj;
            }
        }
        Ok(best)
    }

    /// Members inside the confidence region around `fitted`.
    pub fn region_members(
        &self,
        fitted: &TableFn,
        inputs: &[StateAction],
        lambda: f64,
        beta: f64,
    ) -> Vec<&TableFn> {
        self.members
            .iter()
            .filter(|g| confidence_region_check(self, fitted, g, inputs, lambda, beta).inside)
            .collect()
    }
}

impl RegressionOracle for FiniteFunctionClass {
    type Fit = TableFn;

    fn n_regularizer_terms(&self) -> usize {
        self.anchors.len()
    }

    fn fit_with_noise(
        &self,
        data: &[(StateAction, f64)],
        target_noise: &[f64],
        reg_noise: &[f64],
        lambda: f64,
    ) -> Result<TableFn> {
        let i = self.argmin_with_noise(data, target_noise, reg_noise, lambda)?;
        Ok(self.members[i].clone())
    }

    fn regularizer_of_difference(&self, f: &TableFn, g: &TableFn) -> f64 {
        self.anchors
            .iter()
            .map(|(s, a)| (f.eval(*s, *a) - g.eval(*s, *a)).powi(2))
            .sum()
    }
}

/// Per-step fits and the resulting clipped action values.
#[derive(Debug, Clone)]
pub struct GfaPlan<F> {
    n_states: usize,
    n_actions: usize,
    fits: Vec<Vec<F>>,
    values: Vec<f64>,
}

impl<F> GfaPlan<F> {
    pub fn fits(&self, h: usize) -> &[F] {
        &self.fits[h]
    }

    pub fn horizon(&self) -> usize {
        self.fits.len()
    }

    pub fn value(&self, h: usize, s: usize) -> f64 {
        (0..self.n_actions)
            .map(|a| self.values[(h * self.n_states + s) * self.n_actions + a])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action with lowest-index tie-breaking.
    pub fn policy(&self, h: usize, s: usize) -> usize {
        self.greedy(h, s, self.n_actions)
    }
}

impl<F> ActionValues for GfaPlan<F> {
    fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[(h * self.n_states + s) * self.n_actions + a]
    }
}

/// Backward pass calling `oracle` `m` times per step. Values are capped
/// at the remaining horizon but, unlike the linear planner, not floored
/// at zero. Step `h` draws its noise from `key.child(h)`.
#[allow(clippy::too_many_arguments)]
pub fn plan_gfa_phe<O: RegressionOracle + ?Sized>(
    history: &History,
    oracle: &O,
    n_states: usize,
    n_actions: usize,
    m: usize,
    sigma: f64,
    lambda: f64,
    key: StreamKey,
) -> Result<GfaPlan<O::Fit>> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    let horizon = history.horizon();
    let mut values = vec![0.0; horizon * n_states * n_actions];
    let mut fits: Vec<Vec<O::Fit>> = Vec::with_capacity(horizon);
    let mut v_next = vec![0.0; n_states];
    for h in (0..horizon).rev() {
        let cap = (horizon - h) as f64;
        let data: Vec<(StateAction, f64)> = history
            .step(h)
            .iter()
            .map(|t| ((t.state, t.action), t.reward + v_next[t.next_state]))
            .collect();
        let mut rng = key.child(h as u64).rng();
        let step_fits = (0..m)
            .map(|_| perturbed_fit(oracle, &data, sigma, lambda, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let layer = &mut values[h * n_states * n_actions..(h + 1) * n_states * n_actions];
        for s in 0..n_states {
            for a in 0..n_actions {
                let best = step_fits
                    .iter()
                    .map(|f| f.eval(s, a))
                    .fold(f64::NEG_INFINITY, f64::max);
                layer[s * n_actions + a] = best.min(cap);
            }
            v_next[s] = layer[s * n_actions..(s + 1) * n_actions]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        fits.push(step_fits);
    }
    fits.reverse();
    Ok(GfaPlan {
        n_states,
        n_actions,
        fits,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceRegionReport {
    pub inside: bool,
    /// `||g - f||_Z^2 + lambda R(g - f)`.
    pub statistic: f64,
    pub beta: f64,
    /// Width of the region at the queried input, when a finite class was
    /// available to enumerate it.
    pub width: Option<f64>,
}

/// Tests whether `probe` lies within `beta` of `fitted` in the empirical
/// norm on `inputs` plus the regularizer.
pub fn confidence_region_check<O: RegressionOracle + ?Sized>(
    oracle: &O,
    fitted: &O::Fit,
    probe: &O::Fit,
    inputs: &[StateAction],
    lambda: f64,
    beta: f64,
) -> ConfidenceRegionReport {
    let empirical: f64 = inputs
        .iter()
        .map(|(s, a)| (probe.eval(*s, *a) - fitted.eval(*s, *a)).powi(2))
        .sum();
    let statistic = empirical + lambda * oracle.regularizer_of_difference(probe, fitted);
    ConfidenceRegionReport {
        inside: statistic <= beta,
        statistic,
        beta,
        width: None,
    }
}

/// [`confidence_region_check`] for a finite class, also reporting the
/// region's width at `x` (`None` when the region is empty).
pub fn finite_region_report(
    class: &FiniteFunctionClass,
    fitted: &TableFn,
    probe: &TableFn,
    inputs: &[StateAction],
    lambda: f64,
    beta: f64,
    x: StateAction,
) -> ConfidenceRegionReport {
    let mut report = confidence_region_check(class, fitted, probe, inputs, lambda, beta);
    report.width = width(&class.region_members(fitted, inputs, lambda, beta), x).ok();
    report
}

/// `max_{f, g} f(x) - g(x)` over `members`.
pub fn width<F: StateActionFn>(members: &[F], x: StateAction) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::invalid(
            "confidence region is empty; the radius is too small",
        ));
    }
    let (lo, hi) = members.iter().map(|f| f.eval(x.0, x.1)).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), v| (lo.min(v), hi.max(v)),
    );
    Ok(hi - lo)
}

impl<F: StateActionFn> StateActionFn for &F {
    fn eval(&self, s: usize, a: usize) -> f64 {
        (**self).eval(s, a)
    }
}

/// Width `2 sqrt(beta) ||phi||_{Lambda^{-1}}` of the linear region
/// `{theta : (theta - theta_0)^T Lambda (theta - theta_0) <= beta}`.
pub fn linear_region_width(gram: &GramState, phi: &DVector<f64>, beta: f64) -> f64 {
    2.0 * beta.sqrt() * gram.weighted_norm(phi)
}

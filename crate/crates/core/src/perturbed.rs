//! Incremental ridge regression and Gaussian perturbation of its solution.
//!
//! Two samplers produce perturbed weights with the same law
//! `theta_hat + N(0, sigma^2 * Lambda^{-1})`:
//!
//! - [`sample_perturbed_weights_direct`] draws the Gaussian in weight space
//!   through a Cholesky factor of the inverse Gram matrix, `O(d^2)` per draw.
//! - [`sample_perturbed_weights_via_rewards`] perturbs every regression
//!   target and the regularizer and re-solves, `O(k d)` per draw.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Number of rank-one updates between dense refreshes of the inverse.
pub const REFRESH_INTERVAL: usize = 512;

const NORM_SLACK: f64 = 1e-9;

/// `Lambda = lambda * I + sum phi phi^T` together with its inverse.
#[derive(Debug, Clone)]
pub struct GramState {
    lambda: f64,
    gram: DMatrix<f64>,
    inverse: DMatrix<f64>,
    /// Lower Cholesky factor of `inverse`; `None` when stale.
    factor: Option<DMatrix<f64>>,
    count: usize,
    since_refresh: usize,
}

impl GramState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("Gram dimension must be positive"));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("ridge lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            lambda,
            gram: DMatrix::identity(dim, dim) * lambda,
            inverse: DMatrix::identity(dim, dim) / lambda,
            factor: None,
            count: 0,
            since_refresh: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of absorbed feature vectors.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    fn check_feature(&self, phi: &DVector<f64>) -> Result<()> {
        if phi.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature has dimension {}, Gram state has {}",
                phi.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Absorbs `phi`: `Lambda += phi phi^T`, with the inverse updated by the
    /// Sherman-Morrison identity.
    pub fn update(&mut self, phi: &DVector<f64>) -> Result<()> {
        self.check_feature(phi)?;
        if phi.norm() > 1.0 + NORM_SLACK {
            return Err(Error::invalid(format!("feature norm {} exceeds 1", phi.norm())));
        }
        self.gram.ger(1.0, phi, phi, 1.0);
        let u = &self.inverse * phi;
        let denom = 1.0 + phi.dot(&u);
        self.inverse.ger(-1.0 / denom, &u, &u, 1.0);
        self.factor = None;
        self.count += 1;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes the inverse from a dense Cholesky factorization of the
    /// Gram matrix.
    pub fn refresh(&mut self) -> Result<()> {
        let chol = self
            .gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical("Gram matrix lost positive definiteness".into()))?;
        self.inverse = chol.inverse();
        self.factor = None;
        self.since_refresh = 0;
        Ok(())
    }

    /// Lower Cholesky factor `L` with `L L^T = Lambda^{-1}`, computed on
    /// first use after an update.
    pub fn inverse_factor(&mut self) -> Result<&DMatrix<f64>> {
        if self.factor.is_none() {
            let sym = (&self.inverse + self.inverse.transpose()) * 0.5;
            let chol = sym.cholesky().ok_or_else(|| {
                Error::Numerical("inverse Gram matrix is not positive definite".into())
            })?;
            self.factor = Some(chol.l());
        }
        Ok(self.factor.as_ref().expect("factor just computed"))
    }

    /// `||phi||_{Lambda^{-1}}`.
    pub fn weighted_norm(&self, phi: &DVector<f64>) -> f64 {
        phi.dot(&(&self.inverse * phi)).max(0.0).sqrt()
    }
}

/// Where a weight vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Unperturbed,
    /// Index of the draw among the `M` perturbed copies.
    Perturbed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub theta: DVector<f64>,
    pub provenance: Provenance,
}

impl WeightVector {
    pub fn eval(&self, phi: &DVector<f64>) -> f64 {
        self.theta.dot(phi)
    }
}

/// Regression inputs and targets for one step, with the running moment
/// vector `rho = sum y phi`.
#[derive(Debug, Clone)]
pub struct RegressionTargetSet<'a> {
    features: Vec<&'a DVector<f64>>,
    targets: Vec<f64>,
    moment: DVector<f64>,
}

impl<'a> RegressionTargetSet<'a> {
    pub fn new(dim: usize) -> Self {
        Self {
            features: Vec::new(),
            targets: Vec::new(),
            moment: DVector::zeros(dim),
        }
    }

    pub fn with_capacity(dim: usize, capacity: usize) -> Self {
        Self {
            features: Vec::with_capacity(capacity),
            targets: Vec::with_capacity(capacity),
            moment: DVector::zeros(dim),
        }
    }

    pub fn push(&mut self, phi: &'a DVector<f64>, y: f64) -> Result<()> {
        if phi.len() != self.moment.len() {
            return Err(Error::invalid("target feature dimension mismatch"));
        }
        if !y.is_finite() {
            return Err(Error::invalid(format!("regression target {y} is not finite")));
        }
        self.moment.axpy(y, phi, 1.0);
        self.features.push(phi);
        self.targets.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    pub fn features(&self) -> &[&'a DVector<f64>] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// `theta_hat = Lambda^{-1} rho`.
pub fn ridge_solve(gram: &GramState, moment: &DVector<f64>) -> Result<WeightVector> {
    if moment.len() != gram.dim() {
        return Err(Error::invalid("moment vector dimension mismatch"));
    }
    Ok(WeightVector {
        theta: gram.inverse() * moment,
        provenance: Provenance::Unperturbed,
    })
}

fn check_noise(sigma: f64, m: usize) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("noise scale sigma must be positive, got {sigma}")));
    }
    if m == 0 {
        return Err(Error::invalid("number of perturbed samples M must be at least 1"));
    }
    Ok(())
}

fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample(StandardNormal))
}

/// Draws `M` weight vectors `theta_hat + sigma * L z` with `L L^T = Lambda^{-1}`.
pub fn sample_perturbed_weights_direct<R: Rng + ?Sized>(
    gram: &mut GramState,
    theta_hat: &WeightVector,
    sigma: f64,
    m: usize,
    rng: &mut R,
) -> Result<Vec<WeightVector>> {
    check_noise(sigma, m)?;
    let dim = gram.dim();
    if theta_hat.theta.len() != dim {
        return Err(Error::invalid("theta_hat dimension mismatch"));
    }
    let factor = gram.inverse_factor()?;
    Ok((0..m)
        .map(|j| {
            let z = standard_normal(dim, rng);
            let mut theta = theta_hat.theta.clone();
            theta.gemv(sigma, factor, &z, 1.0);
            WeightVector {
                theta,
                provenance: Provenance::Perturbed(j),
            }
        })
        .collect())
}

/// Perturbs each target with `N(0, sigma^2)` noise and the moment vector
/// with `N(0, sigma^2 lambda I)` noise, then solves. For every draw the
/// noise is consumed as all target noises in order, then the `d`
/// regularizer noises.
pub fn sample_perturbed_weights_via_rewards<R: Rng + ?Sized>(
    gram: &GramState,
    targets: &RegressionTargetSet<'_>,
    sigma: f64,
    m: usize,
    rng: &mut R,
) -> Result<Vec<WeightVector>> {
    check_noise(sigma, m)?;
    let dim = gram.dim();
    if targets.moment.len() != dim {
        return Err(Error::invalid("target set dimension mismatch"));
    }
    if targets.len() != gram.count() {
        return Err(Error::invalid(format!(
            "target set has {} samples but the Gram state absorbed {}",
            targets.len(),
            gram.count()
        )));
    }
    let prior_scale = sigma * gram.lambda().sqrt();
    Ok((0..m)
        .map(|j| {
            let mut rho = targets.moment.clone();
            for phi in &targets.features {
                let eps: f64 = rng.sample(StandardNormal);
                rho.axpy(sigma * eps, *phi, 1.0);
            }
            let xi = standard_normal(dim, rng);
            rho.axpy(prior_scale, &xi, 1.0);
            WeightVector {
                theta: gram.inverse() * rho,
                provenance: Provenance::Perturbed(j),
            }
        })
        .collect())
}

/// Fraction of `n_samples` rounds in which the largest of `m` perturbed
/// evaluations at `phi` exceeds the unperturbed one by at least
/// `margin * sigma * ||phi||_{Lambda^{-1}}`.
pub fn exceedance_rate<R: Rng + ?Sized>(
    gram: &mut GramState,
    phi: &DVector<f64>,
    sigma: f64,
    margin: f64,
    m: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    check_noise(sigma, m)?;
    if n_samples == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    gram.check_feature(phi)?;
    let threshold = margin * sigma * gram.weighted_norm(phi);
    let center = WeightVector {
        theta: DVector::zeros(gram.dim()),
        provenance: Provenance::Unperturbed,
    };
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let best = sample_perturbed_weights_direct(gram, &center, sigma, m, rng)?
            .iter()
            .map(|w| w.eval(phi))
            .fold(f64::NEG_INFINITY, f64::max);
        if best >= threshold {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_samples as f64)
}

/// Monte-Carlo estimate of `P(phi^T theta_tilde >= phi^T theta_hat + sigma ||phi||_{Lambda^{-1}})`.
pub fn anticoncentration_rate<R: Rng + ?Sized>(
    gram: &mut GramState,
    phi: &DVector<f64>,
    sigma: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    exceedance_rate(gram, phi, sigma, 1.0, 1, n_samples, rng)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Probability that at least one of `m` independent draws is optimistic
/// when each is optimistic with probability `v`.
pub fn boosted_probability(v: f64, m: usize) -> f64 {
    1.0 - (1.0 - v).powi(m as i32)
}

/// Sample count `ceil(d ln(delta / 9) / ln Phi(1))` from the linear regret
/// analysis.
pub fn theoretical_m(dim: usize, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1], got {delta}")));
    }
    let m = dim as f64 * (delta / 9.0).ln() / normal_cdf(1.0).ln();
    Ok((m.ceil() as usize).max(1))
}

/// Noise scale `H sqrt(d)`, the order prescribed by the linear analysis
/// with logarithmic factors dropped.
pub fn theoretical_sigma(horizon: usize, dim: usize) -> f64 {
    horizon as f64 * (dim as f64).sqrt()
}

/// `sum_k ||phi_k||^2_{Lambda_k^{-1}}` where `Lambda_k` has absorbed
/// `phi_1..phi_{k-1}`.
pub fn elliptic_potential(features: &[DVector<f64>], lambda: f64) -> Result<f64> {
    let dim = features
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::invalid("empty feature stream"))?;
    let mut gram = GramState::new(dim, lambda)?;
    let mut total = 0.0;
    for phi in features {
        gram.check_feature(phi)?;
        total += gram.weighted_norm(phi).powi(2);
        gram.update(phi)?;
    }
    Ok(total)
}

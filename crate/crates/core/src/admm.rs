//! Closed-form ADMM for the dual SVM problem, with every x-minimization
//! carried by one structured solve against the shifted operator.
//!
//! The split problem alternates three updates, each in closed form:
//!
//! ```text
//! q^k     = e + mu^k + beta z^k
//! x^{k+1} = Y (K~+beta I)^{-1} Y q^k  -  (w^T q^k / w1) w
//! z^{k+1} = clamp(x^{k+1} - mu^k / beta, 0, C)
//! mu^{k+1}= mu^k - beta (x^{k+1} - z^{k+1})
//! ```
//!
//! where `w = Y (K~+beta I)^{-1} e` and `w1 = e^T (K~+beta I)^{-1} e` are
//! computed once per factorization. The correction term enforces the
//! equality constraint `y^T x = 0` exactly (to rounding) at every iterate.
//! The iteration runs for a fixed number of steps; there is no residual
//! stopping rule.

use crate::error::{Error, Result};
use crate::hss::ShiftedFactorization;
use crate::instrument;
use crate::linalg::dot;
use crate::scalar::Scalar;

/// Penalty, box bound and iteration budget for one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig<F> {
    pub beta: F,
    pub c: F,
    pub max_it: usize,
}

impl<F: Scalar> AdmmConfig<F> {
    pub fn new(beta: F, c: F, max_it: usize) -> Result<Self> {
        if !(beta > F::zero()) {
            return Err(Error::Validation(format!("beta={beta} must be > 0")));
        }
        if !(c > F::zero()) {
            return Err(Error::Validation(format!("C={c} must be > 0")));
        }
        if max_it == 0 {
            return Err(Error::Validation("max_it must be >= 1".into()));
        }
        Ok(AdmmConfig { beta, c, max_it })
    }
}

/// Default iteration budget.
pub const DEFAULT_MAX_IT: usize = 10;

/// Penalty schedule by training-set size: 1e2 below 1e5 points, 1e3 up to
/// 1e6, 1e4 beyond.
pub fn beta_policy<F: Scalar>(d: usize) -> F {
    if d >= 1_000_000 {
        F::cast(1e4)
    } else if d >= 100_000 {
        F::cast(1e3)
    } else {
        F::cast(1e2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<F> {
    pub x: Vec<F>,
    pub z: Vec<F>,
    pub mu: Vec<F>,
    pub k: usize,
}

impl<F: Scalar> AdmmState<F> {
    pub fn zeros(d: usize) -> Self {
        AdmmState {
            x: vec![F::zero(); d],
            z: vec![F::zero(); d],
            mu: vec![F::zero(); d],
            k: 0,
        }
    }
}

/// Solve-derived quantities reused across iterations and across `C` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Precomputed<F> {
    /// `Y (K~+beta I)^{-1} e`
    pub w: Vec<F>,
    /// `e^T (K~+beta I)^{-1} e`
    pub w1: F,
    labels: Vec<F>,
}

impl<F: Scalar> Precomputed<F> {
    pub fn labels(&self) -> &[F] {
        &self.labels
    }
}

/// One solve against the all-ones vector; refuses when the result is
/// inconsistent with a positive definite shifted operator.
pub fn precompute<F: Scalar>(
    fact: &ShiftedFactorization<'_, F>,
    labels: &[F],
) -> Result<Precomputed<F>> {
    let d = fact.dim();
    if labels.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: labels.len(),
        });
    }
    let ones = vec![F::one(); d];
    let sol = fact.solve(&ones)?;
    let w1 = sol.iter().copied().sum::<F>();
    if !(w1 > F::zero()) {
        return Err(Error::Numerical(
            "shifted operator not positive definite; increase beta".into(),
        ));
    }
    let w: Vec<F> = sol.iter().zip(labels).map(|(&s, &y)| y * s).collect();
    Ok(Precomputed {
        w,
        w1,
        labels: labels.to_vec(),
    })
}

/// `x^{k+1}` from the current state: one structured solve plus the rank-one
/// correction that zeroes `y^T x`.
pub fn x_update<F: Scalar>(
    fact: &ShiftedFactorization<'_, F>,
    pre: &Precomputed<F>,
    state: &AdmmState<F>,
    cfg: &AdmmConfig<F>,
) -> Result<Vec<F>> {
    let d = fact.dim();
    let y = &pre.labels;
    // q^k = e + mu^k + beta z^k, solved against Y q^k
    let yq: Vec<F> = (0..d)
        .map(|i| y[i] * (F::one() + state.mu[i] + cfg.beta * state.z[i]))
        .collect();
    let sol = fact.solve(&yq)?;
    // w^T q^k, recovering q from Y q (Y^2 = I)
    let q: Vec<F> = (0..d).map(|i| y[i] * yq[i]).collect();
    let scale = dot(&pre.w, &q) / pre.w1;
    Ok((0..d).map(|i| y[i] * sol[i] - scale * pre.w[i]).collect())
}

/// Componentwise projection of `x^{k+1} - mu^k / beta` onto `[0, C]`.
pub fn z_update<F: Scalar>(state: &AdmmState<F>, x_new: &[F], cfg: &AdmmConfig<F>) -> Vec<F> {
    x_new
        .iter()
        .zip(&state.mu)
        .map(|(&x, &mu)| (x - mu / cfg.beta).max(F::zero()).min(cfg.c))
        .collect()
}

/// `mu^{k+1} = mu^k - beta (x^{k+1} - z^{k+1})`.
pub fn mu_update<F: Scalar>(
    state: &AdmmState<F>,
    x_new: &[F],
    z_new: &[F],
    cfg: &AdmmConfig<F>,
) -> Vec<F> {
    state
        .mu
        .iter()
        .zip(x_new.iter().zip(z_new))
        .map(|(&mu, (&x, &z))| mu - cfg.beta * (x - z))
        .collect()
}

/// Run exactly `max_it` iterations from the zero initialization and return
/// the final state; `z` is the coefficient vector used for model building.
pub fn run<F: Scalar>(
    fact: &ShiftedFactorization<'_, F>,
    pre: &Precomputed<F>,
    cfg: &AdmmConfig<F>,
) -> Result<AdmmState<F>> {
    let d = fact.dim();
    let mut state = AdmmState::zeros(d);
    for _ in 0..cfg.max_it {
        let x = x_update(fact, pre, &state, cfg)?;
        let z = z_update(&state, &x, cfg);
        let mu = mu_update(&state, &x, &z, cfg);
        state.x = x;
        state.z = z;
        state.mu = mu;
        state.k += 1;
    }
    instrument::ADMM_RUNS.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
    Ok(state)
}

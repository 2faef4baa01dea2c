//! The Σ-weighted soft-thresholding operator
//! `η_θ(v) = argmin_β ½‖β − v‖²_Σ + θ‖β‖₁` and its divergence.

use nalgebra::DVector;

use crate::covariance::CovarianceModel;
use crate::gaussian::soft_threshold;
use crate::lasso::QuadraticL1;
use crate::{Error, Result};

/// Support of a vector together with the signs of its entries.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveSet {
    indices: Vec<usize>,
    signs: Vec<i8>,
}

impl ActiveSet {
    /// Exact zeros are inactive.
    pub fn from_vector(v: &DVector<f64>) -> Self {
        let mut indices = Vec::new();
        let mut signs = Vec::new();
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                indices.push(i);
                signs.push(if x > 0.0 { 1 } else { -1 });
            }
        }
        ActiveSet { indices, signs }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxOptions {
    pub tol: f64,
    /// Sweep budget is `max_sweeps_per_dim · p`.
    pub max_sweeps_per_dim: usize,
}

impl Default for ProxOptions {
    fn default() -> Self {
        ProxOptions {
            tol: 1e-10,
            max_sweeps_per_dim: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProxResult {
    pub value: DVector<f64>,
    pub active: ActiveSet,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Evaluates `η_θ(v)` for the model's Σ.
pub fn prox_weighted_l1(
    v: &DVector<f64>,
    model: &CovarianceModel,
    theta: f64,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    prox_weighted_l1_warm(v, model, theta, None, opts)
}

/// [`prox_weighted_l1`] started from `warm`.
pub fn prox_weighted_l1_warm(
    v: &DVector<f64>,
    model: &CovarianceModel,
    theta: f64,
    warm: Option<&DVector<f64>>,
    opts: &ProxOptions,
) -> Result<ProxResult> {
    let p = model.dim();
    if v.len() != p {
        return Err(Error::Dimension(format!("v has length {} but Σ is {p}×{p}", v.len())));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::Parameter(format!("threshold must be a finite value >= 0, got {theta}")));
    }
    if theta == 0.0 {
        return Ok(ProxResult {
            value: v.clone(),
            active: ActiveSet::from_vector(v),
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    if model.is_diagonal() {
        let d = model.matrix().diagonal();
        let value = DVector::from_fn(p, |j, _| soft_threshold(v[j], theta / d[j]));
        return Ok(ProxResult {
            active: ActiveSet::from_vector(&value),
            value,
            kkt_residual: 0.0,
            iterations: 1,
        });
    }

    let sigma = model.matrix();
    let b = sigma * v;
    let max_sweeps = opts.max_sweeps_per_dim.saturating_mul(p).max(1);
    let out = QuadraticL1 { q: sigma, b: &b }.solve(theta, warm, opts.tol, max_sweeps);
    if !out.converged {
        return Err(Error::NotConverged {
            solver: "weighted soft threshold",
            iterations: out.sweeps,
            residual: out.kkt,
            last_iterate: out.beta.iter().copied().collect(),
        });
    }
    Ok(ProxResult {
        active: ActiveSet::from_vector(&out.beta),
        value: out.beta,
        kkt_residual: out.kkt,
        iterations: out.sweeps,
    })
}

/// Divergence of `η_θ` at the point that produced `result`: the support size.
pub fn divergence(result: &ProxResult) -> usize {
    result.active.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceFamily;

    #[test]
    fn identity_is_separable_soft_threshold() {
        let m = CovarianceFamily::Identity.build(2).unwrap();
        let r = prox_weighted_l1(&DVector::from_vec(vec![2.0, -0.3]), &m, 0.5, &ProxOptions::default()).unwrap();
        assert_eq!(r.value.as_slice(), &[1.5, 0.0]);
        assert_eq!(divergence(&r), 1);
    }

    #[test]
    fn zero_threshold_returns_input() {
        let m = CovarianceFamily::Ar1 { rho: 0.6 }.build(4).unwrap();
        let v = DVector::from_vec(vec![0.1, -2.0, 0.0, 3.5]);
        let r = prox_weighted_l1(&v, &m, 0.0, &ProxOptions::default()).unwrap();
        assert_eq!(r.value, v);
    }

    #[test]
    fn divergence_counts_support() {
        let m = CovarianceFamily::Identity.build(3).unwrap();
        let r = prox_weighted_l1(&DVector::from_vec(vec![2.0, -0.3, 0.7]), &m, 0.5, &ProxOptions::default()).unwrap();
        assert_eq!(divergence(&r), 2);
        let z = prox_weighted_l1(&DVector::from_vec(vec![0.1, -0.3, 0.2]), &m, 0.5, &ProxOptions::default()).unwrap();
        assert_eq!(divergence(&z), 0);
    }

    #[test]
    fn active_set_signs() {
        let a = ActiveSet::from_vector(&DVector::from_vec(vec![0.0, -1.0, 2.0, 0.0]));
        assert_eq!(a.indices(), &[1, 2]);
        assert_eq!(a.signs(), &[-1, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = CovarianceFamily::Identity.build(3).unwrap();
        assert!(matches!(
            prox_weighted_l1(&DVector::zeros(2), &m, 1.0, &ProxOptions::default()),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            prox_weighted_l1(&DVector::zeros(3), &m, -1.0, &ProxOptions::default()),
            Err(Error::Parameter(_))
        ));
    }
}

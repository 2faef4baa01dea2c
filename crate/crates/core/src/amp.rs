//! Covariance-aware approximate message passing for the LASSO.
//!
//! ```text
//! β^{t+1} = η_{θ_t}(Σ^{-1} Xᵀ z^t + β^t)
//! z^{t+1} = y − Xβ^{t+1} + (1/n) z^t · div η_{θ_t}(·)
//! ```
//!
//! from `β⁰ = 0`, `z⁰ = y`, with thresholds `θ_t = α τ_t` taken from the
//! state-evolution recursion rather than estimated from the data.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::covariance::CovarianceModel;
use crate::io::format_float;
use crate::prox::{divergence, prox_weighted_l1_warm, ProxOptions};
use crate::state_evolution::StateEvolution;
use crate::{Error, Result};

/// Thresholds `θ_t = α τ_t`; the last τ_t is held once the list runs out.
#[derive(Debug, Clone, PartialEq)]
pub struct TauSchedule {
    alpha: f64,
    tau_sq: Vec<f64>,
}

impl TauSchedule {
    pub fn new(alpha: f64, tau_sq: Vec<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
        }
        if tau_sq.is_empty() || tau_sq.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::Parameter("tau schedule must be nonempty and nonnegative".into()));
        }
        Ok(TauSchedule { alpha, tau_sq })
    }

    /// Runs the recursion of `se` for up to `steps` values.
    pub fn from_state_evolution(se: &StateEvolution, alpha: f64, init_tau_sq: Option<f64>, steps: usize) -> Result<Self> {
        Self::new(alpha, se.tau_schedule(alpha, init_tau_sq, steps.max(1))?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tau_sq(&self, t: usize) -> f64 {
        self.tau_sq[t.min(self.tau_sq.len() - 1)]
    }

    pub fn theta(&self, t: usize) -> f64 {
        self.alpha * self.tau_sq(t).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpConfig {
    pub max_iter: usize,
    /// Stop once both `‖Δβ‖²/p` and `‖Δz‖²/p` fall below this.
    pub tol: f64,
    pub prox: ProxOptions,
}

impl Default for AmpConfig {
    fn default() -> Self {
        AmpConfig {
            max_iter: 500,
            tol: 1e-8,
            prox: ProxOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub beta: DVector<f64>,
    pub residual: DVector<f64>,
    /// τ² used for the threshold that produced `beta`.
    pub tau_sq: f64,
    pub theta: f64,
    pub iteration: usize,
    /// Support size of the last denoising step.
    pub divergence: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpRecord {
    pub iteration: usize,
    /// `‖β^t − β₀‖²/p`, when β₀ was supplied.
    pub mse: Option<f64>,
    pub dbeta: f64,
    pub dz: f64,
    pub tau_sq: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmpStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct AmpTrace {
    pub records: Vec<AmpRecord>,
    pub status: AmpStatus,
    pub state: AmpState,
}

impl AmpTrace {
    /// Writes `iteration,mse,dbeta,dz,tau_sq,support`; a missing mse is empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,mse,dbeta,dz,tau_sq,support")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.iteration,
                r.mse.map(format_float).unwrap_or_default(),
                format_float(r.dbeta),
                format_float(r.dz),
                format_float(r.tau_sq),
                r.support
            )?;
        }
        Ok(())
    }
}

/// Window and growth factor of the divergence check.
const DIVERGENCE_WINDOW: usize = 20;
const DIVERGENCE_FACTOR: f64 = 10.0;

/// Runs AMP on `(X, y)` until both successive differences drop below
/// `cfg.tol` or `cfg.max_iter` steps are taken.
pub fn amp_run(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    model: &CovarianceModel,
    schedule: &TauSchedule,
    cfg: &AmpConfig,
    beta0: Option<&DVector<f64>>,
) -> Result<AmpTrace> {
    let (n, p) = x.shape();
    if y.len() != n || model.dim() != p || beta0.is_some_and(|b| b.len() != p) {
        return Err(Error::Parameter(format!(
            "dimension mismatch: X is {n}×{p}, y has {}, Σ is {1}×{1}",
            y.len(),
            model.dim()
        )));
    }
    let back = if model.is_identity() {
        x.transpose()
    } else {
        model.inv() * x.transpose()
    };
    let pf = p as f64;
    let mut beta = DVector::zeros(p);
    let mut z = y.clone();
    let mut records = Vec::new();
    // monitored quantity for the divergence check
    let mut watch: Vec<f64> = Vec::new();
    let mut divergence_count = 0;
    let mut status = AmpStatus::MaxIterations;
    let mut t = 0;
    while t < cfg.max_iter {
        let theta = schedule.theta(t);
        let v = &back * &z + &beta;
        let eta = prox_weighted_l1_warm(&v, model, theta, Some(&beta), &cfg.prox)?;
        divergence_count = divergence(&eta);
        let onsager = divergence_count as f64 / n as f64;
        let z_next = y - x * &eta.value + &z * onsager;
        let dbeta = (&eta.value - &beta).norm_squared() / pf;
        let dz = (&z_next - &z).norm_squared() / pf;
        beta = eta.value;
        z = z_next;
        t += 1;
        let mse = beta0.map(|b0| (&beta - b0).norm_squared() / pf);
        records.push(AmpRecord {
            iteration: t,
            mse,
            dbeta,
            dz,
            tau_sq: schedule.tau_sq(t - 1),
            support: divergence_count,
        });
        let w = mse.unwrap_or_else(|| z.norm_squared() / n as f64);
        if !w.is_finite() || !dbeta.is_finite() || !dz.is_finite() {
            return Err(Error::Diverged {
                iteration: t,
                reason: "non-finite iterate".into(),
            });
        }
        watch.push(w);
        if t > DIVERGENCE_WINDOW {
            let before = watch[t - 1 - DIVERGENCE_WINDOW];
            if w > DIVERGENCE_FACTOR * before && w > 1e-12 {
                return Err(Error::Diverged {
                    iteration: t,
                    reason: format!("monitored error grew from {before:.3e} to {w:.3e} in {DIVERGENCE_WINDOW} iterations"),
                });
            }
        }
        if dbeta < cfg.tol && dz < cfg.tol {
            status = AmpStatus::Converged;
            break;
        }
    }
    let tau_sq = schedule.tau_sq(t.saturating_sub(1));
    Ok(AmpTrace {
        records,
        status,
        state: AmpState {
            beta,
            residual: z,
            tau_sq,
            theta: schedule.alpha() * tau_sq.sqrt(),
            iteration: t,
            divergence: divergence_count,
            n,
        },
    })
}

/// `θ⋆(1 − div/n)`: the λ for which a converged AMP state is a LASSO optimum.
pub fn amp_fixed_point_lambda(state: &AmpState) -> f64 {
    state.theta * (1.0 - state.divergence as f64 / state.n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceFamily;

    fn state(theta: f64, divergence: usize, n: usize) -> AmpState {
        AmpState {
            beta: DVector::zeros(1),
            residual: DVector::zeros(1),
            tau_sq: 1.0,
            theta,
            iteration: 1,
            divergence,
            n,
        }
    }

    #[test]
    fn fixed_point_lambda_endpoints() {
        assert_eq!(amp_fixed_point_lambda(&state(0.7, 0, 10)), 0.7);
        assert_eq!(amp_fixed_point_lambda(&state(0.7, 10, 10)), 0.0);
    }

    #[test]
    fn first_step_uses_y_as_residual() {
        // With one iteration the update reads z⁰ = y and β⁰ = 0 only.
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, -0.5]);
        let y = DVector::from_vec(vec![2.0, -1.0]);
        let model = CovarianceFamily::Identity.build(3).unwrap();
        let sched = TauSchedule::new(1.0, vec![0.25]).unwrap();
        let cfg = AmpConfig {
            max_iter: 1,
            ..AmpConfig::default()
        };
        let tr = amp_run(&x, &y, &model, &sched, &cfg, None).unwrap();
        let v = x.transpose() * &y;
        let expect: Vec<f64> = v.iter().map(|&u| crate::gaussian::soft_threshold(u, 0.5)).collect();
        assert_eq!(tr.state.beta.as_slice(), expect.as_slice());
        let div = expect.iter().filter(|b| **b != 0.0).count() as f64;
        let z1 = &y - &x * &tr.state.beta + &y * (div / 2.0);
        assert_eq!(tr.state.residual, z1);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let model = CovarianceFamily::Identity.build(3).unwrap();
        let sched = TauSchedule::new(1.0, vec![1.0]).unwrap();
        let r = amp_run(&DMatrix::zeros(2, 3), &DVector::zeros(3), &model, &sched, &AmpConfig::default(), None);
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn csv_header_and_rows() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 0.0]);
        let model = CovarianceFamily::Identity.build(2).unwrap();
        let sched = TauSchedule::new(1.0, vec![0.01]).unwrap();
        let tr = amp_run(&x, &y, &model, &sched, &AmpConfig { max_iter: 3, ..Default::default() }, None).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), tr.records.len() + 1);
        assert!(text.starts_with("iteration,mse,dbeta,dz,tau_sq,support\n1,,"));
    }
}

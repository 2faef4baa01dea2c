//! Noiseless phase boundary `δ_c(ε, dε) = min_α M(ε, α)`.
//!
//! For one sign pattern `(B, s_B)` and one Gaussian draw `u = Σ^{1/2} z`,
//! `M` is the normalized quadratic form
//! `(u_A − α s_A)ᵀ Σ_AA^{-1} (u_A − α s_A) / p` over `A = B ∪ B̄`, where `B̄`
//! is the support of a reduced LASSO on the Schur complement
//! `S = Σ_{B^cB^c} − Σ_{B^cB} Σ_BB^{-1} Σ_{BB^c}`. Writing
//! `r(α) = u_{B^c} − Σ_{B^cB} Σ_BB^{-1}(u_B − α s_B) = r₀ + α r₁`, the
//! reduced problem is `min ½βᵀSβ − r(α)ᵀβ + α‖β‖₁` and the block inverse
//! splits the form into a `B` part, quadratic in α, plus `β̄ᵀSβ̄`. Each
//! replicate therefore keeps `S`, `r₀`, `r₁` and three scalars, and a new α
//! costs one warm-started coordinate-descent solve.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{factor_sqrt, CovarianceFamily, CovarianceModel, Conditioning};
use crate::gaussian::{cdf, pdf, soft_threshold};
use crate::lasso::QuadraticL1;
use crate::linalg::{cholesky, sorted_eigen};
use crate::prior::SignalPrior;
use crate::rng;
use crate::state_evolution::{extrapolate, mean_and_stderr, Estimate, McConfig};
use crate::{Error, Result};

/// Condition number above which a replicate's Schur complement is dropped.
pub const SCHUR_CONDITION_LIMIT: f64 = 1e10;

const REDUCED_TOL: f64 = 1e-10;
const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `M(ε, α)` for `Σ = I`:
/// `ε(1+α²) + 2(1−ε)[(1+α²)Φ(−α) − αφ(α)]`.
pub fn identity_m(epsilon: f64, alpha: f64) -> f64 {
    let a2 = 1.0 + alpha * alpha;
    epsilon * a2 + 2.0 * (1.0 - epsilon) * (a2 * cdf(-alpha) - alpha * pdf(alpha))
}

/// The Σ = I boundary as a curve in α: returns `(δ, ε)`.
pub fn identity_phase_curve(alpha: f64) -> (f64, f64) {
    let phi = pdf(alpha);
    let tail = alpha * cdf(-alpha);
    let den = alpha + 2.0 * phi - 2.0 * tail;
    (2.0 * phi / den, (2.0 * phi - 2.0 * tail) / den)
}

/// `δ_c(ε)` for `Σ = I`, by inverting the parametric curve in α.
pub fn identity_delta_c(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    // ε(α) falls from 1 at α = 0 to 0 as α → ∞
    let (mut lo, mut hi) = (0.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if identity_phase_curve(mid).1 > epsilon {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(identity_phase_curve(0.5 * (lo + hi)).0)
}

/// The explicit reduced LASSO `min ½‖ȳ − X̄β‖² + α‖β‖₁` over `B^c`.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    /// `S^{1/2}`
    pub x_bar: DMatrix<f64>,
    pub y_bar: DVector<f64>,
    /// Coordinates `B^c` indexing the columns of `x_bar`.
    pub rest: Vec<usize>,
}

/// Builds `(X̄, ȳ)` for the sign pattern of `beta0` and `u = Σ^{1/2} z`.
pub fn reduced_problem(
    model: &CovarianceModel,
    beta0: &DVector<f64>,
    u: &DVector<f64>,
    alpha: f64,
) -> Result<ReducedProblem> {
    let p = model.dim();
    if beta0.len() != p || u.len() != p {
        return Err(Error::Dimension(format!("expected vectors of length {p}")));
    }
    let (given, signs) = support_and_signs(beta0);
    let cond = Conditioning::new(model, &given)?;
    let (r0, r1) = reduced_linear_terms(&cond, u, &signs);
    let r = r0 + r1 * alpha;
    let f = factor_sqrt(&cond.schur)?;
    Ok(ReducedProblem {
        y_bar: &f.inv_sqrt * r,
        x_bar: f.sqrt,
        rest: cond.rest,
    })
}

fn support_and_signs(beta0: &DVector<f64>) -> (Vec<usize>, DVector<f64>) {
    let given: Vec<usize> = (0..beta0.len()).filter(|&i| beta0[i] != 0.0).collect();
    let signs = DVector::from_iterator(given.len(), given.iter().map(|&i| beta0[i].signum()));
    (given, signs)
}

fn reduced_linear_terms(cond: &Conditioning, u: &DVector<f64>, s: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let u_rest = DVector::from_iterator(cond.rest.len(), cond.rest.iter().map(|&i| u[i]));
    if cond.given.is_empty() {
        return (u_rest, DVector::zeros(cond.rest.len()));
    }
    let u_given = DVector::from_iterator(cond.given.len(), cond.given.iter().map(|&i| u[i]));
    let a = cond.solve_given(&u_given);
    let b = cond.solve_given(s);
    let r0 = u_rest - cond.cross.tr_mul(&a);
    let r1 = cond.cross.tr_mul(&b);
    (r0, r1)
}

enum Schur {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

struct Replicate {
    /// `u_BᵀΣ_BB⁻¹u_B`, `s_BᵀΣ_BB⁻¹u_B`, `s_BᵀΣ_BB⁻¹s_B`
    q: [f64; 3],
    schur: Schur,
    r0: DVector<f64>,
    r1: DVector<f64>,
}

struct RepValue {
    m: f64,
    reduced_empty: bool,
}

impl Replicate {
    fn build(model: &CovarianceModel, beta0: &DVector<f64>, z: &DVector<f64>, check_condition: bool) -> Result<Option<Self>> {
        let p = model.dim();
        let u = if model.is_identity() { z.clone() } else { model.sqrt() * z };
        let (given, signs) = support_and_signs(beta0);
        if given.len() == p {
            let chol = cholesky(model.matrix().clone()).ok_or(Error::NotPositiveDefinite {
                min_eigenvalue: model.eigenvalues().min(),
            })?;
            let a = chol.solve(&u);
            let b = chol.solve(&signs);
            return Ok(Some(Replicate {
                q: [u.dot(&a), signs.dot(&a), signs.dot(&b)],
                schur: Schur::Diagonal(DVector::zeros(0)),
                r0: DVector::zeros(0),
                r1: DVector::zeros(0),
            }));
        }
        let cond = Conditioning::new(model, &given)?;
        let q = if given.is_empty() {
            [0.0; 3]
        } else {
            let u_given = DVector::from_iterator(given.len(), given.iter().map(|&i| u[i]));
            let a = cond.solve_given(&u_given);
            let b = cond.solve_given(&signs);
            [u_given.dot(&a), signs.dot(&a), signs.dot(&b)]
        };
        let (r0, r1) = reduced_linear_terms(&cond, &u, &signs);
        let schur = if model.is_diagonal() {
            Schur::Diagonal(cond.schur.diagonal())
        } else {
            if check_condition {
                let (ev, _) = sorted_eigen(&cond.schur);
                let min = ev[ev.len() - 1];
                if !(min > 0.0) || ev[0] / min > SCHUR_CONDITION_LIMIT {
                    return Ok(None);
                }
            }
            Schur::Dense(cond.schur)
        };
        Ok(Some(Replicate { q, schur, r0, r1 }))
    }

    fn evaluate(&self, p: usize, alpha: f64, warm: &mut Option<DVector<f64>>) -> Option<RepValue> {
        let [q0, q1, q2] = self.q;
        let base = q0 - 2.0 * alpha * q1 + alpha * alpha * q2;
        let r = &self.r0 + &self.r1 * alpha;
        let (extra, empty) = match &self.schur {
            Schur::Diagonal(d) => {
                let mut acc = 0.0;
                let mut empty = true;
                for j in 0..d.len() {
                    let t = soft_threshold(r[j], alpha);
                    if t != 0.0 {
                        empty = false;
                        acc += t * t / d[j];
                    }
                }
                (acc, empty)
            }
            Schur::Dense(s) => {
                let max_sweeps = 50 * s.nrows().max(1);
                let out = QuadraticL1 { q: s, b: &r }.solve(alpha, warm.as_ref(), REDUCED_TOL, max_sweeps);
                if !out.converged {
                    return None;
                }
                let value = out.beta.dot(&(s * &out.beta));
                let empty = out.beta.iter().all(|&b| b == 0.0);
                *warm = Some(out.beta);
                (value, empty)
            }
        };
        Some(RepValue {
            m: (base + extra) / p as f64,
            reduced_empty: empty,
        })
    }
}

/// `M̂(ε, α)` at one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Replicates dropped for conditioning or reduced-problem failure.
    pub dropped: usize,
    pub total: usize,
    /// Fraction of kept replicates whose reduced LASSO had empty support.
    pub empty_reduced_fraction: f64,
}

/// Options for [`m_estimate`] and [`delta_c`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    /// Negate every sign of β₀ (swaps ε₊ and ε₋).
    pub flip_signs: bool,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub grid_points: usize,
    /// Golden-section stops once the bracket is narrower than this.
    pub alpha_tol: f64,
    /// Abort when more than this fraction of replicates fails.
    pub max_fail_fraction: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            flip_signs: false,
            alpha_lo: 0.01,
            alpha_hi: 10.0,
            grid_points: 40,
            alpha_tol: 1e-3,
            max_fail_fraction: 0.01,
        }
    }
}

/// Replicates for one `p`, fixed across α (common random numbers).
struct Ensemble {
    p: usize,
    reps: Vec<Replicate>,
    total: usize,
}

impl Ensemble {
    fn build(
        prior: &SignalPrior,
        model: &CovarianceModel,
        replicates: usize,
        seed: u64,
        flip: bool,
    ) -> Result<Self> {
        let p = model.dim();
        let check = model.condition_number() > SCHUR_CONDITION_LIMIT;
        let built: Vec<Result<Option<Replicate>>> = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut g = rng::stream(seed, &[rng::tag::PHASE, p as u64, r as u64]);
                let beta0 = if flip {
                    prior.negated().sample(p, &mut g)
                } else {
                    prior.sample(p, &mut g)
                };
                let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut g));
                Replicate::build(model, &beta0, &z, check)
            })
            .collect();
        let mut reps = Vec::with_capacity(replicates);
        for b in built {
            // ill-conditioned replicates are counted as failures by `evaluate`
            if let Some(r) = b? {
                reps.push(r);
            }
        }
        Ok(Ensemble {
            p,
            reps,
            total: replicates,
        })
    }

    fn evaluate(&self, alpha: f64, warm: &mut [Option<DVector<f64>>], max_fail: f64) -> Result<MEstimate> {
        let vals: Vec<Option<RepValue>> = self
            .reps
            .par_iter()
            .zip(warm.par_iter_mut())
            .map(|(r, w)| r.evaluate(self.p, alpha, w))
            .collect();
        let kept: Vec<&RepValue> = vals.iter().flatten().collect();
        let dropped = self.total - kept.len();
        if dropped as f64 > max_fail * self.total as f64 || kept.len() < 2 {
            return Err(Error::ReplicateFailures {
                failed: dropped,
                total: self.total,
            });
        }
        let ms: Vec<f64> = kept.iter().map(|v| v.m).collect();
        let est = mean_and_stderr(&ms);
        Ok(MEstimate {
            value: est.value,
            stderr: est.stderr,
            dropped,
            total: self.total,
            empty_reduced_fraction: kept.iter().filter(|v| v.reduced_empty).count() as f64 / kept.len() as f64,
        })
    }
}

/// Monte-Carlo `M̂(ε, α)` over `replicates` draws at the model's dimension.
pub fn m_estimate(
    prior: &SignalPrior,
    model: &CovarianceModel,
    alpha: f64,
    replicates: usize,
    seed: u64,
    opts: &PhaseOptions,
) -> Result<MEstimate> {
    prior.validate()?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Parameter(format!("alpha must be >= 0, got {alpha}")));
    }
    if replicates < 2 {
        return Err(Error::Parameter("at least two replicates are needed".into()));
    }
    let ens = Ensemble::build(prior, model, replicates, seed, opts.flip_signs)?;
    let mut warm = vec![None; ens.reps.len()];
    ens.evaluate(alpha, &mut warm, opts.max_fail_fraction)
}

/// One point of the phase boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub epsilon: f64,
    pub d_epsilon: f64,
    pub alpha_star: f64,
    pub delta_c: f64,
    /// `(p, min_α M̂_p(α))` over the evaluated α.
    pub per_p: Vec<(usize, f64)>,
    pub stderr: f64,
    pub fail_fraction: f64,
    /// Set when the minimizer stayed on the edge of the extended α-grid.
    pub boundary_warning: bool,
}

struct Objective {
    members: Vec<Ensemble>,
    warm: Vec<Vec<Option<DVector<f64>>>>,
    max_fail: f64,
    closed_form: Option<f64>,
    per_p_min: Vec<f64>,
    worst_fail: f64,
}

impl Objective {
    fn eval(&mut self, alpha: f64) -> Result<Estimate> {
        if let Some(eps) = self.closed_form {
            return Ok(Estimate::exact(identity_m(eps, alpha)));
        }
        let mut samples = Vec::with_capacity(self.members.len());
        let mut var = 0.0;
        let mut wsum = 0.0;
        for (k, (ens, warm)) in self.members.iter().zip(self.warm.iter_mut()).enumerate() {
            let m = ens.evaluate(alpha, warm, self.max_fail)?;
            let fail = m.dropped as f64 / m.total as f64;
            self.worst_fail = self.worst_fail.max(fail);
            self.per_p_min[k] = self.per_p_min[k].min(m.value);
            let w = (ens.p as f64).sqrt();
            var += w * w * m.stderr * m.stderr;
            wsum += w;
            samples.push((ens.p, m.value));
        }
        Ok(Estimate {
            value: extrapolate(&samples),
            stderr: var.sqrt() / wsum,
        })
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// `δ_c(ε, dε)`: minimum over α of the extrapolated `M̂`.
///
/// With `mc.quadrature` and `Σ = I` the closed-form `M` is minimized instead.
pub fn delta_c(
    prior: &SignalPrior,
    family: &CovarianceFamily,
    mc: &McConfig,
    opts: &PhaseOptions,
) -> Result<PhasePoint> {
    prior.validate()?;
    family.validate()?;
    mc.validate()?;
    if !(prior.epsilon > 0.0 && prior.epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0, 1), got {}", prior.epsilon)));
    }
    if !(opts.alpha_lo > 0.0 && opts.alpha_hi > opts.alpha_lo && opts.grid_points >= 3) {
        return Err(Error::Parameter("alpha grid needs 0 < lo < hi and at least 3 points".into()));
    }
    let closed_form = (mc.quadrature && family.is_identity()).then_some(prior.epsilon);
    let mut members = Vec::new();
    if closed_form.is_none() {
        for (k, &p) in mc.p_grid.iter().enumerate() {
            let model = family.build(p)?;
            let seed = rng::stream_key(mc.seed, &[rng::tag::PHASE, k as u64]);
            members.push(Ensemble::build(prior, &model, mc.replicates, seed, opts.flip_signs)?);
        }
    }
    let warm = members.iter().map(|e| vec![None; e.reps.len()]).collect();
    let n_members = members.len();
    let mut obj = Objective {
        members,
        warm,
        max_fail: opts.max_fail_fraction,
        closed_form,
        per_p_min: vec![f64::INFINITY; n_members],
        worst_fail: 0.0,
    };

    let mut grid = log_grid(opts.alpha_lo, opts.alpha_hi, opts.grid_points);
    let mut values: Vec<f64> = Vec::with_capacity(grid.len());
    for &a in &grid {
        values.push(obj.eval(a)?.value);
    }
    let argmin = |v: &[f64]| {
        v.iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    };
    let mut k = argmin(&values);
    let mut boundary_warning = false;
    if k == 0 || k == grid.len() - 1 {
        log::warn!(
            "phase: minimizer at alpha-grid edge {:.4}; extending the grid once",
            grid[k]
        );
        let (lo, hi) = if k == 0 {
            (opts.alpha_lo / 100.0, opts.alpha_lo * 10.0)
        } else {
            (opts.alpha_hi / 10.0, opts.alpha_hi * 10.0)
        };
        grid = log_grid(lo, hi, opts.grid_points);
        values.clear();
        for &a in &grid {
            values.push(obj.eval(a)?.value);
        }
        k = argmin(&values);
        boundary_warning = k == 0 || k == grid.len() - 1;
    }

    let (mut a, mut b) = if k == 0 {
        (0.0, grid[1])
    } else if k == grid.len() - 1 {
        (grid[k - 1], grid[k])
    } else {
        (grid[k - 1], grid[k + 1])
    };
    let mut best = (grid[k], values[k]);
    let mut c = b - INV_GOLDEN * (b - a);
    let mut d = a + INV_GOLDEN * (b - a);
    let mut fc = obj.eval(c)?.value;
    let mut fd = obj.eval(d)?.value;
    while b - a > opts.alpha_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_GOLDEN * (b - a);
            fc = obj.eval(c)?.value;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_GOLDEN * (b - a);
            fd = obj.eval(d)?.value;
        }
    }
    for (x, f) in [(c, fc), (d, fd)] {
        if f < best.1 {
            best = (x, f);
        }
    }
    let at_best = obj.eval(best.0)?;
    let per_p = mc
        .p_grid
        .iter()
        .copied()
        .zip(obj.per_p_min.iter().copied())
        .collect();
    Ok(PhasePoint {
        epsilon: prior.epsilon,
        d_epsilon: prior.d_epsilon,
        alpha_star: best.0,
        delta_c: at_best.value.min(1.0),
        per_p: if closed_form.is_some() { Vec::new() } else { per_p },
        stderr: at_best.stderr,
        fail_fraction: obj.worst_fail,
        boundary_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_limits() {
        assert_eq!(identity_m(1.0, 0.0), 1.0);
        let (d, e) = identity_phase_curve(0.0);
        assert!((d - 1.0).abs() < 1e-15 && (e - 1.0).abs() < 1e-15);
        let (d, e) = identity_phase_curve(30.0);
        assert!(d < 1e-100 && e < 1e-100);
    }

    #[test]
    fn parametric_identity() {
        for &a in &[0.3, 1.0, 1.7, 3.0] {
            let (d, _) = identity_phase_curve(a);
            let lhs = d * (a + 2.0 * pdf(a) - 2.0 * a * cdf(-a));
            assert!((lhs - 2.0 * pdf(a)).abs() < 1e-14);
        }
    }

    #[test]
    fn identity_delta_c_is_min_of_m() {
        for &eps in &[0.1, 0.3, 0.6] {
            let dc = identity_delta_c(eps).unwrap();
            let grid_min = (1..20000)
                .map(|i| identity_m(eps, i as f64 * 5e-4))
                .fold(f64::INFINITY, f64::min);
            assert!((dc - grid_min).abs() < 1e-6, "eps={eps}: {dc} vs {grid_min}");
        }
    }

    #[test]
    fn quadrature_delta_c_uses_closed_form() {
        let mc = McConfig::default();
        let pt = delta_c(&SignalPrior::new(0.2, 0.0), &CovarianceFamily::Identity, &mc, &PhaseOptions::default()).unwrap();
        assert!((pt.delta_c - identity_delta_c(0.2).unwrap()).abs() < 1e-6);
        assert_eq!(pt.stderr, 0.0);
    }

    #[test]
    fn rejects_degenerate_epsilon() {
        let mc = McConfig::default();
        for eps in [0.0, 1.0] {
            let r = delta_c(&SignalPrior::new(eps, 0.0), &CovarianceFamily::Identity, &mc, &PhaseOptions::default());
            assert!(matches!(r, Err(Error::Parameter(_))));
        }
    }
}

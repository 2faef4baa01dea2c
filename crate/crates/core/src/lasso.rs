//! Coordinate-descent LASSO and a basis-pursuit front end.
//!
//! The workhorse is [`QuadraticL1`], which minimizes
//! `½ βᵀQβ − bᵀβ + λ‖β‖₁` for a symmetric positive semi-definite `Q` by cyclic
//! coordinate descent. Once the sign pattern settles, the solver solves the
//! restricted KKT system on the support exactly and moves toward that point
//! without crossing a sign boundary. The LASSO (`Q = XᵀX`, `b = Xᵀy`) and the
//! Σ-weighted proximal operator (`Q = Σ`, `b = Σv`) are both instances.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{cholesky, submatrix};
use crate::prox::ActiveSet;
use crate::{Error, Result};

/// Above this many columns the solver updates residuals instead of caching
/// the Gram matrix.
pub const GRAM_LIMIT: usize = 2000;

const INNER_PASSES: usize = 50;

/// Cholesky pivots below this fraction of the largest diagonal entry mark
/// `Q_AA` as numerically singular.
const SINGULAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Bound on the max KKT residual `max_j dist(Xᵀ(y−Xβ)_j, λ∂|β_j|)`.
    pub tol: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-9,
            max_sweeps: 10_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoSolution {
    pub beta: DVector<f64>,
    pub active: ActiveSet,
    pub objective: f64,
    pub kkt_residual: f64,
    pub lambda: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct CdOutcome {
    pub beta: DVector<f64>,
    pub kkt: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Null space of a symmetric positive semi-definite `q` from a
/// column-pivoted QR `qP = QR`: with `R = [R₁₁ R₁₂; 0 R₂₂]` and `R₂₂`
/// negligible, the columns of `P[−R₁₁⁻¹R₁₂; I]`. At least one direction is
/// returned, for the smallest pivot, since the caller has already found `q`
/// numerically singular.
fn null_basis(q: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let k = q.nrows();
    let (_, r, perm) = q.clone().col_piv_qr().unpack();
    let mut order = DMatrix::from_fn(1, k, |_, j| j as f64);
    perm.permute_columns(&mut order);
    let top = r[(0, 0)].abs();
    let rank = (0..k)
        .find(|&i| r[(i, i)].abs() <= SINGULAR_PIVOT * top)
        .unwrap_or(k)
        .min(k - 1);
    let r11 = r.view((0, 0), (rank, rank)).into_owned();
    (rank..k)
        .filter_map(|j| {
            let rhs = r.view((0, j), (rank, 1)).into_owned();
            let u = r11.solve_upper_triangular(&rhs)?;
            let mut d = DVector::zeros(k);
            for i in 0..rank {
                d[order[(0, i)] as usize] = -u[(i, 0)];
            }
            d[order[(0, j)] as usize] = 1.0;
            d.iter().all(|v| v.is_finite()).then(|| {
                let norm = d.norm();
                d / norm
            })
        })
        .collect()
}

/// Largest `t ≤ t_max` keeping `x + t·d` on the closed sign face of `x`,
/// and the coordinate that reaches zero there.
fn first_crossing(x: &DVector<f64>, d: &DVector<f64>, t_max: f64) -> (f64, Option<usize>) {
    let mut t = t_max;
    let mut blocking = None;
    for i in 0..x.len() {
        if x[i] != 0.0 && d[i] != 0.0 && d[i].signum() != x[i].signum() {
            let frac = -x[i] / d[i];
            if frac < t {
                t = frac;
                blocking = Some(i);
            }
        }
    }
    (t, blocking)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Polish {
    /// Landed on the exact minimizer over the current face.
    Full,
    /// Newton step cut short where a coordinate reached zero.
    Blocked,
    /// Support was rank deficient and has been trimmed by null-space slides.
    Slid,
    Stuck,
}

/// `½ βᵀQβ − bᵀβ + λ‖β‖₁`
pub(crate) struct QuadraticL1<'a> {
    pub q: &'a DMatrix<f64>,
    pub b: &'a DVector<f64>,
}

#[inline]
fn coord_kkt(beta: f64, g: f64, lambda: f64) -> f64 {
    if beta > 0.0 {
        (g + lambda).abs()
    } else if beta < 0.0 {
        (g - lambda).abs()
    } else {
        (g.abs() - lambda).max(0.0)
    }
}

pub(crate) fn kkt_residual(beta: &DVector<f64>, grad: &DVector<f64>, lambda: f64) -> f64 {
    beta.iter()
        .zip(grad.iter())
        .map(|(&b, &g)| coord_kkt(b, g, lambda))
        .fold(0.0, f64::max)
}

fn sign_pattern(beta: &DVector<f64>) -> Vec<i8> {
    beta.iter()
        .map(|&b| if b > 0.0 { 1 } else if b < 0.0 { -1 } else { 0 })
        .collect()
}

impl<'a> QuadraticL1<'a> {
    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.q * beta - self.b
    }

    #[inline]
    fn update(&self, j: usize, lambda: f64, beta: &mut DVector<f64>, g: &mut DVector<f64>) -> f64 {
        let qjj = self.q[(j, j)];
        if qjj <= 0.0 {
            return 0.0;
        }
        let old = beta[j];
        let z = old - g[j] / qjj;
        let new = crate::gaussian::soft_threshold(z, lambda / qjj);
        let d = new - old;
        if d != 0.0 {
            beta[j] = new;
            g.axpy(d, &self.q.column(j), 1.0);
        }
        d
    }

    /// Solves `Q_AA x = b_A − λ s_A` on the current support and moves toward
    /// `x` as far as the sign pattern allows. A rank-deficient `Q_AA` (more
    /// active columns than rows) is first handed to [`slide`](Self::slide).
    /// A step that would raise the objective is not taken.
    fn polish(&self, lambda: f64, beta: &mut DVector<f64>, g: &mut DVector<f64>) -> Polish {
        let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        if support.is_empty() {
            return Polish::Stuck;
        }
        let k = support.len();
        let qa = submatrix(self.q, &support, &support);
        let max_diag = qa.diagonal().max();
        let chol = cholesky(qa.clone()).filter(|c| {
            let l = c.l_dirty();
            (0..k).all(|i| l[(i, i)] * l[(i, i)] > SINGULAR_PIVOT * max_diag)
        });
        let Some(chol) = chol else {
            return self.slide(lambda, &support, &qa, beta, g);
        };
        let old = DVector::from_iterator(k, support.iter().map(|&j| beta[j]));
        let rhs = DVector::from_iterator(k, support.iter().map(|&j| self.b[j] - lambda * beta[j].signum()));
        let x = chol.solve(&rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Polish::Stuck;
        }
        let dir = x - &old;
        let (t, blocking) = first_crossing(&old, &dir, 1.0);
        if t <= 0.0 {
            return Polish::Stuck;
        }
        let new = DVector::from_fn(k, |i, _| {
            let target = if Some(i) == blocking { 0.0 } else { old[i] + t * dir[i] };
            // stay on the face: rounding must not flip a sign
            if target.signum() != old[i].signum() {
                0.0
            } else {
                target
            }
        });
        if !self.apply_if_descent(lambda, &support, &qa, &old, &new, beta, g) {
            return Polish::Stuck;
        }
        if blocking.is_none() {
            Polish::Full
        } else {
            Polish::Blocked
        }
    }

    /// Moves along null directions of `Q_AA`, which leave the smooth part
    /// unchanged, each time until a coordinate reaches zero, with the sign
    /// chosen so the ℓ1 term does not grow. A column-pivoted QR supplies the
    /// null space; after each zeroed coordinate the basis is reduced by
    /// elimination so it stays null for the shrunken support.
    fn slide(
        &self,
        lambda: f64,
        support: &[usize],
        qa: &DMatrix<f64>,
        beta: &mut DVector<f64>,
        g: &mut DVector<f64>,
    ) -> Polish {
        let k = support.len();
        let mut basis = null_basis(qa);
        let mut moved = false;
        while let Some(mut d) = basis.pop() {
            let old = DVector::from_iterator(k, support.iter().map(|&j| beta[j]));
            for i in 0..k {
                if old[i] == 0.0 {
                    d[i] = 0.0;
                }
            }
            if d.iter().zip(old.iter()).map(|(di, bi)| di * bi.signum()).sum::<f64>() > 0.0 {
                d = -d;
            }
            let (t, blocking) = first_crossing(&old, &d, f64::INFINITY);
            let Some(c) = blocking else { continue };
            if !(t > 0.0 && t.is_finite()) {
                continue;
            }
            let new = DVector::from_fn(k, |i, _| {
                let target = if i == c || old[i] == 0.0 { 0.0 } else { old[i] + t * d[i] };
                if target.signum() != old[i].signum() {
                    0.0
                } else {
                    target
                }
            });
            if !self.apply_if_descent(lambda, support, qa, &old, &new, beta, g) {
                continue;
            }
            moved = true;
            // keep the remaining directions null on the new face: eliminate
            // their component along the coordinate that just left
            if let Some((piv, _)) = basis
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v[c].abs()))
                .filter(|(_, a)| *a > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1))
            {
                let pivot = basis.swap_remove(piv);
                for v in &mut basis {
                    let f = v[c] / pivot[c];
                    v.axpy(-f, &pivot, 1.0);
                }
            }
        }
        if moved {
            Polish::Slid
        } else {
            Polish::Stuck
        }
    }

    /// Replaces `old` by `new` on `support` unless that raises the objective
    /// beyond rounding.
    #[allow(clippy::too_many_arguments)]
    fn apply_if_descent(
        &self,
        lambda: f64,
        support: &[usize],
        qa: &DMatrix<f64>,
        old: &DVector<f64>,
        new: &DVector<f64>,
        beta: &mut DVector<f64>,
        g: &mut DVector<f64>,
    ) -> bool {
        let step = new - old;
        let ga = DVector::from_iterator(support.len(), support.iter().map(|&j| g[j]));
        let change = ga.dot(&step) + 0.5 * step.dot(&(qa * &step)) + lambda * (new.lp_norm(1) - old.lp_norm(1));
        let scale = lambda * old.lp_norm(1) + ga.abs().dot(&old.abs()) + f64::MIN_POSITIVE;
        if change > 1e-13 * scale {
            return false;
        }
        for (i, &j) in support.iter().enumerate() {
            if step[i] != 0.0 {
                beta[j] = new[i];
                g.axpy(step[i], &self.q.column(j), 1.0);
            }
        }
        true
    }

    pub fn solve(
        &self,
        lambda: f64,
        warm: Option<&DVector<f64>>,
        tol: f64,
        max_sweeps: usize,
    ) -> CdOutcome {
        let p = self.b.len();
        let mut beta = match warm {
            Some(w) if w.len() == p => w.clone(),
            _ => DVector::zeros(p),
        };
        let mut g = self.gradient(&beta);
        let mut prev_pattern: Vec<i8> = Vec::new();
        let mut polished_pattern: Vec<i8> = Vec::new();
        let mut kkt = kkt_residual(&beta, &g, lambda);

        for sweep in 1..=max_sweeps {
            if kkt <= tol {
                g = self.gradient(&beta);
                kkt = kkt_residual(&beta, &g, lambda);
                if kkt <= tol {
                    return CdOutcome {
                        beta,
                        kkt,
                        sweeps: sweep - 1,
                        converged: true,
                    };
                }
            }

            for j in 0..p {
                self.update(j, lambda, &mut beta, &mut g);
            }
            let support: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
            for _ in 0..INNER_PASSES {
                let mut max_change = 0.0f64;
                for &j in &support {
                    let d = self.update(j, lambda, &mut beta, &mut g);
                    max_change = max_change.max(d.abs() * self.q[(j, j)]);
                }
                if max_change <= 0.1 * tol {
                    break;
                }
            }

            let pattern = sign_pattern(&beta);
            if pattern == prev_pattern && pattern != polished_pattern {
                // slide until the support has full rank, then one Newton step
                for _ in 0..p {
                    if self.polish(lambda, &mut beta, &mut g) != Polish::Slid {
                        break;
                    }
                }
                polished_pattern = pattern.clone();
            }
            prev_pattern = pattern;
            kkt = kkt_residual(&beta, &g, lambda);
        }
        g = self.gradient(&beta);
        kkt = kkt_residual(&beta, &g, lambda);
        CdOutcome {
            converged: kkt <= tol,
            beta,
            kkt,
            sweeps: max_sweeps,
        }
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("lambda must be a finite value >= 0, got {lambda}")));
    }
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "X has {} rows but y has length {}",
            x.nrows(),
            y.len()
        )));
    }
    Ok(())
}

fn finish(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, beta: DVector<f64>, sweeps: usize) -> LassoSolution {
    let resid = y - x * &beta;
    let grad = -(x.transpose() * &resid);
    LassoSolution {
        objective: 0.5 * resid.norm_squared() + lambda * beta.lp_norm(1),
        kkt_residual: kkt_residual(&beta, &grad, lambda),
        active: ActiveSet::from_vector(&beta),
        beta,
        lambda,
        sweeps,
    }
}

/// Cyclic coordinate descent with residual updates, for wide problems where
/// the Gram matrix is not cached.
fn solve_by_residuals(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    opts: &LassoOptions,
) -> CdOutcome {
    let p = x.ncols();
    let mut beta = match warm {
        Some(w) if w.len() == p => w.clone(),
        _ => DVector::zeros(p),
    };
    let col_sq: Vec<f64> = x.column_iter().map(|c| c.norm_squared()).collect();
    let mut resid = y - x * &beta;
    for sweep in 1..=opts.max_sweeps {
        for j in 0..p {
            if col_sq[j] <= 0.0 {
                continue;
            }
            let cj = x.column(j).dot(&resid);
            let new = crate::gaussian::soft_threshold(beta[j] + cj / col_sq[j], lambda / col_sq[j]);
            let d = new - beta[j];
            if d != 0.0 {
                resid.axpy(-d, &x.column(j), 1.0);
                beta[j] = new;
            }
        }
        let grad = -(x.transpose() * &resid);
        let kkt = kkt_residual(&beta, &grad, lambda);
        if kkt <= opts.tol {
            return CdOutcome {
                beta,
                kkt,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    let grad = -(x.transpose() * (y - x * &beta));
    CdOutcome {
        kkt: kkt_residual(&beta, &grad, lambda),
        beta,
        sweeps: opts.max_sweeps,
        converged: false,
    }
}

/// Minimizes `½‖y − Xβ‖² + λ‖β‖₁`.
pub fn solve_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, opts: &LassoOptions) -> Result<LassoSolution> {
    solve_lasso_warm(x, y, lambda, None, opts)
}

/// [`solve_lasso`] started from `warm`.
pub fn solve_lasso_warm(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: Option<&DVector<f64>>,
    opts: &LassoOptions,
) -> Result<LassoSolution> {
    check_inputs(x, y, lambda)?;
    let outcome = if x.ncols() <= GRAM_LIMIT {
        let q = x.transpose() * x;
        let b = x.transpose() * y;
        QuadraticL1 { q: &q, b: &b }.solve(lambda, warm, opts.tol, opts.max_sweeps)
    } else {
        solve_by_residuals(x, y, lambda, warm, opts)
    };
    if !outcome.converged {
        return Err(Error::NotConverged {
            solver: "lasso coordinate descent",
            iterations: outcome.sweeps,
            residual: outcome.kkt,
            last_iterate: outcome.beta.iter().copied().collect(),
        });
    }
    Ok(finish(x, y, lambda, outcome.beta, outcome.sweeps))
}

/// Solves along a λ path, warm-starting each point from the previous one.
pub fn lasso_path(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambdas: &[f64],
    opts: &LassoOptions,
) -> Result<Vec<LassoSolution>> {
    for &l in lambdas {
        check_inputs(x, y, l)?;
    }
    let q = x.transpose() * x;
    let b = x.transpose() * y;
    let problem = QuadraticL1 { q: &q, b: &b };
    let mut out: Vec<LassoSolution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let warm = out.last().map(|s| &s.beta);
        let outcome = problem.solve(lambda, warm, opts.tol, opts.max_sweeps);
        if !outcome.converged {
            return Err(Error::NotConverged {
                solver: "lasso path",
                iterations: outcome.sweeps,
                residual: outcome.kkt,
                last_iterate: outcome.beta.iter().copied().collect(),
            });
        }
        out.push(finish(x, y, lambda, outcome.beta, outcome.sweeps));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisPursuitOptions {
    /// Geometric decay of the continuation sequence `λ_k = λ₀ κ^k`.
    pub kappa: f64,
    /// `λ_final / λ₀`.
    pub final_ratio: f64,
    /// KKT tolerance at the final stage, relative to `λ₀`.
    pub rel_tol: f64,
    /// Relative residual `‖y − Xβ‖/‖y‖` above which the feasibility flag is set.
    pub feas_tol: f64,
    pub max_sweeps_per_stage: usize,
}

impl Default for BasisPursuitOptions {
    fn default() -> Self {
        BasisPursuitOptions {
            kappa: 0.5,
            final_ratio: 1e-7,
            rel_tol: 1e-11,
            feas_tol: 1e-5,
            max_sweeps_per_stage: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BasisPursuitResult {
    pub beta: DVector<f64>,
    /// `‖y − Xβ‖ / ‖y‖` (zero when `y = 0`).
    pub relative_residual: f64,
    /// Set when `relative_residual > feas_tol`.
    pub infeasible: bool,
    /// False if any continuation stage hit its sweep limit.
    pub converged: bool,
    pub stages: usize,
}

/// Approximates `argmin ‖β‖₁ s.t. y = Xβ` by λ-continuation on the LASSO.
pub fn basis_pursuit(x: &DMatrix<f64>, y: &DVector<f64>, opts: &BasisPursuitOptions) -> Result<BasisPursuitResult> {
    check_inputs(x, y, 0.0)?;
    if !(opts.kappa > 0.0 && opts.kappa < 1.0) || !(opts.final_ratio > 0.0 && opts.final_ratio < 1.0) {
        return Err(Error::Parameter("basis pursuit needs 0 < kappa < 1 and 0 < final_ratio < 1".into()));
    }
    let p = x.ncols();
    let b = x.transpose() * y;
    let lambda0 = b.amax();
    if lambda0 == 0.0 {
        return Ok(BasisPursuitResult {
            beta: DVector::zeros(p),
            relative_residual: 0.0,
            infeasible: false,
            converged: true,
            stages: 0,
        });
    }
    let q = x.transpose() * x;
    let problem = QuadraticL1 { q: &q, b: &b };
    let lambda_final = lambda0 * opts.final_ratio;
    let final_tol = opts.rel_tol * lambda0;

    let mut beta = DVector::zeros(p);
    let mut converged = true;
    let mut lambda = lambda0;
    let mut stages = 0;
    loop {
        lambda = (lambda * opts.kappa).max(lambda_final);
        let last = lambda <= lambda_final;
        let tol = if last { final_tol } else { (1e-3 * lambda).max(final_tol) };
        let out = problem.solve(lambda, Some(&beta), tol, opts.max_sweeps_per_stage);
        converged &= out.converged;
        beta = out.beta;
        stages += 1;
        if last {
            break;
        }
    }
    let ynorm = y.norm();
    let relative_residual = (y - x * &beta).norm() / ynorm;
    Ok(BasisPursuitResult {
        beta,
        relative_residual,
        infeasible: relative_residual > opts.feas_tol,
        converged,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut r = crate::rng::stream(seed, &[99]);
        DMatrix::from_fn(n, p, |_, _| r.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn large_lambda_gives_zero() {
        let x = gaussian(10, 20, 1);
        let y = DVector::from_fn(10, |i, _| i as f64 - 4.5);
        let lmax = (x.transpose() * &y).amax();
        let sol = solve_lasso(&x, &y, lmax, &LassoOptions::default()).unwrap();
        assert!(sol.beta.iter().all(|&b| b == 0.0));
        assert!(sol.active.is_empty());
    }

    #[test]
    fn orthonormal_columns_soft_threshold() {
        let q = gaussian(8, 3, 2).qr().q();
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.3, 3.0, -1.0, 0.2, 0.9]);
        let lambda = 0.4;
        let sol = solve_lasso(&q, &y, lambda, &LassoOptions::default()).unwrap();
        let c = q.transpose() * &y;
        for j in 0..3 {
            let expected = crate::gaussian::soft_threshold(c[j], lambda);
            assert!((sol.beta[j] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_negative_lambda_and_bad_dims() {
        let x = gaussian(4, 3, 3);
        let y = DVector::zeros(4);
        assert!(matches!(solve_lasso(&x, &y, -1.0, &LassoOptions::default()), Err(Error::Parameter(_))));
        assert!(matches!(
            solve_lasso(&x, &DVector::zeros(5), 1.0, &LassoOptions::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn reports_non_convergence_with_iterate() {
        let x = gaussian(20, 40, 4);
        let y = DVector::from_fn(20, |i, _| (i as f64).sin());
        let opts = LassoOptions {
            tol: 1e-14,
            max_sweeps: 1,
        };
        match solve_lasso(&x, &y, 1e-3, &opts) {
            Err(Error::NotConverged { last_iterate, .. }) => assert_eq!(last_iterate.len(), 40),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn residual_path_agrees_with_gram_path() {
        let x = gaussian(30, 60, 5);
        let y = gaussian(30, 1, 6).column(0).into_owned();
        let opts = LassoOptions::default();
        let gram = solve_lasso(&x, &y, 0.8, &opts).unwrap();
        let resid = solve_by_residuals(&x, &y, 0.8, None, &opts);
        assert!(resid.converged);
        assert!((gram.beta - resid.beta).amax() < 1e-8);
    }

    #[test]
    fn basis_pursuit_trivial_cases() {
        let x = gaussian(5, 9, 7);
        let r = basis_pursuit(&x, &DVector::zeros(5), &BasisPursuitOptions::default()).unwrap();
        assert!(r.beta.iter().all(|&b| b == 0.0));

        let sq = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, -0.4, 1.5, 0.2, 0.1, 0.0, 1.0]);
        let truth = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let y = &sq * &truth;
        let r = basis_pursuit(&sq, &y, &BasisPursuitOptions::default()).unwrap();
        assert!((r.beta - truth).amax() < 1e-5);
        assert!(!r.infeasible);
    }

    #[test]
    fn dense_signal_basis_pursuit_trims_to_a_vertex() {
        // far past the recovery boundary: the minimizer lives on at most n
        // columns and coordinate descent alone would crawl at the sweep cap
        let (n, p) = (30, 60);
        let x = gaussian(n, p, 10);
        let truth = gaussian(p, 1, 11).column(0).into_owned();
        let y = &x * &truth;
        let opts = BasisPursuitOptions {
            max_sweeps_per_stage: 300,
            ..Default::default()
        };
        let r = basis_pursuit(&x, &y, &opts).unwrap();
        assert!(r.converged);
        assert!(!r.infeasible);
        let support = r.beta.iter().filter(|&&b| b != 0.0).count();
        assert!(support <= n, "support {support} > {n}");
        assert!(r.beta.lp_norm(1) < truth.lp_norm(1));
    }

    #[test]
    fn polish_reaches_tight_kkt() {
        let x = gaussian(40, 25, 8);
        let y = gaussian(40, 1, 9).column(0).into_owned();
        let opts = LassoOptions {
            tol: 1e-12,
            max_sweeps: 1000,
        };
        let sol = solve_lasso(&x, &y, 0.05, &opts).unwrap();
        assert!(sol.kkt_residual < 1e-10);
    }
}

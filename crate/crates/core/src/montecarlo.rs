//! Instance generation and the two empirical experiments: LASSO risk along a
//! λ-grid and the basis-pursuit success transition, with its logistic fit.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceFamily, CovarianceModel};
use crate::lasso::{basis_pursuit, lasso_path, BasisPursuitOptions, LassoOptions};
use crate::prior::SignalPrior;
use crate::rng;
use crate::state_evolution::{mean_and_stderr, Calibration, FixedPointOptions, McConfig, SeProblem, StateEvolution};
use crate::{Error, Result};

pub use crate::state_evolution::extrapolate as extrapolate_limit;

/// Relative error below which basis pursuit counts as exact recovery.
pub const SUCCESS_TOL: f64 = 1e-4;

/// One regression problem `y = Xβ₀ + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta0: DVector<f64>,
    pub sigma_w: f64,
    pub seed: u64,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }
    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Number of rows for undersampling ratio δ.
pub fn rows_for(p: usize, delta: f64) -> usize {
    ((delta * p as f64).round() as usize).max(1)
}

/// Draws β₀ from `prior`.
pub fn sample_signal(p: usize, prior: &SignalPrior, seed: u64) -> DVector<f64> {
    prior.sample(p, &mut rng::stream(seed, &[rng::tag::INSTANCE, 0]))
}

/// Draws `(X, y, β₀)` with `X = G Σ^{1/2} / √n`, so rows are `N(0, Σ/n)`,
/// and `w ~ N(0, σ_w² I_n)`.
pub fn sample_instance(
    p: usize,
    delta: f64,
    prior: &SignalPrior,
    model: &CovarianceModel,
    sigma_w: f64,
    seed: u64,
) -> Result<Instance> {
    prior.validate()?;
    if model.dim() != p {
        return Err(Error::Dimension(format!("covariance is {0}×{0}, expected p = {p}", model.dim())));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::Parameter(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(sigma_w >= 0.0 && sigma_w.is_finite()) {
        return Err(Error::Parameter(format!("sigma_w must be >= 0, got {sigma_w}")));
    }
    let n = rows_for(p, delta);
    let beta0 = sample_signal(p, prior, seed);
    let mut g = rng::stream(seed, &[rng::tag::INSTANCE, 1]);
    let scale = 1.0 / (n as f64).sqrt();
    let gauss = DMatrix::from_fn(n, p, |_, _| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut g));
    let x = if model.is_identity() { gauss } else { gauss * model.sqrt() };
    let mut y = &x * &beta0;
    if sigma_w > 0.0 {
        let mut g = rng::stream(seed, &[rng::tag::INSTANCE, 2]);
        let noise = Normal::new(0.0, sigma_w).expect("validated sigma_w");
        y.iter_mut().for_each(|v| *v += noise.sample(&mut g));
    }
    Ok(Instance {
        x,
        y,
        beta0,
        sigma_w,
        seed,
    })
}

/// Maximum-likelihood logistic fit of `logit π(δ) = a + bδ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
    pub score_norm: f64,
}

/// Whether the finite MLE fails to exist: the successes and failures can be
/// split by a threshold in δ (allowing ties at the threshold).
pub fn is_separated(grid: &[(f64, usize, usize)]) -> bool {
    let succ = grid.iter().filter(|g| g.1 > 0).map(|g| g.0);
    let fail = grid.iter().filter(|g| g.1 < g.2).map(|g| g.0);
    let (min_s, max_s) = succ.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
    let (min_f, max_f) = fail.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
    max_f <= min_s || max_s <= min_f
}

/// Binomial logistic regression by Newton–Raphson on `(δᵢ, Sᵢ, mᵢ)`.
pub fn logistic_fit(grid: &[(f64, usize, usize)]) -> Result<LogisticFit> {
    if grid.iter().any(|g| g.2 == 0 || g.1 > g.2 || !g.0.is_finite()) {
        return Err(Error::Parameter("each grid point needs 0 <= S <= m, m > 0, finite δ".into()));
    }
    if is_separated(grid) {
        return Err(Error::Fit("outcomes are separated in delta; the MLE does not exist".into()));
    }
    // center δ for conditioning, then map back
    let total: f64 = grid.iter().map(|g| g.2 as f64).sum();
    let c = grid.iter().map(|g| g.0 * g.2 as f64).sum::<f64>() / total;
    let loglik = |a: f64, b: f64| -> f64 {
        grid.iter()
            .map(|&(d, s, m)| {
                let eta = a + b * (d - c);
                // log(1 + e^η) computed stably
                let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
                s as f64 * eta - m as f64 * softplus
            })
            .sum()
    };
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut trace = Vec::new();
    for it in 0..100 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(d, s, m) in grid {
            let x = d - c;
            let pi = 1.0 / (1.0 + (-(a + b * x)).exp());
            let r = s as f64 - m as f64 * pi;
            let w = m as f64 * pi * (1.0 - pi);
            ga += r;
            gb += r * x;
            haa += w;
            hab += w * x;
            hbb += w * x * x;
        }
        let score = (ga * ga + gb * gb).sqrt();
        trace.push(score);
        if score <= 1e-10 {
            return Ok(LogisticFit {
                a: a - b * c,
                b,
                iterations: it,
                score_norm: score,
            });
        }
        let det = haa * hbb - hab * hab;
        if !(det > 0.0) {
            break;
        }
        let da = (hbb * ga - hab * gb) / det;
        let db = (haa * gb - hab * ga) / det;
        let base = loglik(a, b);
        let mut step = 1.0;
        while step > 1e-8 && loglik(a + step * da, b + step * db) < base - 1e-12 * base.abs() {
            step *= 0.5;
        }
        a += step * da;
        b += step * db;
    }
    Err(Error::Fit(format!("Newton iteration did not converge; score norms {trace:?}")))
}

/// Empirical phase transition at one (ε, dε).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionFit {
    /// Logistic coefficients; NaN when the separation fallback was used.
    pub a: f64,
    pub b: f64,
    pub delta_hat: f64,
    /// `(δᵢ, Sᵢ, m)`
    pub grid: Vec<(f64, usize, usize)>,
    pub separated: bool,
}

/// Fits a transition to success counts, falling back to the gap between
/// the all-fail and all-success δ when the outcomes are separated.
pub fn fit_transition(grid: Vec<(f64, usize, usize)>) -> Result<TransitionFit> {
    if is_separated(&grid) {
        let all_fail = grid.iter().filter(|g| g.1 == 0).map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
        let all_succ = grid.iter().filter(|g| g.1 == g.2).map(|g| g.0).fold(f64::INFINITY, f64::min);
        let delta_hat = match (all_fail.is_finite(), all_succ.is_finite()) {
            (true, true) => 0.5 * (all_fail + all_succ),
            (true, false) => all_fail,
            (false, true) => all_succ,
            (false, false) => {
                let lo = grid.iter().map(|g| g.0).fold(f64::INFINITY, f64::min);
                let hi = grid.iter().map(|g| g.0).fold(f64::NEG_INFINITY, f64::max);
                0.5 * (lo + hi)
            }
        };
        log::warn!("transition: outcomes separated, using fallback delta_hat = {delta_hat:.4}");
        return Ok(TransitionFit {
            a: f64::NAN,
            b: f64::NAN,
            delta_hat,
            grid,
            separated: true,
        });
    }
    let fit = logistic_fit(&grid)?;
    if fit.b <= 0.0 {
        log::warn!("transition: success rate decreases with delta (b = {:.3})", fit.b);
    }
    Ok(TransitionFit {
        a: fit.a,
        b: fit.b,
        delta_hat: -fit.a / fit.b,
        grid,
        separated: false,
    })
}

/// `m` basis-pursuit recoveries at every δ of `delta_grid`, then
/// [`fit_transition`].
pub fn empirical_transition(
    prior: &SignalPrior,
    family: &CovarianceFamily,
    p: usize,
    delta_grid: &[f64],
    m: usize,
    seed: u64,
    opts: &BasisPursuitOptions,
) -> Result<TransitionFit> {
    prior.validate()?;
    if m < 20 {
        return Err(Error::Parameter(format!("need at least 20 replicates per delta, got {m}")));
    }
    if delta_grid.len() < 2 || delta_grid.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
        return Err(Error::Parameter("delta grid needs at least two points in (0, 1]".into()));
    }
    let model = family.build(p)?;
    let jobs: Vec<(usize, usize)> = (0..delta_grid.len()).flat_map(|i| (0..m).map(move |r| (i, r))).collect();
    let outcomes: Vec<Result<bool>> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let s = rng::stream_key(seed, &[rng::tag::TRANSITION, i as u64, r as u64]);
            let inst = sample_instance(p, delta_grid[i], prior, &model, 0.0, s)?;
            let bp = basis_pursuit(&inst.x, &inst.y, opts)?;
            let err = (&bp.beta - &inst.beta0).norm();
            let scale = inst.beta0.norm();
            Ok(if scale > 0.0 { err <= SUCCESS_TOL * scale } else { err == 0.0 })
        })
        .collect();
    let mut counts = vec![0usize; delta_grid.len()];
    for (&(i, _), ok) in jobs.iter().zip(outcomes) {
        if ok? {
            counts[i] += 1;
        }
    }
    fit_transition(delta_grid.iter().zip(counts).map(|(&d, s)| (d, s, m)).collect())
}

/// Empirical and predicted LASSO risk at one λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsePoint {
    pub lambda: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Prediction from state evolution, when requested and available.
    pub theory: Option<f64>,
    pub theory_stderr: Option<f64>,
    /// Replicates whose solve failed; their values are excluded.
    pub failed: usize,
    pub flagged: bool,
}

/// Parameters of [`mse_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct MseExperiment {
    pub lambdas: Vec<f64>,
    pub prior: SignalPrior,
    pub family: CovarianceFamily,
    pub delta: f64,
    pub sigma_w: f64,
    pub p: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Monte-Carlo design for the theoretical curve; `None` skips it.
    pub theory: Option<McConfig>,
}

/// `‖β̂(λ) − β₀‖²/p` over fresh instances, each solved along the whole
/// λ-grid with warm starts.
pub fn mse_experiment(exp: &MseExperiment) -> Result<Vec<MsePoint>> {
    if exp.lambdas.is_empty() || exp.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::Parameter("lambda grid must be nonempty and positive".into()));
    }
    if exp.replicates < 2 {
        return Err(Error::Parameter("at least two replicates are needed".into()));
    }
    let model = exp.family.build(exp.p)?;
    let mut order: Vec<usize> = (0..exp.lambdas.len()).collect();
    order.sort_by(|&i, &j| exp.lambdas[j].total_cmp(&exp.lambdas[i]));
    let sorted: Vec<f64> = order.iter().map(|&i| exp.lambdas[i]).collect();

    let per_rep: Vec<Result<Option<Vec<f64>>>> = (0..exp.replicates)
        .into_par_iter()
        .map(|r| {
            let s = rng::stream_key(exp.seed, &[rng::tag::MSE, r as u64]);
            let inst = sample_instance(exp.p, exp.delta, &exp.prior, &model, exp.sigma_w, s)?;
            match lasso_path(&inst.x, &inst.y, &sorted, &LassoOptions::default()) {
                Ok(path) => Ok(Some(
                    path.iter()
                        .map(|sol| (&sol.beta - &inst.beta0).norm_squared() / exp.p as f64)
                        .collect(),
                )),
                Err(Error::NotConverged { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut failed = 0;
    for r in per_rep {
        match r? {
            Some(v) => rows.push(v),
            None => failed += 1,
        }
    }
    if rows.len() < 2 {
        return Err(Error::ReplicateFailures {
            failed,
            total: exp.replicates,
        });
    }

    let mut calib_se = None;
    if let Some(mc) = &exp.theory {
        let problem = SeProblem {
            prior: exp.prior,
            family: exp.family.clone(),
            delta: exp.delta,
            sigma_w_sq: exp.sigma_w * exp.sigma_w,
        };
        calib_se = Some(StateEvolution::new(problem, mc.clone())?);
    }
    let mut calib = match &calib_se {
        Some(se) => Some(Calibration::new(se, FixedPointOptions::default())?),
        None => None,
    };

    let mut out = vec![None; exp.lambdas.len()];
    for (k, &i) in order.iter().enumerate() {
        let lambda = exp.lambdas[i];
        let vals: Vec<f64> = rows.iter().map(|row| row[k]).collect();
        let est = mean_and_stderr(&vals);
        let (theory, theory_stderr, theory_failed) = match calib.as_mut() {
            Some(c) => match c.lasso_risk(lambda) {
                Ok(r) => (Some(r.mse), Some(r.stderr), false),
                Err(e) => {
                    log::warn!("mse experiment: no prediction at lambda = {lambda}: {e}");
                    (None, None, true)
                }
            },
            None => (None, None, false),
        };
        out[i] = Some(MsePoint {
            lambda,
            mean: est.value,
            stderr: est.stderr,
            theory,
            theory_stderr,
            failed,
            flagged: failed > 0 || theory_failed,
        });
    }
    Ok(out.into_iter().map(|p| p.expect("every lambda visited")).collect())
}

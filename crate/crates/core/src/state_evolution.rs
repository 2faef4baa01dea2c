//! State evolution for the covariance-aware AMP iteration.
//!
//! The map
//!
//! ```text
//! ψ(τ², θ) = σ_w² + E‖η_θ(β₀ + τ Σ^{-1/2} z) − β₀‖²_Σ / (pδ)
//! ```
//!
//! has no closed form for general Σ. It is estimated by Monte Carlo at each
//! dimension of [`McConfig::p_grid`] and the per-dimension estimates are
//! combined with the √p-weighted average of [`extrapolate`]. The draws
//! `(β₀, z)` are fixed when a [`StateEvolution`] is built, so every function
//! of `(τ², θ)` is evaluated with common random numbers and root finders see
//! a deterministic, continuous function. For `Σ = I` the expectations reduce
//! to scalar integrals, which are computed by quadrature instead.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceFamily, CovarianceModel};
use crate::gaussian::scalar_moments;
use crate::prior::SignalPrior;
use crate::prox::{prox_weighted_l1_warm, ProxOptions};
use crate::rng;
use crate::{Error, Result};

/// Monte-Carlo design: dimensions, replicates per dimension, seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_p_grid")]
    pub p_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Use scalar quadrature when Σ = I.
    #[serde(default = "default_true")]
    pub quadrature: bool,
}

fn default_true() -> bool {
    true
}

fn default_p_grid() -> Vec<usize> {
    vec![100, 200, 400]
}

fn default_replicates() -> usize {
    200
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            p_grid: default_p_grid(),
            replicates: default_replicates(),
            seed: 0,
            quadrature: true,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() {
            return Err(Error::Parameter("p_grid must not be empty".into()));
        }
        if self.p_grid[0] == 0 || self.p_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("p_grid must be positive and strictly increasing".into()));
        }
        if self.replicates < 2 {
            return Err(Error::Parameter("at least two replicates are needed".into()));
        }
        Ok(())
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, stderr: 0.0 }
    }
}

/// √p-weighted combination `Σ wᵢvᵢ / Σ wᵢ`, `wᵢ = √pᵢ`.
pub fn extrapolate(samples: &[(usize, f64)]) -> f64 {
    let (num, den) = samples.iter().fold((0.0, 0.0), |(n, d), &(p, v)| {
        let w = (p as f64).sqrt();
        (n + w * v, d + w)
    });
    num / den
}

fn extrapolate_estimates(samples: &[(usize, Estimate)]) -> Estimate {
    let den: f64 = samples.iter().map(|(p, _)| (*p as f64).sqrt()).sum();
    let value = samples.iter().map(|(p, e)| (*p as f64).sqrt() * e.value).sum::<f64>() / den;
    let var = samples.iter().map(|(p, e)| *p as f64 * e.stderr * e.stderr).sum::<f64>() / (den * den);
    Estimate {
        value,
        stderr: var.sqrt(),
    }
}

pub(crate) fn mean_and_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return Estimate::exact(mean);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        stderr: (var / n).sqrt(),
    }
}

/// Geometry and signal law the state evolution is computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeProblem {
    pub prior: SignalPrior,
    pub family: CovarianceFamily,
    pub delta: f64,
    pub sigma_w_sq: f64,
}

impl SeProblem {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.family.validate()?;
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Parameter(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if !(self.sigma_w_sq >= 0.0 && self.sigma_w_sq.is_finite()) {
            return Err(Error::Parameter(format!("sigma_w_sq must be >= 0, got {}", self.sigma_w_sq)));
        }
        Ok(())
    }
}

/// Expectations of the denoiser at one `(τ², θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeMoments {
    /// `ψ(τ², θ)`
    pub psi: Estimate,
    /// `E‖η‖₀ / p`, the expected divergence per coordinate.
    pub active_fraction: Estimate,
    /// `E‖η − β₀‖² / p`
    pub mse: Estimate,
}

struct Draw {
    beta0: DVector<f64>,
    /// `Σ^{-1/2} z`
    noise: DVector<f64>,
}

struct Member {
    p: usize,
    model: CovarianceModel,
    draws: Vec<Draw>,
}

enum Backend {
    Quadrature { atoms: Vec<(f64, f64)> },
    MonteCarlo { members: Vec<Member> },
}

/// Per-draw prox solutions reused as warm starts between nearby evaluations.
#[derive(Default)]
pub struct WarmStart {
    slots: Vec<Vec<Option<DVector<f64>>>>,
}

/// State-evolution evaluator with frozen random draws.
pub struct StateEvolution {
    problem: SeProblem,
    mc: McConfig,
    backend: Backend,
    prox: ProxOptions,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Stop when `|ψ(τ², ατ) − τ²| ≤ tol · max(τ², tau_floor)`.
    pub tol: f64,
    pub tau_floor: f64,
    pub max_iter: usize,
    /// Starting value; defaults to `τ₀² = σ_w² + E‖β₀‖²_Σ/(pδ)`.
    pub init_tau_sq: Option<f64>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-7,
            tau_floor: 1e-6,
            max_iter: 500,
            init_tau_sq: None,
        }
    }
}

/// Fixed point `τ⋆² = ψ(τ⋆², ατ⋆)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TauFixedPoint {
    pub alpha: f64,
    pub tau_star_sq: f64,
    pub theta_star: f64,
    /// Standard error of `τ⋆²` propagated through the local slope.
    pub stderr: f64,
    /// `dψ(τ², ατ)/dτ²` at the fixed point (finite difference).
    pub slope: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// A calibrated state-evolution point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SePoint {
    pub alpha: f64,
    pub tau_star_sq: f64,
    pub theta_star: f64,
    pub lambda: f64,
    pub lambda_stderr: f64,
    pub active_fraction: f64,
    pub delta: f64,
    pub sigma_w_sq: f64,
    pub mc_stderr: f64,
}

/// Predicted LASSO risk at one λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPoint {
    pub lambda: f64,
    pub alpha: f64,
    pub tau_star_sq: f64,
    pub mse: f64,
    pub stderr: f64,
}

impl StateEvolution {
    /// Builds the evaluator and draws `(β₀, z)` for every dimension.
    pub fn new(problem: SeProblem, mc: McConfig) -> Result<Self> {
        problem.validate()?;
        mc.validate()?;
        if let Some(d) = problem.family.fixed_dim() {
            if mc.p_grid != [d] {
                return Err(Error::Parameter(format!(
                    "explicit covariance has dimension {d}; p_grid must be [{d}]"
                )));
            }
        }
        let backend = if mc.quadrature && problem.family.is_identity() {
            Backend::Quadrature {
                atoms: problem.prior.atoms(),
            }
        } else {
            let mut members = Vec::with_capacity(mc.p_grid.len());
            for &p in &mc.p_grid {
                let model = problem.family.build(p)?;
                let draws = (0..mc.replicates)
                    .into_par_iter()
                    .map(|r| {
                        let mut g = rng::stream(mc.seed, &[rng::tag::STATE_EVOLUTION, p as u64, r as u64]);
                        let beta0 = problem.prior.sample(p, &mut g);
                        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut g));
                        let noise = if model.is_identity() { z } else { model.inv_sqrt() * z };
                        Draw { beta0, noise }
                    })
                    .collect();
                members.push(Member { p, model, draws });
            }
            Backend::MonteCarlo { members }
        };
        Ok(StateEvolution {
            problem,
            mc,
            backend,
            prox: ProxOptions::default(),
        })
    }

    pub fn problem(&self) -> &SeProblem {
        &self.problem
    }

    pub fn mc(&self) -> &McConfig {
        &self.mc
    }

    pub fn uses_quadrature(&self) -> bool {
        matches!(self.backend, Backend::Quadrature { .. })
    }

    pub fn warm_start(&self) -> WarmStart {
        WarmStart::default()
    }

    /// `τ₀² = σ_w² + E‖β₀‖²_Σ/(pδ)`, exact in the prior moments.
    pub fn tau0_sq(&self) -> f64 {
        let pr = &self.problem.prior;
        let (m1, m2) = (pr.mean(), pr.second_moment());
        let per_coord = match &self.backend {
            Backend::Quadrature { .. } => m2,
            Backend::MonteCarlo { members } => {
                let samples: Vec<(usize, f64)> = members
                    .iter()
                    .map(|m| {
                        let s = m.model.matrix();
                        let p = m.p as f64;
                        let trace = s.trace();
                        (m.p, (trace * (m2 - m1 * m1) + m1 * m1 * s.sum()) / p)
                    })
                    .collect();
                extrapolate(&samples)
            }
        };
        self.problem.sigma_w_sq + per_coord / self.problem.delta
    }

    fn member_moments(
        &self,
        member: &Member,
        tau: f64,
        theta: f64,
        warm: Option<&mut Vec<Option<DVector<f64>>>>,
    ) -> Result<[Estimate; 3]> {
        let p = member.p as f64;
        let delta = self.problem.delta;
        let mut fresh;
        let slots = match warm {
            Some(s) => s,
            None => {
                fresh = Vec::new();
                &mut fresh
            }
        };
        if slots.len() != member.draws.len() {
            *slots = vec![None; member.draws.len()];
        }
        let results: Vec<Result<(f64, f64, f64)>> = member
            .draws
            .par_iter()
            .zip(slots.par_iter_mut())
            .map(|(d, slot)| {
                let v = &d.beta0 + &d.noise * tau;
                let r = prox_weighted_l1_warm(&v, &member.model, theta, slot.as_ref(), &self.prox)?;
                let err = &r.value - &d.beta0;
                let out = (
                    member.model.quad_form(&err) / (p * delta),
                    r.active.len() as f64 / p,
                    err.norm_squared() / p,
                );
                *slot = Some(r.value);
                Ok(out)
            })
            .collect();
        let mut psi = Vec::with_capacity(results.len());
        let mut act = Vec::with_capacity(results.len());
        let mut mse = Vec::with_capacity(results.len());
        for r in results {
            let (a, b, c) = r?;
            psi.push(a);
            act.push(b);
            mse.push(c);
        }
        Ok([mean_and_stderr(&psi), mean_and_stderr(&act), mean_and_stderr(&mse)])
    }

    /// All denoiser moments at `(τ², θ)`.
    pub fn moments(&self, tau_sq: f64, theta: f64, warm: Option<&mut WarmStart>) -> Result<SeMoments> {
        if !(tau_sq >= 0.0) || !(theta >= 0.0) {
            return Err(Error::Parameter(format!("need tau_sq >= 0 and theta >= 0 (got {tau_sq}, {theta})")));
        }
        let tau = tau_sq.sqrt();
        let sigma_sq = self.problem.sigma_w_sq;
        let delta = self.problem.delta;
        match &self.backend {
            Backend::Quadrature { atoms } => {
                let (mut mse, mut act) = (0.0, 0.0);
                for &(x, w) in atoms {
                    let m = scalar_moments(x, tau, theta);
                    mse += w * m.mse;
                    act += w * m.active;
                }
                Ok(SeMoments {
                    psi: Estimate::exact(sigma_sq + mse / delta),
                    active_fraction: Estimate::exact(act),
                    mse: Estimate::exact(mse),
                })
            }
            Backend::MonteCarlo { members } => {
                let mut local = WarmStart::default();
                let warm = warm.unwrap_or(&mut local);
                if warm.slots.len() != members.len() {
                    warm.slots = vec![Vec::new(); members.len()];
                }
                let mut psi = Vec::new();
                let mut act = Vec::new();
                let mut mse = Vec::new();
                for (m, slots) in members.iter().zip(warm.slots.iter_mut()) {
                    let [a, b, c] = self.member_moments(m, tau, theta, Some(slots))?;
                    psi.push((m.p, a));
                    act.push((m.p, b));
                    mse.push((m.p, c));
                }
                let mut psi = extrapolate_estimates(&psi);
                psi.value += sigma_sq;
                Ok(SeMoments {
                    psi,
                    active_fraction: extrapolate_estimates(&act),
                    mse: extrapolate_estimates(&mse),
                })
            }
        }
    }

    /// `ψ(τ², θ)` with its Monte-Carlo standard error. At `τ² = 0` this is
    /// `σ_w²` whatever `θ`: the recursion only ever evaluates `θ = ατ`.
    pub fn psi(&self, tau_sq: f64, theta: f64) -> Result<Estimate> {
        if tau_sq == 0.0 && theta >= 0.0 {
            return Ok(Estimate::exact(self.problem.sigma_w_sq));
        }
        Ok(self.moments(tau_sq, theta, None)?.psi)
    }

    /// `ψ(τ², ατ)`; exactly `σ_w²` at `τ² = 0`.
    pub fn psi_alpha(&self, tau_sq: f64, alpha: f64, warm: Option<&mut WarmStart>) -> Result<Estimate> {
        if tau_sq == 0.0 {
            return Ok(Estimate::exact(self.problem.sigma_w_sq));
        }
        Ok(self.moments(tau_sq, alpha * tau_sq.sqrt(), warm)?.psi)
    }

    /// `f(α) = E‖η_α(Σ^{-1/2}z)‖²_Σ / (pδ)`.
    pub fn f_alpha(&self, alpha: f64) -> Result<Estimate> {
        self.noise_only(alpha).map(|(f, _)| f)
    }

    /// `(f(α), E‖η_α(Σ^{-1/2}z)‖₀/p)` for the pure-noise input.
    fn noise_only(&self, alpha: f64) -> Result<(Estimate, Estimate)> {
        if !(alpha >= 0.0) {
            return Err(Error::Parameter(format!("alpha must be >= 0, got {alpha}")));
        }
        let delta = self.problem.delta;
        match &self.backend {
            Backend::Quadrature { .. } => {
                let m = scalar_moments(0.0, 1.0, alpha);
                Ok((Estimate::exact(m.second_moment / delta), Estimate::exact(m.active)))
            }
            Backend::MonteCarlo { members } => {
                let mut fs = Vec::new();
                let mut ls = Vec::new();
                for m in members {
                    let p = m.p as f64;
                    let vals: Vec<Result<(f64, f64)>> = m
                        .draws
                        .par_iter()
                        .map(|d| {
                            let r = prox_weighted_l1_warm(&d.noise, &m.model, alpha, None, &self.prox)?;
                            Ok((m.model.quad_form(&r.value) / (p * delta), r.active.len() as f64 / p))
                        })
                        .collect();
                    let mut f = Vec::with_capacity(vals.len());
                    let mut l = Vec::with_capacity(vals.len());
                    for v in vals {
                        let (a, b) = v?;
                        f.push(a);
                        l.push(b);
                    }
                    fs.push((m.p, mean_and_stderr(&f)));
                    ls.push((m.p, mean_and_stderr(&l)));
                }
                Ok((extrapolate_estimates(&fs), extrapolate_estimates(&ls)))
            }
        }
    }

    /// Smallest α with `f(α) ≤ 1`, found by bisection.
    pub fn alpha_min(&self) -> Result<f64> {
        let mut evals = Vec::new();
        let f0 = self.f_alpha(0.0)?.value;
        evals.push((0.0, f0));
        if f0 <= 1.0 {
            return Ok(0.0);
        }
        let mut lo = 0.0;
        let mut hi = 0.5;
        loop {
            let f = self.f_alpha(hi)?.value;
            evals.push((hi, f));
            if f < 1.0 {
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Bracket {
                    message: "f(alpha) stays above 1".into(),
                    evaluations: evals,
                });
            }
        }
        while hi - lo > 1e-6 * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if self.f_alpha(mid)?.value >= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Solves `τ² = ψ(τ², ατ)` starting from the recursion
    /// `τ²_{t+1} = ψ(τ²_t, ατ_t)`, with secant acceleration once two iterates
    /// are available.
    pub fn fixed_point_tau(&self, alpha: f64, opts: &FixedPointOptions) -> Result<TauFixedPoint> {
        let mut warm = WarmStart::default();
        self.fixed_point_tau_with(alpha, opts, &mut warm)
    }

    pub fn fixed_point_tau_with(
        &self,
        alpha: f64,
        opts: &FixedPointOptions,
        warm: &mut WarmStart,
    ) -> Result<TauFixedPoint> {
        if !(alpha > 0.0) {
            return Err(Error::Parameter(format!("alpha must be > 0, got {alpha}")));
        }
        let mut tau_sq = opts.init_tau_sq.unwrap_or_else(|| self.tau0_sq());
        let mut trace = vec![tau_sq];
        let mut last_step = 0.0f64;
        let mut prev: Option<(f64, f64)> = None;
        for it in 1..=opts.max_iter {
            let psi = self.psi_alpha(tau_sq, alpha, Some(warm))?;
            let step = psi.value - tau_sq;
            if step.abs() <= opts.tol * tau_sq.max(opts.tau_floor) {
                let slope = self.slope_at(tau_sq, alpha, warm)?;
                let stderr = if slope < 1.0 { psi.stderr / (1.0 - slope) } else { f64::INFINITY };
                return Ok(TauFixedPoint {
                    alpha,
                    tau_star_sq: tau_sq,
                    theta_star: alpha * tau_sq.sqrt(),
                    stderr,
                    slope,
                    iterations: it,
                    trace,
                });
            }
            // Secant step on ψ(τ²) − τ² when the local slope looks like a
            // contraction; otherwise plain iteration, damped on oscillation.
            // Slopes close to 1 (α just above α_min) put τ⋆² far away, so the
            // extrapolation factor is allowed to be large but not unbounded.
            let secant = prev.and_then(|(x0, psi0)| {
                let s = (psi.value - psi0) / (tau_sq - x0);
                (s.is_finite() && (0.0..1.0 - 1e-9).contains(&s)).then(|| tau_sq + step / (1.0 - s))
            });
            let next = match secant {
                Some(x) => x,
                None if step * last_step < 0.0 => tau_sq + 0.5 * step,
                None => psi.value,
            };
            prev = Some((tau_sq, psi.value));
            last_step = step;
            tau_sq = next.max(0.01 * tau_sq);
            trace.push(tau_sq);
        }
        Err(Error::FixedPoint {
            iterations: opts.max_iter,
            trace,
        })
    }

    /// Central finite difference of `ψ(τ², ατ)` in τ².
    pub fn slope_at(&self, tau_sq: f64, alpha: f64, warm: &mut WarmStart) -> Result<f64> {
        let h = 1e-3 * tau_sq.max(1e-8);
        let lo = (tau_sq - h).max(0.0);
        let hi = tau_sq + h;
        let up = self.psi_alpha(hi, alpha, Some(warm))?.value;
        let down = self.psi_alpha(lo, alpha, Some(warm))?.value;
        Ok((up - down) / (hi - lo))
    }

    /// Fixed point plus the calibrated λ(α).
    pub fn calibrate_lambda(&self, alpha: f64, opts: &FixedPointOptions) -> Result<SePoint> {
        let mut warm = WarmStart::default();
        self.calibrate_lambda_with(alpha, opts, &mut warm)
    }

    fn calibrate_lambda_with(&self, alpha: f64, opts: &FixedPointOptions, warm: &mut WarmStart) -> Result<SePoint> {
        let fp = self.fixed_point_tau_with(alpha, opts, warm)?;
        self.point_from_fixed_point(&fp, warm)
    }

    fn point_from_fixed_point(&self, fp: &TauFixedPoint, warm: &mut WarmStart) -> Result<SePoint> {
        let delta = self.problem.delta;
        let m = self.moments(fp.tau_star_sq, fp.theta_star, Some(warm))?;
        let lambda = fp.theta_star * (1.0 - m.active_fraction.value / delta);
        Ok(SePoint {
            alpha: fp.alpha,
            tau_star_sq: fp.tau_star_sq,
            theta_star: fp.theta_star,
            lambda,
            lambda_stderr: fp.theta_star * m.active_fraction.stderr / delta,
            active_fraction: m.active_fraction.value,
            delta,
            sigma_w_sq: self.problem.sigma_w_sq,
            mc_stderr: fp.stderr,
        })
    }

    /// The τ_t² sequence of the recursion `τ²_{t+1} = ψ(τ²_t, ατ_t)` from
    /// `init_tau_sq` (default [`tau0_sq`](Self::tau0_sq)), for driving AMP
    /// thresholds. Stops early once the sequence is stationary. Errors when
    /// `α ≤ α_min`, i.e. `f(α) ≥ 1`.
    pub fn tau_schedule(&self, alpha: f64, init_tau_sq: Option<f64>, steps: usize) -> Result<Vec<f64>> {
        if self.f_alpha(alpha)?.value >= 1.0 {
            return Err(Error::Parameter(format!("alpha = {alpha} is not above alpha_min")));
        }
        let mut warm = WarmStart::default();
        let mut tau_sq = init_tau_sq.unwrap_or_else(|| self.tau0_sq());
        let mut out = vec![tau_sq];
        while out.len() < steps {
            let next = self.psi_alpha(tau_sq, alpha, Some(&mut warm))?.value;
            let settled = (next - tau_sq).abs() <= 1e-12 * tau_sq.max(1e-12);
            tau_sq = next;
            out.push(tau_sq);
            if settled {
                break;
            }
        }
        Ok(out)
    }
}

/// Memoized α ↔ λ calibration over one [`StateEvolution`].
pub struct Calibration<'a> {
    se: &'a StateEvolution,
    alpha_min: f64,
    opts: FixedPointOptions,
    memo: Vec<(TauFixedPoint, SePoint)>,
    warm: WarmStart,
    /// Every bracket examined by the most recent inversion.
    pub brackets: Vec<(f64, f64)>,
}

impl<'a> Calibration<'a> {
    pub fn new(se: &'a StateEvolution, opts: FixedPointOptions) -> Result<Self> {
        let alpha_min = se.alpha_min()?;
        Ok(Calibration {
            se,
            alpha_min,
            opts,
            memo: Vec::new(),
            warm: WarmStart::default(),
            brackets: Vec::new(),
        })
    }

    pub fn alpha_min(&self) -> f64 {
        self.alpha_min
    }

    /// λ(α), warm-started from the closest α already computed.
    pub fn point(&mut self, alpha: f64) -> Result<SePoint> {
        if !(alpha > self.alpha_min) {
            return Err(Error::Parameter(format!(
                "alpha = {alpha} must exceed alpha_min = {}",
                self.alpha_min
            )));
        }
        if let Some((_, pt)) = self.memo.iter().find(|(fp, _)| fp.alpha == alpha) {
            return Ok(*pt);
        }
        let mut opts = self.opts;
        if opts.init_tau_sq.is_none() {
            opts.init_tau_sq = self
                .memo
                .iter()
                .min_by(|a, b| (a.0.alpha - alpha).abs().total_cmp(&(b.0.alpha - alpha).abs()))
                .map(|(fp, _)| fp.tau_star_sq);
        }
        let fp = self.se.fixed_point_tau_with(alpha, &opts, &mut self.warm)?;
        let pt = self.se.point_from_fixed_point(&fp, &mut self.warm)?;
        self.memo.push((fp, pt));
        Ok(pt)
    }

    /// Smallest α with λ(α) = λ.
    pub fn invert(&mut self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("lambda must be > 0, got {lambda}")));
        }
        self.brackets.clear();
        let scale = 1.0 + self.alpha_min;
        let start = self.alpha_min + 0.05 * scale;
        let mut lo = start;
        let mut lo_val = self.point(lo)?.lambda - lambda;
        let mut hi;
        let mut hi_val;
        let mut evaluations = vec![(lo, lo_val)];
        if lo_val >= 0.0 {
            // λ(α_min+) = −∞, so the smallest root lies below `start`
            hi = lo;
            hi_val = lo_val;
            lo = self.alpha_min + 1e-3 * scale;
            lo_val = self.point(lo)?.lambda - lambda;
            if lo_val >= 0.0 {
                return Err(Error::Bracket {
                    message: format!("lambda = {lambda} is reached within 1e-3 of alpha_min"),
                    evaluations: vec![(lo, lo_val), (hi, hi_val)],
                });
            }
        } else {
            let mut step = 0.25 * scale;
            let mut found = false;
            hi = lo;
            hi_val = lo_val;
            for _ in 0..60 {
                let next = lo + step;
                let val = self.point(next)?.lambda - lambda;
                evaluations.push((next, val));
                if val >= 0.0 {
                    hi = next;
                    hi_val = val;
                    found = true;
                    break;
                }
                lo = next;
                lo_val = val;
                step *= 2.0;
            }
            if !found {
                return Err(Error::Bracket {
                    message: format!("no sign change of lambda(alpha) - {lambda} found"),
                    evaluations,
                });
            }
        }
        self.brackets.push((lo, hi));

        // Illinois regula falsi on [lo, hi]
        let mut side = 0i8;
        for _ in 0..100 {
            if hi - lo <= 1e-5 * scale {
                break;
            }
            let mut mid = (lo * hi_val - hi * lo_val) / (hi_val - lo_val);
            if !(mid > lo && mid < hi) {
                mid = 0.5 * (lo + hi);
            }
            let val = self.point(mid)?.lambda - lambda;
            if val.abs() <= 1e-9 * lambda {
                return Ok(mid);
            }
            if val < 0.0 {
                lo = mid;
                lo_val = val;
                if side == -1 {
                    hi_val *= 0.5;
                }
                side = -1;
            } else {
                hi = mid;
                hi_val = val;
                if side == 1 {
                    lo_val *= 0.5;
                }
                side = 1;
            }
        }
        Ok(if lo_val.abs() < hi_val.abs() { lo } else { hi })
    }

    /// Predicted `E‖β̂(λ) − β₀‖²/p`.
    pub fn lasso_risk(&mut self, lambda: f64) -> Result<RiskPoint> {
        let alpha = self.invert(lambda)?;
        let pt = self.point(alpha)?;
        let m = self.se.moments(pt.tau_star_sq, pt.theta_star, Some(&mut self.warm))?;
        // The error in τ⋆² moves the risk too; propagate it through a
        // finite difference of the risk along θ = ατ.
        let mut stderr = m.mse.stderr;
        if pt.mc_stderr > 0.0 && pt.tau_star_sq > 0.0 {
            let h = 1e-3 * pt.tau_star_sq;
            let up = self.se.moments(pt.tau_star_sq + h, alpha * (pt.tau_star_sq + h).sqrt(), Some(&mut self.warm))?;
            let slope = (up.mse.value - m.mse.value) / h;
            stderr = stderr.hypot(slope * pt.mc_stderr);
        }
        Ok(RiskPoint {
            lambda,
            alpha,
            tau_star_sq: pt.tau_star_sq,
            mse: m.mse.value,
            stderr,
        })
    }
}

//! Command dispatch and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use lasso_phase::amp::{amp_fixed_point_lambda, amp_run, AmpConfig, AmpStatus, TauSchedule};
use lasso_phase::covariance::CovarianceFamily;
use lasso_phase::io::{format_float, write_atomic};
use lasso_phase::lasso::{solve_lasso, BasisPursuitOptions, LassoOptions};
use lasso_phase::montecarlo::{empirical_transition, mse_experiment, sample_instance, MseExperiment};
use lasso_phase::phase::{delta_c, PhaseOptions};
use lasso_phase::prior::SignalPrior;
use lasso_phase::rng;
use lasso_phase::state_evolution::{Calibration, FixedPointOptions, SeProblem, StateEvolution};
use serde_json::{json, Value};

use crate::config::{Command, RunConfig};

pub const DEFAULT_OUT: &str = "lasso-phase-out";

/// Files written by a run and the problems it flagged.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub files: Vec<PathBuf>,
    /// Non-fatal problems; any entry makes the process exit nonzero.
    pub flags: Vec<String>,
}

/// A CSV table with the run configuration echoed as `#` comment lines.
struct Table {
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &'static [&'static str]) -> Self {
        Table { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn render(&self, command: Command, echo: &str) -> Result<Vec<u8>> {
        let mut buf = format!("# lasso-phase {command}\n").into_bytes();
        for line in echo.lines() {
            buf.push(b'#');
            if !line.is_empty() {
                buf.push(b' ');
                buf.extend_from_slice(line.as_bytes());
            }
            buf.push(b'\n');
        }
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
    }
}

fn num(x: f64) -> String {
    format_float(x)
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

fn blanks(n: usize) -> impl Iterator<Item = String> {
    std::iter::repeat_n(String::new(), n)
}

/// Shared inputs resolved once per run.
struct Job<'a> {
    cfg: &'a RunConfig,
    family: CovarianceFamily,
    flags: Vec<String>,
    summary: serde_json::Map<String, Value>,
}

impl Job<'_> {
    fn flag(&mut self, msg: String) {
        log::warn!("{msg}");
        self.flags.push(msg);
    }

    fn epsilons(&self) -> Vec<f64> {
        self.cfg
            .grid
            .epsilons
            .as_ref()
            .map(|g| g.values())
            .unwrap_or_else(|| vec![self.cfg.prior.epsilon])
    }

    fn prior_at(&self, epsilon: f64) -> SignalPrior {
        SignalPrior {
            epsilon,
            ..self.cfg.prior
        }
    }

    fn state_evolution(&self) -> Result<StateEvolution> {
        let g = self.cfg.geometry()?;
        StateEvolution::new(
            SeProblem {
                prior: self.cfg.prior,
                family: self.family.clone(),
                delta: g.delta,
                sigma_w_sq: g.sigma_w_sq,
            },
            self.cfg.mc.clone(),
        )
        .context("state_evolution: setup")
    }
}

/// Validates `cfg`, runs its command and writes `<command>.csv` (plus any
/// auxiliary tables) and `<command>.json` into the output directory.
pub fn run(cfg: &RunConfig, base_dir: &Path) -> Result<Outcome> {
    cfg.validate(base_dir)?;
    let command = cfg.command()?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut ctx = Job {
        cfg,
        family: cfg.covariance_family(base_dir)?,
        flags: Vec::new(),
        summary: serde_json::Map::new(),
    };
    log::info!("{command}: starting");
    let tables = match command {
        Command::RiskCurve => risk_curve(&mut ctx)?,
        Command::PhaseCurve => phase_curve(&mut ctx)?,
        Command::VerifyPhase => verify_phase(&mut ctx)?,
        Command::Calibrate => calibrate(&mut ctx)?,
        Command::AmpDemo => amp_demo(&mut ctx)?,
        Command::MseExperiment => mse(&mut ctx)?,
    };
    // the output location is not part of the result
    let echo = RunConfig { out: None, ..cfg.clone() }.to_toml();
    let mut files = Vec::new();
    for (suffix, table) in tables {
        let path = out_dir.join(format!("{command}{suffix}.csv"));
        write_atomic(&path, &table.render(command, &echo)?).with_context(|| format!("writing {}", path.display()))?;
        files.push(path);
    }
    let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let summary = json!({
        "command": command.name(),
        "config": serde_json::to_value(cfg)?,
        "started_unix": unix(started),
        "finished_unix": unix(SystemTime::now()),
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "workers": rayon::current_num_threads(),
        "files": files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>(),
        "flags": ctx.flags,
        "results": Value::Object(ctx.summary),
    });
    let json_path = out_dir.join(format!("{command}.json"));
    write_atomic(&json_path, serde_json::to_string_pretty(&summary)?.as_bytes())
        .with_context(|| format!("writing {}", json_path.display()))?;
    files.push(json_path);
    log::info!("{command}: done in {:.1}s", clock.elapsed().as_secs_f64());
    Ok(Outcome {
        command,
        files,
        flags: ctx.flags,
    })
}

type Tables = Vec<(&'static str, Table)>;

fn risk_curve(ctx: &mut Job) -> Result<Tables> {
    let se = ctx.state_evolution()?;
    let mut cal = Calibration::new(&se, FixedPointOptions::default()).context("state_evolution: alpha_min")?;
    ctx.summary.insert("alpha_min".into(), json!(cal.alpha_min()));
    let mut t = Table::new(&["lambda", "alpha", "tau_star_sq", "mse", "stderr"]);
    for lambda in ctx.cfg.grid.lambdas.as_ref().expect("validated").values() {
        log::info!("risk-curve: lambda = {lambda}");
        match cal.lasso_risk(lambda) {
            Ok(r) => t.push(vec![num(r.lambda), num(r.alpha), num(r.tau_star_sq), num(r.mse), num(r.stderr)]),
            Err(e) => {
                ctx.flag(format!("state_evolution: lasso_risk at lambda = {lambda}: {e}"));
                t.push(std::iter::once(num(lambda)).chain(blanks(4)).collect());
            }
        }
    }
    Ok(vec![("", t)])
}

fn p_grid_field(p_grid: &[usize]) -> String {
    p_grid.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(";")
}

fn phase_curve(ctx: &mut Job) -> Result<Tables> {
    let mut t = Table::new(&[
        "epsilon",
        "d_epsilon",
        "delta_c",
        "alpha_star",
        "stderr",
        "fail_fraction",
        "p_grid",
        "boundary_warning",
    ]);
    let opts = PhaseOptions::default();
    let grid = p_grid_field(&ctx.cfg.mc.p_grid);
    for eps in ctx.epsilons() {
        log::info!("phase-curve: epsilon = {eps}");
        let prior = ctx.prior_at(eps);
        match delta_c(&prior, &ctx.family, &ctx.cfg.mc, &opts) {
            Ok(pt) => {
                if pt.boundary_warning {
                    ctx.flag(format!("phase: minimizer on the alpha-grid edge at epsilon = {eps}"));
                }
                t.push(vec![
                    num(pt.epsilon),
                    num(pt.d_epsilon),
                    num(pt.delta_c),
                    num(pt.alpha_star),
                    num(pt.stderr),
                    num(pt.fail_fraction),
                    grid.clone(),
                    pt.boundary_warning.to_string(),
                ]);
            }
            Err(e) => {
                ctx.flag(format!("phase: delta_c at epsilon = {eps}: {e}"));
                t.push(
                    [num(eps), num(prior.d_epsilon)]
                        .into_iter()
                        .chain(blanks(4))
                        .chain([grid.clone(), String::new()])
                        .collect(),
                );
            }
        }
    }
    Ok(vec![("", t)])
}

fn verify_phase(ctx: &mut Job) -> Result<Tables> {
    let cfg = ctx.cfg;
    let p = cfg.experiment.p.unwrap_or(200);
    let m = cfg.experiment.instances.unwrap_or(50);
    let points = cfg.experiment.delta_points.unwrap_or(9);
    let mut t = Table::new(&[
        "epsilon",
        "d_epsilon",
        "delta_c",
        "delta_c_stderr",
        "delta_hat",
        "abs_diff",
        "a",
        "b",
        "separated",
    ]);
    let mut counts = Table::new(&["epsilon", "delta", "successes", "trials"]);
    for (k, eps) in ctx.epsilons().into_iter().enumerate() {
        log::info!("verify-phase: epsilon = {eps}");
        let prior = ctx.prior_at(eps);
        let theory = delta_c(&prior, &ctx.family, &cfg.mc, &PhaseOptions::default())
            .with_context(|| format!("phase: delta_c at epsilon = {eps}"))?;
        if theory.boundary_warning {
            ctx.flag(format!("phase: minimizer on the alpha-grid edge at epsilon = {eps}"));
        }
        let deltas = match &cfg.grid.deltas {
            Some(g) => g.values(),
            None => {
                let lo = (theory.delta_c - 0.2).max(0.05);
                let hi = (theory.delta_c + 0.2).min(1.0);
                (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
            }
        };
        let seed = rng::stream_key(cfg.seed, &[k as u64]);
        let fit = empirical_transition(&prior, &ctx.family, p, &deltas, m, seed, &BasisPursuitOptions::default())
            .with_context(|| format!("montecarlo: empirical transition at epsilon = {eps}"))?;
        for &(d, s, trials) in &fit.grid {
            counts.push(vec![num(eps), num(d), s.to_string(), trials.to_string()]);
        }
        t.push(vec![
            num(eps),
            num(prior.d_epsilon),
            num(theory.delta_c),
            num(theory.stderr),
            num(fit.delta_hat),
            num((fit.delta_hat - theory.delta_c).abs()),
            num(fit.a),
            num(fit.b),
            fit.separated.to_string(),
        ]);
    }
    Ok(vec![("", t), ("-counts", counts)])
}

fn calibrate(ctx: &mut Job) -> Result<Tables> {
    let se = ctx.state_evolution()?;
    let mut cal = Calibration::new(&se, FixedPointOptions::default()).context("state_evolution: alpha_min")?;
    ctx.summary.insert("alpha_min".into(), json!(cal.alpha_min()));
    let mut t = Table::new(&[
        "alpha",
        "admissible",
        "tau_star_sq",
        "theta_star",
        "lambda",
        "lambda_stderr",
        "active_fraction",
        "mc_stderr",
    ]);
    for alpha in ctx.cfg.grid.alphas.as_ref().expect("validated").values() {
        if alpha <= cal.alpha_min() {
            log::info!("calibrate: alpha = {alpha} is below alpha_min = {}", cal.alpha_min());
            t.push([num(alpha), "false".into()].into_iter().chain(blanks(6)).collect());
            continue;
        }
        log::info!("calibrate: alpha = {alpha}");
        match cal.point(alpha) {
            Ok(pt) => t.push(vec![
                num(alpha),
                "true".into(),
                num(pt.tau_star_sq),
                num(pt.theta_star),
                num(pt.lambda),
                num(pt.lambda_stderr),
                num(pt.active_fraction),
                num(pt.mc_stderr),
            ]),
            Err(e) => {
                ctx.flag(format!("state_evolution: calibration at alpha = {alpha}: {e}"));
                t.push([num(alpha), "true".into()].into_iter().chain(blanks(6)).collect());
            }
        }
    }
    Ok(vec![("", t)])
}

fn amp_demo(ctx: &mut Job) -> Result<Tables> {
    let cfg = ctx.cfg;
    let g = cfg.geometry()?;
    let p = cfg.experiment.p.unwrap_or(500);
    let alpha = cfg.experiment.alpha.unwrap_or(2.0);
    let amp_cfg = AmpConfig {
        max_iter: cfg.experiment.max_iter.unwrap_or(AmpConfig::default().max_iter),
        tol: cfg.experiment.tol.unwrap_or(AmpConfig::default().tol),
        ..AmpConfig::default()
    };
    let se = ctx.state_evolution()?;
    let point = se
        .calibrate_lambda(alpha, &FixedPointOptions::default())
        .with_context(|| format!("state_evolution: calibration at alpha = {alpha}"))?;
    let schedule = TauSchedule::from_state_evolution(&se, alpha, None, amp_cfg.max_iter)
        .with_context(|| format!("state_evolution: tau schedule at alpha = {alpha}"))?;
    let model = ctx.family.build(p).context("covariance: build")?;
    let seed = rng::stream_key(cfg.seed, &[0]);
    let inst = sample_instance(p, g.delta, &cfg.prior, &model, g.sigma_w_sq.sqrt(), seed)
        .context("montecarlo: sample instance")?;
    let trace = amp_run(&inst.x, &inst.y, &model, &schedule, &amp_cfg, Some(&inst.beta0)).context("amp: run")?;
    let lambda = amp_fixed_point_lambda(&trace.state);
    let lasso = solve_lasso(&inst.x, &inst.y, lambda, &LassoOptions::default()).context("lasso: solve")?;
    let gap = (&trace.state.beta - &lasso.beta).norm_squared() / p as f64;
    let converged = trace.status == AmpStatus::Converged;
    if !converged {
        ctx.flag(format!("amp: not converged after {} iterations", trace.state.iteration));
    }
    let predicted = se
        .moments(point.tau_star_sq, point.theta_star, None)
        .context("state_evolution: moments at the fixed point")?;
    let final_mse = (&trace.state.beta - &inst.beta0).norm_squared() / p as f64;
    ctx.summary.extend([
        ("p".into(), json!(p)),
        ("n".into(), json!(inst.n())),
        ("alpha".into(), json!(alpha)),
        ("converged".into(), json!(converged)),
        ("iterations".into(), json!(trace.state.iteration)),
        ("tau_star_sq".into(), json!(point.tau_star_sq)),
        ("lambda_state_evolution".into(), json!(point.lambda)),
        ("lambda_instance".into(), json!(lambda)),
        ("lasso_gap".into(), json!(gap)),
        ("mse".into(), json!(final_mse)),
        ("mse_predicted".into(), json!(predicted.mse.value)),
    ]);
    let mut t = Table::new(&["iteration", "mse", "dbeta", "dz", "tau_sq", "support"]);
    for r in &trace.records {
        t.push(vec![
            r.iteration.to_string(),
            opt(r.mse),
            num(r.dbeta),
            num(r.dz),
            num(r.tau_sq),
            r.support.to_string(),
        ]);
    }
    Ok(vec![("", t)])
}

fn mse(ctx: &mut Job) -> Result<Tables> {
    let cfg = ctx.cfg;
    let g = cfg.geometry()?;
    let exp = MseExperiment {
        lambdas: cfg.grid.lambdas.as_ref().expect("validated").values(),
        prior: cfg.prior,
        family: ctx.family.clone(),
        delta: g.delta,
        sigma_w: g.sigma_w_sq.sqrt(),
        p: cfg.experiment.p.unwrap_or(200),
        replicates: cfg.experiment.instances.unwrap_or(50),
        seed: cfg.seed,
        theory: cfg.experiment.theory.unwrap_or(true).then(|| cfg.mc.clone()),
    };
    let points = mse_experiment(&exp).context("montecarlo: mse experiment")?;
    let mut t = Table::new(&["lambda", "mean", "stderr", "theory", "theory_stderr", "failed", "flagged"]);
    for pt in points {
        if pt.flagged {
            ctx.flag(format!(
                "montecarlo: lambda = {} flagged ({} failed replicates)",
                pt.lambda, pt.failed
            ));
        }
        t.push(vec![
            num(pt.lambda),
            num(pt.mean),
            num(pt.stderr),
            opt(pt.theory),
            opt(pt.theory_stderr),
            pt.failed.to_string(),
            pt.flagged.to_string(),
        ]);
    }
    Ok(vec![("", t)])
}

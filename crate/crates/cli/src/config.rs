//! Run configuration: TOML parsing, flag overrides and validation.

use std::fmt;
use std::path::{Path, PathBuf};

use lasso_phase::covariance::CovarianceFamily;
use lasso_phase::io::parse_covariance_csv;
use lasso_phase::prior::SignalPrior;
use lasso_phase::state_evolution::McConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Predicted LASSO risk along a λ-grid.
    RiskCurve,
    /// δ_c(ε) along an ε-grid.
    PhaseCurve,
    /// Empirical basis-pursuit transitions against the predicted δ_c.
    VerifyPhase,
    /// The α ↦ λ(α) table.
    Calibrate,
    /// One AMP run on a simulated instance.
    AmpDemo,
    /// Empirical LASSO risk along a λ-grid, with the prediction alongside.
    MseExperiment,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::RiskCurve => "risk-curve",
            Command::PhaseCurve => "phase-curve",
            Command::VerifyPhase => "verify-phase",
            Command::Calibrate => "calibrate",
            Command::AmpDemo => "amp-demo",
            Command::MseExperiment => "mse-experiment",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Covariance section; like [`CovarianceFamily`] except that an explicit
/// matrix may be given as a CSV `path`, resolved against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceConfig {
    Identity,
    Ar1 {
        rho: f64,
    },
    Spiked {
        spikes: Vec<f64>,
        sigma_sq: f64,
        #[serde(default)]
        v_seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        directions: Option<Vec<Vec<f64>>>,
    },
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
    },
}

/// A list of values, or `{ from, to, points, log }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Range {
        from: f64,
        to: f64,
        points: usize,
        #[serde(default)]
        log: bool,
    },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            GridSpec::List(ref v) => v.clone(),
            GridSpec::Range { from, to, points, log } => {
                if points == 1 {
                    return vec![from];
                }
                (0..points)
                    .map(|i| {
                        let t = i as f64 / (points - 1) as f64;
                        if log {
                            (from.ln() + t * (to.ln() - from.ln())).exp()
                        } else {
                            from + t * (to - from)
                        }
                    })
                    .collect()
            }
        }
    }

    fn check(&self, path: &str) -> Result<(), ConfigError> {
        if let GridSpec::Range { from, to, points, log } = *self {
            if points == 0 {
                return Err(ConfigError::new(format!("{path}.points"), "must be at least 1"));
            }
            if !(from.is_finite() && to.is_finite()) {
                return Err(ConfigError::new(path, "range ends must be finite"));
            }
            if log && !(from > 0.0 && to > 0.0) {
                return Err(ConfigError::new(path, "a log range needs positive ends"));
            }
        }
        if self.values().is_empty() {
            return Err(ConfigError::new(path, "grid is empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub delta: f64,
    #[serde(default)]
    pub sigma_w_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<GridSpec>,
    /// δ-grid of `verify-phase`; centred on the predicted δ_c when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<GridSpec>,
}

/// Simulation sizes for the commands that draw instances.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Instances per grid point (`m` for `verify-phase`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    /// Threshold ratio for `amp-demo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Whether `mse-experiment` also computes the prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<bool>,
    /// Points of the automatic δ-grid of `verify-phase`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_points: Option<usize>,
}

/// Plain values come before tables so the struct serializes back to TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub covariance: CovarianceConfig,
    pub prior: SignalPrior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub grid: Grids,
    #[serde(default)]
    pub experiment: Experiment,
}

/// A parse or validation failure located by its dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config field `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses TOML without validating it.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let mut message = inner.message().to_string();
        // serde reports a missing section at its parent; name it instead
        if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.strip_suffix('`')) {
            let full = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            return ConfigError::new(full.clone(), format!("missing required field `{full}`"));
        }
        if let Some(span) = inner.span() {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            message = format!("{message} (line {line})");
        }
        ConfigError::new(path, message)
    })
}

/// `"100,200,400"` → `[100, 200, 400]`.
pub fn parse_p_grid(text: &str) -> Result<Vec<usize>, ConfigError> {
    let mut out = Vec::new();
    for field in text.split(',') {
        let field = field.trim();
        match field.parse::<usize>() {
            Ok(p) if p > 0 => out.push(p),
            _ => return Err(ConfigError::new("mc.p_grid", format!("not a positive integer: {field:?}"))),
        }
    }
    Ok(out)
}

/// Flag values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub p_grid: Option<Vec<usize>>,
    pub replicates: Option<usize>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = o.command {
            self.command = Some(c);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(g) = &o.p_grid {
            self.mc.p_grid = g.clone();
        }
        if let Some(r) = o.replicates {
            self.mc.replicates = r;
        }
    }

    pub fn command(&self) -> Result<Command, ConfigError> {
        self.command
            .ok_or_else(|| ConfigError::new("command", "no command given on the command line or in the config"))
    }

    /// Geometry, required by every command except `phase-curve`.
    pub fn geometry(&self) -> Result<Geometry, ConfigError> {
        self.geometry
            .ok_or_else(|| ConfigError::new("geometry", format!("missing required section `geometry` for {}", self.command_name())))
    }

    fn command_name(&self) -> &'static str {
        self.command.map(Command::name).unwrap_or("this command")
    }

    fn require_grid<'a>(&self, grid: &'a Option<GridSpec>, name: &str) -> Result<&'a GridSpec, ConfigError> {
        grid.as_ref()
            .ok_or_else(|| ConfigError::new(format!("grid.{name}"), format!("required by {}", self.command_name())))
    }

    /// Resolves the covariance section, reading a CSV `path` relative to
    /// `base_dir`.
    pub fn covariance_family(&self, base_dir: &Path) -> Result<CovarianceFamily, ConfigError> {
        let family = match &self.covariance {
            CovarianceConfig::Identity => CovarianceFamily::Identity,
            CovarianceConfig::Ar1 { rho } => CovarianceFamily::Ar1 { rho: *rho },
            CovarianceConfig::Spiked {
                spikes,
                sigma_sq,
                v_seed,
                directions,
            } => CovarianceFamily::Spiked {
                spikes: spikes.clone(),
                sigma_sq: *sigma_sq,
                v_seed: *v_seed,
                directions: directions.clone(),
            },
            CovarianceConfig::Explicit { matrix, path } => match (matrix, path) {
                (Some(m), None) => CovarianceFamily::Explicit { matrix: m.clone() },
                (None, Some(p)) => {
                    let full = base_dir.join(p);
                    let text = std::fs::read_to_string(&full)
                        .map_err(|e| ConfigError::new("covariance.path", format!("{}: {e}", full.display())))?;
                    let m = parse_covariance_csv(&text)
                        .map_err(|e| ConfigError::new("covariance.path", format!("{}: {e}", full.display())))?;
                    CovarianceFamily::Explicit {
                        matrix: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    }
                }
                _ => {
                    return Err(ConfigError::new(
                        "covariance",
                        "explicit covariance needs exactly one of `matrix` or `path`",
                    ))
                }
            },
        };
        family.validate().map_err(|e| ConfigError::new("covariance", e.to_string()))?;
        Ok(family)
    }

    /// Checks every precondition of the selected command; nothing is
    /// computed until this passes.
    pub fn validate(&self, base_dir: &Path) -> Result<(), ConfigError> {
        let command = self.command()?;
        let family = self.covariance_family(base_dir)?;
        self.prior.validate().map_err(|e| ConfigError::new("prior", e.to_string()))?;
        self.mc.validate().map_err(|e| ConfigError::new("mc", e.to_string()))?;
        if let Some(dim) = family.fixed_dim() {
            let mut sizes: Vec<usize> = self.mc.p_grid.clone();
            sizes.extend(self.experiment.p);
            if let Some(p) = sizes.iter().find(|&&p| p != dim) {
                return Err(ConfigError::new(
                    "covariance",
                    format!("explicit matrix is {dim}×{dim} but dimension {p} is requested"),
                ));
            }
        }
        for (name, grid) in [
            ("lambdas", &self.grid.lambdas),
            ("alphas", &self.grid.alphas),
            ("epsilons", &self.grid.epsilons),
            ("deltas", &self.grid.deltas),
        ] {
            if let Some(g) = grid {
                g.check(&format!("grid.{name}"))?;
            }
        }
        let positive = |path: &str, values: &[f64]| -> Result<(), ConfigError> {
            match values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                Some(v) => Err(ConfigError::new(path, format!("values must be positive and finite, got {v}"))),
                None => Ok(()),
            }
        };
        if let Some(g) = self.geometry {
            if !(g.delta > 0.0 && g.delta <= 1.0) {
                return Err(ConfigError::new("geometry.delta", format!("must lie in (0, 1], got {}", g.delta)));
            }
            if !(g.sigma_w_sq >= 0.0 && g.sigma_w_sq.is_finite()) {
                return Err(ConfigError::new(
                    "geometry.sigma_w_sq",
                    format!("must be ≥ 0, got {}", g.sigma_w_sq),
                ));
            }
        }
        if let Some(p) = self.experiment.p {
            if p < 2 {
                return Err(ConfigError::new("experiment.p", "must be at least 2"));
            }
        }
        if let Some(tol) = self.experiment.tol {
            if !(tol > 0.0) {
                return Err(ConfigError::new("experiment.tol", "must be > 0"));
            }
        }
        if self.experiment.max_iter == Some(0) {
            return Err(ConfigError::new("experiment.max_iter", "must be at least 1"));
        }
        let nonzero_signal = || {
            if self.prior.epsilon > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new("prior.epsilon", format!("must be > 0 for {command}")))
            }
        };
        match command {
            Command::RiskCurve => {
                self.geometry()?;
                nonzero_signal()?;
                positive("grid.lambdas", &self.require_grid(&self.grid.lambdas, "lambdas")?.values())?;
            }
            Command::Calibrate => {
                self.geometry()?;
                positive("grid.alphas", &self.require_grid(&self.grid.alphas, "alphas")?.values())?;
            }
            Command::PhaseCurve | Command::VerifyPhase => {
                if let Some(g) = &self.grid.epsilons {
                    if let Some(e) = g.values().iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                        return Err(ConfigError::new("grid.epsilons", format!("values must lie in (0, 1), got {e}")));
                    }
                } else if !(self.prior.epsilon > 0.0 && self.prior.epsilon < 1.0) {
                    return Err(ConfigError::new("prior.epsilon", "must lie in (0, 1)"));
                }
                if command == Command::VerifyPhase {
                    if let Some(g) = &self.grid.deltas {
                        let v = g.values();
                        if v.len() < 2 || v.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
                            return Err(ConfigError::new("grid.deltas", "needs at least two values in (0, 1]"));
                        }
                    }
                    if self.experiment.instances.is_some_and(|m| m < 20) {
                        return Err(ConfigError::new("experiment.instances", "verify-phase needs at least 20"));
                    }
                    if self.experiment.delta_points.is_some_and(|k| k < 2) {
                        return Err(ConfigError::new("experiment.delta_points", "must be at least 2"));
                    }
                }
            }
            Command::AmpDemo => {
                self.geometry()?;
                nonzero_signal()?;
                if let Some(a) = self.experiment.alpha {
                    positive("experiment.alpha", &[a])?;
                }
            }
            Command::MseExperiment => {
                self.geometry()?;
                nonzero_signal()?;
                positive("grid.lambdas", &self.require_grid(&self.grid.lambdas, "lambdas")?.values())?;
                if self.experiment.instances.is_some_and(|m| m < 2) {
                    return Err(ConfigError::new("experiment.instances", "must be at least 2"));
                }
            }
        }
        Ok(())
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
command = "calibrate"
[covariance]
family = "ar1"
rho = 0.5
[prior]
epsilon = 0.1
[geometry]
delta = 0.5
[grid]
alphas = [1.0, 2.0]
"#;

    #[test]
    fn minimal_config_validates() {
        let cfg = parse_config(MINIMAL).unwrap();
        cfg.validate(Path::new(".")).unwrap();
        assert_eq!(cfg.mc, McConfig::default());
        assert_eq!(cfg.covariance, CovarianceConfig::Ar1 { rho: 0.5 });
    }

    #[test]
    fn missing_covariance_names_the_field() {
        let text = MINIMAL.replace("[covariance]\nfamily = \"ar1\"\nrho = 0.5\n", "");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.path, "covariance");
        assert!(err.to_string().contains("covariance"), "{err}");
    }

    #[test]
    fn nested_errors_carry_paths() {
        // the tagged covariance enum is buffered, so its path stops at the section
        let err = parse_config(&MINIMAL.replace("rho = 0.5", "rho = \"x\"")).unwrap_err();
        assert_eq!(err.path, "covariance");
        assert!(err.message.contains("f64"), "{err}");
        let err = parse_config(&MINIMAL.replace("delta = 0.5", "delta = \"x\"")).unwrap_err();
        assert_eq!(err.path, "geometry.delta");
        let err = parse_config(&MINIMAL.replace("epsilon = 0.1", "epsilon = 0.1\nbogus = 1")).unwrap_err();
        assert_eq!(err.path, "prior.bogus");
        let err = parse_config(&MINIMAL.replace("[prior]\nepsilon = 0.1\n", "[prior]\n")).unwrap_err();
        assert_eq!(err.path, "prior.epsilon");
    }

    #[test]
    fn validation_errors_carry_paths() {
        let cfg = parse_config(&MINIMAL.replace("rho = 0.5", "rho = 1.5")).unwrap();
        assert_eq!(cfg.validate(Path::new(".")).unwrap_err().path, "covariance");
        let cfg = parse_config(&MINIMAL.replace("alphas = [1.0, 2.0]", "")).unwrap();
        assert_eq!(cfg.validate(Path::new(".")).unwrap_err().path, "grid.alphas");
        let cfg = parse_config(&MINIMAL.replace("delta = 0.5", "delta = -1")).unwrap();
        assert_eq!(cfg.validate(Path::new(".")).unwrap_err().path, "geometry.delta");
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.command = Some(Command::RiskCurve);
        cfg.grid.lambdas = Some(GridSpec::List(vec![0.5]));
        cfg.prior.epsilon = 0.0;
        assert_eq!(cfg.validate(Path::new(".")).unwrap_err().path, "prior.epsilon");
    }

    #[test]
    fn explicit_matrix_dimension_must_match() {
        let text = MINIMAL.replace("family = \"ar1\"\nrho = 0.5", "family = \"explicit\"\nmatrix = [[1.0, 0.0], [0.0, 1.0]]");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.validate(Path::new(".")).unwrap_err().path, "covariance");
    }

    #[test]
    fn grid_ranges() {
        let g = GridSpec::Range {
            from: 0.05,
            to: 0.95,
            points: 31,
            log: false,
        };
        let v = g.values();
        assert_eq!(v.len(), 31);
        assert!((v[30] - 0.95).abs() < 1e-15 && (v[1] - 0.08).abs() < 1e-15);
        let g = GridSpec::Range {
            from: 0.01,
            to: 1.0,
            points: 3,
            log: true,
        };
        let v = g.values();
        assert!((v[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn p_grid_flag() {
        assert_eq!(parse_p_grid("100, 200,400").unwrap(), vec![100, 200, 400]);
        assert!(parse_p_grid("").is_err());
        assert!(parse_p_grid("100,,200").is_err());
        assert!(parse_p_grid("0").is_err());
        assert!(parse_p_grid("-5").is_err());
    }

    #[test]
    fn overrides_win_and_round_trip() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            p_grid: Some(vec![50, 60]),
            replicates: Some(7),
            ..Default::default()
        });
        assert_eq!((cfg.seed, cfg.mc.p_grid.clone(), cfg.mc.replicates), (9, vec![50, 60], 7));
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }
}

//! Experiment configuration (TOML).
//!
//! Every section and field has a default, so an empty file describes the
//! cubic example system on `[-64, 64]` driven by the example forcing.

use std::path::{Path, PathBuf};

use lattice_cocycle::forcing::default_omegas;
use lattice_cocycle::integrator::Method;
use lattice_cocycle::{ForcingFunction, IntegratorConfig, LatticeVector, ModelParams, NonlinearitySpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {value}")))
    }
}

fn nonnegative(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be nonnegative and finite, got {value}")))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub lattice: LatticeConfig,
    pub forcing: ForcingConfig,
    pub integrator: IntegratorSection,
    pub run: RunConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub nu: f64,
    pub lambda: f64,
    pub nonlinearity: NonlinearityConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            nu: 1.0,
            lambda: 1.0,
            nonlinearity: NonlinearityConfig::Cubic,
        }
    }
}

/// `cubic`: `F(s) = −s − s³`. `linear`: `F(s) = −αs`. `custom`: the
/// polynomial `F(s) = Σ_j coefficients[j]·s^j` with a user-supplied `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Cubic,
    Linear {
        alpha: f64,
    },
    Custom {
        alpha: f64,
        coefficients: Vec<f64>,
        /// `[r, L]` rows: `L` bounds the Lipschitz constant on `[−r, r]`.
        /// Radii beyond the table fall back to `Σ j|c_j| r^{j−1}`.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        lip_table: Vec<[f64; 2]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub window_radius: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { window_radius: 64 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForcingKind {
    /// `f_i(t) = sin(ω_i t + ln(1 + t²))/2^{|i|}`
    Example,
    Zero,
    /// `g_i = amplitude·2^{−|i|}`, time independent.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaRule {
    /// `ω_i = √(|i| + 1)`
    Sqrt,
    /// `ω_i = 1`
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForcingConfig {
    pub kind: ForcingKind,
    pub omegas: OmegaRule,
    pub amplitude: f64,
    /// Hull grid `{start, start + step, …}` with `count` entries.
    pub shift_start: f64,
    pub shift_step: f64,
    pub shift_count: usize,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            kind: ForcingKind::Example,
            omegas: OmegaRule::Sqrt,
            amplitude: 0.5,
            shift_start: 0.0,
            shift_step: 0.5,
            shift_count: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodConfig {
    Rk4,
    Dopri45,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: MethodConfig,
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
}

impl Default for IntegratorSection {
    fn default() -> Self {
        let d = IntegratorConfig::default();
        Self {
            method: MethodConfig::Dopri45,
            dt: d.dt,
            rel_tol: d.rel_tol,
            abs_tol: d.abs_tol,
            max_step: d.max_step,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// Low-discrepancy points on the sphere of radius `seed_ball_radius`.
    Sphere,
    /// Low-discrepancy points in the ball of radius `seed_ball_radius`.
    Ball,
    Zero,
    /// `seed_ball_radius · e₀`
    Unit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_final: f64,
    pub sample_dt: f64,
    pub seed: u64,
    pub initial: InitialKind,
    pub n_initial: usize,
    pub seed_ball_radius: f64,
    pub n_points: usize,
    pub settle_time: f64,
    pub ladder: Vec<f64>,
    pub eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub cross_constant: f64,
    pub metric_l_max: f64,
    pub metric_grid_step: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_final: 10.0,
            sample_dt: 0.01,
            seed: 1,
            initial: InitialKind::Sphere,
            n_initial: 10,
            seed_ball_radius: 3.0,
            n_points: 64,
            settle_time: 20.0,
            ladder: vec![2.0, 5.0, 10.0],
            eps: 0.05,
            k: None,
            cross_constant: 4.0,
            metric_l_max: 50.0,
            metric_grid_step: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Significant digits in CSV output.
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            precision: 17,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        nonnegative("model.nu", self.model.nu)?;
        positive("model.lambda", self.model.lambda)?;
        match &self.model.nonlinearity {
            NonlinearityConfig::Cubic => {}
            NonlinearityConfig::Linear { alpha } => positive("model.nonlinearity.alpha", *alpha)?,
            NonlinearityConfig::Custom {
                alpha,
                coefficients,
                lip_table,
            } => {
                positive("model.nonlinearity.alpha", *alpha)?;
                if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("model.nonlinearity.coefficients", "need finite coefficients"));
                }
                if coefficients[0] != 0.0 {
                    return Err(invalid(
                        "model.nonlinearity.coefficients",
                        format!("F(0) = coefficients[0] must be 0, got {}", coefficients[0]),
                    ));
                }
                let sorted = lip_table.windows(2).all(|w| w[0][0] < w[1][0]);
                if !sorted || lip_table.iter().any(|[r, l]| !(*r > 0.0 && *l >= 0.0)) {
                    return Err(invalid(
                        "model.nonlinearity.lip_table",
                        "rows must be [r, L] with increasing r > 0 and L >= 0",
                    ));
                }
            }
        }
        if self.lattice.window_radius == 0 {
            return Err(invalid("lattice.window_radius", "must be at least 1"));
        }
        if !self.forcing.amplitude.is_finite() {
            return Err(invalid("forcing.amplitude", "must be finite"));
        }
        if !self.forcing.shift_start.is_finite() {
            return Err(invalid("forcing.shift_start", "must be finite"));
        }
        positive("forcing.shift_step", self.forcing.shift_step)?;
        if self.forcing.shift_count == 0 {
            return Err(invalid("forcing.shift_count", "must be at least 1"));
        }
        positive("integrator.dt", self.integrator.dt)?;
        positive("integrator.rel_tol", self.integrator.rel_tol)?;
        positive("integrator.abs_tol", self.integrator.abs_tol)?;
        positive("integrator.max_step", self.integrator.max_step)?;
        if self.integrator.max_step < self.integrator.dt {
            return Err(invalid("integrator.max_step", "must be at least integrator.dt"));
        }
        let run = &self.run;
        positive("run.t_final", run.t_final)?;
        positive("run.sample_dt", run.sample_dt)?;
        nonnegative("run.seed_ball_radius", run.seed_ball_radius)?;
        if run.n_initial == 0 {
            return Err(invalid("run.n_initial", "must be at least 1"));
        }
        if run.n_points == 0 {
            return Err(invalid("run.n_points", "must be at least 1"));
        }
        nonnegative("run.settle_time", run.settle_time)?;
        if run.ladder.is_empty() || run.ladder.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(invalid("run.ladder", "need at least one finite nonnegative time"));
        }
        positive("run.eps", run.eps)?;
        positive("run.cross_constant", run.cross_constant)?;
        positive("run.metric_l_max", run.metric_l_max)?;
        positive("run.metric_grid_step", run.metric_grid_step)?;
        if let Some(k) = run.k {
            if k == 0 {
                return Err(invalid("run.k", "must be at least 1"));
            }
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(invalid("output.precision", "must be between 1 and 17"));
        }
        Ok(())
    }

    /// Extra check for the `tails` command: `window_radius ≥ 2k`.
    pub fn validate_tails(&self) -> Result<(), ConfigError> {
        if let Some(k) = self.run.k {
            if self.lattice.window_radius < 2 * k {
                return Err(invalid(
                    "lattice.window_radius",
                    format!(
                        "window too small: k = {k} needs window_radius >= {}, got {}",
                        2 * k,
                        self.lattice.window_radius
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let spec = match &self.model.nonlinearity {
            NonlinearityConfig::Cubic => NonlinearitySpec::cubic(),
            NonlinearityConfig::Linear { alpha } => NonlinearitySpec::linear(*alpha)
                .map_err(|e| invalid("model.nonlinearity", e.to_string()))?,
            NonlinearityConfig::Custom {
                alpha,
                coefficients,
                lip_table,
            } => {
                let c = coefficients.clone();
                let f = move |s: f64| c.iter().rev().fold(0.0, |acc, cj| acc * s + cj);
                let c = coefficients.clone();
                let table = lip_table.clone();
                let lip = move |r: f64| {
                    table.iter().find(|row| row[0] >= r).map(|row| row[1]).unwrap_or_else(|| {
                        c.iter()
                            .enumerate()
                            .skip(1)
                            .map(|(j, cj)| j as f64 * cj.abs() * r.powi(j as i32 - 1))
                            .sum()
                    })
                };
                NonlinearitySpec::custom("polynomial", f, *alpha, lip)
                    .map_err(|e| invalid("model.nonlinearity", e.to_string()))?
            }
        };
        ModelParams::new(self.model.nu, self.model.lambda, spec).map_err(|e| invalid("model", e.to_string()))
    }

    pub fn forcing(&self) -> ForcingFunction {
        let n = self.lattice.window_radius;
        match self.forcing.kind {
            ForcingKind::Zero => ForcingFunction::zero(n),
            ForcingKind::Constant => {
                let a = self.forcing.amplitude;
                ForcingFunction::constant(LatticeVector::from_fn(n, |i| a * 0.5f64.powi(i.abs() as i32)))
            }
            ForcingKind::Example => {
                let omegas = match self.forcing.omegas {
                    OmegaRule::Sqrt => default_omegas(n),
                    OmegaRule::Unit => vec![1.0; 2 * n + 1],
                };
                ForcingFunction::example(n, omegas).expect("omega count matches the window")
            }
        }
    }

    pub fn shifts(&self) -> Vec<f64> {
        let f = &self.forcing;
        (0..f.shift_count).map(|j| f.shift_start + j as f64 * f.shift_step).collect()
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let s = &self.integrator;
        IntegratorConfig {
            method: match s.method {
                MethodConfig::Rk4 => Method::Rk4,
                MethodConfig::Dopri45 => Method::Dopri45,
            },
            dt: s.dt,
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            max_step: s.max_step,
            ..IntegratorConfig::default()
        }
    }
}

//! TOML run configuration: one config file describes one task.
//!
//! The schema mirrors the model ingredients: every scalar coefficient is a
//! `{ form = ..., ... }` table, the kernel is either a separable list of
//! factor pairs or an inline value grid, and the task selects what to do
//! with them. Unknown keys are rejected. `parse_config` validates the whole
//! document (so a config that parses will also build a valid model), and
//! `render_config` writes a document that parses back to the same value.

use serde::{Deserialize, Serialize};

use crate::coeffs::{BirthKernel, CoefficientFn, ModelParams, Role};
use crate::error::{Error, Result};
use crate::solver::{build_grid, Grid, PopulationState};

/// What a run does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Time integration, observable and profile output.
    Simulate,
    /// Rank-1 characteristic root solve with a K(lambda) sweep.
    Spectral,
    /// Rank-n determinant root solve (optionally after bounding a general
    /// kernel by a separable envelope).
    RankN,
    /// Dominant eigenvalue of the discretized generator.
    GeneratorEig,
    /// Two-initial-condition asynchronous-exponential-growth check.
    Aeg,
    /// Parameter audit: extinction condition, irreducibility flags, tau(m).
    Report,
}

impl Task {
    pub fn tag(&self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Spectral => "spectral",
            Task::RankN => "rank_n",
            Task::GeneratorEig => "generator_eig",
            Task::Aeg => "aeg",
            Task::Report => "report",
        }
    }
}

/// Scalar coefficient specification; `m` comes from the grid section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    Linear {
        a: f64,
        b: f64,
    },
    GaussianBump {
        center: f64,
        width: f64,
        height: f64,
    },
    Table {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    Steps {
        edges: Vec<f64>,
        values: Vec<f64>,
    },
}

impl CoefficientSpec {
    pub fn build(&self, m: f64) -> Result<CoefficientFn> {
        match self {
            CoefficientSpec::Constant { value } => CoefficientFn::constant(*value, m),
            CoefficientSpec::Linear { a, b } => CoefficientFn::linear(*a, *b, m),
            CoefficientSpec::GaussianBump {
                center,
                width,
                height,
            } => CoefficientFn::gaussian_bump(*center, *width, *height, m),
            CoefficientSpec::Table { knots, values } => {
                let f = CoefficientFn::table(knots.clone(), values.clone())?;
                if f.domain_max() != m {
                    return Err(Error::Config(format!(
                        "table spans [0, {}] but the grid has m = {m}",
                        f.domain_max()
                    )));
                }
                Ok(f)
            }
            CoefficientSpec::Steps { edges, values } => {
                let f = CoefficientFn::steps(edges.clone(), values.clone())?;
                if f.domain_max() != m {
                    return Err(Error::Config(format!(
                        "steps span [0, {}] but the grid has m = {m}",
                        f.domain_max()
                    )));
                }
                Ok(f)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub b1: CoefficientSpec,
    pub b2: CoefficientSpec,
}

/// Birth kernel specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Separable {
        terms: Vec<TermSpec>,
    },
    /// `values[i][j] = beta(s_knots[i], y_knots[j])`.
    General {
        s_knots: Vec<f64>,
        y_knots: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl KernelSpec {
    pub fn build(&self, m: f64) -> Result<BirthKernel> {
        match self {
            KernelSpec::Separable { terms } => {
                let built = terms
                    .iter()
                    .map(|t| Ok((t.b1.build(m)?, t.b2.build(m)?)))
                    .collect::<Result<Vec<_>>>()?;
                BirthKernel::separable(built, m)
            }
            KernelSpec::General {
                s_knots,
                y_knots,
                values,
            } => {
                let k = BirthKernel::general(s_knots.clone(), y_knots.clone(), values.clone())?;
                if k.domain_max() != m {
                    return Err(Error::Config(format!(
                        "kernel grid spans [0, {}] but the grid has m = {m}",
                        k.domain_max()
                    )));
                }
                Ok(k)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gamma1: CoefficientSpec,
    pub gamma2: CoefficientSpec,
    pub mu: CoefficientSpec,
    pub c1: CoefficientSpec,
    pub c2: CoefficientSpec,
    pub beta: KernelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    /// Explicit snapshot times; take precedence over `output_count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_times: Option<Vec<f64>>,
    /// Number of evenly spaced snapshots over `(0, t_end]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_count: Option<usize>,
}

impl TimeConfig {
    /// Resolve the snapshot schedule; defaults to 50 evenly spaced times.
    pub fn resolve_output_times(&self) -> Vec<f64> {
        if let Some(times) = &self.output_times {
            return times.clone();
        }
        if self.t_end == 0.0 {
            return Vec::new();
        }
        let count = self.output_count.unwrap_or(50).max(1);
        (1..=count)
            .map(|i| self.t_end * (i as f64 / count as f64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub u1: CoefficientSpec,
    pub u2: CoefficientSpec,
}

impl InitialConfig {
    pub fn build(&self, grid: &Grid) -> Result<PopulationState> {
        let f1 = self.u1.build(grid.m())?;
        let f2 = self.u2.build(grid.m())?;
        f1.validate_role(Role::Rate, "initial u1")?;
        f2.validate_role(Role::Rate, "initial u2")?;
        Ok(PopulationState::from_profiles(
            grid,
            |s| f1.eval(s).unwrap_or(0.0),
            |s| f2.eval(s).unwrap_or(0.0),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideSpec {
    Lower,
    Upper,
}

/// Envelope construction applied before the rank-n task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub n: usize,
    pub side: SideSpec,
}

fn default_root_tol() -> f64 {
    1e-10
}
fn default_safety() -> f64 {
    0.9
}
fn default_power_tol() -> f64 {
    1e-9
}
fn default_aeg_tol() -> f64 {
    0.05
}
fn default_window_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Bisection bracket width for root solves.
    pub root_tol: f64,
    /// CFL safety factor for simulate.
    pub safety: f64,
    /// Power-iteration convergence tolerance.
    pub power_tol: f64,
    /// AEG verdict tolerance.
    pub aeg_tol: f64,
    /// Trailing fraction of the time range used for rate fits.
    pub window_fraction: f64,
    /// Scale for the irreducibility support checks; defaults to m/10.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root_tol: default_root_tol(),
            safety: default_safety(),
            power_tol: default_power_tol(),
            aeg_tol: default_aeg_tol(),
            window_fraction: default_window_fraction(),
            epsilon: None,
        }
    }
}

/// Sweep of the characteristic function written to `spectral.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub grid: GridConfig,
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_a: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_b: Option<InitialConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn build_grid(&self) -> Result<Grid> {
        build_grid(self.grid.m, self.grid.n_cells)
    }

    /// Build the validated parameter bundle, applying the envelope for the
    /// rank-n task when configured.
    pub fn build_model(&self) -> Result<ModelParams> {
        let m = self.grid.m;
        let mut beta = self.model.beta.build(m)?;
        if self.task == Task::RankN {
            if let Some(env) = &self.envelope {
                beta = beta.separable_envelope(
                    env.n,
                    match env.side {
                        SideSpec::Lower => crate::coeffs::EnvelopeSide::Lower,
                        SideSpec::Upper => crate::coeffs::EnvelopeSide::Upper,
                    },
                )?;
            }
        }
        ModelParams::new(
            self.model.gamma1.build(m)?,
            self.model.gamma2.build(m)?,
            self.model.mu.build(m)?,
            self.model.c1.build(m)?,
            self.model.c2.build(m)?,
            beta,
            m,
        )
    }

    /// Full validation: grid, model, and task-specific requirements.
    pub fn validate(&self) -> Result<()> {
        let grid = self.build_grid()?;
        let params = self.build_model()?;
        let tol = &self.tolerances;
        for (name, v) in [
            ("root_tol", tol.root_tol),
            ("power_tol", tol.power_tol),
            ("aeg_tol", tol.aeg_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "tolerances.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(tol.safety > 0.0 && tol.safety <= 1.0) {
            return Err(Error::Config(format!(
                "tolerances.safety must lie in (0, 1], got {}",
                tol.safety
            )));
        }
        if !(tol.window_fraction > 0.0 && tol.window_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "tolerances.window_fraction must lie in (0, 1], got {}",
                tol.window_fraction
            )));
        }
        if let Some(eps) = tol.epsilon {
            if !(eps > 0.0 && eps <= 0.5 * self.grid.m) {
                return Err(Error::Config(format!(
                    "tolerances.epsilon must lie in (0, m/2], got {eps}"
                )));
            }
        }
        if let Some(sweep) = &self.sweep {
            if !(sweep.lo.is_finite() && sweep.hi.is_finite() && sweep.lo < sweep.hi) {
                return Err(Error::Config(format!(
                    "sweep range [{}, {}] is not a finite interval",
                    sweep.lo, sweep.hi
                )));
            }
            if sweep.count < 2 {
                return Err(Error::Config("sweep.count must be at least 2".into()));
            }
        }

        let need_time = |task: &str| -> Result<&TimeConfig> {
            self.time
                .as_ref()
                .ok_or_else(|| Error::Config(format!("task {task} needs a [time] section")))
        };
        match self.task {
            Task::Simulate => {
                let time = need_time("simulate")?;
                self.check_time(time)?;
                let initial = self.initial.as_ref().ok_or_else(|| {
                    Error::Config("task simulate needs an [initial] section".into())
                })?;
                initial.build(&grid)?;
            }
            Task::Aeg => {
                let time = need_time("aeg")?;
                self.check_time(time)?;
                if time.t_end <= 0.0 {
                    return Err(Error::Config("task aeg needs t_end > 0".into()));
                }
                let a = self
                    .initial_a
                    .as_ref()
                    .ok_or_else(|| Error::Config("task aeg needs an [initial_a] section".into()))?;
                let b = self
                    .initial_b
                    .as_ref()
                    .ok_or_else(|| Error::Config("task aeg needs an [initial_b] section".into()))?;
                for (name, init) in [("initial_a", a), ("initial_b", b)] {
                    let state = init.build(&grid)?;
                    if state.total_mass(&grid) <= 0.0 {
                        return Err(Error::Config(format!("{name} has zero mass")));
                    }
                }
            }
            Task::Spectral => {
                if params.beta.separable_terms().map(|t| t.len()) != Some(1) {
                    return Err(Error::Config(
                        "task spectral needs a rank-1 separable kernel \
                         (kind = \"separable\" with exactly one term)"
                            .into(),
                    ));
                }
            }
            Task::RankN => {
                if params.beta.separable_terms().is_none() {
                    return Err(Error::Config(
                        "task rank_n needs a separable kernel or an [envelope] section \
                         to bound the general kernel"
                            .into(),
                    ));
                }
            }
            Task::GeneratorEig | Task::Report => {}
        }
        Ok(())
    }

    fn check_time(&self, time: &TimeConfig) -> Result<()> {
        if !time.t_end.is_finite() || time.t_end < 0.0 {
            return Err(Error::Config(format!(
                "t_end must be nonnegative and finite, got {}",
                time.t_end
            )));
        }
        if let Some(times) = &time.output_times {
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(
                    "output_times must be strictly increasing".into(),
                ));
            }
            if times
                .iter()
                .any(|&t| !t.is_finite() || t <= 0.0 || t > time.t_end)
            {
                return Err(Error::Config(format!(
                    "output_times must lie in (0, t_end = {}]",
                    time.t_end
                )));
            }
        }
        if let Some(count) = time.output_count {
            if count == 0 {
                return Err(Error::Config("output_count must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Parse and fully validate a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("parse error: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// Render a config back to the documented schema (the round-trip partner of
/// [`parse_config`], used for tests and for echoing resolved defaults).
pub fn render_config(config: &RunConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(format!("render error: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
task = "spectral"

[grid]
m = 1.0
n_cells = 100

[model.gamma1]
form = "constant"
value = 1.0

[model.gamma2]
form = "constant"
value = 1.0

[model.mu]
form = "constant"
value = 0.5

[model.c1]
form = "constant"
value = 0.0

[model.c2]
form = "constant"
value = 0.0

[model.beta]
kind = "separable"

[[model.beta.terms]]
b1 = { form = "constant", value = 2.0 }
b2 = { form = "constant", value = 1.0 }
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.task, Task::Spectral);
        assert_eq!(cfg.tolerances.root_tol, 1e-10);
        assert_eq!(cfg.tolerances.safety, 0.9);
        let params = cfg.build_model().unwrap();
        assert_eq!(params.m, 1.0);
    }

    #[test]
    fn zero_growth_rate_rejected_with_assumption_message() {
        let text = MINIMAL.replace(
            "[model.gamma1]\nform = \"constant\"\nvalue = 1.0",
            "[model.gamma1]\nform = \"constant\"\nvalue = 0.0",
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("strictly positive"), "{err}");
    }

    #[test]
    fn tiny_grid_rejected() {
        let text = MINIMAL.replace("n_cells = 100", "n_cells = 1");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("n_cells"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(parse_config(&text).is_err());

        let text2 = MINIMAL.replace(
            "[grid]\nm = 1.0\nn_cells = 100",
            "[grid]\nm = 1.0\nn_cells = 100\nextra = 3",
        );
        assert!(parse_config(&text2).is_err());
    }

    #[test]
    fn non_finite_numbers_rejected() {
        let text = MINIMAL.replace("value = 0.5", "value = inf");
        assert!(parse_config(&text).is_err());
    }

    #[test]
    fn simulate_requires_time_and_initial() {
        let text = MINIMAL.replace("task = \"spectral\"", "task = \"simulate\"");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("[time]"), "{err}");
    }

    #[test]
    fn spectral_requires_rank1() {
        let text = format!(
            "{MINIMAL}\n[[model.beta.terms]]\nb1 = {{ form = \"constant\", value = 1.0 }}\nb2 = {{ form = \"constant\", value = 1.0 }}\n"
        );
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("rank-1"), "{err}");
    }

    #[test]
    fn output_times_resolution() {
        let t = TimeConfig {
            t_end: 10.0,
            output_times: None,
            output_count: Some(4),
        };
        assert_eq!(t.resolve_output_times(), vec![2.5, 5.0, 7.5, 10.0]);
        let t2 = TimeConfig {
            t_end: 10.0,
            output_times: Some(vec![1.0, 9.0]),
            output_count: None,
        };
        assert_eq!(t2.resolve_output_times(), vec![1.0, 9.0]);
        // the default schedule ends exactly at t_end
        let t3 = TimeConfig {
            t_end: 0.3,
            output_times: None,
            output_count: None,
        };
        let times = t3.resolve_output_times();
        assert_eq!(times.len(), 50);
        assert_eq!(*times.last().unwrap(), 0.3);
    }

    #[test]
    fn round_trip_identity() {
        let full = r#"
task = "simulate"

[grid]
m = 1.0
n_cells = 64

[model.gamma1]
form = "linear"
a = 1.0
b = 0.5

[model.gamma2]
form = "table"
knots = [0.0, 0.5, 1.0]
values = [1.0, 2.0, 1.5]

[model.mu]
form = "gaussian_bump"
center = 0.4
width = 0.1
height = 0.3

[model.c1]
form = "steps"
edges = [0.0, 0.5, 1.0]
values = [0.2, 0.6]

[model.c2]
form = "constant"
value = 0.4

[model.beta]
kind = "general"
s_knots = [0.0, 0.5, 1.0]
y_knots = [0.0, 0.5, 1.0]
values = [[0.0, 0.1, 0.2], [0.1, 0.3, 0.5], [0.2, 0.5, 1.0]]

[time]
t_end = 2.0
output_count = 5

[initial]
u1 = { form = "gaussian_bump", center = 0.25, width = 0.05, height = 1.0 }
u2 = { form = "constant", value = 0.0 }

[tolerances]
root_tol = 1e-9
safety = 0.8
power_tol = 1e-8
aeg_tol = 0.1
window_fraction = 0.3
"#;
        let cfg = parse_config(full).unwrap();
        let rendered = render_config(&cfg).unwrap();
        let reparsed = parse_config(&rendered).unwrap();
        assert_eq!(cfg, reparsed);

        let minimal = parse_config(MINIMAL).unwrap();
        let reparsed2 = parse_config(&render_config(&minimal).unwrap()).unwrap();
        assert_eq!(minimal, reparsed2);
    }
}

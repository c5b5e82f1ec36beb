//! TOML configuration: one flat section per concern, unknown keys rejected.

use std::path::Path;

use anyhow::{bail, Context};
use qadi::experiments::{PerturbMode, PerturbSpec, StudyKind};
use qadi::geometry::EllipseSpec;
use qadi::Error;
use qadi::operators::{octant_angles, DegeneracyKind, SourceModel};
use qadi::solver::{GridChoice, RunConfig};
use qadi::stepper::StepConfig;
use serde::{Deserialize, Serialize};

/// Stopping rules and run-level switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopSection {
    pub quench_eps: f64,
    pub steady_eps: f64,
    pub steady_persistence: usize,
    pub t_max: f64,
    pub max_steps: usize,
    pub seed: u64,
    pub check_monotonicity: bool,
}

impl Default for StopSection {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            quench_eps: r.quench_eps,
            steady_eps: r.steady_eps,
            steady_persistence: r.steady_persistence,
            t_max: r.t_max,
            max_steps: r.max_steps,
            seed: r.seed,
            check_monotonicity: r.check_monotonicity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbModeName {
    OnceAt,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSection {
    pub order: u32,
    pub mode: PerturbModeName,
    /// Trigger for `once_at`.
    pub threshold: f64,
    /// Per-step probability for `continuous`.
    pub probability: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for PerturbSection {
    fn default() -> Self {
        Self {
            order: 5,
            mode: PerturbModeName::OnceAt,
            threshold: 0.9,
            probability: 0.01,
            replicates: 20,
            seed: 0,
        }
    }
}

impl PerturbSection {
    pub fn spec(&self) -> PerturbSpec {
        let mode = match self.mode {
            PerturbModeName::OnceAt => PerturbMode::OnceAt { threshold: self.threshold },
            PerturbModeName::Continuous => PerturbMode::Continuous { probability: self.probability },
        };
        PerturbSpec { order: self.order, mode, replicates: self.replicates, seed: self.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalSection {
    pub ratio: f64,
    /// Critical area of the rectangle with the same ratio; looked up in the
    /// built-in table when absent.
    pub rect_critical_area: Option<f64>,
    pub tol_fraction: f64,
}

impl Default for CriticalSection {
    fn default() -> Self {
        Self { ratio: 0.5, rect_critical_area: None, tol_fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub kind: StudyKind,
    pub gamma: f64,
    pub thetas: Vec<f64>,
}

impl Default for StudySection {
    fn default() -> Self {
        Self { kind: StudyKind::Plane, gamma: 1.0, thetas: octant_angles() }
    }
}

/// Everything a subcommand may read. Defaults reproduce the 6 × 4 ellipse
/// on the uniform 101 × 102 grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub ellipse: EllipseSpec,
    pub grid: GridChoice,
    pub degeneracy: DegeneracyKind,
    pub source: SourceModel,
    pub step: StepConfig,
    pub stop: StopSection,
    pub perturb: PerturbSection,
    pub critical: CriticalSection,
    pub study: StudySection,
}

impl Default for CliConfig {
    fn default() -> Self {
        let r = RunConfig::default();
        Self {
            ellipse: r.ellipse,
            grid: r.grid,
            degeneracy: r.degeneracy,
            source: r.source,
            step: r.step,
            stop: StopSection::default(),
            perturb: PerturbSection::default(),
            critical: CriticalSection::default(),
            study: StudySection::default(),
        }
    }
}

impl CliConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("invalid config {}", p.display()))
            }
        }
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            ellipse: self.ellipse,
            grid: self.grid.clone(),
            degeneracy: self.degeneracy,
            source: self.source,
            step: self.step,
            quench_eps: self.stop.quench_eps,
            steady_eps: self.stop.steady_eps,
            steady_persistence: self.stop.steady_persistence,
            t_max: self.stop.t_max,
            max_steps: self.stop.max_steps,
            seed: self.stop.seed,
            check_monotonicity: self.stop.check_monotonicity,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.run_config().validate()?;
        self.perturb.spec().validate()?;
        if !(self.critical.ratio > 0.0 && self.critical.ratio < 1.0) {
            bail!(Error::InvalidInput(format!("critical.ratio must lie in (0, 1), got {}", self.critical.ratio)));
        }
        if !(self.critical.tol_fraction > 0.0 && self.critical.tol_fraction < 1.0) {
            bail!(Error::InvalidInput(format!(
                "critical.tol_fraction must lie in (0, 1), got {}",
                self.critical.tol_fraction
            )));
        }
        if self.study.thetas.is_empty() || !(self.study.gamma > 0.0) {
            bail!(Error::InvalidInput("study needs at least one angle and gamma > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = CliConfig::parse("").unwrap();
        assert_eq!(c, CliConfig::default());
        assert_eq!(c.run_config(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let text = r#"
[ellipse]
major = 8.0
minor = 6.0

[grid]
kind = "uniform"
n = 61
m = 62

[degeneracy]
kind = "inverse_plane"
theta_star = 0.5
gamma = 1.0

[step]
tau0 = 1e-4

[stop]
t_max = 2.0

[perturb]
mode = "continuous"
probability = 0.5
"#;
        let c = CliConfig::parse(text).unwrap();
        assert_eq!(c.ellipse.major, 8.0);
        assert_eq!(c.grid, GridChoice::Uniform { n: 61, m: 62 });
        assert_eq!(c.step.tau0, 1e-4);
        assert_eq!(c.step.tau_min, StepConfig::default().tau_min);
        assert_eq!(c.run_config().t_max, 2.0);
        assert_eq!(c.perturb.spec().mode, PerturbMode::Continuous { probability: 0.5 });
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = CliConfig::parse("[step]\ntau0 = 1e-4\ntau_max = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("tau_max"), "{err}");
        assert!(CliConfig::parse("[nope]\n").is_err());
        assert!(CliConfig::parse("[grid]\nkind = \"uniform\"\nn = 3\nm = 3\nextra = 1\n").is_err());
    }
}

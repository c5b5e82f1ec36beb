//! Bisection for the smallest quenching area at a fixed axis ratio.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{quench_area_bounds, EllipseSpec, QuenchBounds};
use crate::grid::GridFit;
use crate::solver::{run_problem, GridChoice, Outcome, Problem, RunConfig, SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeClass {
    Quenched,
    Steady,
    /// Budget ran out; treated as steady.
    Indeterminate,
    /// Below the lower bound, where quenching is impossible; not run.
    BelowBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub area: f64,
    pub class: ProbeClass,
    pub quench_time: Option<f64>,
    pub steps: usize,
    pub end_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub ratio: f64,
    pub rect_critical_area: f64,
    /// Bisection stops once the bracket is narrower than this fraction of
    /// the theoretical bracket.
    pub tol_fraction: f64,
    /// Shared by all probes; its ellipse is replaced per probe.
    pub template: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalAreaResult {
    pub schema: String,
    pub ratio: f64,
    pub bounds: QuenchBounds,
    /// Probes in the order they were run.
    pub probes: Vec<Probe>,
    /// Smallest area observed to quench.
    pub critical_area: f64,
    pub quench_time: Option<f64>,
    /// Set when the upper end of the bracket failed to quench.
    pub upper_failed: bool,
    pub grid_fit: Option<GridFit>,
    pub template: RunConfig,
}

impl CriticalAreaResult {
    pub fn within_bounds(&self) -> bool {
        self.bounds.contains(self.critical_area)
    }
}

fn ellipse_for(ratio: f64, area: f64) -> Result<EllipseSpec> {
    EllipseSpec::from_ratio_area(ratio, area)
}

/// Classify one area.
pub fn probe(template: &RunConfig, bounds: &QuenchBounds, area: f64) -> Result<Probe> {
    if area < bounds.lower {
        return Ok(Probe { area, class: ProbeClass::BelowBound, quench_time: None, steps: 0, end_time: 0.0 });
    }
    let cfg = RunConfig { ellipse: ellipse_for(bounds.ratio, area)?, ..template.clone() };
    let record = run_problem(&Problem::build(&cfg)?)?;
    let (class, quench_time) = match record.outcome {
        Outcome::Quenched { time, .. } => (ProbeClass::Quenched, Some(time)),
        Outcome::Steady { .. } => (ProbeClass::Steady, None),
        Outcome::BudgetExhausted { .. } => (ProbeClass::Indeterminate, None),
    };
    log::info!("area {area:.4}: {class:?} after {} steps", record.steps);
    Ok(Probe { area, class, quench_time, steps: record.steps, end_time: record.final_time })
}

/// Bisect on `πAB` within the theoretical bracket, starting from its upper
/// end.
///
/// The mapped grid depends only on the ratio, so an exponential grid choice
/// is fitted once at the upper bound and reused for every probe.
pub fn critical_area_search(search: &CriticalSearch) -> Result<CriticalAreaResult> {
    let bounds = quench_area_bounds(search.ratio, search.rect_critical_area)?;
    let mut template = search.template.clone();
    let mut grid_fit = None;
    if let GridChoice::Exponential { .. } = template.grid {
        let cfg = RunConfig { ellipse: ellipse_for(search.ratio, bounds.upper)?, ..template.clone() };
        let problem = Problem::build(&cfg)?;
        grid_fit = problem.grid_fit.clone();
        template.grid = GridChoice::Fixed {
            mu: problem.grid.mu.nodes().to_vec(),
            theta: problem.grid.theta.nodes().to_vec(),
        };
    }

    let mut probes = Vec::new();
    let top = probe(&template, &bounds, bounds.upper)?;
    let upper_failed = top.class != ProbeClass::Quenched;
    let (mut lo, mut hi) = (bounds.lower, bounds.upper);
    let mut best_time = top.quench_time;
    probes.push(top);
    if !upper_failed {
        let tol = search.tol_fraction * (bounds.upper - bounds.lower);
        while hi - lo >= tol {
            let mid = 0.5 * (lo + hi);
            let p = probe(&template, &bounds, mid)?;
            if p.class == ProbeClass::Quenched {
                hi = mid;
                best_time = p.quench_time;
            } else {
                lo = mid;
            }
            probes.push(p);
        }
    }
    Ok(CriticalAreaResult {
        schema: SCHEMA.into(),
        ratio: search.ratio,
        bounds,
        probes,
        critical_area: hi,
        quench_time: best_time,
        upper_failed,
        grid_fit,
        template,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rect_critical_area;
    use crate::stepper::StepConfig;

    fn template() -> RunConfig {
        RunConfig {
            grid: GridChoice::Uniform { n: 6, m: 7 },
            step: StepConfig { tau0: 1e-3, tau_min: 1e-6, ..Default::default() },
            check_monotonicity: false,
            ..RunConfig::default()
        }
    }

    #[test]
    fn below_bound_is_not_run() {
        let b = quench_area_bounds(0.5, rect_critical_area(0.5).unwrap()).unwrap();
        let p = probe(&template(), &b, 0.9 * b.lower).unwrap();
        assert_eq!(p.class, ProbeClass::BelowBound);
        assert_eq!(p.steps, 0);
    }

    #[test]
    fn coarse_search_stays_in_bracket() {
        let search = CriticalSearch {
            ratio: 0.5,
            rect_critical_area: rect_critical_area(0.5).unwrap(),
            tol_fraction: 0.25,
            template: template(),
        };
        let r = critical_area_search(&search).unwrap();
        assert!(!r.upper_failed);
        assert!(r.within_bounds());
        assert!(r.quench_time.is_some());
        assert!(r.probes.len() >= 3);
    }
}

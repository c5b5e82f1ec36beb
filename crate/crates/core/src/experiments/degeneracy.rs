//! Quench locations under a degeneracy anchored at boundary points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mean_std;
use crate::error::{Error, Result};
use crate::geometry::{derive_map, EllipseSpec};
use crate::operators::{degeneracy_anchor, DegeneracyKind};
use crate::solver::{run, GridChoice, Outcome, RunConfig, SCHEMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Plane,
    InversePlane,
}

impl StudyKind {
    pub fn field(&self, theta_star: f64, gamma: f64) -> DegeneracyKind {
        match self {
            Self::Plane => DegeneracyKind::Plane { theta_star, gamma },
            Self::InversePlane => DegeneracyKind::InversePlane { theta_star, gamma },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyStudy {
    pub ellipse: EllipseSpec,
    pub kind: StudyKind,
    pub thetas: Vec<f64>,
    pub gamma: f64,
    /// Grid, step and stopping settings; the ellipse and field are replaced.
    pub template: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyRun {
    pub theta_star: f64,
    pub anchor: (f64, f64),
    pub location: (f64, f64),
    pub node: (usize, usize),
    pub quench_time: f64,
    /// Distance from the quench location to the boundary.
    pub distance: f64,
    /// Projection of the location onto the unit vector towards the anchor.
    pub toward_anchor: f64,
    pub predicted: (f64, f64),
    pub prediction_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyStudyResult {
    pub schema: String,
    pub kind: StudyKind,
    pub runs: Vec<DegeneracyRun>,
    pub mean_distance: f64,
    pub std_distance: f64,
    pub config: DegeneracyStudy,
}

impl DegeneracyStudyResult {
    pub fn relative_spread(&self) -> f64 {
        self.std_distance / self.mean_distance
    }
}

/// Point at distance `d` inside the boundary along the inward normal at
/// `(x*, y*)`: `(x*, y*) − d (B² x*, A² y*) / √(B⁴x*² + A⁴y*²)`.
pub fn predicted_location(ellipse: EllipseSpec, anchor: (f64, f64), d: f64) -> (f64, f64) {
    let (a2, b2) = (ellipse.major * ellipse.major, ellipse.minor * ellipse.minor);
    let (nx, ny) = (b2 * anchor.0, a2 * anchor.1);
    let norm = nx.hypot(ny);
    (anchor.0 - d * nx / norm, anchor.1 - d * ny / norm)
}

/// Run the study for every `θ*`, concurrently on the current rayon pool.
///
/// The prediction for the inverse plane uses the antipodal boundary point,
/// where that field is smallest.
pub fn degeneracy_study(study: &DegeneracyStudy) -> Result<DegeneracyStudyResult> {
    let ellipse = study.ellipse;
    let map = derive_map(ellipse)?;
    let records: Vec<(f64, Outcome)> = study
        .thetas
        .par_iter()
        .map(|&theta| {
            let cfg = RunConfig {
                ellipse,
                degeneracy: study.kind.field(theta, study.gamma),
                ..study.template.clone()
            };
            run(&cfg).map(|r| (theta, r.outcome))
        })
        .collect::<Result<_>>()?;

    let mut partial = Vec::with_capacity(records.len());
    for (theta, outcome) in records {
        let Outcome::Quenched { time, location, node, .. } = outcome else {
            return Err(Error::NotQuenched(format!(
                "theta*={theta:.6} did not quench ({outcome:?}); enlarge the domain or the budget"
            )));
        };
        let anchor = degeneracy_anchor(&map, theta);
        let norm = anchor.0.hypot(anchor.1);
        partial.push((theta, anchor, location, node, time, (location.0 * anchor.0 + location.1 * anchor.1) / norm));
    }
    let distances: Vec<f64> = partial
        .iter()
        .map(|p| ellipse.boundary_distance(p.2 .0, p.2 .1))
        .collect();
    let (mean, std) = mean_std(&distances);
    let runs = partial
        .into_iter()
        .zip(distances)
        .map(|((theta, anchor, location, node, time, toward), distance)| {
            let target = match study.kind {
                StudyKind::Plane => anchor,
                StudyKind::InversePlane => (-anchor.0, -anchor.1),
            };
            let predicted = predicted_location(ellipse, target, mean);
            DegeneracyRun {
                theta_star: theta,
                anchor,
                location,
                node,
                quench_time: time,
                distance,
                toward_anchor: toward,
                predicted,
                prediction_error: (predicted.0 - location.0).hypot(predicted.1 - location.1),
            }
        })
        .collect();
    Ok(DegeneracyStudyResult {
        schema: SCHEMA.into(),
        kind: study.kind,
        runs,
        mean_distance: mean,
        std_distance: std,
        config: study.clone(),
    })
}

/// Uniform-grid template used by the study defaults.
pub fn study_template(n: usize, m: usize) -> RunConfig {
    RunConfig {
        grid: GridChoice::Uniform { n, m },
        check_monotonicity: false,
        ..RunConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_on_axes() {
        let e = EllipseSpec { major: 8.0, minor: 6.0 };
        let (x, y) = predicted_location(e, (8.0, 0.0), 2.0);
        assert!((x - 6.0).abs() < 1e-12 && y.abs() < 1e-12);
        let (x, y) = predicted_location(e, (0.0, -6.0), 1.5);
        assert!(x.abs() < 1e-12 && (y + 4.5).abs() < 1e-12);
    }

    #[test]
    fn prediction_follows_the_normal() {
        let e = EllipseSpec { major: 8.0, minor: 6.0 };
        let t = 0.7f64;
        let anchor = e.boundary_point(t);
        let n = e.outward_normal(t);
        let (x, y) = predicted_location(e, anchor, 0.5);
        assert!((x - (anchor.0 - 0.5 * n.0)).abs() < 1e-12);
        assert!((y - (anchor.1 - 0.5 * n.1)).abs() < 1e-12);
    }

    #[test]
    fn small_domain_is_reported() {
        let study = DegeneracyStudy {
            ellipse: EllipseSpec { major: 1.0, minor: 0.6 },
            kind: StudyKind::Plane,
            thetas: vec![0.0],
            gamma: 1.0,
            template: RunConfig {
                step: crate::stepper::StepConfig { tau0: 1e-3, tau_min: 1e-6, ..Default::default() },
                t_max: 20.0,
                ..study_template(5, 7)
            },
        };
        assert!(matches!(degeneracy_study(&study), Err(Error::NotQuenched(_))));
    }
}

//! Drivers for the perturbation, critical-area and degeneracy studies.

pub mod critical;
pub mod degeneracy;
pub mod montecarlo;

pub use critical::{critical_area_search, CriticalAreaResult, CriticalSearch, Probe, ProbeClass};
pub use degeneracy::{degeneracy_study, DegeneracyRun, DegeneracyStudy, DegeneracyStudyResult, StudyKind};
pub use montecarlo::{monte_carlo, PerturbMode, PerturbSpec, PerturbStats, ReplicateResult};

/// Locations equal up to reflection in either axis, to `tol`.
///
/// The symmetric problems have tied maxima at mirror-image nodes, and which
/// of them wins the arg-max is decided by roundoff.
pub fn same_location_orbit(a: (f64, f64), b: (f64, f64), tol: f64) -> bool {
    (a.0.abs() - b.0.abs()).abs() <= tol && (a.1.abs() - b.1.abs()).abs() <= tol
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_matching() {
        assert!(same_location_orbit((0.1, -0.2), (-0.1, 0.2), 1e-12));
        assert!(!same_location_orbit((0.1, 0.2), (0.2, 0.1), 1e-12));
    }

    #[test]
    fn population_statistics() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}

//! Elliptical domains and the elliptical coordinate transform
//!
//! The physical domain `x²/A² + y²/B² < 1` is mapped onto the rectangle
//! `(μ, θ) ∈ [0, 𝕄] × [0, 2π)` through
//!
//! ```text
//! x = a cosh μ cos θ,    y = a sinh μ sin θ,
//! ```
//!
//! with focal distance `a = √(A² − B²)` and `tanh 𝕄 = B/A`. The Laplacian
//! transforms into `φ (u_μμ + u_θθ)` with `φ = 1 / (a² (sinh² μ + sin² θ))`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this value of `sinh²μ + sin²θ` the Jacobian is treated as singular
/// (points within about `1e-12` of a focus in the coordinate plane).
pub const FOCAL_THRESHOLD: f64 = 1e-24;

/// Critical quenching areas of rectangles with side ratio `B/A`, for
/// `f(u) = 1/(1-u)`. These are literature constants, not recomputed here.
pub const RECT_CRITICAL_AREAS: [(f64, f64); 7] = [
    (0.125, 18.8054),
    (0.250, 9.6722),
    (0.375, 6.8501),
    (0.500, 5.5986),
    (0.625, 4.9679),
    (0.750, 4.6453),
    (0.875, 4.4964),
];

/// Semi-axes of an ellipse centred at the origin, major axis along `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipseSpec {
    pub major: f64,
    pub minor: f64,
}

impl EllipseSpec {
    pub fn new(major: f64, minor: f64) -> Result<Self> {
        let spec = Self { major, minor };
        spec.validate()?;
        Ok(spec)
    }

    /// Ellipse with the given axis ratio `B/A` and area `πAB`.
    pub fn from_ratio_area(ratio: f64, area: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) || !(area > 0.0) {
            return Err(Error::InvalidInput(format!(
                "ratio must lie in (0,1) and area must be positive (ratio={ratio}, area={area})"
            )));
        }
        let major = (area / (PI * ratio)).sqrt();
        Self::new(major, ratio * major)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.major.is_finite() && self.minor.is_finite())
            || self.minor <= 0.0
            || self.major <= self.minor
        {
            return Err(Error::DegenerateEllipse {
                major: self.major,
                minor: self.minor,
            });
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        PI * self.major * self.minor
    }

    pub fn ratio(&self) -> f64 {
        self.minor / self.major
    }

    /// Same shape, area multiplied by `factor`.
    pub fn scaled_area(&self, factor: f64) -> Result<Self> {
        let k = factor.sqrt();
        Self::new(self.major * k, self.minor * k)
    }

    /// `x²/A² + y²/B²`; below one inside the domain.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        (x / self.major).powi(2) + (y / self.minor).powi(2)
    }

    /// Boundary point at parametric angle `t`.
    pub fn boundary_point(&self, t: f64) -> (f64, f64) {
        (self.major * t.cos(), self.minor * t.sin())
    }

    /// Unit outward normal at the boundary point with parametric angle `t`.
    pub fn outward_normal(&self, t: f64) -> (f64, f64) {
        let (x, y) = self.boundary_point(t);
        let nx = x / (self.major * self.major);
        let ny = y / (self.minor * self.minor);
        let norm = nx.hypot(ny);
        (nx / norm, ny / norm)
    }

    /// Euclidean distance from `(x, y)` to the boundary curve.
    pub fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        let dist2 = |t: f64| {
            let (bx, by) = self.boundary_point(t);
            (bx - x).powi(2) + (by - y).powi(2)
        };
        // coarse scan, then golden-section refinement around the best sample
        let samples = 720;
        let h = TAU / samples as f64;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for k in 0..samples {
            let t = k as f64 * h;
            let d = dist2(t);
            if d < best {
                best = d;
                best_t = t;
            }
        }
        let (mut lo, mut hi) = (best_t - h, best_t + h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let (mut fc, mut fd) = (dist2(c), dist2(d));
        for _ in 0..100 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = dist2(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = dist2(d);
            }
        }
        best.min(fc).min(fd).sqrt()
    }
}

/// Parameters of the elliptical coordinate transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticalMap {
    /// Focal distance `a`.
    pub focal: f64,
    /// Coordinate bound `𝕄` of the boundary curve.
    pub mu_max: f64,
}

/// Solve `A = a cosh 𝕄`, `B = a sinh 𝕄` for `(a, 𝕄)`.
pub fn derive_map(spec: EllipseSpec) -> Result<EllipticalMap> {
    spec.validate()?;
    let focal = ((spec.major - spec.minor) * (spec.major + spec.minor)).sqrt();
    let mu_max = (spec.minor / spec.major).atanh();
    Ok(EllipticalMap { focal, mu_max })
}

impl EllipticalMap {
    pub fn to_cartesian(&self, mu: f64, theta: f64) -> (f64, f64) {
        (
            self.focal * mu.cosh() * theta.cos(),
            self.focal * mu.sinh() * theta.sin(),
        )
    }

    /// `φ(μ, θ) = 1 / (a² (sinh²μ + sin²θ))`.
    pub fn jacobian(&self, mu: f64, theta: f64) -> Result<f64> {
        let den = mu.sinh().powi(2) + theta.sin().powi(2);
        if den < FOCAL_THRESHOLD {
            return Err(Error::FocalSingularity { mu, theta });
        }
        Ok(1.0 / (self.focal * self.focal * den))
    }

    pub fn ellipse(&self) -> EllipseSpec {
        EllipseSpec {
            major: self.focal * self.mu_max.cosh(),
            minor: self.focal * self.mu_max.sinh(),
        }
    }
}

/// Critical-area bracket for an ellipse of ratio `B/A`, derived from the
/// critical area `R_c` of a rectangle with the same side ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchBounds {
    pub ratio: f64,
    pub rect_critical_area: f64,
    /// Below this area `πAB` the ellipse sits inside a non-quenching rectangle.
    pub lower: f64,
    /// Above this area `πAB` the ellipse contains a quenching rectangle.
    pub upper: f64,
}

impl QuenchBounds {
    /// Bounds on the product `AB`.
    pub fn product_bounds(&self) -> (f64, f64) {
        (self.lower / PI, self.upper / PI)
    }

    pub fn contains(&self, area: f64) -> bool {
        area >= self.lower && area <= self.upper
    }
}

/// Circumscribed rectangle `4AB` gives the lower bound, the maximal inscribed
/// rectangle `2AB` gives the upper bound.
pub fn quench_area_bounds(ratio: f64, rect_critical_area: f64) -> Result<QuenchBounds> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidInput(format!("ratio {ratio} outside (0, 1]")));
    }
    if !(rect_critical_area > 0.0 && rect_critical_area.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "rectangular critical area must be positive, got {rect_critical_area}"
        )));
    }
    Ok(QuenchBounds {
        ratio,
        rect_critical_area,
        lower: PI * rect_critical_area / 4.0,
        upper: PI * rect_critical_area / 2.0,
    })
}

/// Bounds for every tabulated ratio.
pub fn bounds_table() -> Vec<QuenchBounds> {
    RECT_CRITICAL_AREAS
        .iter()
        .map(|&(r, rc)| quench_area_bounds(r, rc).expect("tabulated values are valid"))
        .collect()
}

/// Tabulated rectangular critical area for `ratio`, if present.
pub fn rect_critical_area(ratio: f64) -> Option<f64> {
    RECT_CRITICAL_AREAS
        .iter()
        .find(|(r, _)| (r - ratio).abs() < 1e-9)
        .map(|&(_, rc)| rc)
}

/// Tabulated entry whose ratio is closest to `ratio`.
pub fn nearest_tabulated(ratio: f64) -> (f64, f64) {
    *RECT_CRITICAL_AREAS
        .iter()
        .min_by(|a, b| (a.0 - ratio).abs().total_cmp(&(b.0 - ratio).abs()))
        .expect("table is nonempty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn map_for_six_by_four() {
        let map = derive_map(EllipseSpec::new(6.0, 4.0).unwrap()).unwrap();
        assert_relative_eq!(map.focal, 4.47214, epsilon = 1e-5);
        assert_relative_eq!(map.mu_max, 0.80472, epsilon = 1e-5);
        assert_relative_eq!(map.focal * map.mu_max.cosh(), 6.0, max_relative = 1e-12);
        assert_relative_eq!(map.focal * map.mu_max.sinh(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn map_for_eight_by_six() {
        let map = derive_map(EllipseSpec::new(8.0, 6.0).unwrap()).unwrap();
        assert_relative_eq!(map.focal, 5.29150, epsilon = 1e-5);
        assert_relative_eq!(map.mu_max, 0.97296, epsilon = 1e-5);
        let e = map.ellipse();
        assert_relative_eq!(e.major, 8.0, max_relative = 1e-12);
        assert_relative_eq!(e.minor, 6.0, max_relative = 1e-12);
    }

    #[test]
    fn circle_is_rejected() {
        assert!(matches!(
            derive_map(EllipseSpec { major: 1.0, minor: 1.0 }),
            Err(Error::DegenerateEllipse { .. })
        ));
        assert!(EllipseSpec::new(1.0, 2.0).is_err());
        assert!(EllipseSpec::new(1.0, 0.0).is_err());
    }

    #[test]
    fn cartesian_examples() {
        let map = derive_map(EllipseSpec::new(6.0, 4.0).unwrap()).unwrap();
        let (x, y) = map.to_cartesian(map.mu_max, 0.0);
        assert_relative_eq!(x, 6.0, max_relative = 1e-12);
        assert_eq!(y, 0.0);
        let (x, y) = map.to_cartesian(0.0, PI / 2.0);
        assert!(x.abs() < 1e-15 && y == 0.0);

        // inverse map: for a point with μ > 0, the confocal ellipse through
        // (x, y) has semi-axes a cosh μ and a sinh μ, so
        // cosh μ = (r1 + r2) / (2a) with r1, r2 the focal distances.
        let (mu, theta) = (0.40236, PI / 4.0);
        let (x, y) = map.to_cartesian(mu, theta);
        assert_relative_eq!(x, 3.42173, epsilon = 1e-5);
        assert_relative_eq!(y, 1.30698, epsilon = 1e-5);
        let a = map.focal;
        let r1 = ((x - a).powi(2) + y * y).sqrt();
        let r2 = ((x + a).powi(2) + y * y).sqrt();
        let mu_back = ((r1 + r2) / (2.0 * a)).acosh();
        assert_relative_eq!(mu_back, mu, max_relative = 1e-10);
        let theta_back = (x / (a * mu_back.cosh())).acos();
        assert_relative_eq!(theta_back, theta, max_relative = 1e-10);
    }

    #[test]
    fn jacobian_examples() {
        let unit = EllipticalMap { focal: 1.0, mu_max: 1.0 };
        assert_relative_eq!(unit.jacobian(0.0, PI / 2.0).unwrap(), 1.0);
        let two = EllipticalMap { focal: 2.0, mu_max: 1.0 };
        assert_relative_eq!(two.jacobian(0.0, PI / 2.0).unwrap(), 0.25);
        assert!(matches!(
            unit.jacobian(0.0, 0.0),
            Err(Error::FocalSingularity { .. })
        ));
        assert!(unit.jacobian(0.0, PI).is_err());
    }

    #[test]
    fn table_bounds_reproduce() {
        let expected = [
            (14.7697, 29.5395),
            (7.5965, 15.1931),
            (5.3801, 10.7601),
            (4.3971, 8.7943),
            (3.9018, 7.8036),
            (3.6484, 7.2968),
            (3.5315, 7.0629),
        ];
        for (b, (lo, hi)) in bounds_table().iter().zip(expected) {
            assert!((b.lower - lo).abs() < 5e-5, "{b:?}");
            assert!((b.upper - hi).abs() < 5e-5, "{b:?}");
            assert!(b.lower < b.upper);
        }
        let b = quench_area_bounds(0.5, 5.5986).unwrap();
        let (plo, phi) = b.product_bounds();
        assert!((plo - 1.3997).abs() < 5e-5 && (phi - 2.7993).abs() < 5e-5);
    }

    #[test]
    fn bounds_reject_bad_input() {
        assert!(quench_area_bounds(0.0, 1.0).is_err());
        assert!(quench_area_bounds(1.5, 1.0).is_err());
        assert!(quench_area_bounds(0.5, 0.0).is_err());
        assert!(quench_area_bounds(0.5, -2.0).is_err());
    }

    #[test]
    fn boundary_distance_on_axes() {
        let e = EllipseSpec::new(8.0, 6.0).unwrap();
        assert_relative_eq!(e.boundary_distance(0.0, 0.0), 6.0, max_relative = 1e-9);
        assert_relative_eq!(e.boundary_distance(7.0, 0.0), 1.0, max_relative = 1e-9);
        assert_relative_eq!(e.boundary_distance(0.0, -5.5), 0.5, max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn mirror_symmetry(mu in -1.0f64..1.0, theta in 0.0f64..TAU) {
            let map = derive_map(EllipseSpec::new(6.0, 4.0).unwrap()).unwrap();
            let (x1, y1) = map.to_cartesian(mu, theta);
            let (x2, y2) = map.to_cartesian(-mu, TAU - theta);
            prop_assert!((x1 - x2).abs() <= 1e-14 * x1.abs().max(1.0));
            prop_assert!((y1 - y2).abs() <= 1e-14 * y1.abs().max(1.0));
        }

        #[test]
        fn image_stays_inside(s in 0.0f64..=1.0, theta in 0.0f64..TAU, b in 0.1f64..0.95) {
            let spec = EllipseSpec::new(1.0, b).unwrap();
            let map = derive_map(spec).unwrap();
            let (x, y) = map.to_cartesian(s * map.mu_max, theta);
            prop_assert!(spec.level(x, y) <= 1.0 + 1e-12);
        }

        #[test]
        fn jacobian_scaling(k in 0.1f64..10.0, mu in 0.01f64..1.0, theta in 0.0f64..TAU) {
            let m1 = EllipticalMap { focal: 1.3, mu_max: 1.0 };
            let mk = EllipticalMap { focal: 1.3 * k, mu_max: 1.0 };
            let lhs = mk.jacobian(mu, theta).unwrap();
            let rhs = m1.jacobian(mu, theta).unwrap() / (k * k);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
    }
}

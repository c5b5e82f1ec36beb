//! Tensor grids in elliptical coordinates
//!
//! The μ axis carries nodes `μ_0 < μ_1 < … < μ_{N+1} = 𝕄` with the ghost node
//! `μ_0 = −Δμ_0/2`, so the wall `μ = 0` sits midway between `μ_0` and `μ_1`
//! and no interior node lands on the focal segment. The θ axis carries
//! `0 = θ_0 < … < θ_{M+1} = 2π` and is always mirror symmetric about `π`
//! (`θ_{M+1−j} = 2π − θ_j`), which the `μ = 0` reflection condition needs.
//!
//! Interior unknowns `(i, j)`, `i = 1..=N`, `j = 0..=M`, are stored θ-block
//! major: `index = j·N + (i − 1)`.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::EllipticalMap;

const NODE_TOL: f64 = 1e-12;
/// Samples of `|u_t|` are floored here before taking logarithms.
const LOG_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisGrid {
    nodes: Vec<f64>,
}

impl AxisGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidInput("an axis needs at least two nodes".into()));
        }
        if let Some(k) = nodes
            .windows(2)
            .position(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "axis nodes must be finite and strictly increasing (at index {k})"
            )));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Δ_k = node_{k+1} − node_k`.
    pub fn spacing(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorGrid {
    pub mu: AxisGrid,
    pub theta: AxisGrid,
}

impl TensorGrid {
    pub fn new(mu: AxisGrid, theta: AxisGrid) -> Result<Self> {
        let grid = Self { mu, theta };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.n(), self.m());
        if self.mu.len() < 4 || self.theta.len() < 5 {
            return Err(Error::InvalidInput(format!(
                "grid needs N >= 2 and M >= 3 (got N={n}, M={m})"
            )));
        }
        let mu = self.mu.nodes();
        if (mu[0] + 0.5 * (mu[1] - mu[0])).abs() > NODE_TOL * mu[mu.len() - 1] {
            return Err(Error::InvalidInput(format!(
                "ghost node must satisfy mu_0 = -dmu_0/2 (mu_0={}, mu_1={})",
                mu[0], mu[1]
            )));
        }
        let th = self.theta.nodes();
        if th[0] != 0.0 || (th[m + 1] - TAU).abs() > NODE_TOL {
            return Err(Error::InvalidInput("theta axis must span [0, 2pi]".into()));
        }
        for j in 0..=m + 1 {
            if (th[m + 1 - j] - (TAU - th[j])).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "theta axis must be mirror symmetric about pi (node {j})"
                )));
            }
        }
        Ok(())
    }

    /// Number of interior μ nodes.
    pub fn n(&self) -> usize {
        self.mu.len() - 2
    }

    /// Index of the last θ unknown (`M + 1` θ lines are unknown).
    pub fn m(&self) -> usize {
        self.theta.len() - 2
    }

    pub fn unknowns(&self) -> usize {
        self.n() * (self.m() + 1)
    }

    pub fn mu_max(&self) -> f64 {
        self.mu.nodes()[self.mu.len() - 1]
    }

    /// Flat index of interior node `(i, j)`, `i` in `1..=N`.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n() + (i - 1)
    }

    /// Inverse of [`TensorGrid::index`].
    #[inline]
    pub fn node_of(&self, k: usize) -> (usize, usize) {
        let n = self.n();
        (k % n + 1, k / n)
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (self.mu.nodes()[i], self.theta.nodes()[j])
    }

    /// Partner θ line in the `μ = 0` reflection: `M + 1 − j`, wrapping `M + 1` to `0`.
    #[inline]
    pub fn mirror_line(&self, j: usize) -> usize {
        (self.m() + 1 - j) % (self.m() + 1)
    }

    /// Minimum of `sinh²μ_i + sin²θ_j` over interior nodes.
    pub fn min_focal_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for &mu in &self.mu.nodes()[1..=self.n()] {
            for &th in &self.theta.nodes()[..=self.m()] {
                best = best.min(mu.sinh().powi(2) + th.sin().powi(2));
            }
        }
        best
    }

    /// Write `mu.csv` and `theta.csv` into `dir`.
    pub fn save_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, axis) in [("mu", &self.mu), ("theta", &self.theta)] {
            let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv")))?;
            w.write_record(["index", name])?;
            for (k, v) in axis.nodes().iter().enumerate() {
                w.write_record([k.to_string(), v.to_string()])?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn load_csv(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<AxisGrid> {
            let mut r = csv::Reader::from_path(dir.join(format!("{name}.csv")))?;
            let mut nodes = Vec::new();
            for (k, rec) in r.records().enumerate() {
                let rec = rec?;
                let idx: usize = rec
                    .get(0)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("{name}.csv row {k}: bad index")))?;
                if idx != k {
                    return Err(Error::InvalidInput(format!(
                        "{name}.csv row {k}: index {idx} out of order"
                    )));
                }
                let v: f64 = rec
                    .get(1)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("{name}.csv row {k}: bad value")))?;
                nodes.push(v);
            }
            AxisGrid::new(nodes)
        };
        Self::new(read("mu")?, read("theta")?)
    }
}

/// Uniform grid: `Δμ = 𝕄/(N + ½)`, `Δθ = 2π/(M + 1)`.
pub fn uniform_grid(n: usize, m: usize, map: &EllipticalMap) -> Result<TensorGrid> {
    if n < 2 || m < 3 {
        return Err(Error::InvalidInput(format!(
            "uniform grid needs N >= 2 and M >= 3 (got N={n}, M={m})"
        )));
    }
    let dmu = map.mu_max / (n as f64 + 0.5);
    let mut mu: Vec<f64> = (0..=n + 1).map(|i| (i as f64 - 0.5) * dmu).collect();
    mu[n + 1] = map.mu_max;
    let dth = TAU / (m as f64 + 1.0);
    let mut theta: Vec<f64> = (0..=m + 1).map(|j| j as f64 * dth).collect();
    theta[m + 1] = TAU;
    // exact mirror pairs
    for j in (m + 1) / 2 + 1..=m {
        theta[j] = TAU - theta[m + 1 - j];
    }
    TensorGrid::new(AxisGrid::new(mu)?, AxisGrid::new(theta)?)
}

/// Least-squares fit `ln y ≈ c0 + c1·x`; returns `(c0, c1)`.
fn log_linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let ls: Vec<f64> = ys.iter().map(|y| y.max(LOG_FLOOR).ln()).collect();
    let xm = xs.iter().sum::<f64>() / n;
    let lm = ls.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxl: f64 = xs.iter().zip(&ls).map(|(x, l)| (x - xm) * (l - lm)).sum();
    let slope = sxl / sxx;
    (lm - slope * xm, slope)
}

/// `g(μ) = α e^{βμ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSidedExp {
    pub alpha: f64,
    pub beta: f64,
}

impl OneSidedExp {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let (c0, c1) = log_linear_fit(xs, ys);
        if !c0.is_finite() || !c1.is_finite() {
            return Err(Error::DegenerateFit(format!(
                "one-sided exponential fit gave alpha=exp({c0}), beta={c1}"
            )));
        }
        Ok(Self { alpha: c0.exp(), beta: c1 })
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.alpha * self.beta * (self.beta * x).exp()
    }
}

/// `h(θ) = α e^{−β|θ − θ_peak|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSidedExp {
    pub alpha: f64,
    pub beta: f64,
    pub peak: f64,
}

impl TwoSidedExp {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let k = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .ok_or_else(|| Error::DegenerateFit("no samples".into()))?;
        let peak = xs[k];
        let dist: Vec<f64> = xs.iter().map(|x| (x - peak).abs()).collect();
        let (c0, c1) = log_linear_fit(&dist, ys);
        if !c0.is_finite() || !c1.is_finite() {
            return Err(Error::DegenerateFit(format!(
                "two-sided exponential fit gave alpha=exp({c0}), beta={}",
                -c1
            )));
        }
        Ok(Self { alpha: c0.exp(), beta: -c1, peak })
    }

    pub fn slope(&self, x: f64) -> f64 {
        let d = x - self.peak;
        -self.alpha * self.beta * d.signum() * (-self.beta * d.abs()).exp()
    }
}

// 5-point Gauss–Legendre on [-1, 1]
const GL_X: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_W: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

fn gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    GL_X.iter().zip(GL_W).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

/// Cumulative arc length `s(x) = ∫ √(1 + g'(t)²) dt` of a curve on `[lo, hi]`,
/// tabulated with composite Gauss–Legendre and inverted by safeguarded Newton.
struct ArcLength<'a> {
    speed: Box<dyn Fn(f64) -> f64 + 'a>,
    edges: Vec<f64>,
    cumulative: Vec<f64>,
}

impl<'a> ArcLength<'a> {
    fn new(slope: impl Fn(f64) -> f64 + 'a, lo: f64, hi: f64, breaks: &[f64], panels: usize) -> Self {
        let speed: Box<dyn Fn(f64) -> f64 + 'a> = Box::new(move |x| slope(x).hypot(1.0));
        let mut cuts = vec![lo, hi];
        cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
        cuts.sort_by(f64::total_cmp);
        let mut edges = vec![lo];
        for w in cuts.windows(2) {
            let k = ((panels as f64) * (w[1] - w[0]) / (hi - lo)).ceil().max(1.0) as usize;
            for p in 1..=k {
                edges.push(w[0] + (w[1] - w[0]) * p as f64 / k as f64);
            }
        }
        let last = edges.len() - 1;
        edges[last] = hi;
        let mut cumulative = vec![0.0];
        for w in edges.windows(2) {
            let prev = cumulative[cumulative.len() - 1];
            cumulative.push(prev + gauss(&*speed, w[0], w[1]));
        }
        Self { speed, edges, cumulative }
    }

    fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    fn at(&self, x: f64) -> f64 {
        let p = match self.edges.binary_search_by(|e| e.total_cmp(&x)) {
            Ok(p) => return self.cumulative[p],
            Err(p) => p.saturating_sub(1).min(self.edges.len() - 2),
        };
        self.cumulative[p] + gauss(&*self.speed, self.edges[p], x)
    }

    fn invert(&self, target: f64) -> f64 {
        let p = match self
            .cumulative
            .binary_search_by(|c| c.total_cmp(&target))
        {
            Ok(p) => return self.edges[p],
            Err(p) => p.saturating_sub(1).min(self.edges.len() - 2),
        };
        let (mut lo, mut hi) = (self.edges[p], self.edges[p + 1]);
        let mut x = lo + (hi - lo) * (target - self.cumulative[p])
            / (self.cumulative[p + 1] - self.cumulative[p]);
        for _ in 0..100 {
            let r = self.at(x) - target;
            if r.abs() <= 1e-15 * self.total().max(1.0) {
                break;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let newton = x - r / (self.speed)(x);
            x = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-16 * hi.abs().max(1.0) {
                break;
            }
        }
        x
    }
}

/// Fitted exponential models behind an exponential grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFit {
    pub mu_fit: Option<OneSidedExp>,
    pub theta_fit: Option<TwoSidedExp>,
    /// Set when a fit was degenerate and the axis fell back to uniform spacing.
    pub fell_back: bool,
    pub warnings: Vec<String>,
}

/// Panels per output interval used for the arc-length tables.
const PANELS_PER_INTERVAL: usize = 64;

/// μ nodes equidistributing the arc length of `fit` on `[0, 𝕄]`, with the
/// half-cell offset that produces `μ_0 = −Δμ_0/2`.
pub fn equidistribute_mu(fit: &OneSidedExp, n: usize, mu_max: f64) -> Vec<f64> {
    let f = *fit;
    let arc = ArcLength::new(move |x| f.slope(x), 0.0, mu_max, &[], PANELS_PER_INTERVAL * (n + 1));
    let total = arc.total();
    let cells = n as f64 + 0.5;
    let mut mu = vec![0.0; n + 2];
    for (i, slot) in mu.iter_mut().enumerate().take(n + 1).skip(1) {
        *slot = arc.invert(total * (i as f64 - 0.5) / cells);
    }
    mu[n + 1] = mu_max;
    mu[0] = -mu[1];
    mu
}

/// θ nodes on `[0, 2π]`: arc length of `fit` equidistributed over `[0, π]`
/// into `(M+1)/2` cells, mirrored onto `[π, 2π]`.
pub fn equidistribute_theta(fit: &TwoSidedExp, m: usize) -> Result<Vec<f64>> {
    if m % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "mirrored theta grids need an even number of intervals (M odd), got M={m}"
        )));
    }
    let half = (m + 1) / 2;
    let f = *fit;
    let arc = ArcLength::new(move |x| f.slope(x), 0.0, PI, &[fit.peak], PANELS_PER_INTERVAL * half);
    let total = arc.total();
    let mut theta = vec![0.0; m + 2];
    for (j, slot) in theta.iter_mut().enumerate().take(half).skip(1) {
        *slot = arc.invert(total * j as f64 / half as f64);
    }
    theta[half] = PI;
    for j in half + 1..=m + 1 {
        theta[j] = TAU - theta[m + 1 - j];
    }
    theta[m + 1] = TAU;
    Ok(theta)
}

/// Samples of `|field|` along `θ = π/2` (linear interpolation between the
/// bracketing θ lines) at the interior μ nodes of `grid`.
fn sample_mu_line(grid: &TensorGrid, field: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let th = grid.theta.nodes();
    let target = PI / 2.0;
    let j = th.partition_point(|&t| t <= target).saturating_sub(1).min(grid.m());
    let j1 = j + 1;
    let w = (target - th[j]) / (th[j1] - th[j]);
    let j1 = j1 % (grid.m() + 1);
    let mut xs = Vec::with_capacity(grid.n());
    let mut ys = Vec::with_capacity(grid.n());
    for i in 1..=grid.n() {
        let a = field[grid.index(i, j)].abs();
        let b = field[grid.index(i, j1)].abs();
        xs.push(grid.mu.nodes()[i]);
        ys.push((1.0 - w) * a + w * b);
    }
    (xs, ys)
}

/// Samples of `|field|` along the first μ line (`i = 1`) for `θ ∈ [0, π]`.
fn sample_theta_line(grid: &TensorGrid, field: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let th = grid.theta.nodes();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (j, &t) in th.iter().enumerate().take(grid.m() + 1) {
        if t <= PI + 1e-12 {
            xs.push(t);
            ys.push(field[grid.index(1, j)].abs());
        }
    }
    (xs, ys)
}

/// Exponentially fitted grid from a reference `|u_t|` field on `reference`.
///
/// Falls back to uniform spacing on an axis whose fit is degenerate; the
/// returned [`GridFit`] records this.
pub fn exponential_grid(
    reference: &TensorGrid,
    reference_dudt: &[f64],
    n: usize,
    m: usize,
    map: &EllipticalMap,
) -> Result<(TensorGrid, GridFit)> {
    if reference_dudt.len() != reference.unknowns() {
        return Err(Error::DimensionMismatch(format!(
            "reference field has {} values, grid has {} unknowns",
            reference_dudt.len(),
            reference.unknowns()
        )));
    }
    if reference_dudt.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("reference field is not finite".into()));
    }
    if !reference_dudt.iter().any(|v| v.abs() > 0.0) {
        return Err(Error::InvalidInput("reference field is identically zero".into()));
    }
    if (reference.mu_max() - map.mu_max).abs() > 1e-9 * map.mu_max {
        return Err(Error::DimensionMismatch(
            "reference grid and target map have different mu ranges".into(),
        ));
    }
    let uniform = uniform_grid(n, m, map)?;
    let mut fit = GridFit {
        mu_fit: None,
        theta_fit: None,
        fell_back: false,
        warnings: Vec::new(),
    };

    let (xs, ys) = sample_mu_line(reference, reference_dudt);
    let mu = match OneSidedExp::fit(&xs, &ys) {
        Ok(f) => {
            fit.mu_fit = Some(f);
            equidistribute_mu(&f, n, map.mu_max)
        }
        Err(e) => {
            fit.fell_back = true;
            fit.warnings.push(format!("mu axis: {e}; using uniform spacing"));
            uniform.mu.nodes().to_vec()
        }
    };

    let (xs, ys) = sample_theta_line(reference, reference_dudt);
    let theta = match TwoSidedExp::fit(&xs, &ys) {
        Ok(f) => {
            fit.theta_fit = Some(f);
            equidistribute_theta(&f, m)?
        }
        Err(e) => {
            fit.fell_back = true;
            fit.warnings.push(format!("theta axis: {e}; using uniform spacing"));
            uniform.theta.nodes().to_vec()
        }
    };
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    Ok((TensorGrid::new(AxisGrid::new(mu)?, AxisGrid::new(theta)?)?, fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSmoothness {
    /// Largest `Δ_k · K` over the `K` intervals: the logical-map slope.
    pub max_first_derivative: f64,
    /// Largest `|Δ_k − Δ_{k−1}|`: the logical-map second difference.
    pub max_second_difference: f64,
    /// Largest `|Δ_k / Δ_{k−1} − 1|`.
    pub max_ratio_deviation: f64,
}

/// Smoothness of the logical→physical maps `p: μ̂ ↦ μ` and `q: θ̂ ↦ θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappingReport {
    pub mu: AxisSmoothness,
    pub theta: AxisSmoothness,
}

pub fn axis_smoothness(axis: &AxisGrid) -> AxisSmoothness {
    let d = axis.spacings();
    let k = d.len() as f64;
    let max_first_derivative = d.iter().fold(0.0f64, |a, &x| a.max(x * k));
    let (mut second, mut ratio) = (0.0f64, 0.0f64);
    for w in d.windows(2) {
        second = second.max((w[1] - w[0]).abs());
        ratio = ratio.max((w[1] / w[0] - 1.0).abs());
    }
    AxisSmoothness {
        max_first_derivative,
        max_second_difference: second,
        max_ratio_deviation: ratio,
    }
}

pub fn mapping_smoothness(grid: &TensorGrid) -> MappingReport {
    MappingReport {
        mu: axis_smoothness(&grid.mu),
        theta: axis_smoothness(&grid.theta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{derive_map, EllipseSpec};

    fn map64() -> EllipticalMap {
        derive_map(EllipseSpec::new(6.0, 4.0).unwrap()).unwrap()
    }

    #[test]
    fn small_uniform_grid() {
        let map = EllipticalMap { focal: 1.0, mu_max: 1.0 };
        let g = uniform_grid(2, 3, &map).unwrap();
        let expect = [-0.2, 0.2, 0.6, 1.0];
        for (a, b) in g.mu.nodes().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        for d in g.mu.spacings() {
            assert!((d - 0.4).abs() < 1e-15);
        }
        assert_eq!(g.theta.len(), 5);
        assert_eq!(g.unknowns(), 8);
    }

    #[test]
    fn experiment_one_grid_signature() {
        let g = uniform_grid(100, 101, &map64()).unwrap();
        assert_eq!((g.n(), g.m()), (100, 101));
        assert_eq!((g.mu.len() - 1, g.theta.len() - 1), (101, 102));
        for d in g.theta.spacings() {
            assert!((d - TAU / 102.0).abs() < 1e-14);
        }
        assert!(g.min_focal_distance() > 0.0);
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(uniform_grid(1, 3, &map64()).is_err());
        assert!(uniform_grid(2, 2, &map64()).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = uniform_grid(5, 7, &map64()).unwrap();
        for k in 0..g.unknowns() {
            let (i, j) = g.node_of(k);
            assert_eq!(g.index(i, j), k);
        }
        assert_eq!(g.mirror_line(0), 0);
        assert_eq!(g.mirror_line(1), 7);
        assert_eq!(g.mirror_line(4), 4);
    }

    #[test]
    fn constant_reference_recovers_uniform() {
        let map = map64();
        let reference = uniform_grid(10, 11, &map).unwrap();
        let field = vec![3.5; reference.unknowns()];
        let (g, fit) = exponential_grid(&reference, &field, 20, 21, &map).unwrap();
        assert!(!fit.fell_back);
        assert!(fit.mu_fit.unwrap().beta.abs() < 1e-12);
        let u = uniform_grid(20, 21, &map).unwrap();
        for (a, b) in g.mu.nodes().iter().zip(u.mu.nodes()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        for (a, b) in g.theta.nodes().iter().zip(u.theta.nodes()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_reference_is_rejected() {
        let map = map64();
        let reference = uniform_grid(4, 5, &map).unwrap();
        assert!(exponential_grid(&reference, &vec![0.0; 24], 4, 5, &map).is_err());
        assert!(exponential_grid(&reference, &vec![1.0; 7], 4, 5, &map).is_err());
    }

    #[test]
    fn theta_grid_needs_odd_m() {
        let f = TwoSidedExp { alpha: 1.0, beta: 1.0, peak: PI / 2.0 };
        assert!(equidistribute_theta(&f, 4).is_err());
        let th = equidistribute_theta(&f, 9).unwrap();
        assert_eq!(th.len(), 11);
        let d: Vec<f64> = th.windows(2).map(|w| w[1] - w[0]).collect();
        for j in 0..=9 {
            assert!((d[j] - d[9 - j]).abs() < 1e-14, "spacing {j}");
        }
    }

    #[test]
    fn smoothness_of_uniform_grid() {
        let g = uniform_grid(12, 13, &map64()).unwrap();
        let r = mapping_smoothness(&g);
        assert!(r.mu.max_second_difference < 1e-15);
        assert!(r.theta.max_second_difference < 1e-15);
        let single = AxisGrid::new(vec![0.0, 1.0]).unwrap();
        let s = axis_smoothness(&single);
        assert_eq!(s.max_second_difference, 0.0);
        assert_eq!(s.max_first_derivative, 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = uniform_grid(6, 9, &map64()).unwrap();
        g.save_csv(dir.path()).unwrap();
        assert_eq!(TensorGrid::load_csv(dir.path()).unwrap(), g);
    }

    #[test]
    fn grid_invariants_enforced() {
        let mu = AxisGrid::new(vec![-0.1, 0.2, 0.5, 0.8]).unwrap();
        let theta = uniform_grid(2, 3, &map64()).unwrap().theta;
        assert!(TensorGrid::new(mu, theta.clone()).is_err());
        let mu = AxisGrid::new(vec![-0.1, 0.1, 0.5, 0.8]).unwrap();
        assert!(TensorGrid::new(mu.clone(), theta).is_ok());
        let skew = AxisGrid::new(vec![0.0, 1.0, 2.0, 4.0, TAU]).unwrap();
        assert!(TensorGrid::new(mu, skew).is_err());
        assert!(AxisGrid::new(vec![0.0, 0.0, 1.0]).is_err());
    }
}

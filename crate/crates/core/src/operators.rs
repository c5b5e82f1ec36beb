//! Semidiscrete operators on the elliptical tensor grid.
//!
//! The method-of-lines system is `v' = (P + R) v + g(v)` with
//!
//! ```text
//! P = B (I_{M+1} ⊗ T_μ + C_μ ⊗ Î_N),    R = B (T_θ ⊗ I_N + C_θ ⊗ I_N),
//! g(v) = Q f(v),
//! ```
//!
//! where `B = diag(ψ)`, `ψ = φ/s`, and `Q = diag(1/s)`. Everything is kept
//! in stencil form; `dense_p`/`dense_r` exist for verification on small grids.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::EllipticalMap;
use crate::grid::TensorGrid;

/// Largest system materialized densely.
pub const DENSE_CAP: usize = 400;

/// Shape of the degeneracy coefficient `s(x, y)` multiplying `u_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DegeneracyKind {
    Unit,
    /// `s = q`, a plane vanishing at the boundary point with angle `theta_star`.
    Plane { theta_star: f64, gamma: f64 },
    /// `s = 1/q`.
    InversePlane { theta_star: f64, gamma: f64 },
}

impl DegeneracyKind {
    pub fn theta_star(&self) -> Option<f64> {
        match *self {
            Self::Unit => None,
            Self::Plane { theta_star, .. } | Self::InversePlane { theta_star, .. } => {
                Some(theta_star)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyField {
    pub kind: DegeneracyKind,
    /// `s` at interior nodes, grid storage order.
    pub values: Vec<f64>,
}

/// Evaluate `s` at the interior nodes.
///
/// The plane is
/// `q = (γ/2) [x*(x* − x)/(a² cosh² 𝕄) + y*(y* − y)/(a² sinh² 𝕄)]` with
/// `(x*, y*)` the boundary point at angle `θ*`; it is rescaled so that its
/// largest interior value is `γ`.
pub fn eval_degeneracy(
    kind: DegeneracyKind,
    map: &EllipticalMap,
    grid: &TensorGrid,
) -> Result<DegeneracyField> {
    let count = grid.unknowns();
    let values = match kind {
        DegeneracyKind::Unit => vec![1.0; count],
        DegeneracyKind::Plane { theta_star, gamma }
        | DegeneracyKind::InversePlane { theta_star, gamma } => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
            }
            let (xs, ys) = map.to_cartesian(map.mu_max, theta_star);
            let a2c = (map.focal * map.mu_max.cosh()).powi(2);
            let a2s = (map.focal * map.mu_max.sinh()).powi(2);
            let mut q = vec![0.0; count];
            for (k, slot) in q.iter_mut().enumerate() {
                let (i, j) = grid.node_of(k);
                let (mu, th) = grid.coords(i, j);
                let (x, y) = map.to_cartesian(mu, th);
                *slot = 0.5 * gamma * (xs * (xs - x) / a2c + ys * (ys - y) / a2s);
            }
            let peak = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if peak > 0.0 {
                let scale = gamma / peak;
                q.iter_mut().for_each(|v| *v *= scale);
            }
            if matches!(kind, DegeneracyKind::InversePlane { .. }) {
                q.iter_mut().for_each(|v| *v = 1.0 / *v);
            }
            q
        }
    };
    if let Some(k) = values.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        let (i, j) = grid.node_of(k);
        return Err(Error::NonpositiveDegeneracy { i, j, value: values[k] });
    }
    Ok(DegeneracyField { kind, values })
}

/// Reaction term `f(u)` and its derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceModel {
    /// `f(u) = 1/(1 − u)`.
    Reciprocal,
    /// `f(u) = 1/(1 − min(u, cap))`: smooth below `cap`, used for order studies.
    Capped { cap: f64 },
    /// `f(u) = value`: reduces the scheme to splitting for the heat equation.
    Constant { value: f64 },
}

impl Default for SourceModel {
    fn default() -> Self {
        Self::Reciprocal
    }
}

impl SourceModel {
    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        match *self {
            Self::Reciprocal => 1.0 / (1.0 - u),
            Self::Capped { cap } => 1.0 / (1.0 - u.min(cap)),
            Self::Constant { value } => value,
        }
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        match *self {
            Self::Reciprocal => (1.0 - u).powi(-2),
            Self::Capped { cap } => {
                if u < cap {
                    (1.0 - u).powi(-2)
                } else {
                    0.0
                }
            }
            Self::Constant { .. } => 0.0,
        }
    }
}

/// Stencil coefficients `(lower, diag, upper)` of the nonuniform centred
/// second difference with left spacing `hl` and right spacing `hr`.
#[inline]
pub fn second_difference_weights(hl: f64, hr: f64) -> (f64, f64, f64) {
    (
        2.0 / (hl * (hl + hr)),
        -2.0 / (hl * hr),
        2.0 / (hr * (hl + hr)),
    )
}

/// Structured representation of `P`, `R`, `B`, `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet {
    pub n: usize,
    pub m: usize,
    /// `δ²_μ` weights for interior rows `i = 1..=N` (index `i − 1`).
    /// `mu_lower[0]` is `κ₃`, the weight of the reflected ghost value.
    pub mu_lower: Vec<f64>,
    pub mu_diag: Vec<f64>,
    pub mu_upper: Vec<f64>,
    /// `δ²_θ` weights for `j = 0..=M`; `theta_lower[0] = κ₁` and
    /// `theta_upper[M] = κ₂` are the periodic wrap-around weights.
    pub theta_lower: Vec<f64>,
    pub theta_diag: Vec<f64>,
    pub theta_upper: Vec<f64>,
    pub kappa: [f64; 3],
    /// `mirror[j] = (M + 1 − j) mod (M + 1)`: the line coupled through `C_μ`.
    pub mirror: Vec<usize>,
    /// `ψ = φ/s` per interior node (diagonal of `B`).
    pub psi: Vec<f64>,
    /// `1/s` per interior node (diagonal of `Q`).
    pub inv_s: Vec<f64>,
    /// `min(Δμ_i Δμ_{i−1}, Δθ_j Δθ_{j−1})` per interior node.
    pub spacing_product: Vec<f64>,
}

/// Assemble the operators for `grid` with degeneracy `s`.
pub fn assemble(
    grid: &TensorGrid,
    map: &EllipticalMap,
    s: &DegeneracyField,
) -> Result<OperatorSet> {
    grid.validate()?;
    let (n, m) = (grid.n(), grid.m());
    if s.values.len() != grid.unknowns() {
        return Err(Error::DimensionMismatch(format!(
            "degeneracy field has {} values, grid has {} unknowns",
            s.values.len(),
            grid.unknowns()
        )));
    }
    if (grid.mu_max() - map.mu_max).abs() > 1e-9 * map.mu_max {
        return Err(Error::DimensionMismatch(format!(
            "grid ends at mu={} but the map boundary is mu={}",
            grid.mu_max(),
            map.mu_max
        )));
    }
    let dmu = grid.mu.spacings();
    let dth = grid.theta.spacings();

    let (mut mu_lower, mut mu_diag, mut mu_upper) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 1..=n {
        let (l, d, u) = second_difference_weights(dmu[i - 1], dmu[i]);
        mu_lower[i - 1] = l;
        mu_diag[i - 1] = d;
        mu_upper[i - 1] = u;
    }
    let (mut th_lower, mut th_diag, mut th_upper) =
        (vec![0.0; m + 1], vec![0.0; m + 1], vec![0.0; m + 1]);
    for j in 0..=m {
        let left = if j == 0 { dth[m] } else { dth[j - 1] };
        let (l, d, u) = second_difference_weights(left, dth[j]);
        th_lower[j] = l;
        th_diag[j] = d;
        th_upper[j] = u;
    }
    let kappa = [
        2.0 / (dth[m] * (dth[0] + dth[m])),
        2.0 / (dth[m] * (dth[m - 1] + dth[m])),
        2.0 / (dmu[0] * (dmu[1] + dmu[0])),
    ];

    let count = grid.unknowns();
    let mut psi = vec![0.0; count];
    let mut inv_s = vec![0.0; count];
    let mut spacing_product = vec![0.0; count];
    for j in 0..=m {
        let th = grid.theta.nodes()[j];
        let th_prod = dth[j] * if j == 0 { dth[m] } else { dth[j - 1] };
        for i in 1..=n {
            let k = grid.index(i, j);
            let phi = map.jacobian(grid.mu.nodes()[i], th)?;
            psi[k] = phi / s.values[k];
            inv_s[k] = 1.0 / s.values[k];
            spacing_product[k] = (dmu[i] * dmu[i - 1]).min(th_prod);
        }
    }
    Ok(OperatorSet {
        n,
        m,
        mu_lower,
        mu_diag,
        mu_upper,
        theta_lower: th_lower,
        theta_diag: th_diag,
        theta_upper: th_upper,
        kappa,
        mirror: (0..=m).map(|j| grid.mirror_line(j)).collect(),
        psi,
        inv_s,
        spacing_product,
    })
}

impl OperatorSet {
    pub fn unknowns(&self) -> usize {
        self.n * (self.m + 1)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.n + i - 1
    }

    /// Unscaled `δ²_μ u` with the reflection and Dirichlet closures.
    fn delta_mu_into(&self, u: &[f64], out: &mut [f64], scale: Option<&[f64]>) {
        let n = self.n;
        for j in 0..=self.m {
            let base = j * n;
            let ghost = u[self.mirror[j] * n];
            for r in 0..n {
                let left = if r == 0 { ghost } else { u[base + r - 1] };
                let right = if r + 1 == n { 0.0 } else { u[base + r + 1] };
                let val = self.mu_lower[r] * left + self.mu_diag[r] * u[base + r] + self.mu_upper[r] * right;
                out[base + r] = match scale {
                    Some(s) => s[base + r] * val,
                    None => val,
                };
            }
        }
    }

    /// Unscaled `δ²_θ u` with periodic closure.
    fn delta_theta_into(&self, u: &[f64], out: &mut [f64], scale: Option<&[f64]>) {
        let (n, m) = (self.n, self.m);
        for j in 0..=m {
            let jl = if j == 0 { m } else { j - 1 };
            let jr = if j == m { 0 } else { j + 1 };
            let (l, d, r) = (self.theta_lower[j], self.theta_diag[j], self.theta_upper[j]);
            for row in 0..n {
                let k = j * n + row;
                let val = l * u[jl * n + row] + d * u[k] + r * u[jr * n + row];
                out[k] = match scale {
                    Some(s) => s[k] * val,
                    None => val,
                };
            }
        }
    }

    pub fn apply_delta_mu(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.delta_mu_into(u, &mut out, None);
        out
    }

    pub fn apply_delta_theta(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.delta_theta_into(u, &mut out, None);
        out
    }

    /// `out = P v`.
    pub fn apply_p_into(&self, v: &[f64], out: &mut [f64]) {
        self.delta_mu_into(v, out, Some(&self.psi));
    }

    /// `out = R v`.
    pub fn apply_r_into(&self, v: &[f64], out: &mut [f64]) {
        self.delta_theta_into(v, out, Some(&self.psi));
    }

    /// `out = (P + R) v`.
    pub fn apply_c_into(&self, v: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        for j in 0..=m {
            let jl = if j == 0 { m } else { j - 1 };
            let jr = if j == m { 0 } else { j + 1 };
            let (tl, td, tr) = (self.theta_lower[j], self.theta_diag[j], self.theta_upper[j]);
            let base = j * n;
            let ghost = v[self.mirror[j] * n];
            for r in 0..n {
                let k = base + r;
                let left = if r == 0 { ghost } else { v[k - 1] };
                let right = if r + 1 == n { 0.0 } else { v[k + 1] };
                let dmu = self.mu_lower[r] * left + self.mu_diag[r] * v[k] + self.mu_upper[r] * right;
                let dth = tl * v[jl * n + r] + td * v[k] + tr * v[jr * n + r];
                out[k] = self.psi[k] * (dmu + dth);
            }
        }
    }

    pub fn apply_c(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_c_into(v, &mut out);
        out
    }

    /// `g(v) = Q f(v)`; refuses components at or above `limit`.
    pub fn source_into(&self, model: &SourceModel, v: &[f64], limit: f64, out: &mut [f64]) -> Result<()> {
        for (k, (&vk, o)) in v.iter().zip(out.iter_mut()).enumerate() {
            if !(vk < limit) {
                return Err(Error::SourceOverflow { index: k, value: vk, limit });
            }
            *o = model.f(vk) * self.inv_s[k];
        }
        Ok(())
    }

    /// Diagonal of `J = ∂g/∂v`.
    pub fn source_jacobian_into(
        &self,
        model: &SourceModel,
        v: &[f64],
        limit: f64,
        out: &mut [f64],
    ) -> Result<()> {
        for (k, (&vk, o)) in v.iter().zip(out.iter_mut()).enumerate() {
            if !(vk < limit) {
                return Err(Error::SourceOverflow { index: k, value: vk, limit });
            }
            *o = model.df(vk) * self.inv_s[k];
        }
        Ok(())
    }

    pub fn source_g(&self, model: &SourceModel, v: &[f64], limit: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.source_into(model, v, limit, &mut out)?;
        Ok(out)
    }

    pub fn source_jacobian(&self, model: &SourceModel, v: &[f64], limit: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.source_jacobian_into(model, v, limit, &mut out)?;
        Ok(out)
    }

    /// `factor · min_{i,j} min(Δμ_i Δμ_{i−1}, Δθ_j Δθ_{j−1}) / ψ_{i,j}`.
    ///
    /// With `factor = 1` steps below the bound keep `I + τ/2 P` and
    /// `I + τ/2 R` nonnegative; with `factor = 1/4` also `I + τ C`.
    pub fn tau_max_bound(&self, factor: f64) -> f64 {
        factor
            * self
                .spacing_product
                .iter()
                .zip(&self.psi)
                .map(|(h, p)| h / p)
                .fold(f64::INFINITY, f64::min)
    }

    fn dense_guard(&self) -> Result<usize> {
        let size = self.unknowns();
        if size > DENSE_CAP {
            return Err(Error::DenseCap { cap: DENSE_CAP, requested: size });
        }
        Ok(size)
    }

    /// Dense `P` (at most [`DENSE_CAP`] unknowns).
    pub fn dense_p(&self) -> Result<DMatrix<f64>> {
        let size = self.dense_guard()?;
        let mut p = DMatrix::zeros(size, size);
        for j in 0..=self.m {
            for i in 1..=self.n {
                let row = self.idx(i, j);
                let psi = self.psi[row];
                let left = if i == 1 { self.idx(1, self.mirror[j]) } else { self.idx(i - 1, j) };
                p[(row, left)] += psi * self.mu_lower[i - 1];
                p[(row, row)] += psi * self.mu_diag[i - 1];
                if i < self.n {
                    p[(row, self.idx(i + 1, j))] += psi * self.mu_upper[i - 1];
                }
            }
        }
        Ok(p)
    }

    /// Dense `R` (at most [`DENSE_CAP`] unknowns).
    pub fn dense_r(&self) -> Result<DMatrix<f64>> {
        let size = self.dense_guard()?;
        let m = self.m;
        let mut r = DMatrix::zeros(size, size);
        for j in 0..=m {
            let jl = if j == 0 { m } else { j - 1 };
            let jr = if j == m { 0 } else { j + 1 };
            for i in 1..=self.n {
                let row = self.idx(i, j);
                let psi = self.psi[row];
                r[(row, self.idx(i, jl))] += psi * self.theta_lower[j];
                r[(row, row)] += psi * self.theta_diag[j];
                r[(row, self.idx(i, jr))] += psi * self.theta_upper[j];
            }
        }
        Ok(r)
    }
}

/// Boundary point `(x*, y*)` of a degeneracy centred at angle `theta_star`.
pub fn degeneracy_anchor(map: &EllipticalMap, theta_star: f64) -> (f64, f64) {
    map.to_cartesian(map.mu_max, theta_star)
}

/// The eight anchor angles `nπ/4`.
pub fn octant_angles() -> Vec<f64> {
    (0..8).map(|n| n as f64 * PI / 4.0).collect()
}

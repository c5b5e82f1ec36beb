//! Banded line solvers used by the splitting step.

use crate::error::{Error, Result};

/// Pivots smaller than this abort the solve.
pub const MIN_PIVOT: f64 = 1e-300;

/// Solve a tridiagonal system with the Thomas algorithm.
///
/// Row `k` reads `lower[k]·x[k−1] + diag[k]·x[k] + upper[k]·x[k+1] = rhs[k]`;
/// `lower[0]` and `upper[n−1]` are ignored. `scratch` must hold `n` values.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    debug_assert!(lower.len() == n && upper.len() == n && rhs.len() == n && x.len() >= n);
    if n == 0 {
        return Ok(());
    }
    let mut beta = diag[0];
    if beta.abs() < MIN_PIVOT {
        return Err(Error::SolveFailure { row: 0, pivot: beta });
    }
    x[0] = rhs[0] / beta;
    for k in 1..n {
        scratch[k] = upper[k - 1] / beta;
        beta = diag[k] - lower[k] * scratch[k];
        if beta.abs() < MIN_PIVOT {
            return Err(Error::SolveFailure { row: k, pivot: beta });
        }
        x[k] = (rhs[k] - lower[k] * x[k - 1]) / beta;
    }
    for k in (0..n - 1).rev() {
        x[k] -= scratch[k + 1] * x[k + 1];
    }
    Ok(())
}

/// Workspace for [`solve_cyclic`].
#[derive(Debug, Clone, Default)]
pub struct CyclicWork {
    diag: Vec<f64>,
    u: Vec<f64>,
    z: Vec<f64>,
    scratch: Vec<f64>,
}

impl CyclicWork {
    pub fn new(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            u: vec![0.0; n],
            z: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }
}

/// Solve a periodic tridiagonal system by a Sherman–Morrison correction.
///
/// Same layout as [`solve_tridiagonal`], except `lower[0]` couples row 0 to
/// `x[n−1]` and `upper[n−1]` couples row `n−1` to `x[0]`. Needs `n ≥ 3`.
pub fn solve_cyclic(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    x: &mut [f64],
    work: &mut CyclicWork,
) -> Result<()> {
    let n = diag.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("cyclic solve needs n >= 3, got {n}")));
    }
    if work.diag.len() < n {
        *work = CyclicWork::new(n);
    }
    let alpha = upper[n - 1]; // A[n-1][0]
    let beta = lower[0]; // A[0][n-1]
    let gamma = -diag[0];
    let d = &mut work.diag[..n];
    d.copy_from_slice(diag);
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    solve_tridiagonal(lower, d, upper, rhs, x, &mut work.scratch[..n])?;
    let u = &mut work.u[..n];
    u.fill(0.0);
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = &mut work.z[..n];
    solve_tridiagonal(lower, d, upper, u, z, &mut work.scratch[..n])?;
    let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
    if denom.abs() < MIN_PIVOT {
        return Err(Error::SolveFailure { row: n, pivot: denom });
    }
    let fact = (x[0] + beta * x[n - 1] / gamma) / denom;
    for k in 0..n {
        x[k] -= fact * z[k];
    }
    Ok(())
}

/// Thomas factorization of a tridiagonal matrix, reusable across right-hand sides.
#[derive(Debug, Clone, Default)]
pub struct TridiagonalFactor {
    lower: Vec<f64>,
    /// Modified upper coefficients `c'_k`.
    cprime: Vec<f64>,
    inv_beta: Vec<f64>,
}

impl TridiagonalFactor {
    /// Same layout as [`solve_tridiagonal`].
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut cprime = vec![0.0; n];
        let mut inv_beta = vec![0.0; n];
        let mut beta = diag.first().copied().unwrap_or(1.0);
        for k in 0..n {
            if k > 0 {
                cprime[k] = upper[k - 1] * inv_beta[k - 1];
                beta = diag[k] - lower[k] * cprime[k];
            }
            if beta.abs() < MIN_PIVOT {
                return Err(Error::SolveFailure { row: k, pivot: beta });
            }
            inv_beta[k] = 1.0 / beta;
        }
        Ok(Self { lower: lower.to_vec(), cprime, inv_beta })
    }

    pub fn len(&self) -> usize {
        self.inv_beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_beta.is_empty()
    }

    /// Overwrite `x` (holding the right-hand side) with the solution.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.len();
        if n == 0 {
            return;
        }
        x[0] *= self.inv_beta[0];
        for k in 1..n {
            x[k] = (x[k] - self.lower[k] * x[k - 1]) * self.inv_beta[k];
        }
        for k in (0..n - 1).rev() {
            x[k] -= self.cprime[k + 1] * x[k + 1];
        }
    }
}

/// Factorization behind [`solve_cyclic`], reusable across right-hand sides.
#[derive(Debug, Clone, Default)]
pub struct CyclicFactor {
    inner: TridiagonalFactor,
    z: Vec<f64>,
    beta_over_gamma: f64,
    inv_denom: f64,
}

impl CyclicFactor {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if n < 3 {
            return Err(Error::InvalidInput(format!("cyclic solve needs n >= 3, got {n}")));
        }
        let alpha = upper[n - 1];
        let beta = lower[0];
        let gamma = -diag[0];
        let mut d = diag.to_vec();
        d[0] -= gamma;
        d[n - 1] -= alpha * beta / gamma;
        let inner = TridiagonalFactor::new(lower, &d, upper)?;
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = alpha;
        inner.solve_in_place(&mut z);
        let denom = 1.0 + z[0] + beta * z[n - 1] / gamma;
        if denom.abs() < MIN_PIVOT {
            return Err(Error::SolveFailure { row: n, pivot: denom });
        }
        Ok(Self { inner, z, beta_over_gamma: beta / gamma, inv_denom: 1.0 / denom })
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.z.len();
        self.inner.solve_in_place(x);
        let fact = (x[0] + self.beta_over_gamma * x[n - 1]) * self.inv_denom;
        for (xk, zk) in x.iter_mut().zip(&self.z) {
            *xk -= fact * zk;
        }
    }
}

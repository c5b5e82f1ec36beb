//! Peaceman–Rachford split step with the midpoint source predictor, and the
//! arc-length equidistribution step controller.
//!
//! One step advances `v_k` by
//!
//! ```text
//! v_{k+1} = S(τ)(v_k + τ/2 g(v_k)) + τ/2 (g(v_k) + τ J_k q(v_k)),
//! q(v_k)  = [I + τ/2 (C + J_k)] (C v_k + g(v_k)),
//! S(τ)    = (I − τ/2 R)⁻¹ (I − τ/2 P)⁻¹ (I + τ/2 P)(I + τ/2 R).
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CyclicFactor, TridiagonalFactor};
use crate::operators::{OperatorSet, SourceModel};

/// How the source value at the new level is approximated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predictor {
    /// `g(v_k) + τ J_k q(v_k)`, second order.
    #[default]
    Midpoint,
    /// The explicit value `g(v_k)`; first order.
    ExplicitSource,
    /// `g(v_k + τ v'_k)`: explicit Euler state prediction fed through `g`.
    EulerState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub tau0: f64,
    pub tau_min: f64,
    /// Multiplier on the nonnegativity bound when `enforce_bound` is set.
    pub safety_factor: f64,
    /// Adaptation starts once `max v'` exceeds this value.
    pub adaptation_on_after: f64,
    /// Clamp every step below `safety_factor · tau_max_bound(1/4)`.
    pub enforce_bound: bool,
    /// Relative change below which the tentative step is kept.
    pub accept_tolerance: f64,
    pub predictor: Predictor,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            tau0: 0.9e-4,
            tau_min: 1e-8,
            safety_factor: 0.9,
            adaptation_on_after: 10.0,
            enforce_bound: false,
            accept_tolerance: 0.1,
            predictor: Predictor::Midpoint,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0 && self.tau0 > self.tau_min && self.tau0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "need 0 < tau_min < tau0 (tau_min={}, tau0={})",
                self.tau_min, self.tau0
            )));
        }
        if !(self.safety_factor > 0.0 && self.safety_factor <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "safety factor must lie in (0, 1], got {}",
                self.safety_factor
            )));
        }
        if !(self.accept_tolerance > 0.0) || !(self.adaptation_on_after >= 0.0) {
            return Err(Error::InvalidInput("controller thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Solution state at level `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub v: Vec<f64>,
    pub t: f64,
    /// Step to try next.
    pub tau: f64,
    pub k: usize,
    /// `v'_k = C v_k + g(v_k)`.
    pub deriv: Vec<f64>,
    /// `v'_{k−1}`, once available.
    pub deriv_prev: Option<Vec<f64>>,
}

/// Factored implicit halves `I − τ/2 P` and `I − τ/2 R` for one `τ`.
#[derive(Debug, Clone)]
struct Factors {
    tau_bits: u64,
    /// One system per θ-line pair; entries are storage indices in system order.
    p_lines: Vec<(Vec<usize>, TridiagonalFactor)>,
    /// One periodic system per μ index.
    r_lines: Vec<CyclicFactor>,
}

impl Factors {
    fn new(ops: &OperatorSet, tau: f64) -> Result<Self> {
        let h = 0.5 * tau;
        let (n, m) = (ops.n, ops.m);
        let mut p_lines = Vec::new();
        for j in 0..=m {
            let jm = ops.mirror[j];
            if jm < j {
                continue;
            }
            // Line j reversed, then line jm forward: the κ₃ coupling of the
            // two i = 1 nodes becomes an ordinary off-diagonal. A line that is
            // its own mirror folds the ghost into its diagonal.
            let mut idx = Vec::with_capacity(2 * n);
            let (mut lower, mut diag, mut upper) = (Vec::new(), Vec::new(), Vec::new());
            if jm == j {
                for r in 0..n {
                    let hp = h * ops.psi[j * n + r];
                    idx.push(j * n + r);
                    lower.push(-hp * ops.mu_lower[r]);
                    diag.push(1.0 - hp * ops.mu_diag[r]);
                    upper.push(-hp * ops.mu_upper[r]);
                }
                diag[0] += lower[0];
                lower[0] = 0.0;
            } else {
                for r in (0..n).rev() {
                    let hp = h * ops.psi[j * n + r];
                    idx.push(j * n + r);
                    lower.push(-hp * ops.mu_upper[r]);
                    diag.push(1.0 - hp * ops.mu_diag[r]);
                    upper.push(-hp * ops.mu_lower[r]);
                }
                for r in 0..n {
                    let hp = h * ops.psi[jm * n + r];
                    idx.push(jm * n + r);
                    lower.push(-hp * ops.mu_lower[r]);
                    diag.push(1.0 - hp * ops.mu_diag[r]);
                    upper.push(-hp * ops.mu_upper[r]);
                }
            }
            p_lines.push((idx, TridiagonalFactor::new(&lower, &diag, &upper)?));
        }
        let mut r_lines = Vec::with_capacity(n);
        let len = m + 1;
        let (mut lower, mut diag, mut upper) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
        for r in 0..n {
            for j in 0..len {
                let hp = h * ops.psi[j * n + r];
                lower[j] = -hp * ops.theta_lower[j];
                diag[j] = 1.0 - hp * ops.theta_diag[j];
                upper[j] = -hp * ops.theta_upper[j];
            }
            r_lines.push(CyclicFactor::new(&lower, &diag, &upper)?);
        }
        Ok(Self { tau_bits: tau.to_bits(), p_lines, r_lines })
    }
}

/// Scratch space for one split step.
#[derive(Debug, Clone)]
struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
    g: Vec<f64>,
    jac: Vec<f64>,
    cd: Vec<f64>,
    line: Vec<f64>,
}

impl Workspace {
    fn new(ops: &OperatorSet) -> Self {
        let len = ops.unknowns();
        Self {
            a: vec![0.0; len],
            b: vec![0.0; len],
            g: vec![0.0; len],
            jac: vec![0.0; len],
            cd: vec![0.0; len],
            line: vec![0.0; (2 * ops.n).max(ops.m + 1)],
        }
    }
}

/// Applies the scheme for a fixed operator set and source model.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    pub ops: &'a OperatorSet,
    pub model: SourceModel,
    /// Source evaluations at or above this value are refused.
    pub limit: f64,
    pub predictor: Predictor,
    work: Workspace,
    factors: Option<Factors>,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a OperatorSet, model: SourceModel, limit: f64, predictor: Predictor) -> Self {
        Self {
            ops,
            model,
            limit,
            predictor,
            work: Workspace::new(ops),
            factors: None,
        }
    }

    /// `v' = C v + g(v)`.
    pub fn derivative(&self, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        self.derivative_into(v, &mut out)?;
        Ok(out)
    }

    fn derivative_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        for (k, &vk) in v.iter().enumerate() {
            if !(vk < self.limit) {
                return Err(Error::SourceOverflow { index: k, value: vk, limit: self.limit });
            }
        }
        self.ops.apply_c_into(v, out);
        for (k, o) in out.iter_mut().enumerate() {
            *o += self.model.f(v[k]) * self.ops.inv_s[k];
        }
        Ok(())
    }

    fn factors_for(&mut self, tau: f64) -> Result<&Factors> {
        if self.factors.as_ref().map(|f| f.tau_bits) != Some(tau.to_bits()) {
            self.factors = Some(Factors::new(self.ops, tau)?);
        }
        Ok(self.factors.as_ref().expect("factors just built"))
    }

    /// `out = S(τ) input`.
    pub fn apply_s(&mut self, tau: f64, input: &[f64], out: &mut [f64]) -> Result<()> {
        let h = 0.5 * tau;
        let ops = self.ops;
        let mut a = std::mem::take(&mut self.work.a);
        let mut line = std::mem::take(&mut self.work.line);
        // (I + hR) input, then (I + hP) into out
        ops.apply_r_into(input, &mut a);
        for (ak, &x) in a.iter_mut().zip(input) {
            *ak = x + h * *ak;
        }
        ops.apply_p_into(&a, out);
        for (o, &ak) in out.iter_mut().zip(&a) {
            *o = ak + h * *o;
        }
        let result = self.factors_for(tau).map(|f| {
            for (idx, fac) in &f.p_lines {
                let buf = &mut line[..idx.len()];
                for (b, &k) in buf.iter_mut().zip(idx) {
                    *b = out[k];
                }
                fac.solve_in_place(buf);
                for (b, &k) in buf.iter().zip(idx) {
                    out[k] = *b;
                }
            }
            let n = ops.n;
            let buf = &mut line[..ops.m + 1];
            for (r, fac) in f.r_lines.iter().enumerate() {
                for (j, b) in buf.iter_mut().enumerate() {
                    *b = out[j * n + r];
                }
                fac.solve_in_place(buf);
                for (j, b) in buf.iter().enumerate() {
                    out[j * n + r] = *b;
                }
            }
        });
        self.work.a = a;
        self.work.line = line;
        result
    }

    /// New solution vector from `v` with derivative `deriv = C v + g(v)`.
    pub fn advance(&mut self, v: &[f64], deriv: &[f64], tau: f64) -> Result<Vec<f64>> {
        let h = 0.5 * tau;
        let len = v.len();
        let mut g = std::mem::take(&mut self.work.g);
        let mut jac = std::mem::take(&mut self.work.jac);
        let mut cd = std::mem::take(&mut self.work.cd);
        let mut corr = std::mem::take(&mut self.work.b);
        let mut out = vec![0.0; len];
        let result = self.advance_with(v, deriv, tau, &mut g, &mut jac, &mut cd, &mut corr, &mut out);
        self.work.g = g;
        self.work.jac = jac;
        self.work.cd = cd;
        self.work.b = corr;
        result?;
        for (o, c) in out.iter_mut().zip(&self.work.b) {
            *o += h * c;
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn advance_with(
        &mut self,
        v: &[f64],
        deriv: &[f64],
        tau: f64,
        g: &mut [f64],
        jac: &mut [f64],
        cd: &mut [f64],
        corr: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        let h = 0.5 * tau;
        self.ops.source_into(&self.model, v, self.limit, g)?;
        match self.predictor {
            Predictor::Midpoint => {
                self.ops.source_jacobian_into(&self.model, v, self.limit, jac)?;
                // q = d + h (C d + J d)
                self.ops.apply_c_into(deriv, cd);
                for k in 0..v.len() {
                    let q = deriv[k] + h * (cd[k] + jac[k] * deriv[k]);
                    corr[k] = g[k] + tau * jac[k] * q;
                }
            }
            Predictor::ExplicitSource => corr.copy_from_slice(g),
            Predictor::EulerState => {
                for k in 0..v.len() {
                    cd[k] = v[k] + tau * deriv[k];
                }
                self.ops.source_into(&self.model, cd, self.limit, corr)?;
            }
        }
        for k in 0..v.len() {
            cd[k] = v[k] + h * g[k];
        }
        self.apply_s(tau, cd, out)
    }

    /// One step of size `tau`. Fails with `SourceOverflow` when the new
    /// level reaches the source limit and its derivative cannot be formed.
    pub fn pr_step(&mut self, state: &StepState, tau: f64) -> Result<StepState> {
        let v = self.advance(&state.v, &state.deriv, tau)?;
        let mut deriv = vec![0.0; v.len()];
        self.derivative_into(&v, &mut deriv)?;
        Ok(StepState {
            v,
            t: state.t + tau,
            tau,
            k: state.k + 1,
            deriv,
            deriv_prev: Some(state.deriv.clone()),
        })
    }

    /// Initial state at `t = 0`.
    pub fn initial_state(&self, v0: Vec<f64>, tau0: f64) -> Result<StepState> {
        let deriv = self.derivative(&v0)?;
        Ok(StepState {
            v: v0,
            t: 0.0,
            tau: tau0,
            k: 0,
            deriv,
            deriv_prev: None,
        })
    }
}

/// Equidistribution update
/// `τ_k² = τ_{k−1}² + min_j [(v'_k − v'_{k−1})_j² − (v'_{k+1} − v'_k)_j²]`,
/// clamped to `[tau_min, upper]`; a nonpositive radicand yields `tau_min`.
pub fn update_tau(
    deriv_prev: &[f64],
    deriv: &[f64],
    deriv_next: &[f64],
    tau_prev: f64,
    tau_min: f64,
    upper: f64,
) -> f64 {
    let shrink = deriv_prev
        .iter()
        .zip(deriv)
        .zip(deriv_next)
        .map(|((&a, &b), &c)| (b - a) * (b - a) - (c - b) * (c - b))
        .fold(f64::INFINITY, f64::min);
    let radicand = tau_prev * tau_prev + shrink;
    let tau = if radicand > 0.0 { radicand.sqrt() } else { tau_min };
    tau.min(upper).max(tau_min)
}

//! Dense property checks of the assembled operators and a self-convergence
//! study of the time stepper.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{derive_map, EllipseSpec};
use crate::grid::uniform_grid;
use crate::operators::{assemble, eval_degeneracy, DegeneracyKind, OperatorSet, SourceModel};
use crate::solver::SCHEMA;
use crate::stepper::{Predictor, Stepper};

/// Entries above `-NONNEG_TOL` count as nonnegative.
pub const NONNEG_TOL: f64 = 1e-12;
/// Allowed deviation of computed ∞-norms from their exact values.
pub const NORM_TOL: f64 = 1e-12;

/// Location of the entry that decided a check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tau: f64,
    pub passed: bool,
    /// Signed distance to failure; negative when failed.
    pub margin: f64,
    pub worst: Option<Entry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub schema: String,
    pub n: usize,
    pub m: usize,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl PropertyReport {
    fn new(ops: &OperatorSet) -> Self {
        Self {
            schema: SCHEMA.into(),
            n: ops.n,
            m: ops.m,
            passed: true,
            checks: Vec::new(),
        }
    }

    fn push(&mut self, check: Check) {
        self.passed &= check.passed;
        self.checks.push(check);
    }

    pub fn merge(&mut self, other: PropertyReport) {
        for c in other.checks {
            self.push(c);
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn identity_plus(a: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    DMatrix::identity(a.nrows(), a.ncols()) + a * scale
}

fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::SolveFailure { row: 0, pivot: 0.0 })
}

/// Smallest entry of `a`, optionally skipping the diagonal.
fn min_entry(a: &DMatrix<f64>, off_diagonal_only: bool) -> Entry {
    let mut worst = Entry { row: 0, col: 0, value: f64::INFINITY };
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            if off_diagonal_only && r == c {
                continue;
            }
            if a[(r, c)] < worst.value {
                worst = Entry { row: r, col: c, value: a[(r, c)] };
            }
        }
    }
    worst
}

/// ∞-norm and the row attaining it.
fn inf_norm(a: &DMatrix<f64>) -> (f64, usize) {
    let mut best = (0.0, 0);
    for r in 0..a.nrows() {
        let s: f64 = a.row(r).iter().map(|x| x.abs()).sum();
        if s > best.0 {
            best = (s, r);
        }
    }
    best
}

fn nonnegative_check(name: &str, tau: f64, a: &DMatrix<f64>) -> Check {
    let worst = min_entry(a, false);
    Check {
        name: name.into(),
        tau,
        passed: worst.value >= -NONNEG_TOL,
        margin: worst.value + NONNEG_TOL,
        worst: Some(worst),
    }
}

/// Sign pattern, strict row diagonal dominance and inverse positivity of a
/// matrix expected to be a nonsingular M-matrix.
pub fn m_matrix_checks(label: &str, tau: f64, a: &DMatrix<f64>) -> Result<Vec<Check>> {
    let size = a.nrows();
    let mut diag_worst = Entry { row: 0, col: 0, value: f64::INFINITY };
    let mut off_worst = Entry { row: 0, col: 0, value: f64::NEG_INFINITY };
    let mut dominance = Entry { row: 0, col: 0, value: f64::INFINITY };
    for r in 0..size {
        let d = a[(r, r)];
        if d < diag_worst.value {
            diag_worst = Entry { row: r, col: r, value: d };
        }
        let mut off = 0.0;
        for c in 0..size {
            if c == r {
                continue;
            }
            off += a[(r, c)].abs();
            if a[(r, c)] > off_worst.value {
                off_worst = Entry { row: r, col: c, value: a[(r, c)] };
            }
        }
        if d.abs() - off < dominance.value {
            dominance = Entry { row: r, col: r, value: d.abs() - off };
        }
    }
    let inv = invert(a)?;
    let inv_worst = min_entry(&inv, false);
    let off_margin = if size > 1 { -off_worst.value } else { f64::INFINITY };
    Ok(vec![
        Check {
            name: format!("{label}: positive diagonal"),
            tau,
            passed: diag_worst.value > 0.0,
            margin: diag_worst.value,
            worst: Some(diag_worst),
        },
        Check {
            name: format!("{label}: nonpositive off-diagonal"),
            tau,
            passed: off_margin >= 0.0,
            margin: off_margin,
            worst: (size > 1).then_some(off_worst),
        },
        Check {
            name: format!("{label}: strict diagonal dominance"),
            tau,
            passed: dominance.value > 0.0,
            margin: dominance.value,
            worst: Some(dominance),
        },
        Check {
            name: format!("{label}: inverse nonnegative"),
            tau,
            passed: inv_worst.value >= -NONNEG_TOL,
            margin: inv_worst.value + NONNEG_TOL,
            worst: Some(inv_worst),
        },
    ])
}

/// `I − τ/2 P` and `I − τ/2 R` are nonsingular M-matrices.
pub fn check_m_matrix(ops: &OperatorSet, tau: f64) -> Result<PropertyReport> {
    let (p, r) = (ops.dense_p()?, ops.dense_r()?);
    let mut report = PropertyReport::new(ops);
    for (label, a) in [("I - tau/2 P", &p), ("I - tau/2 R", &r)] {
        for c in m_matrix_checks(label, tau, &identity_plus(a, -0.5 * tau))? {
            report.push(c);
        }
    }
    Ok(report)
}

/// Nonnegativity of the explicit halves at `tau`, of `I + τ' C` at
/// `τ' = min(tau, tau_max_bound(1/4))`, and existence of a negative entry
/// at twice `tau_max_bound(1)`.
pub fn check_nonnegativity(ops: &OperatorSet, tau: f64) -> Result<PropertyReport> {
    let (p, r) = (ops.dense_p()?, ops.dense_r()?);
    let mut report = PropertyReport::new(ops);
    report.push(nonnegative_check("I + tau/2 P nonnegative", tau, &identity_plus(&p, 0.5 * tau)));
    report.push(nonnegative_check("I + tau/2 R nonnegative", tau, &identity_plus(&r, 0.5 * tau)));
    let c = &p + &r;
    let quarter = tau.min(ops.tau_max_bound(0.25));
    report.push(nonnegative_check("I + tau C nonnegative", quarter, &identity_plus(&c, quarter)));

    report.push(negative_entry_check(ops, 2.0 * ops.tau_max_bound(1.0))?);
    Ok(report)
}

/// Passes when `I + τ/2 P` or `I + τ/2 R` has a negative entry at `tau`.
pub fn negative_entry_check(ops: &OperatorSet, tau: f64) -> Result<Check> {
    let (p, r) = (ops.dense_p()?, ops.dense_r()?);
    let wp = min_entry(&identity_plus(&p, 0.5 * tau), false);
    let wr = min_entry(&identity_plus(&r, 0.5 * tau), false);
    let worst = if wp.value <= wr.value { wp } else { wr };
    Ok(Check {
        name: "negative entry above the bound".into(),
        tau,
        passed: worst.value < 0.0,
        margin: -worst.value,
        worst: Some(worst),
    })
}

/// Dense `S(τ)`.
pub fn dense_s(ops: &OperatorSet, tau: f64) -> Result<DMatrix<f64>> {
    let (p, r) = (ops.dense_p()?, ops.dense_r()?);
    let h = 0.5 * tau;
    let explicit = identity_plus(&p, h) * identity_plus(&r, h);
    let implicit = invert(&identity_plus(&r, -h))? * invert(&identity_plus(&p, -h))?;
    Ok(implicit * explicit)
}

/// ∞-norm statements for the factors of `S(τ)`.
pub fn check_norm_lemmas(ops: &OperatorSet, tau: f64) -> Result<PropertyReport> {
    let (p, r) = (ops.dense_p()?, ops.dense_r()?);
    let h = 0.5 * tau;
    let mut report = PropertyReport::new(ops);

    let product = identity_plus(&p, h) * identity_plus(&r, h);
    let (norm, row) = inf_norm(&product);
    report.push(Check {
        name: "explicit product norm equals one".into(),
        tau,
        passed: (norm - 1.0).abs() <= NORM_TOL,
        margin: NORM_TOL - (norm - 1.0).abs(),
        worst: Some(Entry { row, col: row, value: norm }),
    });

    // a row away from the Dirichlet boundary sums to exactly one
    let interior = 0;
    let sum: f64 = product.row(interior).iter().sum();
    report.push(Check {
        name: "interior row of explicit product sums to one".into(),
        tau,
        passed: (sum - 1.0).abs() <= NORM_TOL,
        margin: NORM_TOL - (sum - 1.0).abs(),
        worst: Some(Entry { row: interior, col: interior, value: sum }),
    });

    let inverse = invert(&identity_plus(&r, -h))? * invert(&identity_plus(&p, -h))?;
    let (norm, row) = inf_norm(&inverse);
    report.push(Check {
        name: "inverse product norm at most one".into(),
        tau,
        passed: norm <= 1.0 + NORM_TOL,
        margin: 1.0 + NORM_TOL - norm,
        worst: Some(Entry { row, col: row, value: norm }),
    });

    let (norm, row) = inf_norm(&(inverse * product));
    report.push(Check {
        name: "S(tau) norm at most one".into(),
        tau,
        passed: norm <= 1.0 + NORM_TOL,
        margin: 1.0 + NORM_TOL - norm,
        worst: Some(Entry { row, col: row, value: norm }),
    });
    Ok(report)
}

/// All dense checks on a uniform `n × m` grid of `ellipse` for each step
/// `fraction · tau_max_bound(1)`.
pub fn theorem_suite(
    ellipse: EllipseSpec,
    n: usize,
    m: usize,
    kind: DegeneracyKind,
    fractions: &[f64],
) -> Result<PropertyReport> {
    let map = derive_map(ellipse)?;
    let grid = uniform_grid(n, m, &map)?;
    let field = eval_degeneracy(kind, &map, &grid)?;
    let ops = assemble(&grid, &map, &field)?;
    let bound = ops.tau_max_bound(1.0);
    let mut report = PropertyReport::new(&ops);
    for &f in fractions {
        let tau = f * bound;
        report.merge(check_m_matrix(&ops, tau)?);
        report.merge(check_nonnegativity(&ops, tau)?);
        report.merge(check_norm_lemmas(&ops, tau)?);
    }
    Ok(report)
}

/// Smooth test problem for [`convergence_order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceProblem {
    pub ellipse: EllipseSpec,
    pub n: usize,
    pub m: usize,
    pub degeneracy: DegeneracyKind,
    pub source: SourceModel,
    pub t_end: f64,
    pub predictor: Predictor,
    /// The reference uses `min(taus) / reference_divisor`.
    pub reference_divisor: usize,
}

impl Default for ConvergenceProblem {
    fn default() -> Self {
        Self {
            ellipse: EllipseSpec { major: 6.0, minor: 4.0 },
            n: 8,
            m: 9,
            degeneracy: DegeneracyKind::Unit,
            source: SourceModel::Capped { cap: 0.5 },
            t_end: 0.1,
            predictor: Predictor::Midpoint,
            reference_divisor: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub taus: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log τ`.
    pub slope: f64,
    /// `error(τ_k) / error(τ_{k+1})`.
    pub ratios: Vec<f64>,
    pub max_v_at_end: f64,
}

fn integrate(stepper: &mut Stepper, len: usize, tau: f64, steps: usize) -> Result<Vec<f64>> {
    let mut state = stepper.initial_state(vec![0.0; len], tau)?;
    for _ in 0..steps {
        state = stepper.pr_step(&state, tau)?;
    }
    Ok(state.v)
}

/// Self-convergence of fixed-step integration from `v = 0` to `t_end`.
pub fn convergence_order(problem: &ConvergenceProblem, taus: &[f64]) -> Result<ConvergenceReport> {
    if taus.len() < 2 || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidInput("need at least two positive steps".into()));
    }
    let steps_for = |tau: f64| -> Result<usize> {
        let s = (problem.t_end / tau).round();
        if (s * tau - problem.t_end).abs() > 1e-9 * problem.t_end {
            return Err(Error::InvalidInput(format!("t_end is not a multiple of tau={tau}")));
        }
        Ok(s as usize)
    };
    let map = derive_map(problem.ellipse)?;
    let grid = uniform_grid(problem.n, problem.m, &map)?;
    let field = eval_degeneracy(problem.degeneracy, &map, &grid)?;
    let ops = assemble(&grid, &map, &field)?;
    let len = ops.unknowns();

    let tau_ref = taus.iter().copied().fold(f64::INFINITY, f64::min) / problem.reference_divisor as f64;
    let mut reference_stepper = Stepper::new(&ops, problem.source, 1.0, Predictor::Midpoint);
    let reference = integrate(&mut reference_stepper, len, tau_ref, steps_for(tau_ref)?)?;

    let mut stepper = Stepper::new(&ops, problem.source, 1.0, problem.predictor);
    let mut errors = Vec::with_capacity(taus.len());
    for &tau in taus {
        let v = integrate(&mut stepper, len, tau, steps_for(tau)?)?;
        let err = v.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        errors.push(err);
    }
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let count = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / count, ys.iter().sum::<f64>() / count);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(ConvergenceReport {
        taus: taus.to_vec(),
        ratios: errors.windows(2).map(|w| w[0] / w[1]).collect(),
        errors,
        slope: sxy / sxx,
        max_v_at_end: reference.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

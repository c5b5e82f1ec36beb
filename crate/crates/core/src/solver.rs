//! Time integration from `v = 0` to quench, steady state, or budget.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{derive_map, EllipseSpec, EllipticalMap};
use crate::grid::{exponential_grid, uniform_grid, AxisGrid, GridFit, TensorGrid};
use crate::operators::{assemble, eval_degeneracy, DegeneracyField, DegeneracyKind, OperatorSet, SourceModel};
use crate::stepper::{update_tau, StepConfig, StepState, Stepper};

/// Decreases smaller than this are attributed to roundoff.
pub const MONOTONE_TOL: f64 = 1e-12;
/// Record format tag written into every JSON record.
pub const SCHEMA: &str = "qadi/1";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// How the spatial grid is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridChoice {
    Uniform { n: usize, m: usize },
    /// Fitted to `|u_t|` at quench of a uniform `reference_n × reference_m` run
    /// of the same problem.
    Exponential {
        n: usize,
        m: usize,
        reference_n: usize,
        reference_m: usize,
    },
    /// Explicit node lists; they must end at the boundary of the ellipse.
    Fixed { mu: Vec<f64>, theta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub ellipse: EllipseSpec,
    pub grid: GridChoice,
    pub degeneracy: DegeneracyKind,
    pub source: SourceModel,
    pub step: StepConfig,
    /// Quench once `max v ≥ 1 − quench_eps`.
    pub quench_eps: f64,
    /// Steady once `‖v_{k+1} − v_k‖∞ / τ_k < steady_eps` for `steady_persistence` steps.
    pub steady_eps: f64,
    pub steady_persistence: usize,
    pub t_max: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Abort on a decreasing component.
    pub check_monotonicity: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ellipse: EllipseSpec { major: 6.0, minor: 4.0 },
            grid: GridChoice::Uniform { n: 101, m: 102 },
            degeneracy: DegeneracyKind::Unit,
            source: SourceModel::Reciprocal,
            step: StepConfig::default(),
            quench_eps: 1e-3,
            steady_eps: 1e-8,
            steady_persistence: 50,
            t_max: 1e3,
            max_steps: 50_000_000,
            seed: 0,
            check_monotonicity: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.ellipse.validate()?;
        self.step.validate()?;
        let positive = [
            ("quench_eps", self.quench_eps),
            ("steady_eps", self.steady_eps),
            ("t_max", self.t_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.quench_eps >= 1.0 {
            return Err(Error::InvalidInput("quench_eps must be below 1".into()));
        }
        if self.steady_persistence == 0 || self.max_steps == 0 {
            return Err(Error::InvalidInput("step budgets must be positive".into()));
        }
        Ok(())
    }
}

/// A configured problem: map, grid, degeneracy and assembled operators.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: RunConfig,
    pub map: EllipticalMap,
    pub grid: TensorGrid,
    pub field: DegeneracyField,
    pub ops: OperatorSet,
    pub grid_fit: Option<GridFit>,
}

impl Problem {
    pub fn build(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let map = derive_map(config.ellipse)?;
        let (grid, grid_fit) = match &config.grid {
            GridChoice::Uniform { n, m } => (uniform_grid(*n, *m, &map)?, None),
            GridChoice::Fixed { mu, theta } => (
                TensorGrid::new(AxisGrid::new(mu.clone())?, AxisGrid::new(theta.clone())?)?,
                None,
            ),
            GridChoice::Exponential { n, m, reference_n, reference_m } => {
                let reference_cfg = RunConfig {
                    grid: GridChoice::Uniform { n: *reference_n, m: *reference_m },
                    ..config.clone()
                };
                let reference = Problem::build(&reference_cfg)?;
                let record = run_problem(&reference)?;
                if !matches!(record.outcome, Outcome::Quenched { .. }) {
                    return Err(Error::NotQuenched(
                        "reference run for the exponential grid did not quench".into(),
                    ));
                }
                let (grid, fit) = exponential_grid(&reference.grid, &record.final_dudt, *n, *m, &map)?;
                (grid, Some(fit))
            }
        };
        if (grid.mu_max() - map.mu_max).abs() > 1e-9 * map.mu_max {
            return Err(Error::DimensionMismatch(format!(
                "grid ends at mu={} but the ellipse boundary is mu={}",
                grid.mu_max(),
                map.mu_max
            )));
        }
        let field = eval_degeneracy(config.degeneracy, &map, &grid)?;
        let ops = assemble(&grid, &map, &field)?;
        Ok(Self {
            config: config.clone(),
            map,
            grid,
            field,
            ops,
            grid_fit,
        })
    }

    /// Cartesian image of interior unknown `k`.
    pub fn cartesian(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.grid.node_of(k);
        let (mu, th) = self.grid.coords(i, j);
        self.map.to_cartesian(mu, th)
    }

    pub fn stepper(&self) -> Stepper<'_> {
        Stepper::new(&self.ops, self.config.source, 1.0, self.config.step.predictor)
    }
}

/// One row of the run time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub k: usize,
    pub t: f64,
    pub tau: f64,
    pub max_v: f64,
    pub max_dvdt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Quenched {
        time: f64,
        location: (f64, f64),
        node: (usize, usize),
        max_dudt: f64,
    },
    Steady { time: f64 },
    BudgetExhausted { time: f64 },
}

impl Outcome {
    pub fn quench_time(&self) -> Option<f64> {
        match self {
            Self::Quenched { time, .. } => Some(*time),
            _ => None,
        }
    }
}

/// Full mutable state of a run between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub step: StepState,
    pub adapting: bool,
    pub steady_count: usize,
    /// Generator position for perturbation streams.
    pub rng_seed: u64,
    pub rng_word_pos: u128,
    pub series: Vec<SeriesPoint>,
    /// Set when even a floor-sized step would carry a component past the
    /// source singularity; the run is then declared quenched where it stands.
    pub overflowed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema: String,
    pub version: String,
    pub outcome: Outcome,
    pub steps: usize,
    pub final_time: f64,
    pub final_tau: f64,
    /// `tau_max_bound(1/4)` for the assembled operators.
    pub tau_bound: f64,
    /// Whether `tau0` satisfied that bound.
    pub tau0_admissible: bool,
    pub series: Vec<SeriesPoint>,
    pub config: RunConfig,
    pub grid_fit: Option<GridFit>,
    pub wall_clock_secs: f64,
    /// Quench was declared because a floor-sized step overflowed the source.
    pub quenched_by_overflow: bool,
    #[serde(skip)]
    pub final_v: Vec<f64>,
    #[serde(skip)]
    pub final_dudt: Vec<f64>,
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Drives a [`Problem`] step by step.
pub struct Runner<'a> {
    pub problem: &'a Problem,
    stepper: Stepper<'a>,
}

impl<'a> Runner<'a> {
    pub fn new(problem: &'a Problem) -> Self {
        Self { problem, stepper: problem.stepper() }
    }

    pub fn stepper(&mut self) -> &mut Stepper<'a> {
        &mut self.stepper
    }

    /// State at `t = 0` from `v0`; refuses data for which `C v0 + g(v0) > 0`
    /// fails somewhere.
    pub fn start(&self, v0: Vec<f64>) -> Result<RunState> {
        let cfg = &self.problem.config;
        if v0.len() != self.problem.ops.unknowns() {
            return Err(Error::DimensionMismatch(format!(
                "initial data has {} values, grid has {} unknowns",
                v0.len(),
                self.problem.ops.unknowns()
            )));
        }
        let step = self.stepper.initial_state(v0, cfg.step.tau0)?;
        if let Some(k) = step.deriv.iter().position(|d| !(*d > 0.0)) {
            return Err(Error::Precondition(format!(
                "C v + g(v) must be positive at every node; component {k} is {}",
                step.deriv[k]
            )));
        }
        let mut state = RunState {
            step,
            adapting: false,
            steady_count: 0,
            rng_seed: cfg.seed,
            rng_word_pos: 0,
            series: Vec::new(),
            overflowed: false,
        };
        self.record_point(&mut state, true);
        Ok(state)
    }

    pub fn start_zero(&self) -> Result<RunState> {
        self.start(vec![0.0; self.problem.ops.unknowns()])
    }

    fn record_point(&self, state: &mut RunState, force: bool) {
        let s = &state.step;
        let at_floor = s.tau <= self.problem.config.step.tau_min * (1.0 + 1e-12);
        if force || at_floor || s.k % 100 == 0 {
            state.series.push(SeriesPoint {
                k: s.k,
                t: s.t,
                tau: s.tau,
                max_v: max_of(&s.v),
                max_dvdt: max_of(&s.deriv),
            });
        }
    }

    /// Terminal outcome reached by `state`, if any.
    pub fn status(&self, state: &RunState) -> Option<Outcome> {
        let cfg = &self.problem.config;
        let s = &state.step;
        if state.overflowed || max_of(&s.v) >= 1.0 - cfg.quench_eps {
            let k = argmax(&s.v);
            return Some(Outcome::Quenched {
                time: s.t,
                location: self.problem.cartesian(k),
                node: self.problem.grid.node_of(k),
                max_dudt: max_of(&s.deriv),
            });
        }
        if state.steady_count >= cfg.steady_persistence {
            return Some(Outcome::Steady { time: s.t });
        }
        if s.k >= cfg.max_steps || s.t >= cfg.t_max {
            return Some(Outcome::BudgetExhausted { time: s.t });
        }
        None
    }

    /// Step with `tau`, shrinking it tenfold while the new level overflows
    /// the source. Returns the new state and the step actually used.
    fn guarded_step(&mut self, state: &StepState, mut tau: f64) -> Result<StepState> {
        let tau_min = self.problem.config.step.tau_min;
        loop {
            match self.stepper.pr_step(state, tau) {
                Err(Error::SourceOverflow { .. }) if tau > tau_min => {
                    tau = (0.1 * tau).max(tau_min);
                }
                other => return other,
            }
        }
    }

    /// Advance one accepted step.
    pub fn step(&mut self, state: &mut RunState) -> Result<()> {
        let cfg = self.problem.config.step;
        let old = &state.step;
        if !state.adapting && max_of(&old.deriv) > cfg.adaptation_on_after {
            state.adapting = true;
        }
        let mut tau = old.tau;
        if cfg.enforce_bound {
            tau = tau.min(cfg.safety_factor * self.problem.ops.tau_max_bound(0.25)).max(cfg.tau_min);
        }
        let mut next = match self.guarded_step(old, tau) {
            Err(Error::SourceOverflow { .. }) => {
                state.overflowed = true;
                return Ok(());
            }
            other => other?,
        };
        let mut tau_next = next.tau;
        if state.adapting {
            if let Some(prev) = &old.deriv_prev {
                let tau_k = update_tau(prev, &old.deriv, &next.deriv, next.tau, cfg.tau_min, next.tau);
                if (next.tau - tau_k).abs() >= cfg.accept_tolerance * next.tau {
                    match self.guarded_step(old, tau_k) {
                        Err(Error::SourceOverflow { .. }) => {
                            state.overflowed = true;
                            return Ok(());
                        }
                        other => next = other?,
                    }
                }
                tau_next = tau_k.min(next.tau);
            }
        }
        if self.problem.config.check_monotonicity {
            for (idx, (a, b)) in old.v.iter().zip(&next.v).enumerate() {
                if b - a < -MONOTONE_TOL {
                    return Err(Error::MonotonicityViolation {
                        step: next.k,
                        index: idx,
                        decrease: a - b,
                    });
                }
            }
        }
        // Steadiness is judged on the discrete rate: at a fixed point of the
        // split scheme `Cv + g` keeps an O(τ) splitting residual.
        let dt = next.t - old.t;
        let norm = old.v.iter().zip(&next.v).fold(0.0f64, |m, (a, b)| m.max((b - a).abs())) / dt;
        next.tau = tau_next;
        if norm < self.problem.config.steady_eps {
            state.steady_count += 1;
        } else {
            state.steady_count = 0;
        }
        state.step = next;
        self.record_point(state, false);
        Ok(())
    }

    /// Step until a terminal outcome.
    pub fn run_to_end(&mut self, state: &mut RunState) -> Result<Outcome> {
        loop {
            if let Some(out) = self.status(state) {
                return Ok(out);
            }
            self.step(state)?;
        }
    }

    pub fn record(&self, state: &RunState, outcome: Outcome, started: Instant) -> RunRecord {
        let mut series = state.series.clone();
        let s = &state.step;
        if series.last().map(|p| p.k) != Some(s.k) {
            series.push(SeriesPoint {
                k: s.k,
                t: s.t,
                tau: s.tau,
                max_v: max_of(&s.v),
                max_dvdt: max_of(&s.deriv),
            });
        }
        let bound = self.problem.ops.tau_max_bound(0.25);
        RunRecord {
            schema: SCHEMA.into(),
            version: VERSION.into(),
            outcome,
            steps: s.k,
            final_time: s.t,
            final_tau: s.tau,
            tau_bound: bound,
            tau0_admissible: self.problem.config.step.tau0 <= bound,
            series,
            config: self.problem.config.clone(),
            grid_fit: self.problem.grid_fit.clone(),
            wall_clock_secs: started.elapsed().as_secs_f64(),
            quenched_by_overflow: state.overflowed,
            final_v: s.v.clone(),
            final_dudt: s.deriv.clone(),
        }
    }
}

/// Run a built problem from `v = 0`.
pub fn run_problem(problem: &Problem) -> Result<RunRecord> {
    let started = Instant::now();
    let mut runner = Runner::new(problem);
    let mut state = runner.start_zero()?;
    let outcome = runner.run_to_end(&mut state)?;
    log::info!("run finished after {} steps: {:?}", state.step.k, outcome);
    Ok(runner.record(&state, outcome, started))
}

/// Build and run `config` from `v = 0`.
pub fn run(config: &RunConfig) -> Result<RunRecord> {
    run_problem(&Problem::build(config)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, m: usize) -> RunConfig {
        RunConfig {
            grid: GridChoice::Uniform { n, m },
            ..RunConfig::default()
        }
    }

    #[test]
    fn budget_of_one_step() {
        let cfg = RunConfig { max_steps: 1, ..small(6, 7) };
        let rec = run(&cfg).unwrap();
        assert!(matches!(rec.outcome, Outcome::BudgetExhausted { .. }));
        assert_eq!(rec.steps, 1);
    }

    #[test]
    fn first_step_is_positive() {
        let p = Problem::build(&small(5, 7)).unwrap();
        let mut r = Runner::new(&p);
        let mut s = r.start_zero().unwrap();
        r.step(&mut s).unwrap();
        assert!(s.step.v.iter().all(|&x| x > 0.0));
        assert!(s.step.deriv.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn rejects_bad_initial_data() {
        let p = Problem::build(&small(5, 7)).unwrap();
        let r = Runner::new(&p);
        let mut v0 = vec![0.0; p.ops.unknowns()];
        v0[3] = 0.9;
        assert!(matches!(r.start(v0), Err(Error::Precondition(_))));
    }

    #[test]
    fn invalid_config() {
        let cfg = RunConfig { quench_eps: 0.0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig { steady_persistence: 0, ..RunConfig::default() };
        assert!(cfg.validate().is_err());
    }
}

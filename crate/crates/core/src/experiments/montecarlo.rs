//! Sensitivity of the quench to random perturbations `v → v + 10⁻ⁿ z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::same_location_orbit;
use crate::error::{Error, Result};
use crate::solver::{Outcome, Problem, RunConfig, RunState, Runner, SCHEMA};

/// Tolerance for matching quench locations.
const LOCATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbMode {
    /// Once, before the first step taken with `max v ≥ threshold`.
    OnceAt { threshold: f64 },
    /// Before every step with the given probability.
    Continuous { probability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbSpec {
    /// Perturbations have size `10^-order`.
    pub order: u32,
    pub mode: PerturbMode,
    pub replicates: usize,
    pub seed: u64,
}

impl PerturbSpec {
    pub fn validate(&self) -> Result<()> {
        if self.order < 1 || self.replicates < 1 {
            return Err(Error::InvalidInput(format!(
                "need order >= 1 and replicates >= 1 (order={}, replicates={})",
                self.order, self.replicates
            )));
        }
        match self.mode {
            PerturbMode::OnceAt { threshold } if !(threshold > 0.0 && threshold < 1.0) => Err(
                Error::InvalidInput(format!("trigger threshold must lie in (0, 1), got {threshold}")),
            ),
            PerturbMode::Continuous { probability } if !(0.0..=1.0).contains(&probability) => Err(
                Error::InvalidInput(format!("probability must lie in [0, 1], got {probability}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn magnitude(&self) -> f64 {
        10f64.powf(-(self.order as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub seed: u64,
    pub quench_time: f64,
    pub location: (f64, f64),
    pub node: (usize, usize),
    pub injections: usize,
    /// `‖v_f − ṽ_f‖∞` against the baseline at this replicate's quench time.
    pub state_diff: f64,
    pub rel_time_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbStats {
    pub schema: String,
    pub spec: PerturbSpec,
    pub baseline_time: f64,
    pub baseline_location: (f64, f64),
    pub modal_location: (f64, f64),
    pub modal_count: usize,
    /// Replicates quenching at the baseline location up to axis reflections.
    pub unchanged_locations: usize,
    pub mean_time: f64,
    pub min_time: f64,
    pub max_time: f64,
    pub mean_state_diff: f64,
    pub mean_rel_time_diff: f64,
    pub replicates: Vec<ReplicateResult>,
    pub config: RunConfig,
}

impl PerturbStats {
    pub fn location_unchanged(&self) -> bool {
        self.unchanged_locations == self.replicates.len()
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

struct RawReplicate {
    seed: u64,
    time: f64,
    location: (f64, f64),
    node: (usize, usize),
    injections: usize,
    v: Vec<f64>,
}

fn inject(runner: &mut Runner, state: &mut RunState, rng: &mut ChaCha8Rng, magnitude: f64) -> Result<()> {
    for x in state.step.v.iter_mut() {
        *x += magnitude * rng.gen_range(-1.0..=1.0);
    }
    state.step.deriv = runner.stepper().derivative(&state.step.v)?;
    Ok(())
}

fn replicate(problem: &Problem, spec: &PerturbSpec, r: usize, trigger: Option<&RunState>) -> Result<RawReplicate> {
    let seed = spec.seed ^ r as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runner = Runner::new(problem);
    let magnitude = spec.magnitude();
    let mut injections = 0;
    let mut state = match trigger {
        Some(t) => t.clone(),
        None => runner.start_zero()?,
    };
    state.rng_seed = seed;
    if let PerturbMode::OnceAt { .. } = spec.mode {
        inject(&mut runner, &mut state, &mut rng, magnitude)?;
        injections += 1;
    }
    let outcome = loop {
        state.rng_word_pos = rng.get_word_pos();
        if let Some(out) = runner.status(&state) {
            break out;
        }
        if let PerturbMode::Continuous { probability } = spec.mode {
            if rng.gen::<f64>() < probability {
                inject(&mut runner, &mut state, &mut rng, magnitude)?;
                injections += 1;
            }
        }
        runner.step(&mut state)?;
    };
    match outcome {
        Outcome::Quenched { time, location, node, .. } => Ok(RawReplicate {
            seed,
            time,
            location,
            node,
            injections,
            v: state.step.v,
        }),
        other => Err(Error::NotQuenched(format!("replicate {r} ended with {other:?}"))),
    }
}

/// Baseline states at the sorted `targets`, linearly interpolated in time;
/// targets past the baseline quench take its final state.
fn baseline_at(problem: &Problem, start: RunState, targets: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut runner = Runner::new(problem);
    let mut state = start;
    let mut out = Vec::with_capacity(targets.len());
    let mut next = 0;
    while next < targets.len() && targets[next] <= state.step.t {
        out.push(state.step.v.clone());
        next += 1;
    }
    while next < targets.len() {
        if runner.status(&state).is_some() {
            while next < targets.len() {
                out.push(state.step.v.clone());
                next += 1;
            }
            break;
        }
        let (t0, v0) = (state.step.t, state.step.v.clone());
        runner.step(&mut state)?;
        let t1 = state.step.t;
        while next < targets.len() && targets[next] <= t1 {
            let w = (targets[next] - t0) / (t1 - t0);
            out.push(v0.iter().zip(&state.step.v).map(|(a, b)| a + w * (b - a)).collect());
            next += 1;
        }
    }
    Ok(out)
}

/// Perturbed replicates of `config` compared with the unperturbed run.
///
/// Replicate `r` draws from a ChaCha8 stream seeded with `seed ⊕ r`. Runs
/// execute on the current rayon pool; results are reduced in replicate order.
pub fn monte_carlo(config: &RunConfig, spec: &PerturbSpec) -> Result<PerturbStats> {
    spec.validate()?;
    let problem = Problem::build(config)?;
    let mut runner = Runner::new(&problem);
    let zero = runner.start_zero()?;
    let mut state = zero.clone();
    let mut trigger = None;
    let outcome = loop {
        if let Some(out) = runner.status(&state) {
            break out;
        }
        if let PerturbMode::OnceAt { threshold } = spec.mode {
            if trigger.is_none() && max_of(&state.step.v) >= threshold {
                trigger = Some(state.clone());
            }
        }
        runner.step(&mut state)?;
    };
    let Outcome::Quenched { time: baseline_time, location: baseline_location, .. } = outcome else {
        return Err(Error::BaselineNotQuenched);
    };
    if matches!(spec.mode, PerturbMode::OnceAt { .. }) && trigger.is_none() {
        return Err(Error::NotQuenched("baseline never reached the trigger threshold".into()));
    }

    // perturbed runs may dip below their predecessor; that is not a defect
    let mut free = problem.clone();
    free.config.check_monotonicity = false;
    let raw: Vec<RawReplicate> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| replicate(&free, spec, r, trigger.as_ref()))
        .collect::<Result<_>>()?;

    let mut targets: Vec<f64> = raw.iter().map(|r| r.time).collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    let start = trigger.unwrap_or(zero);
    let states = baseline_at(&problem, start, &targets)?;

    let mut replicates = Vec::with_capacity(raw.len());
    for (r, rep) in raw.into_iter().enumerate() {
        let pos = targets.partition_point(|t| *t < rep.time);
        let base = &states[pos];
        let state_diff = base.iter().zip(&rep.v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        replicates.push(ReplicateResult {
            replicate: r,
            seed: rep.seed,
            quench_time: rep.time,
            location: rep.location,
            node: rep.node,
            injections: rep.injections,
            state_diff,
            rel_time_diff: (baseline_time - rep.time).abs() / baseline_time.abs(),
        });
    }

    let count = replicates.len() as f64;
    let mut modal = (replicates[0].location, 0usize);
    for cand in &replicates {
        let hits = replicates
            .iter()
            .filter(|o| same_location_orbit(cand.location, o.location, LOCATION_TOL))
            .count();
        if hits > modal.1 {
            modal = (cand.location, hits);
        }
    }
    Ok(PerturbStats {
        schema: SCHEMA.into(),
        spec: *spec,
        baseline_time,
        baseline_location,
        modal_location: modal.0,
        modal_count: modal.1,
        unchanged_locations: replicates
            .iter()
            .filter(|r| same_location_orbit(r.location, baseline_location, LOCATION_TOL))
            .count(),
        mean_time: replicates.iter().map(|r| r.quench_time).sum::<f64>() / count,
        min_time: replicates.iter().map(|r| r.quench_time).fold(f64::INFINITY, f64::min),
        max_time: replicates.iter().map(|r| r.quench_time).fold(f64::NEG_INFINITY, f64::max),
        mean_state_diff: replicates.iter().map(|r| r.state_diff).sum::<f64>() / count,
        mean_rel_time_diff: replicates.iter().map(|r| r.rel_time_diff).sum::<f64>() / count,
        replicates,
        config: config.clone(),
    })
}

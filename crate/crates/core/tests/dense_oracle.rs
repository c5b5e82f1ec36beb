use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use qadi::geometry::EllipseSpec;
use qadi::operators::{DegeneracyKind, SourceModel};
use qadi::solver::{GridChoice, Problem, RunConfig};
use qadi::stepper::{Predictor, Stepper};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(grid: GridChoice, degeneracy: DegeneracyKind) -> Problem {
    Problem::build(&RunConfig {
        ellipse: EllipseSpec { major: 6.0, minor: 4.0 },
        grid,
        degeneracy,
        ..RunConfig::default()
    })
    .unwrap()
}

fn nonuniform_3x3() -> GridChoice {
    let mu_max = (4.0f64 / 6.0).atanh();
    GridChoice::Fixed {
        mu: vec![-0.1, 0.1, 0.35, 0.7, mu_max],
        theta: vec![0.0, 1.2, PI, TAU - 1.2, TAU],
    }
}

fn cases() -> Vec<(&'static str, Problem)> {
    let plane = DegeneracyKind::Plane { theta_star: PI / 4.0, gamma: 1.0 };
    vec![
        ("uniform unit", problem(GridChoice::Uniform { n: 3, m: 3 }, DegeneracyKind::Unit)),
        ("uniform plane", problem(GridChoice::Uniform { n: 3, m: 3 }, plane)),
        ("nonuniform unit", problem(nonuniform_3x3(), DegeneracyKind::Unit)),
        ("nonuniform plane", problem(nonuniform_3x3(), plane)),
        ("uniform 4x4", problem(GridChoice::Uniform { n: 4, m: 4 }, DegeneracyKind::Unit)),
    ]
}

/// Direct five-point assembly with the reflection, Dirichlet and periodic
/// closures, scaled row-wise by `φ/s`.
fn direct_pr(p: &Problem) -> (DMatrix<f64>, DMatrix<f64>) {
    let mu = p.grid.mu.nodes();
    let th = p.grid.theta.nodes();
    let (n, m) = (mu.len() - 2, th.len() - 2);
    let lines = m + 1;
    let a2 = 6.0f64 * 6.0 - 4.0 * 4.0;
    let idx = |i: usize, j: usize| j * n + i - 1;
    let mut pm = DMatrix::zeros(n * lines, n * lines);
    let mut rm = DMatrix::zeros(n * lines, n * lines);
    for j in 0..lines {
        for i in 1..=n {
            let row = idx(i, j);
            let phi = 1.0 / (a2 * (mu[i].sinh().powi(2) + th[j].sin().powi(2)));
            let psi = phi / p.field.values[row];

            let (hl, hr) = (mu[i] - mu[i - 1], mu[i + 1] - mu[i]);
            pm[(row, row)] += psi * -2.0 / (hl * hr);
            let wl = psi * 2.0 / (hl * (hl + hr));
            if i == 1 {
                pm[(row, idx(1, (m + 1 - j) % lines))] += wl;
            } else {
                pm[(row, idx(i - 1, j))] += wl;
            }
            if i < n {
                pm[(row, idx(i + 1, j))] += psi * 2.0 / (hr * (hl + hr));
            }

            let kl = if j == 0 { TAU - th[m] } else { th[j] - th[j - 1] };
            let kr = th[j + 1] - th[j];
            rm[(row, row)] += psi * -2.0 / (kl * kr);
            rm[(row, idx(i, (j + lines - 1) % lines))] += psi * 2.0 / (kl * (kl + kr));
            rm[(row, idx(i, (j + 1) % lines))] += psi * 2.0 / (kr * (kl + kr));
        }
    }
    (pm, rm)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    num / den.max(f64::MIN_POSITIVE)
}

fn dense_s(pm: &DMatrix<f64>, rm: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let id = DMatrix::<f64>::identity(pm.nrows(), pm.ncols());
    let h = 0.5 * tau;
    let explicit = (&id + pm * h) * (&id + rm * h);
    let inner = (&id - pm * h).lu().solve(&explicit).unwrap();
    (&id - rm * h).lu().solve(&inner).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(0.0..0.5)).collect()
}

#[test]
fn structured_operators_match_direct_assembly() {
    for (name, p) in cases() {
        let (pm, rm) = direct_pr(&p);
        let dp = p.ops.dense_p().unwrap();
        let dr = p.ops.dense_r().unwrap();
        let scale = pm.amax().max(rm.amax());
        assert!((&dp - &pm).amax() <= 1e-13 * scale, "{name}: P differs by {}", (&dp - &pm).amax());
        assert!((&dr - &rm).amax() <= 1e-13 * scale, "{name}: R differs by {}", (&dr - &rm).amax());

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = random_state(&mut rng, p.ops.unknowns());
        let dense = (&pm + &rm) * DVector::from_column_slice(&v);
        assert!(rel_err(&p.ops.apply_c(&v), dense.as_slice()) < 1e-13, "{name}: apply_c");
    }
}

#[test]
fn reflected_ghost_couples_mirrored_lines() {
    let p = problem(GridChoice::Uniform { n: 3, m: 3 }, DegeneracyKind::Unit);
    let n = 3;
    for j in 0..4 {
        let mut v = vec![0.0; p.ops.unknowns()];
        v[j * n] = 1.0;
        let out = p.ops.apply_c(&v);
        let partner = (4 - j) % 4;
        let k = partner * n;
        let expect = p.ops.psi[k] * p.ops.kappa[2] + if partner == j { p.ops.psi[k] * p.ops.mu_diag[0] } else { 0.0 };
        let got = out[k] - if partner == j { p.ops.psi[k] * p.ops.theta_diag[j] } else { 0.0 };
        assert!((got - expect).abs() < 1e-12 * expect.abs().max(1.0), "line {j}: {got} vs {expect}");
    }
}

#[test]
fn apply_s_matches_dense_inversion() {
    for (name, p) in cases() {
        let (pm, rm) = direct_pr(&p);
        let bound = p.ops.tau_max_bound(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut stepper = p.stepper();
        for _ in 0..3 {
            let tau = bound * rng.gen_range(0.05..0.95);
            let s = dense_s(&pm, &rm, tau);
            for _ in 0..20 {
                let v: Vec<f64> = (0..p.ops.unknowns()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let expect = &s * DVector::from_column_slice(&v);
                let mut got = vec![0.0; v.len()];
                stepper.apply_s(tau, &v, &mut got).unwrap();
                let e = rel_err(&got, expect.as_slice());
                assert!(e < 1e-12, "{name}: tau {tau:e} relative error {e:e}");
            }
        }
    }
}

#[test]
fn apply_s_identity_and_ones() {
    let p = problem(GridChoice::Uniform { n: 3, m: 3 }, DegeneracyKind::Unit);
    let mut stepper = p.stepper();
    let ones = vec![1.0; p.ops.unknowns()];
    let mut out = vec![0.0; ones.len()];
    stepper.apply_s(0.0, &ones, &mut out).unwrap();
    assert_eq!(out, ones);
    for frac in [0.1, 0.5, 0.9] {
        stepper.apply_s(frac * p.ops.tau_max_bound(1.0), &ones, &mut out).unwrap();
        assert!(out.iter().all(|&x| x <= 1.0 + 1e-12), "{out:?}");
    }
}

/// One step of the scheme written out with dense matrices.
fn dense_step(p: &Problem, pm: &DMatrix<f64>, rm: &DMatrix<f64>, v: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let h = 0.5 * tau;
    let model = SourceModel::Reciprocal;
    let c = pm + rm;
    let vv = DVector::from_column_slice(v);
    let g = DVector::from_iterator(v.len(), v.iter().zip(&p.field.values).map(|(u, s)| model.f(*u) / s));
    let jd = DMatrix::from_diagonal(&DVector::from_iterator(
        v.len(),
        v.iter().zip(&p.field.values).map(|(u, s)| model.df(*u) / s),
    ));
    let d = &c * &vv + &g;
    let id = DMatrix::<f64>::identity(v.len(), v.len());
    let q = (&id + (&c + &jd) * h) * &d;
    let next = dense_s(pm, rm, tau) * (&vv + &g * h) + (&g + &jd * q * tau) * h;
    let g_next = DVector::from_iterator(v.len(), next.iter().zip(&p.field.values).map(|(u, s)| model.f(*u) / s));
    let d_next = &c * &next + g_next;
    (next.as_slice().to_vec(), d_next.as_slice().to_vec())
}

#[test]
fn pr_step_matches_dense_scheme() {
    for (name, p) in cases() {
        let (pm, rm) = direct_pr(&p);
        let mut stepper = p.stepper();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let bound = p.ops.tau_max_bound(1.0);
        for trial in 0..20 {
            let v = if trial == 0 { vec![0.0; p.ops.unknowns()] } else { random_state(&mut rng, p.ops.unknowns()) };
            let tau = if trial == 0 { 0.9e-4 } else { bound * rng.gen_range(0.05..0.95) };
            let state = stepper.initial_state(v.clone(), tau).unwrap();
            let next = stepper.pr_step(&state, tau).unwrap();
            let (expect_v, expect_d) = dense_step(&p, &pm, &rm, &v, tau);
            let ev = rel_err(&next.v, &expect_v);
            let ed = rel_err(&next.deriv, &expect_d);
            assert!(ev < 1e-12, "{name} trial {trial}: state error {ev:e}");
            assert!(ed < 1e-11, "{name} trial {trial}: derivative error {ed:e}");
            assert_eq!(next.t, tau);
            assert_eq!(next.deriv_prev.as_deref(), Some(&state.deriv[..]));
        }
    }
}

#[test]
fn first_step_from_rest_is_positive() {
    let p = problem(GridChoice::Uniform { n: 6, m: 7 }, DegeneracyKind::Unit);
    let mut stepper = p.stepper();
    let s0 = stepper.initial_state(vec![0.0; p.ops.unknowns()], 0.9e-4).unwrap();
    let s1 = stepper.pr_step(&s0, 0.9e-4).unwrap();
    assert!(s1.v.iter().all(|&x| x > 0.0));
    assert!(s1.deriv.iter().all(|&x| x > 0.0));
}

/// Heat equation with unit forcing, `v' = Cv + 1`, from rest.
fn heat_exact(c: &DMatrix<f64>, t: f64) -> DVector<f64> {
    let n = c.nrows();
    let g = DVector::from_element(n, 1.0);
    let growth = (c * t).exp() - DMatrix::identity(n, n);
    c.clone().lu().solve(&(growth * g)).unwrap()
}

#[test]
fn frozen_source_converges_at_second_order() {
    let p = problem(GridChoice::Uniform { n: 3, m: 3 }, DegeneracyKind::Unit);
    let (pm, rm) = direct_pr(&p);
    let t_end = 0.1;
    let exact = heat_exact(&(&pm + &rm), t_end);
    let mut errors = Vec::new();
    for steps in [50usize, 100, 200] {
        let tau = t_end / steps as f64;
        let mut stepper = Stepper::new(&p.ops, SourceModel::Constant { value: 1.0 }, 1.0, Predictor::Midpoint);
        let mut state = stepper.initial_state(vec![0.0; p.ops.unknowns()], tau).unwrap();
        for _ in 0..steps {
            state = stepper.pr_step(&state, tau).unwrap();
        }
        errors.push(rel_err(&state.v, exact.as_slice()));
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let p = problem(GridChoice::Uniform { n: 4, m: 5 }, DegeneracyKind::Plane { theta_star: 0.0, gamma: 1.0 });
    let model = SourceModel::Reciprocal;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v: Vec<f64> = (0..p.ops.unknowns()).map(|_| rng.gen_range(0.0..0.9)).collect();
    let jac = p.ops.source_jacobian(&model, &v, 1.0).unwrap();
    let eps = 1e-6;
    let up: Vec<f64> = v.iter().map(|x| x + eps).collect();
    let down: Vec<f64> = v.iter().map(|x| x - eps).collect();
    let gu = p.ops.source_g(&model, &up, 1.0).unwrap();
    let gd = p.ops.source_g(&model, &down, 1.0).unwrap();
    for k in 0..v.len() {
        let fd = (gu[k] - gd[k]) / (2.0 * eps);
        assert!(((fd - jac[k]) / jac[k]).abs() < 1e-6, "node {k}: {fd} vs {}", jac[k]);
    }
}

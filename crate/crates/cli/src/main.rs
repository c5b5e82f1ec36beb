//! `qadi`: run the solver, the dense checks and the experiment drivers.
//!
//! Exit codes: 0 quench or steady state, 1 invalid configuration or
//! arguments, 2 monotonicity violation, 3 step budget exhausted, 4 any other
//! failure (including failed checks).

mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qadi::experiments::{
    critical_area_search, degeneracy_study, monte_carlo, CriticalSearch, DegeneracyStudy, StudyKind,
};
use qadi::geometry::{bounds_table, rect_critical_area, EllipseSpec};
use qadi::operators::DegeneracyKind;
use qadi::output::{write_json, write_run, write_table};
use qadi::solver::{GridChoice, Outcome, Problem, Runner, SCHEMA, VERSION};
use qadi::verify::{convergence_order, theorem_suite, ConvergenceProblem};
use qadi::{checkpoint, Error};
use serde::Serialize;

use crate::config::{CliConfig, PerturbModeName};

const EXIT_INVALID: i32 = 1;
const EXIT_MONOTONICITY: i32 = 2;
const EXIT_BUDGET: i32 = 3;
const EXIT_FAILURE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "qadi", version, about = "Adaptive splitting solver for quenching problems on ellipses")]
struct Cli {
    /// Worker threads for concurrent runs.
    #[arg(long, global = true, env = "QADI_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one problem to quench, steady state or budget.
    Solve(SolveArgs),
    /// Dense matrix checks and convergence order on small grids.
    Verify(VerifyArgs),
    /// Critical-area bounds from inscribed and circumscribed rectangles.
    Bounds(BoundsArgs),
    /// Bisect for the smallest quenching area at a fixed axis ratio.
    Critical(CriticalArgs),
    /// Perturbed replicates compared with the unperturbed run.
    Montecarlo(MonteCarloArgs),
    /// Quench locations for degeneracies anchored around the boundary.
    Degeneracy(DegeneracyArgs),
}

/// Overrides applied on top of the configuration file.
#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    major: Option<f64>,
    #[arg(long)]
    minor: Option<f64>,
    /// Multiply the ellipse area, keeping its axis ratio.
    #[arg(long)]
    area_scale: Option<f64>,
    /// Uniform grid size in μ (with --m).
    #[arg(long, requires = "m")]
    n: Option<usize>,
    /// Uniform grid size in θ (with --n).
    #[arg(long, requires = "n")]
    m: Option<usize>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    tau_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
}

impl Common {
    fn config(&self) -> anyhow::Result<CliConfig> {
        let mut c = CliConfig::load(self.config.as_deref())?;
        if self.major.is_some() || self.minor.is_some() {
            c.ellipse = EllipseSpec {
                major: self.major.unwrap_or(c.ellipse.major),
                minor: self.minor.unwrap_or(c.ellipse.minor),
            };
        }
        if let Some(f) = self.area_scale {
            c.ellipse = c.ellipse.scaled_area(f)?;
        }
        if let (Some(n), Some(m)) = (self.n, self.m) {
            c.grid = GridChoice::Uniform { n, m };
        }
        if let Some(t) = self.tau0 {
            c.step.tau0 = t;
        }
        if let Some(t) = self.tau_min {
            c.step.tau_min = t;
        }
        if let Some(t) = self.t_max {
            c.stop.t_max = t;
        }
        if let Some(k) = self.max_steps {
            c.stop.max_steps = k;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// Save a checkpoint every this many steps.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FieldKind {
    Unit,
    Plane,
    InversePlane,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Degeneracy of the checked operators.
    #[arg(long, value_enum, default_value = "unit")]
    kind: FieldKind,
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    theta_star: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Steps as fractions of the nonnegativity bound.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    fractions: Vec<f64>,
    /// Also measure the self-convergence order of the scheme.
    #[arg(long)]
    convergence: bool,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Also write bounds.json and bounds.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CriticalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    ratio: Option<f64>,
    /// Critical area of the rectangle with the same ratio.
    #[arg(long)]
    rect_area: Option<f64>,
    /// Stop once the bracket is narrower than this fraction of the bounds.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    OnceAt,
    Continuous,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[command(flatten)]
    common: Common,
    /// Perturbations have size 10^-order.
    #[arg(long)]
    order: Option<u32>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    probability: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StudyArg {
    Plane,
    InversePlane,
}

#[derive(Debug, Args)]
struct DegeneracyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    kind: Option<StudyArg>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Anchor angles θ*; the eight octants by default.
    #[arg(long, value_delimiter = ',')]
    thetas: Option<Vec<f64>>,
}

/// JSON wrapper carrying the version and the effective configuration.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: &'static str,
    version: &'static str,
    command: &'static str,
    config: &'a CliConfig,
    result: &'a T,
}

fn envelope<'a, T: Serialize>(command: &'static str, config: &'a CliConfig, result: &'a T) -> Envelope<'a, T> {
    Envelope { schema: SCHEMA, version: VERSION, command, config, result }
}

fn code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<toml::de::Error>().is_some() {
        return EXIT_INVALID;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::MonotonicityViolation { .. }) => EXIT_MONOTONICITY,
        Some(
            Error::DegenerateEllipse { .. }
            | Error::InvalidInput(_)
            | Error::NonpositiveDegeneracy { .. }
            | Error::DimensionMismatch(_)
            | Error::Precondition(_)
            | Error::DenseCap { .. },
        ) => EXIT_INVALID,
        _ => EXIT_FAILURE,
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn solve(args: &SolveArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = args.common.config()?;
    let dir = &args.common.out;
    create_dir(dir)?;
    let problem = Problem::build(&cfg.run_config())?;
    let mut runner = Runner::new(&problem);
    let mut state = match &args.resume {
        Some(path) => {
            let s = checkpoint::load_file(path)?;
            if s.step.v.len() != problem.grid.unknowns() {
                bail!(Error::InvalidInput(format!(
                    "checkpoint has {} unknowns, the configured grid has {}",
                    s.step.v.len(),
                    problem.grid.unknowns()
                )));
            }
            s
        }
        None => runner.start_zero()?,
    };
    let started = Instant::now();
    let outcome = loop {
        if let Some(o) = runner.status(&state) {
            break o;
        }
        runner.step(&mut state)?;
        if let Some(every) = args.checkpoint_every {
            if every > 0 && state.step.k % every == 0 {
                checkpoint::save_file(&state, &dir.join("checkpoint.qadi"))?;
            }
        }
    };
    let record = runner.record(&state, outcome, started);
    write_run(dir, &problem, &record)?;
    writeln!(out, "{}", serde_json::to_string(&record.outcome)?)?;
    log::info!("{} steps in {:.1}s", record.steps, record.wall_clock_secs);
    Ok(match record.outcome {
        Outcome::BudgetExhausted { .. } => EXIT_BUDGET,
        _ => 0,
    })
}

fn verify(args: &VerifyArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let cfg = args.common.config()?;
    let (n, m) = match (args.common.n, args.common.m) {
        (Some(n), Some(m)) => (n, m),
        _ => (3, 3),
    };
    let kind = match args.kind {
        FieldKind::Unit => DegeneracyKind::Unit,
        FieldKind::Plane => DegeneracyKind::Plane { theta_star: args.theta_star, gamma: args.gamma },
        FieldKind::InversePlane => DegeneracyKind::InversePlane { theta_star: args.theta_star, gamma: args.gamma },
    };
    let report = theorem_suite(cfg.ellipse, n, m, kind, &args.fractions)?;
    let convergence = if args.convergence {
        let problem = ConvergenceProblem { ellipse: cfg.ellipse, ..ConvergenceProblem::default() };
        Some(convergence_order(&problem, &[1e-3, 5e-4, 2.5e-4])?)
    } else {
        None
    };
    #[derive(Serialize)]
    struct VerifyResult<'a> {
        report: &'a qadi::verify::PropertyReport,
        convergence: Option<qadi::verify::ConvergenceReport>,
    }
    let result = VerifyResult { report: &report, convergence };
    let dir = &args.common.out;
    create_dir(dir)?;
    write_json(&dir.join("verify.json"), &envelope("verify", &cfg, &result))?;
    let rows = report.checks.iter().map(|c| {
        let (row, col, value) = c.worst.map_or((String::new(), String::new(), String::new()), |w| {
            (w.row.to_string(), w.col.to_string(), w.value.to_string())
        });
        vec![c.name.clone(), c.tau.to_string(), c.passed.to_string(), c.margin.to_string(), row, col, value]
    });
    write_table(
        &dir.join("verify.csv"),
        &cfg,
        &["check", "tau", "passed", "margin", "row", "col", "value"],
        rows,
    )?;
    writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
    for c in report.failures() {
        log::warn!("failed: {} at tau={:e} (margin {:e})", c.name, c.tau, c.margin);
    }
    Ok(if report.passed { 0 } else { EXIT_FAILURE })
}

fn bounds(args: &BoundsArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let table = bounds_table();
    writeln!(out, "ratio,rect_area,area_lower,area_upper,ab_lower,ab_upper")?;
    for b in &table {
        let (ab_lo, ab_hi) = b.product_bounds();
        writeln!(
            out,
            "{:.3},{:.4},{:.4},{:.4},{:.4},{:.4}",
            b.ratio, b.rect_critical_area, b.lower, b.upper, ab_lo, ab_hi
        )?;
    }
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let cfg = CliConfig::default();
        write_json(&dir.join("bounds.json"), &envelope("bounds", &cfg, &table))?;
        let rows = table.iter().map(|b| {
            let (lo, hi) = b.product_bounds();
            [b.ratio, b.rect_critical_area, b.lower, b.upper, lo, hi].iter().map(f64::to_string).collect()
        });
        write_table(
            &dir.join("bounds.csv"),
            &cfg,
            &["ratio", "rect_area", "area_lower", "area_upper", "ab_lower", "ab_upper"],
            rows,
        )?;
    }
    Ok(0)
}

fn critical(args: &CriticalArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut cfg = args.common.config()?;
    if let Some(r) = args.ratio {
        cfg.critical.ratio = r;
    }
    if let Some(a) = args.rect_area {
        cfg.critical.rect_critical_area = Some(a);
    }
    if let Some(t) = args.tol {
        cfg.critical.tol_fraction = t;
    }
    cfg.validate()?;
    let rect = match cfg.critical.rect_critical_area.or_else(|| rect_critical_area(cfg.critical.ratio)) {
        Some(a) => a,
        None => bail!(Error::InvalidInput(format!(
            "no tabulated rectangle area for ratio {}; pass --rect-area",
            cfg.critical.ratio
        ))),
    };
    let search = CriticalSearch {
        ratio: cfg.critical.ratio,
        rect_critical_area: rect,
        tol_fraction: cfg.critical.tol_fraction,
        template: cfg.run_config(),
    };
    let result = critical_area_search(&search)?;
    let dir = &args.common.out;
    create_dir(dir)?;
    write_json(&dir.join("critical.json"), &envelope("critical", &cfg, &result))?;
    let rows = result.probes.iter().map(|p| {
        vec![
            p.area.to_string(),
            serde_json::to_value(p.class).map(|v| v.as_str().unwrap_or_default().to_owned()).unwrap_or_default(),
            p.quench_time.map(|t| t.to_string()).unwrap_or_default(),
            p.steps.to_string(),
            p.end_time.to_string(),
        ]
    });
    write_table(&dir.join("probes.csv"), &cfg, &["area", "class", "quench_time", "steps", "end_time"], rows)?;
    writeln!(
        out,
        "{}",
        serde_json::json!({
            "ratio": result.ratio,
            "critical_area": result.critical_area,
            "quench_time": result.quench_time,
            "within_bounds": result.within_bounds(),
            "upper_failed": result.upper_failed,
        })
    )?;
    if result.upper_failed {
        log::error!("the upper bound did not quench; raise t_max or refine the grid");
        return Ok(EXIT_FAILURE);
    }
    Ok(0)
}

fn montecarlo(args: &MonteCarloArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut cfg = args.common.config()?;
    let p = &mut cfg.perturb;
    if let Some(v) = args.order {
        p.order = v;
    }
    if let Some(v) = args.replicates {
        p.replicates = v;
    }
    if let Some(v) = args.seed {
        p.seed = v;
    }
    if let Some(v) = args.mode {
        p.mode = match v {
            ModeArg::OnceAt => PerturbModeName::OnceAt,
            ModeArg::Continuous => PerturbModeName::Continuous,
        };
    }
    if let Some(v) = args.threshold {
        p.threshold = v;
    }
    if let Some(v) = args.probability {
        p.probability = v;
    }
    cfg.validate()?;
    let stats = monte_carlo(&cfg.run_config(), &cfg.perturb.spec())?;
    let dir = &args.common.out;
    create_dir(dir)?;
    write_json(&dir.join("montecarlo.json"), &envelope("montecarlo", &cfg, &stats))?;
    let rows = stats.replicates.iter().map(|r| {
        vec![
            r.replicate.to_string(),
            r.seed.to_string(),
            r.location.0.to_string(),
            r.location.1.to_string(),
            r.quench_time.to_string(),
            r.state_diff.to_string(),
            r.rel_time_diff.to_string(),
            r.injections.to_string(),
        ]
    });
    write_table(
        &dir.join("replicates.csv"),
        &cfg,
        &["replicate", "seed", "x", "y", "quench_time", "state_diff", "rel_time_diff", "injections"],
        rows,
    )?;
    writeln!(out, "{}", serde_json::to_string_pretty(&stats)?)?;
    Ok(0)
}

fn degeneracy(args: &DegeneracyArgs, out: &mut dyn Write) -> anyhow::Result<i32> {
    let mut cfg = args.common.config()?;
    if let Some(k) = args.kind {
        cfg.study.kind = match k {
            StudyArg::Plane => StudyKind::Plane,
            StudyArg::InversePlane => StudyKind::InversePlane,
        };
    }
    if let Some(g) = args.gamma {
        cfg.study.gamma = g;
    }
    if let Some(t) = &args.thetas {
        cfg.study.thetas = t.clone();
    }
    // the anchored fields are outside the step-size theory; do not abort on dips
    cfg.stop.check_monotonicity = false;
    cfg.validate()?;
    let study = DegeneracyStudy {
        ellipse: cfg.ellipse,
        kind: cfg.study.kind,
        thetas: cfg.study.thetas.clone(),
        gamma: cfg.study.gamma,
        template: cfg.run_config(),
    };
    let result = degeneracy_study(&study)?;
    let dir = &args.common.out;
    create_dir(dir)?;
    write_json(&dir.join("degeneracy.json"), &envelope("degeneracy", &cfg, &result))?;
    let rows = result.runs.iter().map(|r| {
        [
            r.theta_star,
            r.anchor.0,
            r.anchor.1,
            r.location.0,
            r.location.1,
            r.quench_time,
            r.distance,
            r.predicted.0,
            r.predicted.1,
            r.prediction_error,
        ]
        .iter()
        .map(f64::to_string)
        .collect()
    });
    write_table(
        &dir.join("degeneracy.csv"),
        &cfg,
        &[
            "theta_star", "anchor_x", "anchor_y", "x", "y", "quench_time", "distance", "predicted_x", "predicted_y",
            "prediction_error",
        ],
        rows,
    )?;
    writeln!(
        out,
        "{}",
        serde_json::json!({
            "kind": result.kind,
            "mean_distance": result.mean_distance,
            "std_distance": result.std_distance,
            "relative_spread": result.relative_spread(),
        })
    )?;
    Ok(0)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!(Error::InvalidInput("--jobs must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match &cli.command {
        Command::Solve(a) => solve(a, out),
        Command::Verify(a) => verify(a, out),
        Command::Bounds(a) => bounds(a, out),
        Command::Critical(a) => critical(a, out),
        Command::Montecarlo(a) => montecarlo(a, out),
        Command::Degeneracy(a) => degeneracy(a, out),
    }
}

/// Parse `args` and run; returns the process exit code.
fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            code_for(&e)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invoke(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("qadi").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn bounds_prints_seven_rows() {
        let dir = tmp();
        let out = dir.path().to_str().unwrap();
        let (code, text) = invoke(&["bounds", "--out", out]);
        assert_eq!(code, 0);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[4], "0.500,5.5986,4.3971,8.7943,1.3997,2.7993");
        assert!(dir.path().join("bounds.csv").exists());
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("bounds.json")).unwrap()).unwrap();
        assert_eq!(json["schema"], SCHEMA);
        assert_eq!(json["version"], VERSION);
    }

    #[test]
    fn malformed_config_exits_one() {
        let dir = tmp();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[step]\ntau0 = 1e-4\ntau0 = = 2\n").unwrap();
        let out = dir.path().join("o");
        let (code, _) = invoke(&["solve", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_INVALID);

        std::fs::write(&path, "[stop]\nt_max = -1.0\n").unwrap();
        let (code, _) = invoke(&["solve", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_INVALID);
        std::fs::write(&path, "[critical]\nratio = 1.5\n").unwrap();
        let (code, _) = invoke(&["critical", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code, EXIT_INVALID);
        let (code, _) = invoke(&["solve", "--no-such-flag"]);
        assert_eq!(code, EXIT_INVALID);
    }

    #[test]
    fn budget_exhaustion_exits_three() {
        let dir = tmp();
        let out = dir.path().to_str().unwrap();
        let (code, text) = invoke(&["solve", "--n", "6", "--m", "7", "--max-steps", "5", "--out", out]);
        assert_eq!(code, EXIT_BUDGET);
        assert!(text.contains("budget_exhausted"));
        for f in ["run.json", "series.csv", "final-snapshot.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
    }

    #[test]
    fn shrunken_domain_is_steady() {
        let dir = tmp();
        let out = dir.path().to_str().unwrap();
        let (code, text) = invoke(&["solve", "--area-scale", "0.04", "--n", "12", "--m", "13", "--out", out]);
        assert_eq!(code, 0, "{text}");
        assert!(text.contains("steady"), "{text}");
    }

    #[test]
    fn quench_writes_snapshot() {
        let dir = tmp();
        let out = dir.path().to_str().unwrap();
        let (code, text) = invoke(&["solve", "--n", "8", "--m", "9", "--tau-min", "1e-7", "--out", out]);
        assert_eq!(code, 0);
        assert!(text.contains("quenched"), "{text}");
        let (header, rows) = qadi::output::read_table(&dir.path().join("final-snapshot.csv")).unwrap();
        assert_eq!(header, ["i", "j", "mu", "theta", "x", "y", "u", "dudt"]);
        assert_eq!(rows.len(), 8 * 10);
    }

    #[test]
    fn resume_matches_straight_run() {
        let a = tmp();
        let b = tmp();
        let common = ["--n", "6", "--m", "7", "--tau-min", "1e-7"];
        let mut args = vec!["solve", "--checkpoint-every", "1000", "--max-steps", "2500", "--out"];
        args.push(a.path().to_str().unwrap());
        args.extend(common);
        assert_eq!(invoke(&args).0, EXIT_BUDGET);

        let ckpt = a.path().join("checkpoint.qadi");
        let mut args = vec!["solve", "--resume", ckpt.to_str().unwrap(), "--out", b.path().to_str().unwrap()];
        args.extend(common);
        let (code, resumed) = invoke(&args);
        assert_eq!(code, 0);

        let c = tmp();
        let mut args = vec!["solve", "--out", c.path().to_str().unwrap()];
        args.extend(common);
        let (_, straight) = invoke(&args);
        assert_eq!(resumed, straight);
        let snap = |d: &tempfile::TempDir| std::fs::read_to_string(d.path().join("final-snapshot.csv")).unwrap();
        assert_eq!(snap(&b), snap(&c));
    }

    #[test]
    fn monotonicity_violation_exits_two() {
        let dir = tmp();
        let out = dir.path().to_str().unwrap();
        let (code, _) = invoke(&["solve", "--major", "3", "--minor", "2", "--n", "25", "--m", "26", "--out", out]);
        assert_eq!(code, EXIT_MONOTONICITY);
    }

    #[test]
    fn verify_reports_pass() {
        let dir = tmp();
        let out = dir.path().to_str().unwrap();
        let (code, text) =
            invoke(&["verify", "--major", "6", "--minor", "5.5", "--n", "3", "--m", "15", "--out", out]);
        assert_eq!(code, 0, "{text}");
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["report"]["passed"], true);
        assert!(dir.path().join("verify.csv").exists());
    }

    #[test]
    fn montecarlo_is_reproducible() {
        let args = |d: &tempfile::TempDir| {
            vec![
                "montecarlo".to_string(),
                "--major=3".into(),
                "--minor=2".into(),
                "--n=6".into(),
                "--m=7".into(),
                "--tau0=1e-3".into(),
                "--tau-min=1e-6".into(),
                "--order=5".into(),
                "--replicates=3".into(),
                "--seed=7".into(),
                format!("--out={}", d.path().display()),
            ]
        };
        let (a, b) = (tmp(), tmp());
        let mut first = Vec::new();
        assert_eq!(run(std::iter::once("qadi".to_string()).chain(args(&a)), &mut first), 0);
        let mut second = Vec::new();
        assert_eq!(run(std::iter::once("qadi".to_string()).chain(args(&b)), &mut second), 0);
        assert_eq!(first, second);
        let csv = |d: &tempfile::TempDir| std::fs::read_to_string(d.path().join("replicates.csv")).unwrap();
        assert_eq!(csv(&a), csv(&b));
    }

    #[test]
    fn degeneracy_on_a_small_domain_fails() {
        let dir = tmp();
        let out = dir.path().to_str().unwrap();
        let (code, _) = invoke(&[
            "degeneracy", "--major", "1", "--minor", "0.6", "--n", "5", "--m", "7", "--thetas", "0", "--out", out,
        ]);
        assert_eq!(code, EXIT_FAILURE);
    }
}

//! CSV and JSON emission for run records and experiment results.
//!
//! Every CSV starts with `#` lines carrying the artifact version and the
//! effective configuration as JSON, followed by a header row. Floats are
//! written in shortest round-trip form, so identical runs give identical
//! files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::solver::{Problem, RunRecord, SCHEMA, VERSION};

/// Write the `#` preamble naming the version and echoing `config`.
pub fn write_preamble<W: Write, C: Serialize>(out: &mut W, config: &C) -> Result<()> {
    writeln!(out, "# qadi {VERSION} schema {SCHEMA}")?;
    writeln!(out, "# config: {}", serde_json::to_string(config)?)?;
    Ok(())
}

/// Write a table with preamble, header and rows.
pub fn write_table<C, R>(path: &Path, config: &C, header: &[&str], rows: R) -> Result<()>
where
    C: Serialize,
    R: IntoIterator<Item = Vec<String>>,
{
    let mut file = BufWriter::new(File::create(path)?);
    write_preamble(&mut file, config)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    file.flush()?;
    Ok(())
}

pub fn write_series_csv(path: &Path, record: &RunRecord) -> Result<()> {
    let rows = record.series.iter().map(|p| {
        vec![
            p.k.to_string(),
            p.t.to_string(),
            p.tau.to_string(),
            p.max_v.to_string(),
            p.max_dvdt.to_string(),
        ]
    });
    write_table(path, &record.config, &["k", "t", "tau", "max_v", "max_dvdt"], rows)
}

/// Final solution and its time derivative at every interior node.
pub fn write_snapshot_csv(path: &Path, problem: &Problem, record: &RunRecord) -> Result<()> {
    let grid = &problem.grid;
    let rows = (0..grid.unknowns()).map(|k| {
        let (i, j) = grid.node_of(k);
        let (mu, theta) = grid.coords(i, j);
        let (x, y) = problem.map.to_cartesian(mu, theta);
        let dudt = record.final_dudt.get(k).copied().unwrap_or(f64::NAN);
        vec![
            i.to_string(),
            j.to_string(),
            mu.to_string(),
            theta.to_string(),
            x.to_string(),
            y.to_string(),
            record.final_v[k].to_string(),
            dudt.to_string(),
        ]
    });
    write_table(path, &record.config, &["i", "j", "mu", "theta", "x", "y", "u", "dudt"], rows)
}

/// `run.json`, `series.csv` and `final-snapshot.csv` in `dir`.
pub fn write_run(dir: &Path, problem: &Problem, record: &RunRecord) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("run.json"), record)?;
    write_series_csv(&dir.join("series.csv"), record)?;
    write_snapshot_csv(&dir.join("final-snapshot.csv"), problem, record)
}

/// Read a CSV written by [`write_table`], skipping the preamble.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(str::to_owned).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::EllipseSpec;
    use crate::solver::{run_problem, GridChoice, RunConfig};
    use crate::stepper::StepConfig;

    #[test]
    fn run_files_round_trip() {
        let cfg = RunConfig {
            ellipse: EllipseSpec { major: 1.0, minor: 0.5 },
            grid: GridChoice::Uniform { n: 4, m: 5 },
            step: StepConfig { tau0: 1e-3, ..Default::default() },
            max_steps: 20,
            ..RunConfig::default()
        };
        let problem = Problem::build(&cfg).unwrap();
        let record = run_problem(&problem).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run(dir.path(), &problem, &record).unwrap();

        let (header, rows) = read_table(&dir.path().join("final-snapshot.csv")).unwrap();
        assert_eq!(header, ["i", "j", "mu", "theta", "x", "y", "u", "dudt"]);
        assert_eq!(rows.len(), problem.grid.unknowns());
        let u: f64 = rows[3][6].parse().unwrap();
        assert_eq!(u.to_bits(), record.final_v[3].to_bits());

        let text = std::fs::read_to_string(dir.path().join("series.csv")).unwrap();
        assert!(text.starts_with(&format!("# qadi {VERSION}")));
        assert!(text.lines().nth(1).unwrap().contains("\"steady_eps\""));

        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
        assert_eq!(json["schema"], SCHEMA);
        assert_eq!(json["config"]["grid"]["n"], 4);
    }
}

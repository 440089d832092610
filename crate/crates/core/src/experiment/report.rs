//! Reading `runs.csv` back and writing the aggregate report tables.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::ExperimentError;
use crate::envs::EnvId;
use crate::eval::{aggregate, AggregateConfig, Report, RunRecord};
use crate::tamer::{Checkpoint, Variant};

pub const RUNS_HEADER: &str = "env,variant,seed,env_steps,normalized_score,feedback_count,cf_count";

/// Parses `runs.csv`. Every malformed value is reported with its 1-based
/// line number and column name.
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let file = fs::File::open(path).map_err(|e| ExperimentError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let schema = |row: usize, column: &str, message: String| ExperimentError::Schema {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let header = reader
        .headers()
        .map_err(|e| schema(1, "header", e.to_string()))?
        .clone();
    let expected: Vec<&str> = RUNS_HEADER.split(',').collect();
    if header.iter().collect::<Vec<_>>() != expected {
        let col = expected
            .iter()
            .zip(header.iter().chain(std::iter::repeat("")))
            .find(|(e, h)| **e != *h)
            .map(|(e, _)| *e)
            .unwrap_or("header");
        return Err(schema(1, col, format!("expected header `{RUNS_HEADER}`")));
    }

    let mut order: Vec<(EnvId, Variant, u64)> = Vec::new();
    let mut runs: BTreeMap<(EnvId, Variant, u64), Vec<Checkpoint>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| schema(line, "row", e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(schema(
                line,
                "row",
                format!("expected {} fields, found {}", expected.len(), rec.len()),
            ));
        }
        fn field<T: std::str::FromStr>(
            rec: &csv::StringRecord,
            idx: usize,
        ) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            rec[idx].trim().parse::<T>().map_err(|e| format!("`{}`: {e}", &rec[idx]))
        }
        let at = |idx: usize| expected[idx];
        let env: EnvId = field(&rec, 0).map_err(|m| schema(line, at(0), m))?;
        let variant: Variant = field(&rec, 1).map_err(|m| schema(line, at(1), m))?;
        let seed: u64 = field(&rec, 2).map_err(|m| schema(line, at(2), m))?;
        let env_steps: u64 = field(&rec, 3).map_err(|m| schema(line, at(3), m))?;
        let score: f64 = field(&rec, 4).map_err(|m| schema(line, at(4), m))?;
        if !score.is_finite() {
            return Err(schema(line, at(4), "score must be finite".into()));
        }
        let feedback_count: u64 = field(&rec, 5).map_err(|m| schema(line, at(5), m))?;
        let cf_count: u64 = field(&rec, 6).map_err(|m| schema(line, at(6), m))?;
        if cf_count > feedback_count {
            return Err(schema(line, at(6), "cf_count exceeds feedback_count".into()));
        }
        let key = (env, variant, seed);
        let list = runs.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        if let Some(prev) = list.last() {
            if env_steps <= prev.env_steps {
                return Err(schema(line, at(3), "env_steps must increase within a run".into()));
            }
        }
        list.push(Checkpoint {
            env_steps,
            score,
            feedback_count,
            cf_count,
        });
    }
    if order.is_empty() {
        return Err(schema(2, "row", "no data rows".into()));
    }
    Ok(order
        .into_iter()
        .map(|key| RunRecord {
            env: key.0,
            variant: key.1,
            seed: key.2,
            checkpoints: runs.remove(&key).unwrap_or_default(),
        })
        .collect())
}

fn to_csv<T: serde::Serialize>(rows: &[T], header: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        return format!("{header}\n");
    }
    for r in rows {
        w.serialize(r).expect("row serialises");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8")
}

/// Writes `curves.csv`, `gaps.csv`, `poi.csv` and `report.json` into `dir`.
pub fn write_report(report: &Report, dir: &Path) -> Result<(), ExperimentError> {
    let files = [
        ("curves.csv", to_csv(&report.curves, "env,variant,env_steps,iqm,ci_low,ci_high,n")),
        ("gaps.csv", to_csv(&report.gaps, "env,variant,iqm_gap,ci_low,ci_high,n")),
        ("poi.csv", to_csv(&report.poi, "env,variant_x,variant_y,poi,ci_low,ci_high")),
        ("report.json", serde_json::to_string_pretty(report).expect("report serialises")),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| ExperimentError::io(&path, e))?;
    }
    Ok(())
}

/// `stats <dir>`: aggregates `dir/runs.csv` and writes the report next to it.
/// With `compare`, only that pair (in both directions) gets POI rows.
pub fn run_stats(dir: &Path, compare: Option<(Variant, Variant)>) -> Result<Report, ExperimentError> {
    let records = read_runs(&dir.join("runs.csv"))?;
    let cfg = AggregateConfig {
        compare: compare.map(|(a, b)| vec![(a, b), (b, a)]),
        ..AggregateConfig::default()
    };
    let report = aggregate(&records, &cfg)?;
    write_report(&report, dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_csv(body: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        fs::write(&path, body).unwrap();
        (dir, path)
    }

    fn diagnose(body: &str) -> (usize, String) {
        let (_d, path) = write_csv(body);
        match read_runs(&path) {
            Err(ExperimentError::Schema { row, column, .. }) => (row, column),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn reports_row_and_column_of_bad_values() {
        let good = "gridworld,cfa,0,0,0.5,0,0\n";
        assert_eq!(
            diagnose(&format!("{RUNS_HEADER}\n{good}gridworld,cfa,0,500,abc,1,0\n")),
            (3, "normalized_score".into())
        );
        assert_eq!(
            diagnose(&format!("{RUNS_HEADER}\nmars,cfa,0,0,0.5,0,0\n")),
            (2, "env".into())
        );
        assert_eq!(
            diagnose(&format!("{RUNS_HEADER}\n{good}{good}")),
            (3, "env_steps".into())
        );
        assert_eq!(
            diagnose("env,variant,seed,steps,normalized_score,feedback_count,cf_count\n"),
            (1, "env_steps".into())
        );
        assert_eq!(diagnose(&format!("{RUNS_HEADER}\n")), (2, "row".into()));
        assert_eq!(
            diagnose(&format!("{RUNS_HEADER}\ngridworld,cfa,0,0,0.5,0,3\n")),
            (2, "cf_count".into())
        );
    }

    #[test]
    fn stats_writes_all_tables() {
        let mut body = format!("{RUNS_HEADER}\n");
        for (v, base) in [("vanilla", 0.2), ("cfa", 0.4)] {
            for seed in 0..4 {
                for (k, steps) in [0, 500, 1000].iter().enumerate() {
                    let s = base + 0.1 * k as f64 + 0.01 * seed as f64;
                    body.push_str(&format!("gridworld,{v},{seed},{steps},{s},{k},0\n"));
                }
            }
        }
        let (dir, _) = write_csv(&body);
        let report = run_stats(dir.path(), Some((Variant::Cfa, Variant::Vanilla))).unwrap();
        assert_eq!(report.poi.len(), 2);
        assert_eq!(report.curves.len(), 6);
        for f in ["curves.csv", "gaps.csv", "poi.csv", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let poi = report.poi("gridworld", Variant::Cfa, Variant::Vanilla).unwrap();
        assert_eq!(poi.poi, 1.0);
    }
}

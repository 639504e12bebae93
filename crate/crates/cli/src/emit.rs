//! Atomic writers for reports, tables and plot data.

use crate::report::RunReport;
use avglemma_core::Table;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// An I/O failure together with the path involved.
#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct EmitError {
    pub path: PathBuf,
    pub message: String,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EmitError {
    EmitError { path: path.to_path_buf(), message: e.to_string() }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EmitError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// CSV text of a table with a header row.
pub fn table_csv(table: &Table) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

/// Two-column, space-separated plot data.
pub fn plot_text(points: &[(f64, f64)]) -> String {
    points.iter().map(|(x, y)| format!("{x} {y}\n")).collect()
}

/// Files produced by one run, in emission order.
#[derive(Debug, Default, Clone)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub plots: Vec<(String, Vec<(f64, f64)>)>,
}

impl Artifacts {
    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }
    pub fn plot(&mut self, name: impl Into<String>, points: Vec<(f64, f64)>) {
        self.plots.push((name.into(), points));
    }
    /// File names relative to the output directory.
    pub fn file_names(&self, plots: bool) -> Vec<String> {
        let mut names: Vec<String> = self.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
        if plots {
            names.extend(self.plots.iter().map(|(n, _)| format!("{n}.dat")));
        }
        names
    }
}

/// Writes the tables, plot files and `report.json` into `dir`.
pub fn emit(dir: &Path, report: &RunReport, artifacts: &Artifacts, plots: bool) -> Result<(), EmitError> {
    for t in &artifacts.tables {
        let path = dir.join(format!("{}.csv", t.name));
        let bytes = table_csv(t).map_err(|e| io_err(&path, e))?;
        write_atomic(&path, &bytes)?;
    }
    if plots {
        for (name, points) in &artifacts.plots {
            write_atomic(&dir.join(format!("{name}.dat")), plot_text(points).as_bytes())?;
        }
    }
    write_atomic(&dir.join("report.json"), report.to_canonical_json().as_bytes())
}

/// Writes the wall-clock sidecar `timing.json`.
pub fn emit_timing(dir: &Path, seconds: f64, threads: usize) -> Result<(), EmitError> {
    let text = format!("{{\n  \"threads\": {threads},\n  \"wall_seconds\": {seconds}\n}}\n");
    write_atomic(&dir.join("timing.json"), text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_table_header() {
        let mut t = Table::new("decay", &["lambda", "magnitude", "bound", "ratio"]);
        t.push(vec![1.0, 0.5, 3.0, 1.0 / 6.0]);
        let text = String::from_utf8(table_csv(&t).unwrap()).unwrap();
        assert!(text.starts_with("lambda,magnitude,bound,ratio\n"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn csv_quotes_awkward_headers() {
        let t = Table::new("q", &["a,b", "plain"]);
        let text = String::from_utf8(table_csv(&t).unwrap()).unwrap();
        assert_eq!(text, "\"a,b\",plain\n");
    }

    #[test]
    fn re_emitting_gives_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RunReport::new("decay", "abc".into(), Some(3));
        r.result = serde_json::json!({"z": 1.5, "a": [1, 2]});
        r.settle();
        let mut art = Artifacts::default();
        art.plot("curve", vec![(1.0, 2.0), (3.0, 4.5)]);
        emit(dir.path(), &r, &art, true).unwrap();
        let first = std::fs::read(dir.path().join("report.json")).unwrap();
        emit(dir.path(), &r, &art, true).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("report.json")).unwrap());
        assert_eq!(std::fs::read_to_string(dir.path().join("curve.dat")).unwrap(), "1 2\n3 4.5\n");
    }

    #[test]
    fn unwritable_directory_reports_its_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"x").unwrap();
        let err = write_atomic(&blocker.join("report.json"), b"{}").unwrap_err();
        assert!(err.path.starts_with(&blocker));
    }
}

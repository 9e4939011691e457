//! Result rows, the CSV sink and the JSON sidecar.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::slope::SlopeFit;
use crate::HarnessError;

pub const CSV_HEADER: &str = "run_id,seed,T,algo,metric,value,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub seed: u64,
    /// Sample size or horizon; 0 on aggregate rows such as slopes.
    #[serde(rename = "T")]
    pub t: usize,
    pub algo: String,
    pub metric: String,
    pub value: f64,
    pub wall_ms: f64,
}

/// Privacy spend of one algorithm across all of its runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub declared_alpha: f64,
    pub declared_beta: f64,
    /// Largest composed (α, β) over the runs.
    pub max_alpha: f64,
    pub max_beta: f64,
    pub runs: usize,
    /// Runs whose ledger exceeded the declared budget.
    pub over_budget: usize,
    /// Runs whose channels added no noise.
    pub noise_free: usize,
}

impl LedgerSummary {
    pub fn new(declared_alpha: f64, declared_beta: f64) -> Self {
        Self { declared_alpha, declared_beta, max_alpha: 0.0, max_beta: 0.0, runs: 0, over_budget: 0, noise_free: 0 }
    }

    pub fn add(&mut self, ledger: &iwpriv::privacy::PrivacyLedger) {
        let (a, b) = ledger.totals();
        self.max_alpha = self.max_alpha.max(a);
        self.max_beta = self.max_beta.max(b);
        self.runs += 1;
        if !ledger.within(self.declared_alpha, self.declared_beta) {
            self.over_budget += 1;
        }
        if ledger.noise_free {
            self.noise_free += 1;
        }
    }

    pub fn within_declared(&self) -> bool {
        self.over_budget == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub run_id: String,
    pub algo: String,
    pub message: String,
}

/// Per-run facts about a bandit run that are not metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditDiagnostics {
    pub run_id: String,
    /// Elimination only; `None` for SquareCB.
    pub optimal_survived: Option<bool>,
    pub ci_events_held: Option<bool>,
    pub spanner_violations: usize,
    /// Epochs whose estimator failed and kept the previous policy.
    pub failed_epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub csv: String,
    pub config: ExperimentConfig,
    pub ledgers: BTreeMap<String, LedgerSummary>,
    pub slopes: Vec<SlopeFit>,
    pub failures: Vec<Failure>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bandit: Vec<BanditDiagnostics>,
}

/// `<out>.config.json` next to the CSV.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place,
/// so readers never see a partial file.
fn replace_atomically(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| HarnessError::Io(e.error))?;
    Ok(())
}

/// Writes the CSV and its sidecar.
pub fn write_outputs(out: &Path, rows: &[ResultRow], sidecar: &Sidecar) -> Result<(), HarnessError> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    replace_atomically(out, &buf)?;
    let mut json = serde_json::to_vec_pretty(sidecar).map_err(|e| HarnessError::Numerical(e.to_string()))?;
    json.push(b'\n');
    replace_atomically(&sidecar_path(out), &json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_fixed() {
        let row = ResultRow {
            run_id: "a".into(),
            seed: 1,
            t: 8,
            algo: "iw-dp".into(),
            metric: "l2_err".into(),
            value: 0.25,
            wall_ms: 0.0,
        };
        let mut buf = Vec::new();
        write_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\na,1,8,iw-dp,l2_err,0.25,0.0\n"));
        let mut empty = Vec::new();
        write_csv(&[], &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn sidecar_name_appends() {
        assert_eq!(sidecar_path(Path::new("out/r.csv")), PathBuf::from("out/r.csv.config.json"));
    }
}

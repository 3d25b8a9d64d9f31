//! Report emission: versioned CSV rows (one per path/time/term) and a JSON
//! summary with term statistics, residual quantiles, condition values, and
//! assertion outcomes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// One report row: a named value at `(path, t)` within an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub path: u64,
    pub t: f64,
    pub term: String,
    pub value: f64,
}

/// Write rows as CSV with the version header `schema=N` on the first line.
pub fn write_csv<W: Write>(rows: &[ReportRow], out: &mut W) -> Result<()> {
    writeln!(out, "schema={CSV_SCHEMA_VERSION}")?;
    writeln!(out, "experiment,path,t,term,value")?;
    for r in rows {
        writeln!(out, "{},{},{:.17e},{},{:.17e}", r.experiment, r.path, r.t, r.term, r.value)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Quantiles {
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    pub max_abs: f64,
}

/// Empirical quantiles of a sample (nearest-rank), plus the max magnitude.
pub fn quantiles(values: &[f64]) -> Quantiles {
    if values.is_empty() {
        return Quantiles::default();
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| v[((q * (v.len() - 1) as f64).round() as usize).min(v.len() - 1)];
    Quantiles {
        q10: pick(0.1),
        q50: pick(0.5),
        q90: pick(0.9),
        max_abs: v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
    }
}

/// `(mean, standard error)` of a sample.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub kind: String,
    pub k_paths: u64,
    pub master_seed: u64,
    pub eval_time: f64,
    pub term_means: BTreeMap<String, f64>,
    pub term_std_errs: BTreeMap<String, f64>,
    pub residual_quantiles: Quantiles,
    pub condition_values: BTreeMap<String, f64>,
    pub assertions: Vec<AssertionOutcome>,
    pub passed: bool,
}

impl Summary {
    pub fn new(experiment: &str, kind: &str, k_paths: u64, master_seed: u64, eval_time: f64) -> Self {
        Summary {
            experiment: experiment.to_string(),
            kind: kind.to_string(),
            k_paths,
            master_seed,
            eval_time,
            term_means: BTreeMap::new(),
            term_std_errs: BTreeMap::new(),
            residual_quantiles: Quantiles::default(),
            condition_values: BTreeMap::new(),
            assertions: Vec::new(),
            passed: true,
        }
    }

    /// Record per-path samples of a named term as mean + standard error.
    pub fn record_term(&mut self, name: &str, samples: &[f64]) {
        let (m, se) = mean_stderr(samples);
        self.term_means.insert(name.to_string(), m);
        self.term_std_errs.insert(name.to_string(), se);
    }

    /// Record an assertion `|value| <= bound`; updates the overall verdict.
    pub fn assert_le(&mut self, name: &str, value: f64, bound: f64) {
        let passed = value.abs() <= bound;
        self.passed &= passed;
        self.assertions.push(AssertionOutcome {
            name: name.to_string(),
            passed,
            value,
            bound,
        });
    }

    /// First failing assertion, if any.
    pub fn first_failure(&self) -> Option<&AssertionOutcome> {
        self.assertions.iter().find(|a| !a.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| crate::error::Error::config(format!("summary serialization: {e}")))
    }
}

/// Write `<name>.csv` and `<name>_summary.json` under `out_dir`.
pub fn write_reports(out_dir: &Path, name: &str, rows: &[ReportRow], summary: &Summary) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut csv = std::fs::File::create(out_dir.join(format!("{name}.csv")))?;
    write_csv(rows, &mut csv)?;
    std::fs::write(out_dir.join(format!("{name}_summary.json")), summary.to_json()?)?;
    Ok(())
}

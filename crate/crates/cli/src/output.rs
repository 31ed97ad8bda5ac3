//! Result records and the files written for each experiment.
//!
//! Everything in `summary.json` is a pure function of the configuration and
//! seed. Wall-clock times go to `timing.json` so that summaries can be
//! compared byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use bouncy::bps::RunStats;
use bouncy::estimators::PathEstimate;
use serde::Serialize;
use serde_json::Value;

/// Event counts of one run. `events = bounces + refreshes + rejections`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Tallies {
    pub events: u64,
    pub bounces: u64,
    pub refreshes: u64,
    pub rejections: u64,
}

impl From<RunStats> for Tallies {
    fn from(s: RunStats) -> Self {
        Self {
            events: s.total_events(),
            bounces: s.bounces,
            refreshes: s.refreshes,
            rejections: s.rejections,
        }
    }
}

impl Tallies {
    pub fn is_conserved(&self) -> bool {
        self.events == self.bounces + self.refreshes + self.rejections
    }

    pub fn add(&mut self, other: Tallies) {
        self.events += other.events;
        self.bounces += other.bounces;
        self.refreshes += other.refreshes;
        self.rejections += other.rejections;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub std_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

impl Estimate {
    pub fn new(name: impl Into<String>, e: PathEstimate) -> Self {
        Self {
            name: name.into(),
            value: e.value,
            std_error: e.std_error,
            reference: None,
        }
    }

    pub fn against(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self
    }
}

/// One replicate (or one cell of a sweep) of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateSummary {
    pub label: String,
    pub replicate: usize,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tallies: Tallies,
    pub estimates: Vec<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub extra: Value,
}

impl ReplicateSummary {
    pub fn ok(label: impl Into<String>, replicate: usize, tallies: Tallies) -> Self {
        Self {
            label: label.into(),
            replicate,
            status: "ok",
            error: None,
            tallies,
            estimates: Vec::new(),
            ess: None,
            extra: Value::Null,
        }
    }

    /// A replicate aborted by a sampler error.
    pub fn failed(label: impl Into<String>, replicate: usize, error: impl std::fmt::Display) -> Self {
        Self {
            status: "error",
            error: Some(error.to_string()),
            ..Self::ok(label, replicate, Tallies::default())
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }
}

/// A named pass/fail check computed by the runner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Delimiter-separated table with a header row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<H: Into<String>>(file: impl Into<String>, header: impl IntoIterator<Item = H>) -> Self {
        Self {
            file: file.into(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Formats a float for tables: shortest round-trip representation.
pub fn num(x: f64) -> String {
    let mut s = String::new();
    write!(s, "{x}").expect("writing to a string");
    s
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub results: Value,
    pub replicates: Vec<ReplicateSummary>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    /// Wall-clock seconds per labelled run.
    pub timings: Vec<(String, f64)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }

    /// The deterministic summary document.
    pub fn summary(&self, kind: &str, seed: u64, replicates: usize) -> Value {
        serde_json::json!({
            "kind": kind,
            "seed": seed,
            "replicates": replicates,
            "results": self.results,
            "checks": self.checks,
            "runs": self.replicates,
        })
    }

    pub fn summary_text(&self, kind: &str, seed: u64, replicates: usize) -> String {
        let mut s = serde_json::to_string_pretty(&self.summary(kind, seed, replicates)).expect("serialisable");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path, kind: &str, seed: u64, replicates: usize) -> anyhow::Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let put = |name: &str, body: &str| {
            let path = dir.join(name);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
        };
        put("summary.json", &self.summary_text(kind, seed, replicates))?;
        let timing: serde_json::Map<String, Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), Value::from(*v))).collect();
        put("timing.json", &(serde_json::to_string_pretty(&timing)? + "\n"))?;
        for t in &self.tables {
            put(&t.file, &t.to_csv())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_row() {
        let mut t = Table::new("x.csv", ["a", "b"]);
        t.push(vec![num(1.5), num(2.0)]);
        assert_eq!(t.to_csv(), "a,b\n1.5,2\n");
    }

    #[test]
    fn failed_replicates_keep_the_message() {
        let r = ReplicateSummary::failed("queue", 3, "bound violated");
        assert!(!r.is_ok());
        assert_eq!(r.error.as_deref(), Some("bound violated"));
        assert!(r.tallies.is_conserved());
    }
}

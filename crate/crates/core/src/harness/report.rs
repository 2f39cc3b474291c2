use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::bounds::{InequalityCheck, Verdict};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
}

/// One measured quantity against one bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub index: usize,
    pub check: String,
    pub params: BTreeMap<String, f64>,
    pub measured: f64,
    pub pad: f64,
    pub bound: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl Row {
    pub fn new(check: &str, measured: f64, pad: f64, bound: f64) -> Self {
        Row {
            index: 0,
            check: check.to_string(),
            params: BTreeMap::new(),
            measured,
            pad,
            bound,
            verdict: Verdict::compare(measured, pad, bound),
            extra: BTreeMap::new(),
        }
    }

    /// A row whose bound does not apply at these parameters.
    pub fn not_applicable(check: &str, measured: f64) -> Self {
        Row { verdict: Verdict::NotApplicable, ..Row::new(check, measured, 0.0, f64::NAN) }
    }

    /// A row from a fallible bound: unmet preconditions and infinite bounds
    /// give `not_applicable`, other errors propagate.
    pub fn from_bound(check: &str, measured: f64, pad: f64, bound: Result<f64>) -> Result<Self> {
        match bound {
            Ok(b) if b.is_finite() => Ok(Row::new(check, measured, pad, b)),
            Ok(_) | Err(Error::Precondition(_)) => Ok(Row { pad, ..Row::not_applicable(check, measured) }),
            Err(e) => Err(e),
        }
    }

    pub fn from_check(c: &InequalityCheck) -> Self {
        Row {
            index: 0,
            check: c.name.clone(),
            params: c.at.clone(),
            measured: c.measured,
            pad: c.pad,
            bound: c.bound,
            verdict: c.verdict,
            extra: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn params(mut self, p: &BTreeMap<String, f64>) -> Self {
        self.params.extend(p.iter().map(|(k, v)| (k.clone(), *v)));
        self
    }

    pub fn extra(mut self, key: &str, value: f64) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }
}

/// A point of plot data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub se: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rows: usize,
    pub holds: usize,
    pub inconclusive: usize,
    pub violated: usize,
    pub not_applicable: usize,
    pub inconclusive_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub metadata: Metadata,
    pub summary: Summary,
    pub rows: Vec<Row>,
    pub series: Vec<SeriesPoint>,
    /// Derived quantities fed into the bounds.
    pub constants: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        ExperimentReport {
            metadata: Metadata {
                experiment: cfg.experiment.name().to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                seed: cfg.seed,
                config_hash: cfg.hash(),
            },
            summary: Summary::default(),
            rows: Vec::new(),
            series: Vec::new(),
            constants: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn point(&mut self, series: &str, x: f64, y: f64, se: f64) {
        self.series.push(SeriesPoint { series: series.to_string(), x, y, se });
    }

    pub fn constant(&mut self, key: &str, value: f64) {
        self.constants.insert(key.to_string(), value);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        let note = note.into();
        if !self.notes.contains(&note) {
            self.notes.push(note);
        }
    }

    /// Numbers the rows and fills the summary.
    pub fn finish(mut self) -> Self {
        let mut s = Summary::default();
        for (i, r) in self.rows.iter_mut().enumerate() {
            r.index = i;
            s.rows += 1;
            match r.verdict {
                Verdict::Holds => s.holds += 1,
                Verdict::Inconclusive => s.inconclusive += 1,
                Verdict::Violated => s.violated += 1,
                Verdict::NotApplicable => s.not_applicable += 1,
            }
        }
        s.inconclusive_fraction = if s.rows == 0 { 0.0 } else { s.inconclusive as f64 / s.rows as f64 };
        self.summary = s;
        self
    }

    pub fn any_violated(&self) -> bool {
        self.rows.iter().any(|r| r.verdict == Verdict::Violated)
    }

    pub fn rows_named<'a>(&'a self, check: &'a str) -> impl Iterator<Item = &'a Row> + 'a {
        self.rows.iter().filter(move |r| r.check == check)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// `index,check,verdict,measured,pad,bound,params,extra`; parameter maps
    /// are written as `key=value` pairs joined by `;`.
    pub fn write_rows_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "index,check,verdict,measured,pad,bound,params,extra")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:?},{:?},{:?},{},{}",
                r.index,
                r.check,
                r.verdict.as_str(),
                r.measured,
                r.pad,
                r.bound,
                pairs(&r.params),
                pairs(&r.extra)
            )?;
        }
        Ok(())
    }

    /// `series,x,y,se`.
    pub fn write_series_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "series,x,y,se")?;
        for p in &self.series {
            writeln!(out, "{},{:?},{:?},{:?}", p.series, p.x, p.y, p.se)?;
        }
        Ok(())
    }

    /// Writes `report.json`, `rows.csv`, `series.csv` and `timing.json`.
    /// Only `timing.json` depends on the machine.
    pub fn write_dir(&self, dir: &Path, elapsed: Duration) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json()?)?;
        let mut rows = Vec::new();
        self.write_rows_csv(&mut rows)?;
        fs::write(dir.join("rows.csv"), rows)?;
        let mut series = Vec::new();
        self.write_series_csv(&mut series)?;
        fs::write(dir.join("series.csv"), series)?;
        let timing = serde_json::json!({
            "experiment": self.metadata.experiment,
            "wall_seconds": elapsed.as_secs_f64(),
            "threads": rayon::current_num_threads(),
        });
        fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;
        Ok(())
    }
}

fn pairs(map: &BTreeMap<String, f64>) -> String {
    map.iter().map(|(k, v)| format!("{k}={v:?}")).collect::<Vec<_>>().join(";")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ExperimentKind;

    #[test]
    fn summary_counts_verdicts() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::Suboptimality);
        let mut r = ExperimentReport::new(&cfg);
        r.push(Row::new("a", 1.0, 0.1, 2.0));
        r.push(Row::new("b", 3.0, 0.1, 2.0));
        r.push(Row::new("c", 2.05, 0.1, 2.0));
        r.push(Row::not_applicable("d", 1.0));
        let r = r.finish();
        assert_eq!((r.summary.holds, r.summary.violated, r.summary.inconclusive, r.summary.not_applicable), (1, 1, 1, 1));
        assert!(r.any_violated());
        assert_eq!(r.rows[3].index, 3);
    }

    #[test]
    fn precondition_failures_become_not_applicable() {
        let row = Row::from_bound("x", 1.0, 0.0, Err(Error::Precondition("beta".into()))).unwrap();
        assert_eq!(row.verdict, Verdict::NotApplicable);
        assert!(Row::from_bound("x", 1.0, 0.0, Err(Error::EmptyMeasure)).is_err());
        assert_eq!(Row::from_bound("x", 1.0, 0.0, Ok(f64::INFINITY)).unwrap().verdict, Verdict::NotApplicable);
    }

    #[test]
    fn csv_uses_roundtrip_floats() {
        let cfg = ExperimentConfig::defaults(ExperimentKind::Suboptimality);
        let mut r = ExperimentReport::new(&cfg);
        r.push(Row::new("a", 0.1, 0.0, 1.0 / 3.0).param("beta", 4.0));
        let r = r.finish();
        let mut out = Vec::new();
        r.write_rows_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("0,a,holds,0.1,0.0,0.3333333333333333,beta=4.0,"));
    }
}

//! Run records and the files written for them.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const CSV_SCHEMA: &str = "# schema=1";

/// Version string stamped into every report. Packagers may set `AGREEMENT_GIT_DESCRIBE`
/// at build time to the output of `git describe`.
pub fn version() -> &'static str {
    option_env!("AGREEMENT_GIT_DESCRIBE").unwrap_or(concat!("v", env!("CARGO_PKG_VERSION")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub passed: bool,
    pub summary: String,
    pub metrics: Value,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.summary
        )
    }
}

/// `(x, y)` points written to `plotdata/<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub preset: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub verdicts: Vec<Verdict>,
    /// Kept out of `report.json` so reruns compare byte for byte.
    #[serde(skip)]
    pub wall_seconds: f64,
    #[serde(skip)]
    pub plots: Vec<PlotSeries>,
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Number(x) => out.push((prefix.to_string(), x.to_string())),
        Value::Bool(b) => out.push((prefix.to_string(), (*b as u8).to_string())),
        _ => {}
    }
}

impl RunRecord {
    pub fn passed(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.passed)
    }

    pub fn report_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn timing_json(&self) -> String {
        format!("{{\n  \"wall_seconds\": {}\n}}\n", self.wall_seconds)
    }

    /// One row per numeric metric leaf; arrays are left to `report.json`.
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{CSV_SCHEMA}\ncriterion,metric,value\n");
        for v in &self.verdicts {
            let mut rows = vec![("passed".to_string(), (v.passed as u8).to_string())];
            flatten("", &v.metrics, &mut rows);
            for (k, x) in rows {
                let _ = writeln!(out, "{},{},{}", v.criterion, k, x);
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.report_json())?;
        std::fs::write(dir.join("timing.json"), self.timing_json())?;
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        if !self.plots.is_empty() {
            let plots = dir.join("plotdata");
            std::fs::create_dir_all(&plots)?;
            for series in &self.plots {
                let mut text = format!("{CSV_SCHEMA}\nx,y\n");
                for (x, y) in &series.points {
                    let _ = writeln!(text, "{x},{y}");
                }
                std::fs::write(plots.join(format!("{}.csv", series.name)), text)?;
            }
        }
        Ok(())
    }
}

//! Report and plot-data emission, plus run manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossval::{Calibration, CrossValReport};
use crate::error::{Error, Result};
use crate::project::{density_grid, ProjectionResult, Summary};

/// Version of the report file layout.
pub const REPORT_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

/// Top-level JSON document wrapping any report body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub version: u32,
    pub software_version: String,
    pub kind: String,
    pub report: T,
}

impl<T> ReportFile<T> {
    pub fn new(kind: &str, report: T) -> Self {
        Self {
            version: REPORT_VERSION,
            software_version: SOFTWARE_VERSION.into(),
            kind: kind.into(),
            report,
        }
    }
}

/// Projection summary as written to disk (samples are summarized, not
/// stored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub model_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub bias_scale: f64,
    pub f: f64,
    pub n_draws: usize,
    pub summary: Summary,
    pub per_model_draw_counts: Vec<usize>,
}

pub enum Report<'a> {
    CrossVal(&'a CrossValReport),
    Calibration(&'a Calibration),
    Projection {
        report: &'a ProjectionReport,
        result: &'a ProjectionResult,
    },
}

fn write(path: PathBuf, contents: String, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn write_json<T: Serialize>(path: PathBuf, value: &T, written: &mut Vec<PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write(path, text, written)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn records_csv(report: &CrossValReport) -> String {
    let mut out = String::from("truth_id,true_delta,lower,upper,mean,median,mode,inside,bias_scale\n");
    for r in &report.records {
        let inside = r.inside.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.truth_id,
            opt(r.true_delta),
            r.ci90.0,
            r.ci90.1,
            r.mean,
            r.median,
            r.mode,
            inside,
            r.bias_scale
        );
    }
    out
}

fn weights_csv(ids: &[String], rows: &[(String, &[f64])]) -> String {
    let mut out = format!("row,{}\n", ids.join(","));
    for (name, row) in rows {
        let cells: Vec<String> = row.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(out, "{name},{}", cells.join(","));
    }
    out
}

fn emit_crossval(
    report: &CrossValReport,
    prefix: &str,
    dir: &Path,
    format: ReportFormat,
    written: &mut Vec<PathBuf>,
) -> Result<()> {
    match format {
        ReportFormat::Json => {
            write_json(dir.join(format!("{prefix}_report.json")), &ReportFile::new(prefix, report), written)?
        }
        ReportFormat::Csv => {
            let summary = format!(
                "version,method,variant,f,seed,coverage,mciw,mab\n{},{:?},{:?},{},{},{},{},{}\n",
                REPORT_VERSION,
                report.method,
                report.variant,
                report.f,
                report.seed,
                report.coverage,
                report.mciw,
                report.mab
            )
            .to_lowercase();
            write(dir.join(format!("{prefix}_summary.csv")), summary, written)?;
        }
    }
    write(dir.join(format!("{prefix}_intervals.csv")), records_csv(report), written)?;
    let rows: Vec<(String, &[f64])> = report
        .records
        .iter()
        .map(|r| (r.truth_id.clone(), r.weights.as_slice()))
        .collect();
    write(dir.join(format!("{prefix}_weights.csv")), weights_csv(&report.model_ids, &rows), written)
}

/// Writes `report` into `dir` and returns the paths written.
pub fn emit_report(report: Report<'_>, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match report {
        Report::CrossVal(r) => emit_crossval(r, "loocv", dir, format, &mut written)?,
        Report::Calibration(c) => {
            match format {
                ReportFormat::Json => {
                    write_json(dir.join("calibration_report.json"), &ReportFile::new("calibration", c), &mut written)?
                }
                ReportFormat::Csv => {
                    let out = format!(
                        "target,granularity,f_star,failure\n{},{},{},{}\n",
                        c.target,
                        c.granularity,
                        opt(c.f_star),
                        c.failure.as_deref().unwrap_or("")
                    );
                    write(dir.join("calibration_summary.csv"), out, &mut written)?;
                }
            }
            let mut trace = String::from("f,coverage,mciw,mab\n");
            for s in &c.trace {
                let _ = writeln!(trace, "{},{},{},{}", s.f, s.coverage, s.mciw, s.mab);
            }
            write(dir.join("calibration_trace.csv"), trace, &mut written)?;
            if let Some(r) = &c.report {
                emit_crossval(r, "calibrated", dir, format, &mut written)?;
            }
        }
        Report::Projection { report, result } => {
            match format {
                ReportFormat::Json => write_json(
                    dir.join("projection_report.json"),
                    &ReportFile::new("projection", report),
                    &mut written,
                )?,
                ReportFormat::Csv => {
                    let mut out = String::from("model_id,weight,draws\n");
                    for ((id, w), n) in report
                        .model_ids
                        .iter()
                        .zip(&report.weights)
                        .zip(&report.per_model_draw_counts)
                    {
                        let _ = writeln!(out, "{id},{w},{n}");
                    }
                    write(dir.join("projection_models.csv"), out, &mut written)?;
                }
            }
            let s = &report.summary;
            let interval = format!(
                "mean,median,mode,lower,upper\n{},{},{},{},{}\n",
                s.mean, s.median, s.mode, s.ci90.0, s.ci90.1
            );
            write(dir.join("projection_interval.csv"), interval, &mut written)?;
            let mut sorted = result.delta_samples.clone();
            sorted.sort_by(f64::total_cmp);
            let mut pdf = String::from("x,density\n");
            if let Some(grid) = density_grid(&sorted) {
                for (x, d) in grid.x.iter().zip(&grid.density) {
                    let _ = writeln!(pdf, "{x},{d}");
                }
            }
            write(dir.join("projection_pdf.csv"), pdf, &mut written)?;
            let row = [("weights".to_string(), report.weights.as_slice())];
            write(dir.join("projection_weights.csv"), weights_csv(&report.model_ids, &row), &mut written)?;
        }
    }
    Ok(written)
}

pub fn read_report<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<ReportFile<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to reproduce a run. The timestamp is informational
/// and lives only here, never in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seeds: Vec<u64>, inputs: &[PathBuf]) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        let inputs = inputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                Ok(InputDigest {
                    path: p.clone(),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Ok(Self {
            software_version: SOFTWARE_VERSION.into(),
            command: command.into(),
            config_hash,
            config,
            seeds,
            inputs,
            created_unix,
        })
    }

    /// True when both manifests describe the same computation.
    pub fn same_run(&self, other: &RunManifest) -> bool {
        self.software_version == other.software_version
            && self.command == other.command
            && self.config_hash == other.config_hash
            && self.seeds == other.seeds
            && self.inputs.iter().map(|i| &i.sha256).eq(other.inputs.iter().map(|i| &i.sha256))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("run_manifest.json");
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn weights_csv_layout() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let w = [0.25, 0.75];
        let s = weights_csv(&ids, &[("t".into(), &w)]);
        assert_eq!(s, "row,a,b\nt,0.25,0.75\n");
    }
}

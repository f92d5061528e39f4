//! Ensemble datasets: one `time,value` CSV per model per period, tied
//! together by a JSON manifest.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Period, TimeSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSeries {
    pub id: String,
    pub calibration: TimeSeries,
    pub projection: TimeSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDataset {
    pub name: String,
    pub units: String,
    pub variable: Option<String>,
    pub calibration: Period,
    pub projection_reference: Period,
    pub projection: Period,
    pub models: Vec<ModelSeries>,
    pub observations: Option<TimeSeries>,
}

impl EnsembleDataset {
    pub fn k(&self) -> usize {
        self.models.len()
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.id.clone()).collect()
    }

    /// Checks unique ids, shared time axes per period and, when present,
    /// that the observations sit on the calibration axis.
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::InsufficientEnsemble { needed: 1, got: 0 });
        }
        self.calibration.validate("calibration")?;
        self.projection_reference.validate("projection reference")?;
        self.projection.validate("projection")?;
        let mut seen = HashSet::new();
        for m in &self.models {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate model id `{}`", m.id)));
            }
        }
        let first = &self.models[0];
        for m in &self.models[1..] {
            if m.calibration.times() != first.calibration.times()
                || m.projection.times() != first.projection.times()
            {
                return Err(Error::AxisMismatch {
                    first: first.id.clone(),
                    second: m.id.clone(),
                });
            }
        }
        if let Some(obs) = &self.observations {
            let cal_axis = first.calibration.slice(&self.calibration)?;
            let obs_axis = obs.slice(&self.calibration).map_err(|_| Error::AxisMismatch {
                first: first.id.clone(),
                second: "observations".into(),
            })?;
            if cal_axis.times() != obs_axis.times() {
                return Err(Error::AxisMismatch {
                    first: first.id.clone(),
                    second: "observations".into(),
                });
            }
        }
        Ok(())
    }

    /// Raw mean of `series_pair` over the projection reference period,
    /// taken from whichever of the two series covers it.
    pub(crate) fn reference_mean(&self, calibration: &TimeSeries, projection: &TimeSeries) -> Result<f64> {
        calibration
            .slice(&self.projection_reference)
            .or_else(|_| projection.slice(&self.projection_reference))
            .map(|s| s.mean())
            .map_err(|_| {
                Error::InvalidInput(format!(
                    "projection reference period [{}, {}] not covered by either series",
                    self.projection_reference.start, self.projection_reference.end
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestModel {
    pub id: String,
    pub calibration_file: PathBuf,
    pub projection_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default)]
    pub units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
    pub calibration: Period,
    pub projection_reference: Period,
    pub projection: Period,
    pub models: Vec<ManifestModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations_file: Option<PathBuf>,
}

/// Reads a `time,value` CSV with header.
pub fn read_series_csv(path: &Path) -> Result<TimeSeries> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != ["time", "value"] {
        return Err(parse_err(1, format!("expected header `time,value`, found `{}`", names.join(","))));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let t = record.get(0).unwrap_or("").trim();
        let v = record.get(1).unwrap_or("").trim();
        let t: i64 = t
            .parse()
            .map_err(|_| parse_err(line, format!("malformed time `{t}`")))?;
        if v.is_empty() {
            return Err(parse_err(line, format!("missing value at time {t}")));
        }
        let v: f64 = v
            .parse()
            .map_err(|_| parse_err(line, format!("malformed value `{v}`")))?;
        if !v.is_finite() {
            return Err(parse_err(line, format!("non-finite value at time {t}")));
        }
        if let Some(&prev) = times.last() {
            let step = times.get(1).map_or(t - prev, |&t1: &i64| t1 - times[0]);
            if t - prev != step || step <= 0 {
                return Err(parse_err(line, format!("time {t} breaks the regular axis after {prev}")));
            }
        }
        times.push(t);
        values.push(v);
    }
    if times.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }
    TimeSeries::new(times, values)
}

pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut out = String::from("time,value\n");
    for (t, v) in series.times().iter().zip(series.values()) {
        out.push_str(&format!("{t},{v}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn resolver(manifest_path: &Path) -> impl Fn(&Path) -> PathBuf + '_ {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    move |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
}

/// The manifest itself followed by every data file it references.
pub fn dataset_files(path: &Path) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(path)?;
    let resolve = resolver(path);
    let mut files = vec![path.to_path_buf()];
    for m in &manifest.models {
        files.push(resolve(&m.calibration_file));
        files.push(resolve(&m.projection_file));
    }
    files.extend(manifest.observations_file.as_deref().map(&resolve));
    Ok(files)
}

/// Loads and validates the dataset described by the manifest at `path`.
/// Relative file names resolve against the manifest's directory.
pub fn load_dataset(path: &Path) -> Result<EnsembleDataset> {
    let manifest = read_manifest(path)?;
    let resolve = resolver(path);
    let models = manifest
        .models
        .iter()
        .map(|m| {
            Ok(ModelSeries {
                id: m.id.clone(),
                calibration: read_series_csv(&resolve(&m.calibration_file))?,
                projection: read_series_csv(&resolve(&m.projection_file))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let observations = manifest
        .observations_file
        .as_deref()
        .map(|p| read_series_csv(&resolve(p)))
        .transpose()?;
    let dataset = EnsembleDataset {
        name: manifest.name,
        units: manifest.units,
        variable: manifest.variable,
        calibration: manifest.calibration,
        projection_reference: manifest.projection_reference,
        projection: manifest.projection,
        models,
        observations,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Writes `manifest.json` plus one CSV per model and period into `dir`;
/// returns the manifest path.
pub fn write_dataset(dir: &Path, dataset: &EnsembleDataset) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut models = Vec::with_capacity(dataset.k());
    for m in &dataset.models {
        let cal = PathBuf::from(format!("{}_calibration.csv", m.id));
        let proj = PathBuf::from(format!("{}_projection.csv", m.id));
        write_series_csv(&dir.join(&cal), &m.calibration)?;
        write_series_csv(&dir.join(&proj), &m.projection)?;
        models.push(ManifestModel {
            id: m.id.clone(),
            calibration_file: cal,
            projection_file: proj,
        });
    }
    let observations_file = match &dataset.observations {
        Some(obs) => {
            let p = PathBuf::from("observations.csv");
            write_series_csv(&dir.join(&p), obs)?;
            Some(p)
        }
        None => None,
    };
    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        units: dataset.units.clone(),
        variable: dataset.variable.clone(),
        calibration: dataset.calibration,
        projection_reference: dataset.projection_reference,
        projection: dataset.projection,
        models,
        observations_file,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_value_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "time,value\n2000,1.0\n2001,NaN\n2002,3\n").unwrap();
        let err = read_series_csv(&p).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "time,value\n2000,1.0\n2001,2\n2003,3\n").unwrap();
        assert!(matches!(read_series_csv(&p), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        fs::write(&p, "year,x\n2000,1.0\n").unwrap();
        assert!(matches!(read_series_csv(&p), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let s = TimeSeries::from_values(1950, vec![0.1, -2.0 / 3.0, 1e-17, 12345.678901234]).unwrap();
        write_series_csv(&p, &s).unwrap();
        assert_eq!(read_series_csv(&p).unwrap(), s);
    }
}

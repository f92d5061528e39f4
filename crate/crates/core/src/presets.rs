//! Experiment presets shaped after six published designs, each paired with
//! a synthetic stand-in ensemble.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crossval::{ExperimentConfig, Method};
use crate::decompose::{DecompositionMode, SmootherSpec};
use crate::error::{Error, Result};
use crate::project::ProjectionVariant;
use crate::series::Period;
use crate::synthetic::SyntheticEnsembleSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    AmocLike,
    KoreaTempLike,
    KoreaTempLongLike,
    WinterSstLike,
    AmocIndexLike,
    AmocIndexObsLike,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::AmocLike,
        PresetName::KoreaTempLike,
        PresetName::KoreaTempLongLike,
        PresetName::WinterSstLike,
        PresetName::AmocIndexLike,
        PresetName::AmocIndexObsLike,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::AmocLike => "amoc_like",
            PresetName::KoreaTempLike => "korea_temp_like",
            PresetName::KoreaTempLongLike => "korea_temp_long_like",
            PresetName::WinterSstLike => "winter_sst_like",
            PresetName::AmocIndexLike => "amoc_index_like",
            PresetName::AmocIndexObsLike => "amoc_index_obs_like",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = PresetName::ALL.iter().map(|p| p.as_str()).collect();
                Error::InvalidConfig(format!("unknown preset `{s}` (known: {})", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: PresetName,
    /// `f` is set to the trend+var starting value.
    pub config: ExperimentConfig,
    pub synthetic: SyntheticEnsembleSpec,
    pub f_trend: f64,
    pub f_trend_var: f64,
}

impl Preset {
    /// Starting `f` for `method`; a grid midpoint, not a target.
    pub fn f_for(&self, method: Method) -> f64 {
        match method {
            Method::Trend => self.f_trend,
            Method::TrendVar => self.f_trend_var,
        }
    }
}

struct Design {
    k: usize,
    calibration: (i64, i64),
    reference: (i64, i64),
    projection: (i64, i64),
    f: (f64, f64),
    variant: ProjectionVariant,
    mode: DecompositionMode,
    smoother: SmootherSpec,
}

pub fn preset(name: PresetName) -> Preset {
    let theil_sen = SmootherSpec::theil_sen();
    let design = match name {
        PresetName::AmocLike => Design {
            k: 13,
            calibration: (1880, 2004),
            reference: (1960, 1999),
            projection: (2060, 2099),
            f: (1.5, 1.5),
            variant: ProjectionVariant::Boot,
            mode: DecompositionMode::Relative,
            smoother: SmootherSpec::lowess(0.8),
        },
        PresetName::KoreaTempLike => Design {
            k: 29,
            calibration: (1973, 2005),
            reference: (1973, 2005),
            projection: (2081, 2100),
            f: (1.55, 0.75),
            variant: ProjectionVariant::Boot,
            mode: DecompositionMode::Absolute,
            smoother: theil_sen,
        },
        PresetName::KoreaTempLongLike => Design {
            k: 29,
            calibration: (1950, 2005),
            reference: (1950, 2005),
            projection: (2081, 2100),
            f: (2.22, 2.3),
            variant: ProjectionVariant::Boot,
            mode: DecompositionMode::Absolute,
            smoother: theil_sen,
        },
        PresetName::WinterSstLike => Design {
            k: 26,
            calibration: (1941, 2000),
            reference: (1941, 2000),
            projection: (2061, 2100),
            f: (2.5, 2.05),
            variant: ProjectionVariant::Ar1,
            mode: DecompositionMode::Absolute,
            smoother: theil_sen,
        },
        PresetName::AmocIndexLike | PresetName::AmocIndexObsLike => Design {
            k: 13,
            calibration: (1880, 1945),
            reference: (1880, 1945),
            projection: (1965, 2004),
            f: (3.75, 3.75),
            variant: ProjectionVariant::Ar1,
            mode: DecompositionMode::Absolute,
            smoother: theil_sen,
        },
    };
    let calibration = Period::new(design.calibration.0, design.calibration.1);
    let reference = Period::new(design.reference.0, design.reference.1);
    let projection = Period::new(design.projection.0, design.projection.1);
    let observational = name == PresetName::AmocIndexObsLike;

    // Levels and spreads loosely resemble the named variables.
    let base = SyntheticEnsembleSpec {
        name: name.as_str().into(),
        k: design.k,
        start_time: calibration.start,
        n_cal: (calibration.end - calibration.start + 1) as usize,
        n_gap: (projection.start - calibration.end - 1) as usize,
        n_proj: (projection.end - projection.start + 1) as usize,
        reference: Some(reference),
        coupling: 0.6,
        observations: observational,
        seed: 1,
        ..Default::default()
    };
    let synthetic = match name {
        PresetName::AmocLike => SyntheticEnsembleSpec {
            offset_range: (14.0, 24.0),
            slope_range: (-0.02, 0.0),
            change_mean: -6.0,
            change_sd: 2.5,
            sigma_range: (0.4, 1.5),
            rho_range: (0.2, 0.8),
            ..base
        },
        PresetName::KoreaTempLike | PresetName::KoreaTempLongLike => SyntheticEnsembleSpec {
            offset_range: (28.0, 32.0),
            slope_range: (0.0, 0.04),
            change_mean: 5.0,
            change_sd: 1.2,
            sigma_range: (0.5, 1.2),
            rho_range: (-0.1, 0.4),
            ..base
        },
        PresetName::WinterSstLike => SyntheticEnsembleSpec {
            offset_range: (10.0, 14.0),
            slope_range: (0.0, 0.03),
            change_mean: 2.5,
            change_sd: 0.8,
            sigma_range: (0.3, 0.9),
            rho_range: (0.2, 0.7),
            ..base
        },
        PresetName::AmocIndexLike | PresetName::AmocIndexObsLike => SyntheticEnsembleSpec {
            offset_range: (-0.3, 0.3),
            slope_range: (-0.005, 0.005),
            change_mean: 0.3,
            change_sd: 0.25,
            sigma_range: (0.1, 0.3),
            rho_range: (0.2, 0.7),
            ..base
        },
    };
    let config = ExperimentConfig {
        calibration_period: Some(calibration),
        projection_reference_period: Some(reference),
        projection_period: Some(projection),
        smoother: design.smoother,
        projection_smoother: SmootherSpec::theil_sen(),
        mode: design.mode,
        variant: design.variant,
        method: Method::TrendVar,
        f: design.f.1,
        observational,
        ..Default::default()
    };
    Preset {
        name,
        config,
        synthetic,
        f_trend: design.f.0,
        f_trend_var: design.f.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amoc_like_shape() {
        let p = preset(PresetName::AmocLike);
        assert_eq!(p.synthetic.k, 13);
        assert_eq!(p.synthetic.n_cal, 125);
        assert_eq!(p.synthetic.n_proj, 40);
        assert_eq!(p.f_trend_var, 1.5);
        assert_eq!(p.config.mode, DecompositionMode::Relative);
    }

    #[test]
    fn winter_sst_like_shape() {
        let p = preset(PresetName::WinterSstLike);
        assert_eq!(p.synthetic.k, 26);
        assert_eq!(p.config.variant, ProjectionVariant::Ar1);
        assert_eq!(p.f_for(Method::TrendVar), 2.05);
        assert_eq!(p.config.projection_period, Some(Period::new(2061, 2100)));
    }

    #[test]
    fn korea_temp_like_shape() {
        let p = preset(PresetName::KoreaTempLike);
        assert_eq!(p.synthetic.k, 29);
        assert_eq!(p.config.calibration_period, Some(Period::new(1973, 2005)));
        assert_eq!(p.config.f, 0.75);
        assert_eq!(p.f_trend, 1.55);
    }

    #[test]
    fn names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.as_str().parse::<PresetName>().unwrap(), p);
        }
        assert!("amoc".parse::<PresetName>().is_err());
    }

    #[test]
    fn every_preset_validates() {
        for p in PresetName::ALL {
            let pr = preset(p);
            pr.config.validate().unwrap();
            pr.synthetic.validate().unwrap();
        }
    }
}

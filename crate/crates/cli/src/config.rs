//! Configuration files for the single-computation subcommands. Experiment
//! subcommands read [`ExperimentConfig`] directly.

use std::path::PathBuf;

use mixspec_core::lsd::DEFAULT_INVERSION_HEIGHT;
use mixspec_core::process::AutocovSource;
use mixspec_core::{
    autocovariance_closed_form, AutocovarianceSeq, EnsembleConfig, EnsembleKind, Error, ProcessSpec, Result,
    SolverOptions,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub spec: ProcessSpec,
    pub length: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.length == 0 {
            return Err(Error::Parameter("length must be positive".into()));
        }
        Ok(())
    }
}

fn default_ensemble() -> EnsembleKind {
    EnsembleKind::Bn
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Model to sample; exclusive with `trajectory`.
    #[serde(default)]
    pub spec: Option<ProcessSpec>,
    /// Explicit series, used column-major for `bn`.
    #[serde(default)]
    pub trajectory: Option<Vec<f64>>,
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_ensemble")]
    pub ensemble: EnsembleKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        EnsembleConfig::new(self.rows, self.cols)?;
        match (&self.spec, &self.trajectory) {
            (Some(spec), None) => spec.validate()?,
            (None, Some(values)) if self.ensemble == EnsembleKind::Bn => {
                if values.len() < self.rows * self.cols {
                    return Err(Error::InsufficientData {
                        needed: self.rows * self.cols,
                        got: values.len(),
                    });
                }
            }
            (None, Some(_)) => {
                return Err(Error::Parameter(format!(
                    "an explicit trajectory only defines the bn ensemble, not {}",
                    self.ensemble.as_str()
                )))
            }
            _ => return Err(Error::Parameter("exactly one of spec and trajectory is required".into())),
        }
        if !matches!(self.ensemble, EnsembleKind::Bn | EnsembleKind::An | EnsembleKind::Gn) {
            return Err(Error::Parameter(format!(
                "ensemble {} needs a block ladder; use the blocks subcommand",
                self.ensemble.as_str()
            )));
        }
        Ok(())
    }
}

fn default_gamma_lags() -> usize {
    1024
}

fn default_height() -> f64 {
    DEFAULT_INVERSION_HEIGHT
}

/// Stieltjes inversion grid. Missing bounds default to just left of 0 and to
/// an upper bound on the support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityGrid {
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default = "default_height")]
    pub height: f64,
}

impl Default for DensityGrid {
    fn default() -> Self {
        DensityGrid {
            x_min: None,
            x_max: None,
            height: default_height(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LsdConfig {
    /// Model with closed-form autocovariances; exclusive with `autocovariance`.
    #[serde(default)]
    pub spec: Option<ProcessSpec>,
    /// `gamma_0 .. gamma_K`.
    #[serde(default)]
    pub autocovariance: Option<Vec<f64>>,
    #[serde(default = "default_gamma_lags")]
    pub gamma_lags: usize,
    /// Aspect ratio `N / n`.
    pub c: f64,
    /// `[Re z, Im z]` pairs written to `stieltjes.csv`.
    #[serde(default)]
    pub z_grid: Vec<[f64; 2]>,
    #[serde(default)]
    pub density: DensityGrid,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl LsdConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.spec, &self.autocovariance) {
            (Some(spec), None) => spec.validate()?,
            (None, Some(g)) if g.is_empty() => return Err(Error::Parameter("autocovariance is empty".into())),
            (None, Some(_)) => {}
            _ => return Err(Error::Parameter("exactly one of spec and autocovariance is required".into())),
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Parameter(format!("c must be positive, got {}", self.c)));
        }
        if let Some(z) = self.z_grid.iter().find(|z| !(z[1] > 0.0) || !z[0].is_finite()) {
            return Err(Error::Domain(format!("z = {} + {}i is not in the upper half-plane", z[0], z[1])));
        }
        self.solver.validate()?;
        if let (Some(lo), Some(hi)) = (self.density.x_min, self.density.x_max) {
            if !(lo < hi) {
                return Err(Error::Parameter(format!("empty density range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn autocovariance(&self) -> Result<AutocovarianceSeq> {
        match (&self.spec, &self.autocovariance) {
            (Some(spec), _) => autocovariance_closed_form(spec, self.gamma_lags),
            (None, Some(g)) => Ok(AutocovarianceSeq::new(g.clone(), AutocovSource::Supplied, true)),
            (None, None) => Err(Error::Parameter("exactly one of spec and autocovariance is required".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_sources_are_exclusive() {
        let cfg: SpectrumConfig =
            serde_json::from_str(r#"{"trajectory": [1, 1, 1, 1], "rows": 2, "cols": 2}"#).unwrap();
        assert!(cfg.validate().is_ok());
        let both = SpectrumConfig {
            spec: Some(ProcessSpec::iid(1.0)),
            ..cfg.clone()
        };
        assert!(both.validate().is_err());
        let gaussian = SpectrumConfig {
            ensemble: EnsembleKind::Gn,
            ..cfg
        };
        assert!(gaussian.validate().is_err());
    }

    #[test]
    fn lsd_defaults() {
        let cfg: LsdConfig = serde_json::from_str(r#"{"autocovariance": [1.0], "c": 1.0}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.density, DensityGrid::default());
        assert_eq!(cfg.autocovariance().unwrap().gamma, vec![1.0]);
        assert!(serde_json::from_str::<LsdConfig>(r#"{"autocovariance": [1.0], "c": 1.0, "q": 2}"#).is_err());
    }

    #[test]
    fn lsd_rejects_bad_parameters() {
        for json in [
            r#"{"autocovariance": [1.0], "c": 0.0}"#,
            r#"{"autocovariance": [], "c": 1.0}"#,
            r#"{"c": 1.0}"#,
            r#"{"autocovariance": [1.0], "c": 1.0, "z_grid": [[0.0, 0.0]]}"#,
            r#"{"autocovariance": [1.0], "c": 1.0, "solver": {"quad_nodes": 0}}"#,
            r#"{"autocovariance": [1.0], "c": 1.0, "density": {"x_min": 2.0, "x_max": 1.0}}"#,
        ] {
            let cfg: LsdConfig = serde_json::from_str(json).unwrap();
            assert!(cfg.validate().is_err(), "{json}");
        }
    }
}

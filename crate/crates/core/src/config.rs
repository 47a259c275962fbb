//! Run configuration files (JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eigensolver::{relax_vibrational_basis_with, RelaxOptions, VibrationalBasis, MAX_STATES};
use crate::error::{Error, Result};
use crate::experiments::{Engine, ExperimentSpec, LevelData, LevelSource, Runner, TdseSetup};
use crate::io::{config_hash, read_basis};
use crate::model::{Grid2D, GridPreset, GridSpec, ModelParams};
use crate::propagator::PropagationConfig;

/// A named preset or a full grid description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridChoice {
    Preset(GridPreset),
    Explicit(GridSpec),
}

impl Default for GridChoice {
    fn default() -> Self {
        GridChoice::Preset(GridPreset::Smoke)
    }
}

impl GridChoice {
    pub fn spec(&self) -> GridSpec {
        match *self {
            GridChoice::Preset(p) => p.spec(),
            GridChoice::Explicit(s) => s,
        }
    }

    pub fn build(&self) -> Result<Grid2D> {
        Grid2D::new(self.spec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub grid: GridChoice,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default)]
    pub experiment: Option<ExperimentSpec>,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub levels: LevelSource,
    /// Previously saved basis; relaxed from scratch when absent.
    #[serde(default)]
    pub basis: Option<PathBuf>,
    #[serde(default = "default_states")]
    pub n_states: usize,
    #[serde(default)]
    pub relax: RelaxOptions,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_states() -> usize {
    MAX_STATES
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelParams::default(),
            grid: GridChoice::default(),
            engine: Engine::default(),
            experiment: None,
            propagation: PropagationConfig::default(),
            levels: LevelSource::default(),
            basis: None,
            n_states: MAX_STATES,
            relax: RelaxOptions::default(),
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Parses and validates. Errors name the offending field and position.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::Config(format!("at `{path}` (line {}, column {}): {inner}", inner.line(), inner.column()))
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn hash(&self) -> Result<String> {
        config_hash(self)
    }

    /// Cross-field checks that do not need any computation.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.grid.build()?;
        self.propagation.validate()?;
        if self.n_states == 0 || self.n_states > MAX_STATES {
            return Err(Error::param("n_states", format!("must be in 1..={MAX_STATES}")));
        }
        let Some(exp) = &self.experiment else {
            return Ok(());
        };
        exp.validate()?;
        let needed = exp.levels();
        let highest = *needed.iter().max().unwrap_or(&0);
        match self.engine {
            Engine::Tdse => {
                if highest >= self.n_states {
                    return Err(Error::Config(format!(
                        "experiment uses level {highest} but n_states = {}",
                        self.n_states
                    )));
                }
            }
            Engine::Twolevel => {
                let available: Vec<usize> = match &self.levels {
                    LevelSource::Reference => vec![0, 1, 2],
                    LevelSource::Computed { max_nu } => (0..=*max_nu).collect(),
                    LevelSource::Explicit { nu, .. } => nu.clone(),
                };
                if let Some(missing) = needed.iter().find(|n| !available.contains(n)) {
                    return Err(Error::Config(format!(
                        "two-level engine needs level {missing}, but `levels` provides only {available:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn load_or_relax_basis(&self) -> Result<VibrationalBasis> {
        let grid = self.grid.build()?;
        match &self.basis {
            Some(p) => {
                let b = read_basis(p)?;
                b.grid.ensure_same(&grid)?;
                if b.len() < self.n_states {
                    return Err(Error::Config(format!("basis {} has {} states, need {}", p.display(), b.len(), self.n_states)));
                }
                Ok(b)
            }
            None => relax_vibrational_basis_with(&grid, &self.model, self.n_states, &self.relax),
        }
    }

    /// Builds the runner for the configured engine. Level data is attached when
    /// it can be built (always for the reduced engine).
    pub fn runner(&self, checkpoint_dir: Option<PathBuf>) -> Result<Runner> {
        self.validate()?;
        let grid = self.grid.build()?;
        match self.engine {
            Engine::Twolevel => Ok(Runner::twolevel(self.levels.build(&grid, &self.model)?)),
            Engine::Tdse => {
                let levels: Option<LevelData> = self.levels.build(&grid, &self.model).ok();
                Ok(Runner::tdse(
                    TdseSetup {
                        params: self.model,
                        basis: self.load_or_relax_basis()?,
                        propagation: self.propagation.clone(),
                        checkpoint_dir,
                    },
                    levels,
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_empty_object() {
        let c = RunConfig::from_json_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_reported_with_path() {
        let e = RunConfig::from_json_str("{\n  \"propagation\": {\"dt\": 0.05, \"observe_stride\": 10, \"bogus\": 1}\n}").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("propagation"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn grid_accepts_preset_or_spec() {
        let c = RunConfig::from_json_str(r#"{"grid": "paper"}"#).unwrap();
        assert_eq!(c.grid.build().unwrap().shape(), (599, 801));
        let spec = serde_json::to_string(&GridSpec::smoke()).unwrap();
        let c = RunConfig::from_json_str(&format!("{{\"grid\": {spec}}}")).unwrap();
        assert_eq!(c.grid.build().unwrap().shape(), (240, 201));
    }

    #[test]
    fn missing_levels_are_a_config_error() {
        let text = r#"{"engine": "twolevel", "experiment": {"kind": "chirp_sweep", "nu_i": 0, "nu_f": 4,
            "a_range": {"start": -1, "stop": 0, "n": 3},
            "pulse": {"intensity_w_cm2": 1e13, "wavelength_nm": 5059.3, "n_cycles": 10}}}"#;
        let c = RunConfig::from_json_str(text).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}

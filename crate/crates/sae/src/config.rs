//! Run configuration: one JSON document, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use sae_core::simulation::{Design, PopulationConfig};
use sae_core::{BootstrapConfig, FitConfig, IndicatorSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Schema;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub design: Design,
    #[serde(rename = "T")]
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub survey: Option<PathBuf>,
    pub census: Option<PathBuf>,
    pub out: PathBuf,
    /// Where `estimate` and `mse` look for fit files; defaults to `out`.
    pub fits: Option<PathBuf>,
    pub schema: Schema,
    pub spec: IndicatorSpec,
    pub fit: FitConfig,
    #[serde(rename = "L")]
    pub replicates: usize,
    pub bootstrap: BootstrapConfig,
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the number of CPUs.
    pub threads: usize,
    pub population: Option<PopulationConfig>,
    /// Design used by `generate` to draw `survey.csv`.
    pub sample_design: Option<Design>,
    pub scenarios: Vec<Scenario>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            survey: None,
            census: None,
            out: PathBuf::from("."),
            fits: None,
            schema: Schema::default(),
            spec: IndicatorSpec::default(),
            fit: FitConfig::default(),
            replicates: 100,
            bootstrap: BootstrapConfig::default(),
            seed: None,
            threads: 0,
            population: None,
            sample_design: None,
            scenarios: Vec::new(),
        }
    }
}

/// Flag values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }

    /// Defaults, then the config file (if any), then flags.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = Some(s);
        }
        if let Some(t) = overrides.threads {
            cfg.threads = t;
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    pub fn survey_path(&self) -> Result<&Path> {
        existing(self.survey.as_deref(), "survey")
    }

    pub fn census_path(&self) -> Result<&Path> {
        existing(self.census.as_deref(), "census")
    }

    pub fn fits_dir(&self) -> &Path {
        self.fits.as_deref().unwrap_or(&self.out)
    }

    pub fn population(&self) -> Result<PopulationConfig> {
        let mut pop = self.population.clone().ok_or_else(|| Error::Config("no `population` section".into()))?;
        pop.seed = self.seed()?;
        Ok(pop)
    }
}

fn existing<'a>(path: Option<&'a Path>, what: &str) -> Result<&'a Path> {
    let p = path.ok_or_else(|| Error::Config(format!("no {what} path configured")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p)
}

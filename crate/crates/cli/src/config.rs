//! Run configuration: a TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use refnet::embed::{FeatureSet, ModelKind};
use refnet::explain::ExplainConfig;
use refnet::ingest::IngestConfig;
use refnet::linkpred::ExperimentConfig;
use refnet::netbuild::ExtractConfig;
use refnet::numkit::rng::{derive_seed, label};
use refnet::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub consultations: Option<PathBuf>,
    pub physicians: Option<PathBuf>,
}

/// Which runs the link-prediction experiment performs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Selection {
    pub models: Vec<ModelKind>,
    pub features: Vec<FeatureSet>,
    /// Number of split seeds, each derived from the root seed.
    pub seeds: usize,
}

impl Default for Selection {
    fn default() -> Self {
        Selection {
            models: ModelKind::ALL.to_vec(),
            features: FeatureSet::ALL.to_vec(),
            seeds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every random stream. `synth.seed` is replaced by a seed derived from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub extract: ExtractConfig,
    pub synth: SynthConfig,
    pub selection: Selection,
    pub linkpred: ExperimentConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            paths: Paths::default(),
            ingest: IngestConfig::default(),
            extract: ExtractConfig::default(),
            synth: SynthConfig::default(),
            selection: Selection::default(),
            linkpred: ExperimentConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_gap_days: Option<u32>,
    pub models: Option<Vec<ModelKind>>,
    pub features: Option<Vec<FeatureSet>>,
    pub alpha: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies overrides, derives the synth seed and validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(g) = o.max_gap_days {
            self.extract.max_gap_days = Some(g);
        }
        if let Some(m) = &o.models {
            self.selection.models = m.clone();
        }
        if let Some(f) = &o.features {
            self.selection.features = f.clone();
        }
        if let Some(a) = o.alpha {
            self.synth.alpha = a;
        }
        self.synth.seed = derive_seed(self.seed, &[label("synth")]);
        self.synth.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
        if self.selection.models.is_empty() || self.selection.features.is_empty() || self.selection.seeds == 0 {
            return Err(CliError::Config(
                "selection: models, features and seeds must be non-empty".into(),
            ));
        }
        for p in [&self.paths.consultations, &self.paths.physicians].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::Config(format!("input path {} does not exist", p.display())));
            }
        }
        Ok(self)
    }

    /// SHA-256 of the resolved configuration without the output directory,
    /// so identical runs written to different places share a digest.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let text = toml::to_string(&c).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn experiment_seeds(&self) -> Vec<u64> {
        (0..self.selection.seeds as u64)
            .map(|i| derive_seed(self.seed, &[label("experiment"), i]))
            .collect()
    }

    pub fn explain_seed(&self) -> u64 {
        derive_seed(self.seed, &[label("explain")])
    }
}

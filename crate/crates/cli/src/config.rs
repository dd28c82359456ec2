//! JSON configuration documents for the subcommands.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use airfl_core::channel::{ChannelMode, LinkProfile};
use airfl_core::fltrain::{Scheme, TrainConfig};
use airfl_core::ota::OtaConfig;
use airfl_core::pdd::PddConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Training sweep over schemes and seeds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Shared settings; its `scheme` and `seed` are replaced per run.
    #[serde(default)]
    pub train: TrainConfig<f64>,
    pub schemes: Vec<Scheme<f64>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Failure> {
        if self.schemes.is_empty() {
            return Err(Failure::Config("schemes: at least one scheme is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Failure::Config("seeds: at least one seed is required".into()));
        }
        let mut names = BTreeSet::new();
        for s in &self.schemes {
            if !names.insert(s.name()) {
                return Err(Failure::Config(format!("schemes: `{}` is listed twice", s.name())));
            }
            s.validate()?;
        }
        self.train.validate()?;
        Ok(())
    }

    /// Every (scheme, seed) run in a fixed order.
    pub fn runs(&self) -> Vec<TrainConfig<f64>> {
        self.schemes
            .iter()
            .flat_map(|scheme| {
                self.seeds.iter().map(move |&seed| TrainConfig {
                    scheme: scheme.clone(),
                    seed,
                    ..self.train.clone()
                })
            })
            .collect()
    }
}

/// One channel draw for `solve` and `oracle`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceConfig {
    pub users: usize,
    pub antennas: usize,
    pub per_user_samples: usize,
    pub region_lo: f64,
    pub region_hi: f64,
    pub min_gap: f64,
    pub ota: OtaConfig<f64>,
    pub links: LinkProfile<f64>,
    pub channel_model: ChannelMode,
    pub pdd: PddConfig<f64>,
    pub seed: u64,
    /// Beamformer grid step of the oracle for two antennas (radians).
    pub oracle_step: f64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        let t = TrainConfig::<f64>::default();
        Self {
            users: 6,
            antennas: 1,
            per_user_samples: t.per_user_samples,
            region_lo: t.region_lo,
            region_hi: t.region_hi,
            min_gap: t.min_gap,
            ota: t.ota,
            links: t.links,
            channel_model: t.channel_model,
            pdd: t.pdd,
            seed: 0,
            oracle_step: 0.01,
        }
    }
}

impl InstanceConfig {
    /// The training configuration whose round-zero channels this instance is.
    pub fn as_train(&self) -> TrainConfig<f64> {
        TrainConfig {
            users: self.users,
            antennas: self.antennas,
            per_user_samples: self.per_user_samples,
            region_lo: self.region_lo,
            region_hi: self.region_hi,
            min_gap: self.min_gap,
            ota: self.ota,
            links: self.links.clone(),
            channel_model: self.channel_model,
            pdd: self.pdd.clone(),
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

/// Reads and parses a JSON document, reporting the offending field.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: cannot read: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let field = e.path().to_string();
        Failure::Config(format!("{}: field `{field}`: {}", path.display(), e.into_inner()))
    })
}

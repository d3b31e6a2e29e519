//! Run configuration: one TOML document covering paths, every module's
//! settings and the global seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::halluc::TrainConfig;
use crate::odf::OdfConfig;
use crate::pn::PnConfig;
use crate::sdf::SdfConfig;
use crate::synth::SynthConfig;

/// Name of the resolved copy written into every run directory.
pub const RESOLVED_CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub detections: Option<PathBuf>,
    pub tau_source: Option<PathBuf>,
    pub saliency_manifest: Option<PathBuf>,
    /// Dataset directory read by `train` and `search-beta`.
    pub data: Option<PathBuf>,
    /// Run directory.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `synth.seed` and `train.seed` when set.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub odf: OdfConfig,
    pub sdf: SdfConfig,
    /// Shared by the synthetic targets and the trained streams.
    pub pn: PnConfig,
    pub synth: SynthConfig,
    pub train: TrainConfig,
}

fn parse_error(path: Option<&Path>, field: String, msg: String) -> Error {
    let field = if field.is_empty() || field == "." {
        path.map(|p| p.display().to_string())
            .unwrap_or_else(|| "<document>".into())
    } else {
        field
    };
    Error::Config { field, msg }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::parse(text, None)
    }

    fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        let de = toml::Deserializer::parse(text)
            .map_err(|e| parse_error(path, String::new(), e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            parse_error(path, field, e.into_inner().message().to_string())
        })
    }

    /// Reads `path`; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text, Some(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.detections,
            &mut cfg.paths.tau_source,
            &mut cfg.paths.saliency_manifest,
            &mut cfg.paths.data,
            &mut cfg.paths.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format {
            format: "TOML",
            msg: e.to_string(),
        })
    }

    /// Pushes the shared settings down into the module configs.
    pub fn resolved(&self) -> RunConfig {
        let mut out = self.clone();
        if let Some(seed) = self.seed {
            out.synth.seed = seed;
            out.train.seed = seed;
        }
        out.synth.odf = self.odf;
        out.synth.sdf = self.sdf;
        out.synth.pn = self.pn;
        out.train.pn = self.pn;
        out.train.backbone_dim = out.synth.backbone_dim;
        out.train.sketch_dim = out.synth.sketch_dim;
        out
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, e: Error| match e {
            Error::Config { .. } => e,
            other => Error::Config {
                field: section.into(),
                msg: other.to_string(),
            },
        };
        self.pn.validate().map_err(|e| wrap("pn", e))?;
        self.odf
            .scalar_map
            .validate()
            .map_err(|e| wrap("odf.scalar_map", e))?;
        self.sdf
            .angular_map
            .validate()
            .map_err(|e| wrap("sdf.angular_map", e))?;
        self.sdf
            .spatial_map
            .validate()
            .map_err(|e| wrap("sdf.spatial_map", e))?;
        if self.odf.n_prime == 0 {
            return Err(Error::Config {
                field: "odf.n_prime".into(),
                msg: "must be positive".into(),
            });
        }
        if self.sdf.n_dagger == 0 {
            return Err(Error::Config {
                field: "sdf.n_dagger".into(),
                msg: "must be positive".into(),
            });
        }
        self.synth.validate()?;
        self.train.validate()
    }

    /// Writes the resolved configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.resolved().to_toml()?)?;
        Ok(path)
    }
}

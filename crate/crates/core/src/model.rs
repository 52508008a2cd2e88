//! Model files.
//!
//! A model is a TOML document:
//!
//! ```toml
//! name = "model 1"            # optional
//! dim = 2
//! start = [0, 0]              # optional, defaults to the origin
//!
//! [cone]
//! normals = [[1, 0], [0, 1]]  # inner normals, need not be unit
//!
//! [distribution]
//! kind = "atomic"
//! atoms = [[-1, 1], [1, -1], [1, 1]]
//! probabilities = [0.25, 0.25, 0.5]   # optional, uniform if omitted
//! ```
//!
//! or, for identity-covariance Gaussian steps,
//!
//! ```toml
//! [distribution]
//! kind = "gaussian"
//! mean = [0.7071067811865476, 0.7071067811865476]
//! ```
//!
//! The model hash is the SHA-256 of the canonical JSON form of the parsed
//! document, so formatting and comments do not change it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::distributions::{
    validate_hypotheses, AtomicDistribution, Distribution, GaussianDistribution, HypothesisReport,
};
use crate::geometry::Pyramid;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
    pub cone: ConeSection,
    pub distribution: DistributionSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSection {
    pub normals: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DistributionSection {
    Atomic {
        atoms: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probabilities: Option<Vec<f64>>,
    },
    Gaussian {
        mean: Vec<f64>,
    },
}

/// A loaded, validated model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub file: ModelFile,
    pub pyramid: Pyramid,
    pub distribution: Distribution,
    pub start: Vec<f64>,
    pub hypotheses: HypothesisReport,
    /// Hex SHA-256 of the canonical JSON form.
    pub hash: String,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn invalid(e: impl std::fmt::Display) -> ModelError {
    ModelError::Invalid(e.to_string())
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Parse {
            line: e.span().map(|s| line_of(text, s.start)),
            message: e.message().to_string(),
        })
    }

    /// The model file describing an already built cone and step law.
    pub fn from_parts(
        name: Option<String>,
        pyramid: &Pyramid,
        distribution: &Distribution,
    ) -> Self {
        let distribution = match distribution {
            Distribution::Atomic(a) => DistributionSection::Atomic {
                atoms: a.points().to_vec(),
                probabilities: Some(a.probs().to_vec()),
            },
            Distribution::Gaussian(g) => DistributionSection::Gaussian {
                mean: g.mean().to_vec(),
            },
        };
        ModelFile {
            name,
            dim: pyramid.dim(),
            start: None,
            cone: ConeSection {
                normals: pyramid.normals().to_vec(),
            },
            distribution,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model files serialize")
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("model files serialize");
        hex::encode(Sha256::digest(canonical))
    }

    /// Builds the cone and step law and checks dimensions.
    pub fn build(self) -> Result<ModelSpec, ModelError> {
        let dim = self.dim;
        if dim == 0 {
            return Err(invalid("dim must be positive"));
        }
        let check = |what: &str, v: &[f64]| {
            if v.len() == dim {
                Ok(())
            } else {
                Err(invalid(format!(
                    "{what} has length {}, expected dim = {dim}",
                    v.len()
                )))
            }
        };
        for (i, u) in self.cone.normals.iter().enumerate() {
            check(&format!("cone.normals[{i}]"), u)?;
        }
        let pyramid = Pyramid::new(&self.cone.normals).map_err(invalid)?;
        let distribution: Distribution = match &self.distribution {
            DistributionSection::Atomic {
                atoms,
                probabilities,
            } => {
                for (i, a) in atoms.iter().enumerate() {
                    check(&format!("distribution.atoms[{i}]"), a)?;
                }
                match probabilities {
                    Some(p) => AtomicDistribution::new(atoms.clone(), p.clone()),
                    None => AtomicDistribution::uniform(atoms.clone()),
                }
                .map_err(invalid)?
                .into()
            }
            DistributionSection::Gaussian { mean } => {
                check("distribution.mean", mean)?;
                GaussianDistribution::new(mean.clone())
                    .map_err(invalid)?
                    .into()
            }
        };
        let start = self.start.clone().unwrap_or_else(|| vec![0.0; dim]);
        check("start", &start)?;
        if !pyramid.contains(&start, 1e-12) {
            return Err(invalid("start point lies outside the cone"));
        }
        let hypotheses = validate_hypotheses(&distribution, &pyramid);
        Ok(ModelSpec {
            hash: self.hash(),
            file: self,
            pyramid,
            distribution,
            start,
            hypotheses,
        })
    }
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        ModelFile::parse(text)?.build()
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn name(&self) -> Option<&str> {
        self.file.name.as_deref()
    }
}

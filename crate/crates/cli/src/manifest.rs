//! Comparison manifests: a JSON list of filters, each either a file or a
//! generator spec.
//!
//! ```json
//! [
//!   {"dims": [64, 64, 3, 3], "seed": 0, "n": 32},
//!   {"path": "weights/layer1.cft1", "label": "layer1"}
//! ]
//! ```
//!
//! Relative paths resolve against the manifest's directory. Missing `n`
//! falls back to the command-line default.

use std::path::{Path, PathBuf};

use convbound_core::{load_filter, random_filter, Filter4D, FilterDims, FilterFormat};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<FilterDims>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

impl ManifestEntry {
    pub fn generated(dims: FilterDims, seed: u64, n: Option<usize>) -> Self {
        Self {
            label: None,
            dims: Some(dims),
            seed: Some(seed),
            path: None,
            n,
        }
    }

    fn check(&self, i: usize) -> CliResult<()> {
        match (&self.path, &self.dims) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            (Some(_), Some(_)) => Err(CliError::Input(format!(
                "manifest entry {i}: give either path or dims, not both"
            ))),
            (None, None) => Err(CliError::Input(format!("manifest entry {i}: needs path or dims"))),
        }
    }
}

/// One filter to process, after seed expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub label: String,
    pub source: Source,
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Generated { dims: FilterDims, seed: u64 },
}

impl Job {
    pub fn seed(&self) -> Option<u64> {
        match self.source {
            Source::Generated { seed, .. } => Some(seed),
            Source::File(_) => None,
        }
    }

    pub fn load(&self) -> convbound_core::Result<Filter4D> {
        match &self.source {
            Source::File(path) => load_filter(path, FilterFormat::from_path(path)),
            Source::Generated { dims, seed } => random_filter(*dims, *seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        Self {
            entries,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        let entries: Vec<ManifestEntry> =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("manifest: {e}")))?;
        for (i, e) in entries.iter().enumerate() {
            e.check(i)?;
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| convbound_core::Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    /// Generator entries run with seeds `seed, seed + 1, ..., seed + seeds - 1`;
    /// file entries run once.
    pub fn jobs(&self, seeds: usize) -> Vec<Job> {
        let seeds = seeds.max(1) as u64;
        let mut jobs = Vec::new();
        for e in &self.entries {
            if let Some(path) = &e.path {
                let path = if path.is_absolute() { path.clone() } else { self.base_dir.join(path) };
                jobs.push(Job {
                    label: e.label.clone().unwrap_or_else(|| path.display().to_string()),
                    source: Source::File(path),
                    n: e.n,
                });
            } else if let Some(dims) = e.dims {
                let first = e.seed.unwrap_or(0);
                for seed in first..first + seeds {
                    jobs.push(Job {
                        label: e.label.clone().unwrap_or_else(|| dims.to_string()),
                        source: Source::Generated { dims, seed },
                        n: e.n,
                    });
                }
            }
        }
        jobs
    }
}

//! Synthetic multi-domain benchmarks with per-domain label sets and a shifted
//! target domain holding known and open classes.

mod io;
mod split;
mod synth;

pub use io::{load_benchmark, read_dataset_csv, save_benchmark, write_dataset_csv, write_manifest, BenchmarkManifest, MANIFEST_FILE};
pub use split::{build_class_split, split_train_val, ClassSplit, Preset};
pub use synth::{generate_benchmark, generate_domain, random_transform, BenchmarkConfig, DomainSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// What a dataset may be used for. Target data must never reach training,
/// prototype construction, or model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Val,
    Target,
    PretextTrain,
    PretextVal,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Target => "target",
            Role::PretextTrain => "pretext_train",
            Role::PretextVal => "pretext_val",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Role::Train, Role::Val, Role::Target, Role::PretextTrain, Role::PretextVal]
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown role `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub domain_id: usize,
    pub role: Role,
    /// `(n × D)` inputs.
    pub x: Matrix,
    /// Original class ids. Known classes are `0..C`; open classes are `≥ C`.
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn new(domain_id: usize, role: Role, x: Matrix, y: Vec<usize>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::shape(format!("{} inputs for {} labels", x.rows(), y.len())));
        }
        Ok(Self { domain_id, role, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    /// Fails if this is target-domain data.
    pub fn ensure_trainable(&self, context: &'static str) -> Result<()> {
        if self.role == Role::Target {
            return Err(Error::TargetLeak(context));
        }
        Ok(())
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.y.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn subset(&self, idx: &[usize], role: Role) -> Dataset {
        Dataset {
            domain_id: self.domain_id,
            role,
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Rows whose label satisfies `keep`.
    pub fn filter(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(self.y[i])).collect();
        self.subset(&idx, self.role)
    }

    /// Concatenates datasets that share a role; the domain id of the first is kept.
    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
        if parts.iter().any(|p| p.role != first.role) {
            return Err(Error::InvalidConfig("concat of datasets with different roles".into()));
        }
        let xs: Vec<&Matrix> = parts.iter().map(|p| &p.x).collect();
        Ok(Dataset {
            domain_id: first.domain_id,
            role: first.role,
            x: Matrix::vstack(&xs)?,
            y: parts.iter().flat_map(|p| p.y.iter().copied()).collect(),
        })
    }
}

/// A source domain with its stratified train/validation split.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDomain {
    pub domain_id: usize,
    pub train: Dataset,
    pub val: Dataset,
}

/// Auxiliary data for pretraining the feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct PretextData {
    pub train: Dataset,
    pub val: Dataset,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkBundle {
    pub config: BenchmarkConfig,
    pub seed: u64,
    pub class_split: ClassSplit,
    /// Generative latent means, one row per class id (benchmark classes first,
    /// then pretext-only auxiliary classes).
    pub class_means: Matrix,
    pub source_specs: Vec<DomainSpec>,
    pub target_spec: DomainSpec,
    pub pretext_specs: Vec<DomainSpec>,
    pub sources: Vec<SourceDomain>,
    pub target: Dataset,
    pub pretext: PretextData,
}

impl BenchmarkBundle {
    pub fn num_known(&self) -> usize {
        self.class_split.num_known()
    }

    pub fn input_dim(&self) -> usize {
        self.target.input_dim()
    }

    /// Pooled source training data.
    pub fn source_train(&self) -> Result<Dataset> {
        Dataset::concat(&self.sources.iter().map(|s| &s.train).collect::<Vec<_>>())
    }

    /// Pooled source validation data.
    pub fn source_val(&self) -> Result<Dataset> {
        Dataset::concat(&self.sources.iter().map(|s| &s.val).collect::<Vec<_>>())
    }

    /// Target samples of known classes.
    pub fn target_known(&self) -> Dataset {
        let c = self.num_known();
        self.target.filter(|y| y < c)
    }
}

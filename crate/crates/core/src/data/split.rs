use std::collections::BTreeSet;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Role};
use crate::error::{Error, Result};

/// Label sets of the source domains, the known-class union, and the open
/// classes present in the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub source_label_sets: Vec<BTreeSet<usize>>,
    /// Sorted union of the source label sets; always `0..C`.
    pub known: Vec<usize>,
    pub target_known: BTreeSet<usize>,
    pub open_class_ids: BTreeSet<usize>,
}

impl ClassSplit {
    pub fn num_known(&self) -> usize {
        self.known.len()
    }

    /// The single label every open class maps to at evaluation time.
    pub fn open_sentinel(&self) -> usize {
        self.known.len()
    }

    /// Known plus open class count.
    pub fn num_benchmark_classes(&self) -> usize {
        let max_open = self.open_class_ids.iter().next_back().map_or(0, |m| m + 1);
        self.num_known().max(max_open)
    }

    pub fn is_open(&self, class: usize) -> bool {
        self.open_class_ids.contains(&class)
    }

    pub fn target_classes(&self) -> Vec<usize> {
        self.target_known.iter().chain(&self.open_class_ids).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Three sources `{3,0,1}`, `{4,0,2}`, `{5,1,2}`; target `{0..6}` with 6 open.
    PacsLike,
    /// 54 known classes over three sources, 11 open classes, partial target.
    OfficeHomeLike,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::PacsLike => "pacs-like",
            Preset::OfficeHomeLike => "office-home-like",
        }
    }

    pub fn sets(self) -> (Vec<Vec<usize>>, Vec<usize>, Vec<usize>) {
        fn r(a: usize, b: usize) -> Vec<usize> {
            (a..=b).collect()
        }
        match self {
            Preset::PacsLike => (
                vec![vec![3, 0, 1], vec![4, 0, 2], vec![5, 1, 2]],
                (0..6).collect(),
                vec![6],
            ),
            Preset::OfficeHomeLike => {
                let s1 = [r(0, 2), r(3, 8), r(9, 14), r(21, 31)].concat();
                let s2 = [r(0, 2), r(3, 8), r(15, 20), r(32, 42)].concat();
                let s3 = [r(0, 2), r(9, 14), r(15, 20), r(43, 53)].concat();
                let target_known = [vec![0], r(3, 4), r(9, 10), r(15, 16), r(21, 23), r(32, 34), r(43, 45)].concat();
                (vec![s1, s2, s3], target_known, r(54, 64))
            }
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pacs-like" => Ok(Preset::PacsLike),
            "office-home-like" => Ok(Preset::OfficeHomeLike),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (expected pacs-like or office-home-like)"
            ))),
        }
    }
}

/// Validates a split given as explicit sets.
///
/// Known classes must be exactly `0..C` so that class ids double as head
/// output indices; open classes must lie outside the union.
pub fn build_class_split(
    source_sets: &[Vec<usize>],
    target_known: &[usize],
    open: &[usize],
) -> Result<ClassSplit> {
    if source_sets.len() < 2 {
        return Err(Error::InvalidSplit(format!(
            "need at least 2 source domains, got {}",
            source_sets.len()
        )));
    }
    let mut sets = Vec::with_capacity(source_sets.len());
    let mut union = BTreeSet::new();
    for (i, s) in source_sets.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::InvalidSplit(format!("source {i} has an empty label set")));
        }
        let set: BTreeSet<usize> = s.iter().copied().collect();
        union.extend(set.iter().copied());
        sets.push(set);
    }
    let known: Vec<usize> = union.into_iter().collect();
    if known.iter().enumerate().any(|(i, &c)| i != c) {
        return Err(Error::InvalidSplit(format!(
            "known classes must be contiguous from 0, got {known:?}"
        )));
    }
    let target_known: BTreeSet<usize> = target_known.iter().copied().collect();
    if let Some(c) = target_known.iter().find(|c| **c >= known.len()) {
        return Err(Error::InvalidSplit(format!(
            "target-known class {c} does not appear in any source"
        )));
    }
    let open_class_ids: BTreeSet<usize> = open.iter().copied().collect();
    if let Some(c) = open_class_ids.iter().find(|c| **c < known.len()) {
        return Err(Error::InvalidSplit(format!("open class {c} is a known class")));
    }
    Ok(ClassSplit {
        source_label_sets: sets,
        known,
        target_known,
        open_class_ids,
    })
}

impl Preset {
    pub fn split(self) -> ClassSplit {
        let (s, t, o) = self.sets();
        build_class_split(&s, &t, &o).expect("presets are valid")
    }
}

/// Stratified split: per class, `round(fraction · N_c)` samples go to
/// validation, at least one when `N_c ≥ 2` and never all of them.
pub fn split_train_val<R: Rng + ?Sized>(
    data: &Dataset,
    fraction: f64,
    val_role: Role,
    train_role: Role,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("validation fraction {fraction}")));
    }
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for c in data.classes() {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.y[i] == c).collect();
        let n = idx.len();
        let n_val = if n < 2 {
            warn!("class {c} in domain {} has a single sample; it gets no validation sample", data.domain_id);
            0
        } else {
            ((fraction * n as f64).round() as usize).clamp(1, n - 1)
        };
        idx.shuffle(rng);
        val_idx.extend_from_slice(&idx[..n_val]);
        train_idx.extend_from_slice(&idx[n_val..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((data.subset(&train_idx, train_role), data.subset(&val_idx, val_role)))
}

//! On-disk benchmark layout: one CSV per domain plus a JSON manifest.
//!
//! CSV columns are `domain_id,role,y,x0..x{D-1}`. Values are written with
//! Rust's shortest round-trip formatting so a reload is bitwise exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::data::split::ClassSplit;
use crate::data::synth::{BenchmarkConfig, DomainSpec};
use crate::data::{BenchmarkBundle, Dataset, PretextData, Role, SourceDomain};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "rpf-benchmark";
pub const MANIFEST_VERSION: u32 = 1;

pub fn write_dataset_csv(parts: &[&Dataset], path: &Path) -> Result<()> {
    let dim = parts.first().map_or(0, |d| d.input_dim());
    let mut s = String::from("domain_id,role,y");
    for k in 0..dim {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    for d in parts {
        for (r, &y) in d.y.iter().enumerate() {
            let _ = write!(s, "{},{},{}", d.domain_id, d.role.name(), y);
            for v in d.x.row(r) {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads a domain CSV, returning one dataset per role in order of first
/// appearance.
pub fn read_dataset_csv(path: &Path) -> Result<Vec<Dataset>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        msg: format!("line {line}: {msg}"),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[..3] != ["domain_id", "role", "y"] {
        return Err(perr(1, format!("unexpected header `{header}`")));
    }
    let dim = cols.len() - 3;
    let mut groups: Vec<(usize, Role, Vec<f64>, Vec<usize>)> = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let lineno = n + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(perr(lineno, format!("{} fields, expected {}", f.len(), cols.len())));
        }
        let domain: usize = f[0].parse().map_err(|_| perr(lineno, "bad domain_id".into()))?;
        let role: Role = f[1].parse().map_err(|_| perr(lineno, format!("bad role `{}`", f[1])))?;
        let y: usize = f[2].parse().map_err(|_| perr(lineno, "bad label".into()))?;
        let gi = match groups.iter().position(|g| g.0 == domain && g.1 == role) {
            Some(i) => i,
            None => {
                groups.push((domain, role, Vec::new(), Vec::new()));
                groups.len() - 1
            }
        };
        let g = &mut groups[gi];
        for v in &f[3..] {
            g.2.push(v.parse().map_err(|_| perr(lineno, format!("bad value `{v}`")))?);
        }
        g.3.push(y);
    }
    groups
        .into_iter()
        .map(|(domain, role, xs, ys)| Dataset::new(domain, role, Matrix::from_vec(ys.len(), dim, xs)?, ys))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DomainEntry {
    pub kind: String,
    pub file: String,
    pub spec: DomainSpec,
    pub counts: Vec<(String, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchmarkManifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: std::collections::BTreeMap<String, String>,
    pub class_split: ClassSplit,
    pub pretext_classes: usize,
    pub class_means: Vec<Vec<f64>>,
    pub domains: Vec<DomainEntry>,
    /// Provenance of the command that produced the directory, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

fn counts(parts: &[&Dataset]) -> Vec<(String, usize)> {
    parts.iter().map(|d| (d.role.name().to_string(), d.len())).collect()
}

pub fn save_benchmark(bundle: &BenchmarkBundle, dir: &Path) -> Result<BenchmarkManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut domains = Vec::new();
    for (src, spec) in bundle.sources.iter().zip(&bundle.source_specs) {
        let file = format!("source_{}.csv", src.domain_id);
        write_dataset_csv(&[&src.train, &src.val], &dir.join(&file))?;
        domains.push(DomainEntry {
            kind: "source".into(),
            file,
            spec: spec.clone(),
            counts: counts(&[&src.train, &src.val]),
        });
    }
    write_dataset_csv(&[&bundle.target], &dir.join("target.csv"))?;
    domains.push(DomainEntry {
        kind: "target".into(),
        file: "target.csv".into(),
        spec: bundle.target_spec.clone(),
        counts: counts(&[&bundle.target]),
    });
    write_dataset_csv(&[&bundle.pretext.train, &bundle.pretext.val], &dir.join("pretext.csv"))?;
    for spec in &bundle.pretext_specs {
        domains.push(DomainEntry {
            kind: "pretext".into(),
            file: "pretext.csv".into(),
            spec: spec.clone(),
            counts: Vec::new(),
        });
    }
    let manifest = BenchmarkManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        seed: bundle.seed,
        config: bundle.config.to_kv().as_map().clone(),
        class_split: bundle.class_split.clone(),
        pretext_classes: bundle.pretext.num_classes,
        class_means: bundle.class_means.iter_rows().map(<[f64]>::to_vec).collect(),
        domains,
        run: None,
    };
    write_manifest(dir, &manifest)?;
    Ok(manifest)
}

pub fn write_manifest(dir: &Path, manifest: &BenchmarkManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(manifest)?).map_err(|e| Error::io(&path, e))
}

pub fn load_benchmark(dir: &Path) -> Result<BenchmarkBundle> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: BenchmarkManifest = serde_json::from_str(&text)?;
    if m.format != MANIFEST_FORMAT {
        return Err(Error::Format(format!("manifest format `{}`", m.format)));
    }
    if m.version != MANIFEST_VERSION {
        return Err(Error::Version {
            found: m.version,
            supported: MANIFEST_VERSION,
        });
    }
    let config = BenchmarkConfig::from_kv(&KvConfig::from_map(m.config.clone()))?;
    let take = |sets: &mut Vec<Dataset>, role: Role, file: &str| -> Result<Dataset> {
        let i = sets
            .iter()
            .position(|d| d.role == role)
            .ok_or_else(|| Error::Format(format!("{file} has no `{}` rows", role.name())))?;
        Ok(sets.remove(i))
    };
    let mut sources = Vec::new();
    let mut source_specs = Vec::new();
    let mut target = None;
    let mut target_spec = None;
    let mut pretext_specs = Vec::new();
    for entry in &m.domains {
        match entry.kind.as_str() {
            "source" => {
                let mut sets = read_dataset_csv(&dir.join(&entry.file))?;
                let train = take(&mut sets, Role::Train, &entry.file)?;
                let val = take(&mut sets, Role::Val, &entry.file)?;
                sources.push(SourceDomain {
                    domain_id: entry.spec.domain_id,
                    train,
                    val,
                });
                source_specs.push(entry.spec.clone());
            }
            "target" => {
                let mut sets = read_dataset_csv(&dir.join(&entry.file))?;
                target = Some(take(&mut sets, Role::Target, &entry.file)?);
                target_spec = Some(entry.spec.clone());
            }
            "pretext" => pretext_specs.push(entry.spec.clone()),
            other => return Err(Error::Format(format!("unknown domain kind `{other}`"))),
        }
    }
    let mut pretext_sets = read_dataset_csv(&dir.join("pretext.csv"))?;
    let pretext_train = Dataset::concat(
        &pretext_sets
            .iter()
            .filter(|d| d.role == Role::PretextTrain)
            .collect::<Vec<_>>(),
    )?;
    pretext_sets.retain(|d| d.role == Role::PretextVal);
    let pretext_val = Dataset::concat(&pretext_sets.iter().collect::<Vec<_>>())?;
    Ok(BenchmarkBundle {
        config,
        seed: m.seed,
        class_split: m.class_split,
        class_means: Matrix::from_rows(&m.class_means)?,
        source_specs,
        target_spec: target_spec.ok_or_else(|| Error::Format("manifest lists no target".into()))?,
        pretext_specs,
        sources,
        target: target.ok_or_else(|| Error::Format("manifest lists no target".into()))?,
        pretext: PretextData {
            train: pretext_train,
            val: pretext_val,
            num_classes: m.pretext_classes,
        },
    })
}

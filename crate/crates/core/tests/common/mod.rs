#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rpf::config::KvConfig;
use rpf::linalg::Matrix;
use rpf::losses::{Batch, PrototypeBank};
use rpf::nn::{Activation, Frozen, HeadParams, MlpParams, ModelState};
use rpf::rng::{SeedTree, Stream};
use rpf::train::TrainConfig;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// `TrainConfig` defaults overlaid with `configs/desk.conf`.
pub fn desk_config() -> TrainConfig {
    let kv = KvConfig::load(&workspace_root().join("configs/desk.conf")).expect("desk profile");
    TrainConfig::from_kv(&kv).expect("valid desk profile")
}

pub fn random_matrix(rng: &mut Stream, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub struct Tiny {
    pub state: ModelState,
    pub bank: PrototypeBank,
    pub batch: Batch,
}

/// A small network (`in → hidden → feat`, `C` classes) with `f ≠ f0`,
/// `h ≠ h_lp`, a random prototype bank and a random labeled batch.
pub fn tiny(seed: u64, act: Activation, dims: &[usize], classes: usize, batch: usize) -> Tiny {
    let seeds = SeedTree::new(seed);
    let f0 = MlpParams::init(dims, act, &seeds, "f0").unwrap();
    let f = MlpParams::init(dims, act, &seeds, "f").unwrap();
    let feat = *dims.last().unwrap();
    let h = HeadParams::init(feat, classes, &seeds, "h");
    let h_lp = HeadParams::init(feat, classes, &seeds, "h_lp");
    let state = ModelState::from_parts(f, h, Frozen::new(f0), Some(Frozen::new(h_lp))).unwrap();
    let mut rng = seeds.stream("data");
    let bank = PrototypeBank::new(random_matrix(&mut rng, classes, feat, 1.0), vec![1; classes]).unwrap();
    let x = random_matrix(&mut rng, batch, dims[0], 1.5);
    let y = (0..batch).map(|i| i % classes).collect();
    Tiny {
        state,
        bank,
        batch: Batch::new(x, y).unwrap(),
    }
}

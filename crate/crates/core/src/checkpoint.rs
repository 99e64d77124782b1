//! Binary checkpoints with a JSON sidecar.
//!
//! Layout (all integers `u32` little-endian unless noted):
//!
//! ```text
//! "RPFCKPT"  version  activation  layer_count  (in, out) × layer_count
//! C  d  flags
//! f      : per layer, weight (out × in, row-major) then bias, as f64 LE
//! h      : weight (C × d) then bias
//! f0     : as f
//! h_lp   : as h                      (flags bit 0)
//! bank   : prototypes (C × d), then C counts as u64 LE   (flags bit 1)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::losses::PrototypeBank;
use crate::nn::{Activation, Dense, Frozen, HeadParams, MlpParams, ModelState};

pub const MAGIC: &[u8; 7] = b"RPFCKPT";
pub const FORMAT_VERSION: u32 = 1;

const FLAG_HEAD_SNAPSHOT: u32 = 1;
const FLAG_BANK: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub bank: Option<PrototypeBank>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub variant: String,
    pub selected_epoch: usize,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_mlp(out: &mut Vec<u8>, m: &MlpParams) {
    for l in m.layers() {
        put_f64s(out, l.weight.as_slice());
        put_f64s(out, &l.bias);
    }
}

fn put_head(out: &mut Vec<u8>, h: &HeadParams) {
    put_f64s(out, h.weight.as_slice());
    put_f64s(out, &h.bias);
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let s = &ckpt.state;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&s.f.activation().code().to_le_bytes());
    let dims = s.f.dims();
    put_u32(&mut out, dims.len())?;
    for (i, o) in dims {
        put_u32(&mut out, i)?;
        put_u32(&mut out, o)?;
    }
    put_u32(&mut out, s.h.num_classes())?;
    put_u32(&mut out, s.h.feature_dim())?;
    let mut flags = 0;
    if s.h_lp().is_some() {
        flags |= FLAG_HEAD_SNAPSHOT;
    }
    if let Some(bank) = &ckpt.bank {
        if bank.num_classes() != s.h.num_classes() || bank.feature_dim() != s.h.feature_dim() {
            return Err(Error::shape("prototype bank does not match the head"));
        }
        flags |= FLAG_BANK;
    }
    out.extend_from_slice(&flags.to_le_bytes());
    put_mlp(&mut out, &s.f);
    put_head(&mut out, &s.h);
    put_mlp(&mut out, s.f0());
    if let Some(h) = s.h_lp() {
        put_head(&mut out, h);
    }
    if let Some(bank) = &ckpt.bank {
        put_f64s(&mut out, bank.matrix().as_slice());
        for &c in bank.counts() {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn dim(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Format("block size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("block size overflow".into()))?;
        Matrix::from_vec(rows, cols, self.f64s(n)?)
    }

    fn mlp(&mut self, dims: &[(usize, usize)], act: Activation) -> Result<MlpParams> {
        let mut layers = Vec::with_capacity(dims.len());
        for &(i, o) in dims {
            let weight = self.matrix(o, i)?;
            let bias = self.f64s(o)?;
            layers.push(Dense { weight, bias });
        }
        MlpParams::new(layers, act)
    }

    fn head(&mut self, c: usize, d: usize) -> Result<HeadParams> {
        let weight = self.matrix(c, d)?;
        let bias = self.f64s(c)?;
        HeadParams::new(weight, bias)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(&MAGIC[..]) {
        return Err(Error::Format("bad magic, not an rpf checkpoint".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let code = r.u32()?;
    let act = Activation::from_code(code).ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
    let layers = r.dim()?;
    if layers == 0 || layers > 1024 {
        return Err(Error::Format(format!("implausible layer count {layers}")));
    }
    let dims = (0..layers)
        .map(|_| Ok((r.dim()?, r.dim()?)))
        .collect::<Result<Vec<_>>>()?;
    let c = r.dim()?;
    let d = r.dim()?;
    let flags = r.u32()?;
    if flags & !(FLAG_HEAD_SNAPSHOT | FLAG_BANK) != 0 {
        return Err(Error::Format(format!("unknown flags {flags:#x}")));
    }
    let f = r.mlp(&dims, act)?;
    let h = r.head(c, d)?;
    let f0 = r.mlp(&dims, act)?;
    let h_lp = if flags & FLAG_HEAD_SNAPSHOT != 0 {
        Some(Frozen::new(r.head(c, d)?))
    } else {
        None
    };
    let bank = if flags & FLAG_BANK != 0 {
        let protos = r.matrix(c, d)?;
        let counts = (0..c).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        Some(PrototypeBank::new(protos, counts)?)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let state = ModelState::from_parts(f, h, Frozen::new(f0), h_lp)?;
    Ok(Checkpoint { state, bank })
}

/// `model.rpfckpt` → `model.rpfckpt.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint, meta: &CheckpointMeta) -> Result<()> {
    fs::write(path, encode(ckpt)?).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io(&side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn load_meta(path: &Path) -> Result<CheckpointMeta> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok(serde_json::from_str(&text)?)
}

//! Noise/endpoint pair datasets and the `SFPAIR1` file format.
//!
//! Binary layout (little-endian): magic `SFPAIR1\0`, `u32` version (1), `u32`
//! dim, `u64` count, then `count` records of `dim` f64 noise values followed by
//! `dim` f64 endpoint values. Provenance lives in a JSON sidecar
//! `<file>.meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::binio::{put_f64s, Cursor};
use crate::data_io::toy::sample_noise;
use crate::error::{check_dim, Error, Result};
use crate::nn::{Checkpoint, VelocityField};
use crate::solvers::{SolverSpec, Velocity};

pub const PAIR_MAGIC: &[u8; 8] = b"SFPAIR1\0";
pub const PAIR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub x1: Vec<f64>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub teacher_hash: String,
    pub solver: String,
    pub seed: u64,
    pub requested: usize,
    pub skipped: Vec<usize>,
    #[serde(default)]
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub dim: usize,
    pub pairs: Vec<Pair>,
    pub provenance: Provenance,
}

impl PairDataset {
    pub fn new(dim: usize, pairs: Vec<Pair>, provenance: Provenance) -> Result<Self> {
        for p in &pairs {
            check_dim(dim, p.x1.len())?;
            check_dim(dim, p.x0.len())?;
        }
        Ok(PairDataset {
            dim,
            pairs,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn endpoints(&self) -> Vec<Vec<f64>> {
        self.pairs.iter().map(|p| p.x0.clone()).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.len() * self.dim * 16);
        out.extend_from_slice(PAIR_MAGIC);
        out.extend_from_slice(&PAIR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for p in &self.pairs {
            put_f64s(&mut out, &p.x1);
            put_f64s(&mut out, &p.x0);
        }
        out
    }

    /// Parses the binary part; provenance must be supplied separately.
    pub fn from_bytes(buf: &[u8], provenance: Provenance) -> Result<Self> {
        let mut cur = Cursor::new(buf);
        if cur.take(8, "magic")? != PAIR_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                msg: "bad pair-file magic".into(),
            });
        }
        let version = cur.u32("version")?;
        if version != PAIR_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = cur.u32("dim")? as usize;
        let count_offset = cur.offset();
        let count = cur.u64("count")? as usize;
        let need = count.checked_mul(dim).and_then(|v| v.checked_mul(16));
        if need != Some(cur.remaining()) {
            return Err(Error::Parse {
                offset: count_offset,
                msg: format!(
                    "count {count} x dim {dim} does not match {} payload bytes",
                    cur.remaining()
                ),
            });
        }
        if dim == 0 && count > 0 {
            return Err(Error::Parse {
                offset: count_offset,
                msg: "zero dim with non-zero count".into(),
            });
        }
        let mut pairs = Vec::with_capacity(count);
        for _ in 0..count {
            let x1 = cur.f64s(dim, "noise record")?;
            let x0 = cur.f64s(dim, "endpoint record")?;
            pairs.push(Pair { x1, x0 });
        }
        cur.expect_end()?;
        Ok(PairDataset {
            dim,
            pairs,
            provenance,
        })
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn save_pairs(ds: &PairDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ds.to_bytes()).map_err(|e| Error::io(path, e))?;
    let meta = meta_path(path);
    let json = serde_json::to_string_pretty(&ds.provenance)?;
    fs::write(&meta, json).map_err(|e| Error::io(meta, e))
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<PairDataset> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let meta = meta_path(path);
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let provenance: Provenance = serde_json::from_str(&text)?;
    PairDataset::from_bytes(&buf, provenance)
}

/// Integrates `n` per-index seeded noises through `teacher`. Samples whose solve
/// fails are dropped and listed in the provenance; 1% or more failures abort.
pub fn generate_pairs(
    teacher: &VelocityField,
    n: usize,
    solver: &SolverSpec,
    seed: u64,
) -> Result<PairDataset> {
    let hash = Checkpoint::new(teacher.clone()).hash();
    generate_pairs_with(teacher, hash, n, solver, seed)
}

pub fn generate_pairs_with<V: Velocity + ?Sized>(
    teacher: &V,
    teacher_hash: String,
    n: usize,
    solver: &SolverSpec,
    seed: u64,
) -> Result<PairDataset> {
    solver.validate()?;
    let dim = teacher.dim();
    let mut pairs = Vec::with_capacity(n);
    let mut skipped = Vec::new();
    for (i, x1) in sample_noise(dim, n, seed).into_iter().enumerate() {
        match solver.solve(teacher, &x1) {
            Ok(tr) => pairs.push(Pair {
                x0: tr.endpoint().to_vec(),
                x1,
            }),
            Err(_) => skipped.push(i),
        }
    }
    if !skipped.is_empty() && skipped.len() * 100 >= n {
        return Err(Error::TooManySkipped {
            skipped: skipped.len(),
            requested: n,
        });
    }
    let provenance = Provenance {
        teacher_hash,
        solver: solver.to_string(),
        seed,
        requested: n,
        skipped,
        augmented: false,
    };
    Ok(PairDataset {
        dim,
        pairs,
        provenance,
    })
}

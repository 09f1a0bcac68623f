//! `SFCKPT1` checkpoint files.
//!
//! Layout (little-endian): 8-byte magic `SFCKPT1\0`; `u32` in_dim; `u32` number
//! of hidden layers followed by one `u32` per width; `u32` time_embed_dim;
//! `u32` activation id; `u64` param_count; `param_count` `f64` weights; a `u8`
//! EMA presence flag, followed by `param_count` `f64` shadow weights when set.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::binio::{put_f64s, Cursor};
use crate::error::{Error, Result};
use crate::nn::{Activation, MlpSpec, VelocityField};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SFCKPT1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub field: VelocityField,
    pub ema: Option<Vec<f64>>,
}

impl Checkpoint {
    pub fn new(field: VelocityField) -> Self {
        Checkpoint { field, ema: None }
    }

    /// The weights used for sampling: the EMA shadow when present.
    pub fn inference_field(&self) -> Result<VelocityField> {
        match &self.ema {
            Some(shadow) => VelocityField::from_weights(self.field.spec().clone(), shadow.clone()),
            None => Ok(self.field.clone()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.field.spec();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(spec.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(spec.hidden.len() as u32).to_le_bytes());
        for &w in &spec.hidden {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        out.extend_from_slice(&(spec.time_embed_dim as u32).to_le_bytes());
        out.extend_from_slice(&spec.activation.id().to_le_bytes());
        out.extend_from_slice(&(self.field.param_count() as u64).to_le_bytes());
        put_f64s(&mut out, self.field.weights());
        match &self.ema {
            Some(shadow) => {
                out.push(1);
                put_f64s(&mut out, shadow);
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(buf);
        if cur.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                msg: "bad checkpoint magic".into(),
            });
        }
        let in_dim = cur.u32("in_dim")? as usize;
        let n_hidden = cur.u32("hidden count")? as usize;
        if n_hidden > cur.remaining() / 4 {
            return Err(Error::Parse {
                offset: cur.offset(),
                msg: format!("hidden count {n_hidden} too large"),
            });
        }
        let hidden = (0..n_hidden)
            .map(|_| cur.u32("hidden width").map(|w| w as usize))
            .collect::<Result<_>>()?;
        let time_embed_dim = cur.u32("time_embed_dim")? as usize;
        let act_offset = cur.offset();
        let activation =
            Activation::from_id(cur.u32("activation")?).ok_or_else(|| Error::Parse {
                offset: act_offset,
                msg: "unknown activation id".into(),
            })?;
        let spec = MlpSpec {
            in_dim,
            hidden,
            time_embed_dim,
            activation,
        };
        let count_offset = cur.offset();
        let count = cur.u64("param_count")? as usize;
        spec.validate().map_err(|e| Error::Parse {
            offset: 0,
            msg: e.to_string(),
        })?;
        if count != spec.param_count() {
            return Err(Error::Parse {
                offset: count_offset,
                msg: format!(
                    "param_count {count} does not match spec ({})",
                    spec.param_count()
                ),
            });
        }
        let weights = cur.f64s(count, "weights")?;
        let flag_offset = cur.offset();
        let ema = match cur.u8("ema flag")? {
            0 => None,
            1 => Some(cur.f64s(count, "ema shadow")?),
            other => {
                return Err(Error::Parse {
                    offset: flag_offset,
                    msg: format!("bad ema flag {other}"),
                });
            }
        };
        cur.expect_end()?;
        let field = VelocityField::from_weights(spec, weights).map_err(|e| Error::Parse {
            offset: 0,
            msg: e.to_string(),
        })?;
        Ok(Checkpoint { field, ema })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> String {
        hex_digest(&self.to_bytes())
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

//! `SRM1` model files.
//!
//! Layout, all little-endian: magic `SRM1`, u32 version, u32 L, H, C, V, f64 dropout
//! rate, u64 train seed, u8 probe flag, then f64 blocks row-major: embedding (V x H),
//! per layer weights (H x H) and bias (H), head weights (C x H) and bias (C), and when
//! the flag is set, per layer probe weights (C x H) and bias (C).

use std::io::{Read, Write};
use std::path::Path;

use super::surrogate::{Dense, ModelHandle, Params};
use super::{ModelError, ModelSpec};

pub const MODEL_MAGIC: &[u8; 4] = b"SRM1";
const VERSION: u32 = 1;
/// Refuses headers that would need more than this many weights.
const MAX_WEIGHTS: usize = 1 << 28;

pub fn encode_model(m: &ModelHandle) -> Vec<u8> {
    let s = &m.spec;
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    for v in [VERSION, s.num_layers as u32, s.hidden_dim as u32, s.num_classes as u32, s.vocab_hash_dim as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&s.dropout_rate.to_le_bytes());
    out.extend_from_slice(&m.train_seed.to_le_bytes());
    out.push(u8::from(m.probes.is_some()));
    let mut blocks = m.params.slices();
    if let Some(p) = &m.probes {
        for d in p {
            blocks.push(&d.w);
            blocks.push(&d.b);
        }
    }
    for block in blocks {
        for x in block {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, ModelError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| ModelError::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn dense(&mut self, inp: usize, out: usize) -> Result<Dense, ModelError> {
        Ok(Dense {
            inp,
            out,
            w: self.f64s(inp * out)?,
            b: self.f64s(out)?,
        })
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelHandle, ModelError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MODEL_MAGIC {
        return Err(ModelError::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(ModelError::Format(format!("unsupported version {version}")));
    }
    let dims: Vec<usize> = (0..4).map(|_| c.u32().map(|v| v as usize)).collect::<Result<_, _>>()?;
    let spec = ModelSpec {
        num_layers: dims[0],
        hidden_dim: dims[1],
        num_classes: dims[2],
        vocab_hash_dim: dims[3],
        dropout_rate: f64::from_bits(c.u64()?),
    };
    spec.validate().map_err(|e| ModelError::Format(e.to_string()))?;
    let (l, h, k, v) = (spec.num_layers, spec.hidden_dim, spec.num_classes, spec.vocab_hash_dim);
    let fits = v
        .checked_mul(h)
        .and_then(|e| l.checked_mul(h.checked_mul(h)? + h)?.checked_add(e))
        .and_then(|t| t.checked_add((l + 1).checked_mul(k.checked_mul(h)? + k)?))
        .is_some_and(|t| t <= MAX_WEIGHTS);
    if !fits {
        return Err(ModelError::Format("dimensions too large".into()));
    }
    let train_seed = c.u64()?;
    let has_probes = match c.take(1)?[0] {
        0 => false,
        1 => true,
        f => return Err(ModelError::Format(format!("bad probe flag {f}"))),
    };
    let embedding = c.f64s(v * h)?;
    let layers = (0..l).map(|_| c.dense(h, h)).collect::<Result<Vec<_>, _>>()?;
    let head = c.dense(h, k)?;
    let probes = if has_probes {
        Some((0..l).map(|_| c.dense(h, k)).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    if c.pos != bytes.len() {
        return Err(ModelError::Format(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(ModelHandle {
        spec,
        train_seed,
        params: Params {
            embedding,
            layers,
            head,
        },
        probes,
    })
}

pub fn save_model(m: &ModelHandle, path: &Path) -> Result<(), ModelError> {
    let io = |e: std::io::Error| ModelError::Io(format!("{}: {e}", path.display()));
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&encode_model(m)).map_err(io)
}

pub fn load_model(path: &Path) -> Result<ModelHandle, ModelError> {
    let io = |e: std::io::Error| ModelError::Io(format!("{}: {e}", path.display()));
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io)?
        .read_to_end(&mut bytes)
        .map_err(io)?;
    decode_model(&bytes)
}

//! Checkpoint files.
//!
//! Little-endian layout: magic `CBRT`, version `u16`, config block length
//! `u32` and UTF-8 `key=value` lines, tensor count `u32`, then per tensor a
//! `u16` name length and UTF-8 name, `u8` rank, `u32` dims and `f32` data.
//! Tensors are written in name order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{ParamStore, Tensor};

use super::config::EncoderConfig;
use super::model::Encoder;

pub const MAGIC: &[u8; 4] = b"CBRT";
pub const VERSION: u16 = 1;

/// Parsed file contents before any shape validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let block: String = self.config.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        out.extend_from_slice(&(block.len() as u32).to_le_bytes());
        out.extend_from_slice(block.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            let name_len = u16::try_from(name.len()).map_err(|_| Error::Checkpoint {
                tensor: name.to_string(),
                msg: "name longer than 65535 bytes".into(),
            })?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format { offset: 0, msg: "bad magic, expected CBRT".into() });
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Format { offset: 4, msg: format!("unsupported version {version}") });
        }
        let block_len = r.u32()? as usize;
        let block_at = r.pos;
        let block = std::str::from_utf8(r.take(block_len)?)
            .map_err(|_| Error::Format { offset: block_at, msg: "config block is not UTF-8".into() })?;
        let mut config = Vec::new();
        for line in block.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format { offset: block_at, msg: format!("config line without '=': {line:?}") })?;
            config.push((k.to_string(), v.to_string()));
        }
        let count = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format { offset: at, msg: "tensor name is not UTF-8".into() })?
                .to_string();
            let rank = r.take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint {
                tensor: name.clone(),
                msg: format!("shape {shape:?} overflows"),
            })?)?;
            let data = raw.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect();
            let t = Tensor::new(&shape, data)
                .map_err(|e| Error::Checkpoint { tensor: name.clone(), msg: e.to_string() })?;
            if params.contains(&name) {
                return Err(Error::Checkpoint { tensor: name, msg: "duplicate tensor".into() });
            }
            params.insert(name, t);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format { offset: r.pos, msg: format!("{} trailing bytes", bytes.len() - r.pos) });
        }
        Ok(Checkpoint { config, params })
    }

    /// Rebuilds the encoder described by the config block, naming the first
    /// tensor whose shape disagrees with it.
    pub fn encoder(&self) -> Result<Encoder> {
        let cfg = EncoderConfig::from_pairs(&self.config)?;
        Encoder::from_params(cfg, self.params.clone())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            offset: self.pos,
            msg: format!("truncated: need {n} bytes, {} left", self.bytes.len() - self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Writes `encoder` with `config` as the config block. Model keys missing
/// from `config` are appended so the file is always self-describing.
pub fn save_checkpoint(path: &Path, encoder: &Encoder, config: &[(String, String)]) -> Result<()> {
    let mut block = config.to_vec();
    for (k, v) in encoder.config.to_pairs() {
        if !block.iter().any(|(bk, _)| *bk == k) {
            block.push((k, v));
        }
    }
    let ck = Checkpoint { config: block, params: encoder.params.clone() };
    std::fs::write(path, ck.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<(Encoder, Vec<(String, String)>)> {
    let ck = read_checkpoint(path)?;
    Ok((ck.encoder()?, ck.config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Encoder {
        let mut cfg = EncoderConfig::toy(20);
        cfg.max_len = 12;
        cfg.pinyin_dim = 4;
        cfg.num_tags = 4;
        Encoder::init(cfg, 3).unwrap()
    }

    #[test]
    fn roundtrip_within_f32_rounding() {
        let enc = toy();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &enc, &[("seed".into(), "3".into())]).unwrap();
        let (back, cfg) = load_checkpoint(&p).unwrap();
        assert_eq!(back.config, enc.config);
        assert_eq!(cfg[0], ("seed".to_string(), "3".to_string()));
        for (name, t) in enc.params.iter() {
            let b = back.params.get(name).unwrap();
            for (x, y) in t.data().iter().zip(b.data()) {
                assert_eq!(*y, f64::from(*x as f32), "{name}");
            }
        }
        let first = std::fs::read(&p).unwrap();
        let again = read_checkpoint(&p).unwrap().to_bytes().unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn mismatched_width_names_first_tensor() {
        let enc = toy();
        let mut cfg = enc.config.to_pairs();
        for (k, v) in cfg.iter_mut() {
            if k == "hidden" {
                *v = "8".into();
            }
        }
        let ck = Checkpoint { config: cfg, params: enc.params };
        let err = ck.encoder().unwrap_err();
        assert!(matches!(err, Error::Checkpoint { ref tensor, .. } if tensor == "embed.char"), "{err}");
    }

    #[test]
    fn header_errors() {
        let enc = toy();
        let bytes = Checkpoint { config: enc.config.to_pairs(), params: enc.params }.to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Format { offset: 4, .. })));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format { .. })));
    }

    #[test]
    fn ablated_checkpoint_is_smaller() {
        let full = toy();
        let mut cfg = full.config.clone();
        cfg.use_glyph = false;
        let ablated = Encoder::init(cfg, 3).unwrap();
        assert!(ablated.params.names().all(|n| !n.starts_with("glyph.")));
        assert!(ablated.param_count() < full.param_count());
    }
}

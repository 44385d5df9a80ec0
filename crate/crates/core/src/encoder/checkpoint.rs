//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic          8 bytes   "CADVCKPT"
//! version        u32       1
//! n_fields       u32
//! n_fields × {  name_len u16, name (UTF-8), value f64 }
//! n_arrays       u32
//! n_arrays × {  name_len u16, name (UTF-8), ndim u32, dims ndim × u64,
//!               values prod(dims) × f64, row-major }
//! ```
//!
//! Config fields are the [`ModelConfig`] field names. Arrays use the dotted
//! names produced by [`Weights::named`](super::Weights::named), in that
//! order. Readers reject missing fields or arrays and shape mismatches, and
//! ignore unknown config fields.

use std::io::{Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelError, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CADVCKPT";
const VERSION: u32 = 1;

fn config_fields(c: &ModelConfig) -> Vec<(&'static str, f64)> {
    vec![
        ("vocab_size", c.vocab_size as f64),
        ("hidden_size", c.hidden_size as f64),
        ("n_layers", c.n_layers as f64),
        ("n_heads", c.n_heads as f64),
        ("ff_size", c.ff_size as f64),
        ("max_len", c.max_len as f64),
        ("n_classes", c.n_classes as f64),
        ("proj_size", c.proj_size as f64),
        ("proj_layers", c.proj_layers as f64),
        ("dropout", c.dropout),
    ]
}

fn put_name(out: &mut Vec<u8>, name: &str) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<(), ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let fields = config_fields(config);
    out.extend_from_slice(&(fields.len() as u32).to_le_bytes());
    for (name, value) in fields {
        put_name(&mut out, name);
        out.extend_from_slice(&value.to_le_bytes());
    }
    let arrays = params.named();
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, t) in arrays {
        put_name(&mut out, &name);
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&out)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String, ModelError> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| ModelError::Checkpoint("name is not UTF-8".into()))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelConfig, ModelParams), ModelError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(ModelError::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let n_fields = c.u32()?;
    let mut fields = std::collections::HashMap::new();
    for _ in 0..n_fields {
        let name = c.name()?;
        fields.insert(name, c.f64()?);
    }
    let get = |name: &str| {
        fields
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::Checkpoint(format!("missing config field {name}")))
    };
    let count = |name: &str| get(name).map(|v| v as usize);
    let config = ModelConfig {
        vocab_size: count("vocab_size")?,
        hidden_size: count("hidden_size")?,
        n_layers: count("n_layers")?,
        n_heads: count("n_heads")?,
        ff_size: count("ff_size")?,
        max_len: count("max_len")?,
        n_classes: count("n_classes")?,
        proj_size: count("proj_size")?,
        proj_layers: count("proj_layers")?,
        dropout: get("dropout")?,
    };
    config.validate()?;

    let n_arrays = c.u32()? as usize;
    let mut arrays = std::collections::HashMap::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let name = c.name()?;
        let ndim = c.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| c.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| c.f64()).collect::<Result<Vec<_>, _>>()?;
        arrays.insert(name, Tensor::new(dims, data)?);
    }
    if c.pos != buf.len() {
        return Err(ModelError::Checkpoint("trailing bytes".into()));
    }

    let mut params = ModelParams::init(&config, 0)?;
    let mut problem = None;
    params.visit_mut(&mut |name, slot| match arrays.remove(&name) {
        Some(t) if t.shape() == slot.shape() => *slot = t,
        Some(t) => {
            problem.get_or_insert(format!(
                "array {name}: shape {:?}, expected {:?}",
                t.shape(),
                slot.shape()
            ));
        }
        None => {
            problem.get_or_insert(format!("missing array {name}"));
        }
    });
    if let Some(p) = problem {
        return Err(ModelError::Checkpoint(p));
    }
    if let Some(extra) = arrays.keys().min() {
        return Err(ModelError::Checkpoint(format!("unexpected array {extra}")));
    }
    Ok((config, params))
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), config, params)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ModelParams), ModelError> {
    read_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 9,
            hidden_size: 8,
            n_layers: 1,
            n_heads: 2,
            ff_size: 8,
            max_len: 5,
            n_classes: 2,
            proj_size: 4,
            proj_layers: 2,
            dropout: 0.0,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = cfg();
        let p = ModelParams::init(&c, 11).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c, &p).unwrap();
        let (c2, p2) = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(c, c2);
        assert_eq!(p, p2);
        let mut again = Vec::new();
        write_checkpoint(&mut again, &c2, &p2).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn header_layout() {
        let c = cfg();
        let p = ModelParams::init(&c, 0).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c, &p).unwrap();
        assert_eq!(&buf[..8], b"CADVCKPT");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 10);
        assert_eq!(u16::from_le_bytes(buf[16..18].try_into().unwrap()), 10);
        assert_eq!(&buf[18..28], b"vocab_size");
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), 9.0);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let c = cfg();
        let p = ModelParams::init(&c, 0).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &c, &p).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(bad.as_slice()).is_err());
        let mut longer = buf;
        longer.push(0);
        assert!(read_checkpoint(longer.as_slice()).is_err());
    }
}

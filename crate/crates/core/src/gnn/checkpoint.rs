//! Binary checkpoint: `TEMGMDL`, `u16` version, length-prefixed config JSON,
//! length-prefixed provenance string, then named `f64` tensors with shapes.
//! All integers little-endian.

use std::io::{Read, Write};
use std::path::Path;

use super::model::ModelParams;
use super::{GnnError, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"TEMGMDL";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Free-form origin tag, e.g. `train` or `tta`.
    pub provenance: String,
    pub params: ModelParams,
}

fn put_bytes<W: Write>(w: &mut W, b: &[u8]) -> std::io::Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)
}

pub fn write_checkpoint<W: Write>(mut w: W, ck: &Checkpoint) -> Result<(), GnnError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let cfg = serde_json::to_vec(&ck.config).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    put_bytes(&mut w, &cfg)?;
    put_bytes(&mut w, ck.provenance.as_bytes())?;
    let tensors = ck.params.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, m) in tensors {
        put_bytes(&mut w, name.as_bytes())?;
        w.write_all(&(m.nrows() as u32).to_le_bytes())?;
        w.write_all(&(m.ncols() as u32).to_le_bytes())?;
        for v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], GnnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| GnnError::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, GnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<&'a [u8], GnnError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    fn string(&mut self) -> Result<String, GnnError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| GnnError::Checkpoint("invalid utf-8".into()))
    }
}

/// Parses a checkpoint; with `expected` set, a differing config is rejected.
pub fn read_checkpoint<R: Read>(mut r: R, expected: Option<&ModelConfig>) -> Result<Checkpoint, GnnError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(7)? != CHECKPOINT_MAGIC {
        return Err(GnnError::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(GnnError::Checkpoint(format!("unsupported version {version}")));
    }
    let config: ModelConfig =
        serde_json::from_slice(c.bytes()?).map_err(|e| GnnError::Checkpoint(format!("config: {e}")))?;
    if expected.is_some_and(|e| *e != config) {
        return Err(GnnError::ConfigMismatch);
    }
    let provenance = c.string()?;
    let mut params = ModelParams::init(&config, 0)?;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let count = c.u32()? as usize;
    if count != names.len() {
        return Err(GnnError::Checkpoint(format!("expected {} tensors, found {count}", names.len())));
    }
    for (name, slot) in names.iter().zip(params.tensors_mut()) {
        let got = c.string()?;
        if &got != name {
            return Err(GnnError::Checkpoint(format!("expected tensor {name}, found {got}")));
        }
        let (rows, cols) = (c.u32()? as usize, c.u32()? as usize);
        if (rows, cols) != slot.dim() {
            return Err(GnnError::Checkpoint(format!("tensor {name} has shape {rows}x{cols}, expected {:?}", slot.dim())));
        }
        for v in slot.iter_mut() {
            *v = f64::from_le_bytes(c.take(8)?.try_into().unwrap());
        }
    }
    if c.pos != buf.len() {
        return Err(GnnError::Checkpoint("trailing bytes".into()));
    }
    if !params.is_finite() {
        return Err(GnnError::Checkpoint("non-finite parameter".into()));
    }
    Ok(Checkpoint { config, provenance, params })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), GnnError> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(f), ck)
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint, GnnError> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f), expected)
}

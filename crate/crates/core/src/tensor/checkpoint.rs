//! Named-tensor checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "LFW1"                      magic
//! u32                         entry count
//! repeated per entry:
//!   u32                       name length in bytes
//!   [u8]                      UTF-8 name
//!   u32                       rank
//!   u64 * rank                extents
//!   f32 * product(extents)    row-major payload
//! ```
//!
//! Entries are written in lexicographic name order so identical maps produce
//! identical files.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LFW1";

pub type TensorMap = BTreeMap<String, Tensor>;

pub fn write_tensors<W: Write>(mut w: W, tensors: &TensorMap) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn save_tensors(path: impl AsRef<Path>, tensors: &TensorMap) -> Result<()> {
    let path = path.as_ref();
    if tensors.keys().any(|k| k.is_empty()) {
        return Err(Error::Checkpoint("empty tensor name".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_tensors(std::io::BufWriter::new(file), tensors).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Checkpoint(format!("truncated payload while reading {what}"))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<TensorMap> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::Checkpoint(e.to_string()))?;
    parse(&buf)
}

fn parse(buf: &[u8]) -> Result<TensorMap> {
    let mut c = Cursor { buf, pos: 0 };
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    c.pos = 4;
    let count = c.u32("entry count")?;
    let mut out = TensorMap::new();
    for _ in 0..count {
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?
            .to_string();
        if name.is_empty() {
            return Err(Error::Checkpoint("empty tensor name".into()));
        }
        let rank = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = c.u64("extent")?;
            if d == 0 {
                return Err(Error::Checkpoint(format!("zero extent in {name}")));
            }
            shape.push(usize::try_from(d).map_err(|_| Error::Checkpoint("extent overflow".into()))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} too large")))?;
        let bytes = c.take(numel, "payload")?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        if out.contains_key(&name) {
            return Err(Error::Checkpoint(format!("duplicate name {name}")));
        }
        out.insert(name, Tensor::from_parts(shape, data));
    }
    if c.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after last entry".into()));
    }
    Ok(out)
}

pub fn load_tensors(path: impl AsRef<Path>) -> Result<TensorMap> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&buf)
}

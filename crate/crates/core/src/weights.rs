//! Binary tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MCAF" | version u32 | count u32 |
//!   { name_len u16 | name utf-8 | rank u8 | dims u32 * rank | f32 * numel } * count
//! ```
//!
//! Tensors are written with rank 4. Lower ranks are accepted on read and
//! padded with leading unit axes.

use std::path::Path;

use indexmap::IndexMap;

use crate::atomic::write_atomic;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::{numel, Tensor};

pub const MAGIC: &[u8; 4] = b"MCAF";
pub const VERSION: u32 = 1;

pub fn encode<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<Vec<u8>> {
    let items: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count =
        u32::try_from(items.len()).map_err(|_| Error::Invalid("too many tensors".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in items {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Invalid(format!("tensor name too long: {name}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(4);
        for d in t.dims() {
            let d =
                u32::try_from(d).map_err(|_| Error::Invalid(format!("dim {d} overflows u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, detail: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            detail: format!("{} (offset {})", detail.into(), self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.fail("truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// Decode a container. `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<IndexMap<String, Tensor>> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(r.fail("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = IndexMap::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| r.fail("name is not utf-8"))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        if !(1..=4).contains(&rank) {
            return Err(r.fail(format!("rank {rank} for `{name}`")));
        }
        let mut dims = [1usize; 4];
        for slot in dims.iter_mut().skip(4 - rank) {
            *slot = r.u32()? as usize;
        }
        let n = numel(&dims);
        let raw = r.take(n.checked_mul(4).ok_or_else(|| r.fail("size overflow"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if out.insert(name.clone(), Tensor::new(dims, data)?).is_some() {
            return Err(r.fail(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }
    Ok(out)
}

pub fn save(path: &Path, store: &ParamStore) -> Result<()> {
    write_atomic(path, &encode(store.iter())?)
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut store = ParamStore::new();
    for (k, v) in decode(&bytes, path)? {
        store.insert(k, v)?;
    }
    Ok(store)
}

/// Copy loaded values into `store`, requiring the same names and dims.
pub fn load_into(path: &Path, store: &mut ParamStore) -> Result<()> {
    let loaded = load(path)?;
    if loaded.len() != store.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!("{} tensors, model expects {}", loaded.len(), store.len()),
        });
    }
    for (k, v) in loaded.iter() {
        store.set(k, v.clone())?;
    }
    Ok(())
}

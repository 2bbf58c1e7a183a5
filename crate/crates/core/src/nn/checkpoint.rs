//! Binary checkpoint format.
//!
//! ```text
//! magic   "NECK"
//! version u32 = 1
//! meta    u32 length + UTF-8 JSON
//! counts  u32 params, u32 buffers
//! record  u32 name length, name, u32 ndim, ndim × u32 dims, f32 data
//! ```
//! All integers and floats are little-endian. Parameter records precede
//! buffer (batch-norm running statistics) records.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, IoContext, Result};

use super::{ParameterStore, Real};

pub const MAGIC: &[u8; 4] = b"NECK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub params: Vec<TensorRecord>,
    pub buffers: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_store<T: Real>(meta: String, store: &ParameterStore<T>) -> Self {
        let conv = |v: &[T]| v.iter().map(|x| x.to_f64_lossy() as f32).collect();
        Checkpoint {
            meta,
            params: store
                .params()
                .iter()
                .map(|p| TensorRecord {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: conv(&p.value),
                })
                .collect(),
            buffers: store
                .buffers()
                .iter()
                .map(|b| TensorRecord {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    data: conv(&b.value),
                })
                .collect(),
        }
    }

    /// Overwrites `store` after checking that names and shapes agree record by record.
    pub fn load_into<T: Real>(&self, store: &mut ParameterStore<T>) -> Result<()> {
        if self.params.len() != store.params().len() || self.buffers.len() != store.buffers().len() {
            return Err(Error::Shape("checkpoint does not match the network layout".into()));
        }
        for (rec, p) in self.params.iter().zip(store.params_mut()) {
            if rec.name != p.name || rec.shape != p.shape {
                return Err(Error::Shape(format!("checkpoint record {} does not match {}", rec.name, p.name)));
            }
            p.value = rec.data.iter().map(|&v| T::from_f64_lossy(v as f64)).collect();
        }
        for (rec, b) in self.buffers.iter().zip(store.buffers_mut()) {
            if rec.name != b.name || rec.shape != b.shape {
                return Err(Error::Shape(format!("checkpoint record {} does not match {}", rec.name, b.name)));
            }
            b.value = rec.data.iter().map(|&v| T::from_f64_lossy(v as f64)).collect();
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_u32(w, self.meta.len())?;
        w.write_all(self.meta.as_bytes())?;
        write_u32(w, self.params.len())?;
        write_u32(w, self.buffers.len())?;
        for rec in self.params.iter().chain(&self.buffers) {
            write_u32(w, rec.name.len())?;
            w.write_all(rec.name.as_bytes())?;
            write_u32(w, rec.shape.len())?;
            for &d in &rec.shape {
                write_u32(w, d)?;
            }
            for v in &rec.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |e: std::io::Error| Error::Checkpoint(e.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r).map_err(bad)?;
        if version != VERSION as usize {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let meta = read_string(r)?;
        let n_params = read_u32(r).map_err(bad)?;
        let n_buffers = read_u32(r).map_err(bad)?;
        let mut records = Vec::with_capacity(n_params + n_buffers);
        for _ in 0..n_params + n_buffers {
            let name = read_string(r)?;
            let ndim = read_u32(r).map_err(bad)?;
            let shape = (0..ndim).map(|_| read_u32(r)).collect::<std::io::Result<Vec<_>>>().map_err(bad)?;
            let len: usize = shape.iter().product();
            let mut raw = vec![0u8; len * 4];
            r.read_exact(&mut raw).map_err(bad)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            records.push(TensorRecord { name, shape, data });
        }
        let buffers = records.split_off(n_params);
        Ok(Checkpoint {
            meta,
            params: records,
            buffers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).at(path)?);
        self.write_to(&mut w).at(path)?;
        w.flush().at(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path).at(path)?);
        Self::read_from(&mut r)
    }
}

fn write_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    let v = u32::try_from(v).map_err(|_| std::io::Error::other("value exceeds u32"))?;
    w.write_all(&v.to_le_bytes())
}

fn read_u32(r: &mut impl Read) -> std::io::Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let bad = |e: std::io::Error| Error::Checkpoint(e.to_string());
    let len = read_u32(r).map_err(bad)?;
    if len > 1 << 24 {
        return Err(Error::Checkpoint(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(bad)?;
    String::from_utf8(buf).map_err(|e| Error::Checkpoint(e.to_string()))
}

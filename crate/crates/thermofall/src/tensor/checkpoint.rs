//! Checkpoint file format: magic "TFAD", version u16, tensor count u16, then
//! per tensor: name length (u16) + UTF-8 name, rank u8, extents u32 each, raw
//! little-endian f32 data. Round-trips are bit-exact.

use super::Tensor;
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"TFAD";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn save_checkpoint(path: &Path, entries: &[(String, &Tensor<f32>)]) -> Result<()> {
    if entries.len() > u16::MAX as usize {
        return Err(Error::Config("too many tensors for one checkpoint".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let put = |w: &mut BufWriter<File>, buf: &[u8]| -> Result<()> {
        w.write_all(buf).map_err(|e| Error::io(path, e))
    };
    put(&mut w, &CHECKPOINT_MAGIC)?;
    put(&mut w, &CHECKPOINT_VERSION.to_le_bytes())?;
    put(&mut w, &(entries.len() as u16).to_le_bytes())?;
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize || tensor.rank() > u8::MAX as usize {
            return Err(Error::Config(format!("tensor `{name}` not serializable")));
        }
        put(&mut w, &(name_bytes.len() as u16).to_le_bytes())?;
        put(&mut w, name_bytes)?;
        put(&mut w, &[tensor.rank() as u8])?;
        for &e in tensor.shape() {
            put(&mut w, &(e as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            put(&mut w, &v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic, not a checkpoint file"));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf).map_err(|e| Error::io(path, e))?;
    let version = u16::from_le_bytes(u16buf);
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    r.read_exact(&mut u16buf).map_err(|e| Error::io(path, e))?;
    let count = u16::from_le_bytes(u16buf);
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        r.read_exact(&mut u16buf).map_err(|e| Error::io(path, e))?;
        let name_len = u16::from_le_bytes(u16buf) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf).map_err(|e| Error::io(path, e))?;
        let name = String::from_utf8(name_buf).map_err(|_| bad("tensor name is not UTF-8"))?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank).map_err(|e| Error::io(path, e))?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        let mut u32buf = [0u8; 4];
        for _ in 0..rank[0] {
            r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
            shape.push(u32::from_le_bytes(u32buf) as usize);
        }
        let volume: usize = shape.iter().product();
        let mut data = Vec::with_capacity(volume);
        for _ in 0..volume {
            r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
            data.push(f32::from_le_bytes(u32buf));
        }
        out.push((name, Tensor::from_vec(&shape, data)?));
    }
    Ok(out)
}

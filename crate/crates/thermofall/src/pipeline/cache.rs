//! Sub-video cache format: magic "SUBV", version u16, video id, retained
//! frame indices, labels, thermal planes, masks, flow-magnitude planes.

use super::{SubVideo, PATCH};
use crate::error::{Error, Result};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const SUBV_MAGIC: [u8; 4] = *b"SUBV";
pub const SUBV_VERSION: u16 = 1;

pub fn write_subvideo(path: &Path, sv: &SubVideo) -> Result<()> {
    sv.validate()?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(&SUBV_MAGIC).map_err(io_err)?;
    w.write_all(&SUBV_VERSION.to_le_bytes()).map_err(io_err)?;
    let id = sv.video_id.as_bytes();
    w.write_all(&(id.len() as u16).to_le_bytes()).map_err(io_err)?;
    w.write_all(id).map_err(io_err)?;
    w.write_all(&(sv.len() as u32).to_le_bytes()).map_err(io_err)?;
    for &idx in &sv.frame_indices {
        w.write_all(&idx.to_le_bytes()).map_err(io_err)?;
    }
    w.write_all(&sv.labels).map_err(io_err)?;
    for plane in &sv.thermal {
        for &v in plane {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    for plane in &sv.masks {
        w.write_all(plane).map_err(io_err)?;
    }
    for plane in &sv.flow_mag {
        for &v in plane {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_subvideo(path: &Path) -> Result<SubVideo> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e| Error::io(path, e);
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if magic != SUBV_MAGIC {
        return Err(bad("bad magic, not a sub-video cache file"));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf).map_err(io_err)?;
    let version = u16::from_le_bytes(u16buf);
    if version != SUBV_VERSION {
        return Err(bad(&format!(
            "unsupported sub-video cache version {version}, expected {SUBV_VERSION}"
        )));
    }
    r.read_exact(&mut u16buf).map_err(io_err)?;
    let mut id_buf = vec![0u8; u16::from_le_bytes(u16buf) as usize];
    r.read_exact(&mut id_buf).map_err(io_err)?;
    let video_id = String::from_utf8(id_buf).map_err(|_| bad("video id is not UTF-8"))?;
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(io_err)?;
    let n = u32::from_le_bytes(u32buf) as usize;
    let mut frame_indices = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut u32buf).map_err(io_err)?;
        frame_indices.push(u32::from_le_bytes(u32buf));
    }
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels).map_err(io_err)?;
    let per = PATCH * PATCH;
    let read_f32_planes = |count: usize, r: &mut BufReader<std::fs::File>| -> Result<Vec<Vec<f32>>> {
        let mut planes = Vec::with_capacity(count);
        for _ in 0..count {
            let mut plane = Vec::with_capacity(per);
            let mut buf = [0u8; 4];
            for _ in 0..per {
                r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
                plane.push(f32::from_le_bytes(buf));
            }
            planes.push(plane);
        }
        Ok(planes)
    };
    let thermal = read_f32_planes(n, &mut r)?;
    let mut masks = Vec::with_capacity(n);
    for _ in 0..n {
        let mut plane = vec![0u8; per];
        r.read_exact(&mut plane).map_err(io_err)?;
        masks.push(plane);
    }
    let flow_mag = read_f32_planes(n.saturating_sub(1), &mut r)?;
    let sv = SubVideo {
        video_id,
        frame_indices,
        thermal,
        masks,
        flow_mag,
        labels,
    };
    sv.validate()?;
    Ok(sv)
}

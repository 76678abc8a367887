//! Per-pair binary flow record: magic "FLOW", width u32, height u32, then
//! fx, fy, magnitude planes as little-endian f32. Records concatenate into
//! per-video cache files.

use super::FlowImage;
use crate::error::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const FLOW_MAGIC: [u8; 4] = *b"FLOW";

pub fn write_flow_record(w: &mut impl Write, img: &FlowImage, path: &Path) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    w.write_all(&FLOW_MAGIC).map_err(io_err)?;
    w.write_all(&img.width.to_le_bytes()).map_err(io_err)?;
    w.write_all(&img.height.to_le_bytes()).map_err(io_err)?;
    for plane in [&img.fx, &img.fy, &img.magnitude] {
        for &v in plane {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

/// Reads the next record; clean EOF at a record boundary yields None.
pub fn read_flow_record(r: &mut impl Read, path: &Path) -> Result<Option<FlowImage>> {
    let mut magic = [0u8; 4];
    match r.read_exact(&mut magic) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    }
    if magic != FLOW_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "bad magic, not a flow record".into(),
        });
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
    let width = u32::from_le_bytes(u32buf);
    r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
    let height = u32::from_le_bytes(u32buf);
    let len = (width as usize) * (height as usize);
    let mut planes: [Vec<f32>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for plane in planes.iter_mut() {
        plane.reserve(len);
        for _ in 0..len {
            r.read_exact(&mut u32buf).map_err(|e| Error::io(path, e))?;
            plane.push(f32::from_le_bytes(u32buf));
        }
    }
    let [fx, fy, magnitude] = planes;
    Ok(Some(FlowImage {
        width,
        height,
        fx,
        fy,
        magnitude,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_bit_exactly() {
        let img1 = FlowImage {
            width: 3,
            height: 2,
            fx: vec![0.0, -1.0, 0.5, 0.25, 1.0, -0.125],
            fy: vec![1.0; 6],
            magnitude: vec![-1.0; 6],
        };
        let img2 = FlowImage {
            width: 2,
            height: 2,
            fx: vec![0.1, 0.2, 0.3, 0.4],
            fy: vec![0.0; 4],
            magnitude: vec![0.9; 4],
        };
        let path = Path::new("mem");
        let mut buf = Vec::new();
        write_flow_record(&mut buf, &img1, path).unwrap();
        write_flow_record(&mut buf, &img2, path).unwrap();
        let mut cur = std::io::Cursor::new(buf);
        assert_eq!(read_flow_record(&mut cur, path).unwrap().unwrap(), img1);
        assert_eq!(read_flow_record(&mut cur, path).unwrap().unwrap(), img2);
        assert!(read_flow_record(&mut cur, path).unwrap().is_none());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut cur = std::io::Cursor::new(b"WOLF\x01\x00\x00\x00\x01\x00\x00\x00".to_vec());
        assert!(read_flow_record(&mut cur, Path::new("mem")).is_err());
    }
}

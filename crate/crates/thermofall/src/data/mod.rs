//! Dataset ingestion: the JSON manifest, frame directories (8-bit grayscale
//! PGM or PNG), and the label/detection/track CSV formats.

pub mod synth;

use crate::error::{Error, Result};
use crate::roi::{BBox, BoxSource, Detection};
use image::GrayImage;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoRole {
    Adl,
    Fall,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VideoEntry {
    pub id: String,
    /// Frame directory, relative to the manifest's directory.
    pub frames_dir: PathBuf,
    pub role: VideoRole,
}

/// Dataset manifest. Frame files sort lexicographically into temporal order;
/// fall labels live in one CSV beside the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub videos: Vec<VideoEntry>,
    /// Labels CSV (video_id, frame_idx, is_fall), relative to the manifest.
    /// Required as soon as the manifest lists fall videos.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

/// One loaded video.
#[derive(Clone, Debug)]
pub struct VideoData {
    pub id: String,
    pub role: VideoRole,
    pub frames: Vec<GrayImage>,
    pub labels: Vec<bool>,
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_frame(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: format!("unreadable frame: {e}"),
    })?;
    Ok(img.into_luma8())
}

/// Loads every video in the manifest: frames in lexicographic name order plus
/// per-frame labels. Fall videos without labels are an error.
pub fn load_dataset(manifest_path: &Path) -> Result<Vec<VideoData>> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let labels = match &manifest.labels {
        Some(rel) => read_labels_csv(&base.join(rel))?,
        None => BTreeMap::new(),
    };
    let mut out = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        let dir = base.join(&entry.frames_dir);
        let mut names: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("pgm") | Some("png")
                )
            })
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(Error::Data(format!(
                "video `{}` has no frames under {}",
                entry.id,
                dir.display()
            )));
        }
        let mut frames = Vec::with_capacity(names.len());
        for name in &names {
            frames.push(load_frame(name)?);
        }
        let video_labels = labels.get(&entry.id);
        if entry.role == VideoRole::Fall && video_labels.is_none() {
            return Err(Error::Data(format!(
                "fall video `{}` has no labels",
                entry.id
            )));
        }
        let mut flags = vec![false; frames.len()];
        if let Some(rows) = video_labels {
            if entry.role == VideoRole::Adl && rows.iter().any(|&(_, l)| l) {
                return Err(Error::Data(format!(
                    "ADL video `{}` carries fall labels",
                    entry.id
                )));
            }
            for &(idx, is_fall) in rows {
                if let Some(slot) = flags.get_mut(idx) {
                    *slot = is_fall;
                }
            }
        }
        out.push(VideoData {
            id: entry.id.clone(),
            role: entry.role,
            frames,
            labels: flags,
        });
    }
    Ok(out)
}

pub fn write_frame_pgm(path: &Path, frame: &GrayImage) -> Result<()> {
    // Binary PGM (P5), written directly for bit-stable output.
    let mut buf = Vec::with_capacity(frame.as_raw().len() + 32);
    let _ = write!(buf, "P5\n{} {}\n255\n", frame.width(), frame.height());
    buf.extend_from_slice(frame.as_raw());
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

type LabelRows = Vec<(usize, bool)>;

/// video_id,frame_idx,is_fall
pub fn read_labels_csv(path: &Path) -> Result<BTreeMap<String, LabelRows>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, LabelRows> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.starts_with("video_id") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format {
            path: path.to_path_buf(),
            reason: format!("labels line {}: `{line}`", lineno + 1),
        };
        if fields.len() != 3 {
            return Err(bad());
        }
        let idx: usize = fields[1].trim().parse().map_err(|_| bad())?;
        let is_fall = match fields[2].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        out.entry(fields[0].to_string()).or_default().push((idx, is_fall));
    }
    Ok(out)
}

pub fn write_labels_csv(path: &Path, rows: &[(String, usize, bool)]) -> Result<()> {
    let mut text = String::from("video_id,frame_idx,is_fall\n");
    for (id, idx, is_fall) in rows {
        text.push_str(&format!("{id},{idx},{}\n", *is_fall as u8));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// video_id,frame_idx,x1,y1,x2,y2,confidence
pub fn read_detections_csv(path: &Path) -> Result<BTreeMap<String, BTreeMap<usize, Vec<Detection>>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: BTreeMap<String, BTreeMap<usize, Vec<Detection>>> = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 && line.starts_with("video_id") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format {
            path: path.to_path_buf(),
            reason: format!("detections line {}: `{line}`", lineno + 1),
        };
        if fields.len() != 7 {
            return Err(bad());
        }
        let frame_idx: usize = fields[1].trim().parse().map_err(|_| bad())?;
        let nums: Vec<i32> = fields[2..6]
            .iter()
            .map(|f| f.trim().parse::<i32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let confidence: f32 = fields[6].trim().parse().map_err(|_| bad())?;
        out.entry(fields[0].to_string())
            .or_default()
            .entry(frame_idx)
            .or_default()
            .push(Detection {
                bbox: BBox {
                    x1: nums[0],
                    y1: nums[1],
                    x2: nums[2],
                    y2: nums[3],
                },
                confidence,
                source: "file".into(),
            });
    }
    Ok(out)
}

pub fn write_detections_csv(
    path: &Path,
    rows: &[(String, usize, BBox, f32)],
) -> Result<()> {
    let mut text = String::from("video_id,frame_idx,x1,y1,x2,y2,confidence\n");
    for (id, idx, b, conf) in rows {
        text.push_str(&format!(
            "{id},{idx},{},{},{},{},{conf}\n",
            b.x1, b.y1, b.x2, b.y2
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// video_id,frame_idx,x1,y1,x2,y2,source with source `none` for untracked
/// frames.
pub fn write_track_csv(
    path: &Path,
    rows: &[(String, usize, Option<(BBox, BoxSource)>)],
) -> Result<()> {
    let mut text = String::from("video_id,frame_idx,x1,y1,x2,y2,source\n");
    for (id, idx, entry) in rows {
        match entry {
            Some((b, src)) => text.push_str(&format!(
                "{id},{idx},{},{},{},{},{}\n",
                b.x1,
                b.y1,
                b.x2,
                b.y2,
                src.as_str()
            )),
            None => text.push_str(&format!("{id},{idx},,,,,none\n")),
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub type TrackRows = BTreeMap<String, BTreeMap<usize, Option<(BBox, BoxSource)>>>;

pub fn read_track_csv(path: &Path) -> Result<TrackRows> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: TrackRows = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if !line.starts_with("video_id,frame_idx,x1,y1,x2,y2,source") {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    reason: "unrecognized track CSV header".into(),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format {
            path: path.to_path_buf(),
            reason: format!("track line {}: `{line}`", lineno + 1),
        };
        if fields.len() != 7 {
            return Err(bad());
        }
        let frame_idx: usize = fields[1].trim().parse().map_err(|_| bad())?;
        let entry = if fields[6].trim() == "none" {
            None
        } else {
            let nums: Vec<i32> = fields[2..6]
                .iter()
                .map(|f| f.trim().parse::<i32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad())?;
            let src = BoxSource::parse(fields[6].trim()).ok_or_else(bad)?;
            Some((
                BBox {
                    x1: nums[0],
                    y1: nums[1],
                    x2: nums[2],
                    y2: nums[3],
                },
                src,
            ))
        };
        out.entry(fields[0].to_string()).or_default().insert(frame_idx, entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_frame(v: u8) -> GrayImage {
        GrayImage::from_pixel(6, 5, image::Luma([v]))
    }

    fn write_video(dir: &Path, id: &str, count: usize) {
        let vdir = dir.join("frames").join(id);
        std::fs::create_dir_all(&vdir).unwrap();
        for k in 0..count {
            write_frame_pgm(&vdir.join(format!("f{k:05}.pgm")), &tiny_frame(k as u8)).unwrap();
        }
    }

    #[test]
    fn frames_load_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        write_video(dir.path(), "v0", 10);
        let manifest = DatasetManifest {
            videos: vec![VideoEntry {
                id: "v0".into(),
                frames_dir: PathBuf::from("frames/v0"),
                role: VideoRole::Adl,
            }],
            labels: None,
        };
        let mpath = dir.path().join("manifest.json");
        write_manifest(&mpath, &manifest).unwrap();
        let data = load_dataset(&mpath).unwrap();
        assert_eq!(data.len(), 1);
        assert_eq!(data[0].frames.len(), 10);
        for (k, f) in data[0].frames.iter().enumerate() {
            assert_eq!(f.get_pixel(0, 0).0[0], k as u8, "frame order broke at {k}");
        }
    }

    #[test]
    fn fall_video_without_labels_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_video(dir.path(), "fall0", 4);
        let manifest = DatasetManifest {
            videos: vec![VideoEntry {
                id: "fall0".into(),
                frames_dir: PathBuf::from("frames/fall0"),
                role: VideoRole::Fall,
            }],
            labels: None,
        };
        let mpath = dir.path().join("manifest.json");
        write_manifest(&mpath, &manifest).unwrap();
        let err = load_dataset(&mpath).unwrap_err();
        assert!(err.to_string().contains("labels"), "{err}");
    }

    #[test]
    fn forty_four_video_manifest_loads_forty_four_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let mut videos = Vec::new();
        let mut label_rows = Vec::new();
        for k in 0..44 {
            let id = format!("v{k:02}");
            write_video(dir.path(), &id, 3);
            let role = if k < 9 { VideoRole::Adl } else { VideoRole::Fall };
            if role == VideoRole::Fall {
                label_rows.push((id.clone(), 1usize, true));
            }
            videos.push(VideoEntry {
                id,
                frames_dir: PathBuf::from(format!("frames/v{k:02}")),
                role,
            });
        }
        write_labels_csv(&dir.path().join("labels.csv"), &label_rows).unwrap();
        let manifest = DatasetManifest {
            videos,
            labels: Some(PathBuf::from("labels.csv")),
        };
        let mpath = dir.path().join("manifest.json");
        write_manifest(&mpath, &manifest).unwrap();
        let data = load_dataset(&mpath).unwrap();
        assert_eq!(data.len(), 44);
        assert!(data[10].labels[1]);
    }

    #[test]
    fn unreadable_frame_is_a_hard_error_naming_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let vdir = dir.path().join("frames/v0");
        std::fs::create_dir_all(&vdir).unwrap();
        std::fs::write(vdir.join("f00000.pgm"), b"not an image").unwrap();
        let manifest = DatasetManifest {
            videos: vec![VideoEntry {
                id: "v0".into(),
                frames_dir: PathBuf::from("frames/v0"),
                role: VideoRole::Adl,
            }],
            labels: None,
        };
        let mpath = dir.path().join("manifest.json");
        write_manifest(&mpath, &manifest).unwrap();
        let err = load_dataset(&mpath).unwrap_err();
        assert!(err.to_string().contains("f00000.pgm"), "{err}");
    }

    #[test]
    fn track_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("track.csv");
        let rows = vec![
            (
                "v0".to_string(),
                0usize,
                Some((
                    BBox {
                        x1: 1,
                        y1: 2,
                        x2: 11,
                        y2: 22,
                    },
                    BoxSource::Detect,
                )),
            ),
            ("v0".to_string(), 1usize, None),
            (
                "v0".to_string(),
                2usize,
                Some((
                    BBox {
                        x1: 2,
                        y1: 3,
                        x2: 12,
                        y2: 23,
                    },
                    BoxSource::Contour,
                )),
            ),
        ];
        write_track_csv(&path, &rows).unwrap();
        let back = read_track_csv(&path).unwrap();
        let v0 = &back["v0"];
        assert_eq!(v0[&0].unwrap().1, BoxSource::Detect);
        assert_eq!(v0[&1], None);
        assert_eq!(v0[&2].unwrap().0.x1, 2);
    }
}

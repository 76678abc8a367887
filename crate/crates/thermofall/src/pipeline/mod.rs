//! From tracked videos to model-ready windows and anomaly scores.

mod cache;
mod infer;
mod preprocess;
mod score;

pub use cache::{read_subvideo, write_subvideo, SUBV_MAGIC, SUBV_VERSION};
pub use infer::{score_subvideo, SubVideoErrors};
pub use preprocess::{preprocess_frame, resize_bilinear_f32, resize_nearest_u8, PATCH};
pub use score::{
    diff_window_scores, frame_scores, label_windows, reconstruction_error, window_scores,
    FrameScore, WindowScore,
};

use crate::error::{Error, Result};
use crate::roi::BBox;
use crate::tensor::Tensor;
use crate::train::TrainSample;

/// Window length T.
pub const WINDOW_LEN: usize = 8;
/// Sub-videos break where a person stays unlocalized for this many frames.
pub const SUBVIDEO_GAP: usize = 10;

/// A maximal run of localized frames (shorter gaps are dropped, not split).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubVideoSpan {
    /// (original frame index, box) for every retained frame, ascending.
    pub frames: Vec<(usize, BBox)>,
}

/// Splits per-frame tracking output into sub-videos: untracked frames are
/// removed, a gap of `gap` or more untracked frames breaks the run, and runs
/// shorter than `min_len` are discarded.
pub fn split_subvideos(
    boxes: &[Option<BBox>],
    gap: usize,
    min_len: usize,
) -> Vec<SubVideoSpan> {
    let mut out = Vec::new();
    let mut cur: Vec<(usize, BBox)> = Vec::new();
    let mut last_idx: Option<usize> = None;
    for (idx, b) in boxes.iter().enumerate() {
        let Some(b) = b else { continue };
        if let Some(prev) = last_idx {
            if idx - prev - 1 >= gap && !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.push((idx, *b));
        last_idx = Some(idx);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out.into_iter()
        .filter(|frames| frames.len() >= min_len)
        .map(|frames| SubVideoSpan { frames })
        .collect()
}

/// Fully preprocessed sub-video: 64x64 thermal frames in [-1, 1], binary ROI
/// masks, the flow-magnitude frames between consecutive retained frames, and
/// per-frame fall labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SubVideo {
    pub video_id: String,
    pub frame_indices: Vec<u32>,
    /// Frame planes, each PATCH*PATCH long.
    pub thermal: Vec<Vec<f32>>,
    pub masks: Vec<Vec<u8>>,
    /// Flow magnitude per consecutive frame pair, in [-1, 1].
    pub flow_mag: Vec<Vec<f32>>,
    pub labels: Vec<u8>,
}

impl SubVideo {
    pub fn len(&self) -> usize {
        self.thermal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thermal.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let per_frame = PATCH * PATCH;
        let ok = self.frame_indices.len() == n
            && self.masks.len() == n
            && self.labels.len() == n
            && self.flow_mag.len() == n.saturating_sub(1)
            && self
                .thermal
                .iter()
                .chain(self.flow_mag.iter())
                .all(|p| p.len() == per_frame)
            && self.masks.iter().all(|p| p.len() == per_frame);
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "inconsistent sub-video `{}`",
                self.video_id
            )))
        }
    }

    /// Number of sliding windows: max(0, N - T + 1).
    pub fn window_count(&self) -> usize {
        window_count(self.len())
    }

    /// The (thermal, flow) window pair starting at retained-frame `start`.
    pub fn window_at(&self, start: usize) -> TrainSample {
        assert!(start + WINDOW_LEN <= self.len());
        let per = PATCH * PATCH;
        let mut thermal = Vec::with_capacity(WINDOW_LEN * per);
        let mut mask = Vec::with_capacity(WINDOW_LEN * per);
        for j in 0..WINDOW_LEN {
            thermal.extend_from_slice(&self.thermal[start + j]);
            mask.extend(self.masks[start + j].iter().map(|&m| m as f32));
        }
        let mut flow = Vec::with_capacity((WINDOW_LEN - 1) * per);
        for j in 0..WINDOW_LEN - 1 {
            flow.extend_from_slice(&self.flow_mag[start + j]);
        }
        TrainSample {
            thermal: Tensor::from_vec(&[WINDOW_LEN, PATCH, PATCH, 1], thermal).unwrap(),
            mask: Tensor::from_vec(&[WINDOW_LEN, PATCH, PATCH, 1], mask).unwrap(),
            flow: Some(
                Tensor::from_vec(&[WINDOW_LEN - 1, PATCH, PATCH, 1], flow).unwrap(),
            ),
        }
    }

    /// All window pairs, stride 1.
    pub fn windows(&self) -> Vec<TrainSample> {
        (0..self.window_count()).map(|s| self.window_at(s)).collect()
    }
}

/// max(0, n - T + 1) sliding windows of length T at stride 1.
pub fn window_count(frames: usize) -> usize {
    (frames + 1).saturating_sub(WINDOW_LEN)
}

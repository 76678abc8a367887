//! Person localization: Otsu thresholding and contour boxes fused with
//! detector boxes through a constant-velocity Kalman tracker.

mod contour;
mod kalman;
mod morph;
mod otsu;
mod track;

pub use contour::biggest_contour_box;
pub use kalman::{kalman_predict, kalman_update, KalmanConfig, TrackState};
pub use morph::morph_clean;
pub use otsu::{otsu_mask, otsu_threshold};
pub use track::{
    box_match, box_selection, contour_candidate, run_tracker, track_step, BoxSource, Detection,
    MatchConfig, TrackerConfig,
};

use serde::{Deserialize, Serialize};

/// Axis-aligned box: top-left inclusive, bottom-right exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: i32,
    pub y1: i32,
    pub x2: i32,
    pub y2: i32,
}

impl BBox {
    /// Builds a valid box, clipping to `width` x `height` frame bounds.
    /// Returns None when nothing of the box lies inside the frame.
    pub fn clipped(x1: i32, y1: i32, x2: i32, y2: i32, width: u32, height: u32) -> Option<BBox> {
        let x1 = x1.clamp(0, width as i32);
        let y1 = y1.clamp(0, height as i32);
        let x2 = x2.clamp(0, width as i32);
        let y2 = y2.clamp(0, height as i32);
        if x1 < x2 && y1 < y2 {
            Some(BBox { x1, y1, x2, y2 })
        } else {
            None
        }
    }

    pub fn width(&self) -> i32 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> i32 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> i64 {
        self.width() as i64 * self.height() as i64
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x1 + self.x2) as f64 / 2.0,
            (self.y1 + self.y2) as f64 / 2.0,
        )
    }

    pub fn intersection_area(&self, other: &BBox) -> i64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0) as i64;
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0) as i64;
        w * h
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other) as f64;
        let union = (self.area() + other.area()) as f64 - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn contains_point(&self, x: i32, y: i32) -> bool {
        x >= self.x1 && x < self.x2 && y >= self.y1 && y < self.y2
    }
}

/// Per-frame binary region-of-interest mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoiMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RoiMask {
    pub fn empty(width: u32, height: u32) -> RoiMask {
        RoiMask {
            width,
            height,
            data: vec![0; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> RoiMask {
        let mut m = RoiMask::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.data[(y * width + x) as usize] = 1;
                }
            }
        }
        m
    }

    pub fn from_box(width: u32, height: u32, bbox: &BBox) -> RoiMask {
        RoiMask::from_fn(width, height, |x, y| {
            bbox.contains_point(x as i32, y as i32)
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] != 0
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn union(&self, other: &RoiMask) -> RoiMask {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        RoiMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a | b)
                .collect(),
        }
    }
}

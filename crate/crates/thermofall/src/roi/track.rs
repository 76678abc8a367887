//! The tracking algorithm: detector boxes refined by track and contour boxes,
//! Kalman coasting through detection gaps, termination after too many losses.

use super::{
    biggest_contour_box, kalman_predict, kalman_update, morph_clean, otsu_mask, BBox,
    KalmanConfig, TrackState,
};
use image::GrayImage;
use serde::{Deserialize, Serialize};

/// One detector output for a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub bbox: BBox,
    pub confidence: f32,
    /// Detector id ("oracle" for the synthetic detector, "file" for
    /// precomputed detections).
    pub source: String,
}

/// Which candidate produced the final box of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxSource {
    Detect,
    Contour,
    Track,
}

impl BoxSource {
    pub fn as_str(self) -> &'static str {
        match self {
            BoxSource::Detect => "detect",
            BoxSource::Contour => "contour",
            BoxSource::Track => "track",
        }
    }

    pub fn parse(s: &str) -> Option<BoxSource> {
        Some(match s {
            "detect" => BoxSource::Detect,
            "contour" => BoxSource::Contour,
            "track" => BoxSource::Track,
            _ => return None,
        })
    }
}

/// Box-compatibility thresholds. IoU alone under-matches when the detector
/// box is badly sized, so a subset test and an area-ratio test back it up.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub iou_min: f64,
    /// Fraction of the smaller box's area that must be covered for the
    /// subset rule.
    pub subset_min: f64,
    /// Weak-IoU gate for the area-ratio rule.
    pub weak_iou: f64,
    pub area_ratio_min: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            iou_min: 0.3,
            subset_min: 0.9,
            weak_iou: 0.1,
            area_ratio_min: 0.25,
        }
    }
}

/// True when two boxes plausibly localize the same person.
pub fn box_match(a: &BBox, b: &BBox, cfg: &MatchConfig) -> bool {
    let iou = a.iou(b);
    if iou >= cfg.iou_min {
        return true;
    }
    let inter = a.intersection_area(b) as f64;
    let covered = inter / a.area().min(b.area()) as f64;
    if covered >= cfg.subset_min {
        return true;
    }
    let ratio = a.area().min(b.area()) as f64 / a.area().max(b.area()) as f64;
    iou >= cfg.weak_iou && ratio >= cfg.area_ratio_min
}

/// Detector boxes rarely fit the person, so the matched candidate (track or
/// contour box) replaces the detection.
pub fn box_selection(_detect: BBox, candidate: BBox) -> BBox {
    candidate
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Tracker stops once the losses counter exceeds this.
    pub max_age: f64,
    /// Detections below this confidence are dropped before tracking.
    pub confidence_min: f32,
    pub matching: MatchConfig,
    pub kalman: KalmanConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            max_age: 20.0,
            confidence_min: 0.3,
            matching: MatchConfig::default(),
            kalman: KalmanConfig::default(),
        }
    }
}

/// The biggest-contour candidate of a frame: Otsu threshold, morphological
/// cleanup, largest blob.
pub fn contour_candidate(frame: &GrayImage) -> Option<BBox> {
    biggest_contour_box(&morph_clean(&otsu_mask(frame)))
}

/// Advances the tracker by one frame. `detection` must already be
/// confidence-filtered. Every branch returns a defined (state, box) pair.
pub fn track_step(
    mut state: Option<TrackState>,
    frame: &GrayImage,
    detection: Option<&BBox>,
    cfg: &TrackerConfig,
) -> (Option<TrackState>, Option<(BBox, BoxSource)>) {
    let (w, h) = (frame.width(), frame.height());
    let mut final_box: Option<(BBox, BoxSource)> = None;
    match detection {
        Some(detect) => {
            let mut chosen = *detect;
            let mut source = BoxSource::Detect;
            let contour = contour_candidate(frame);
            if let Some(tr) = state.take() {
                let tr = kalman_predict(&tr, &cfg.kalman);
                let track_box = tr.current_box(w, h);
                if box_match(&track_box, &chosen, &cfg.matching) {
                    chosen = box_selection(chosen, track_box);
                    source = BoxSource::Track;
                    state = Some(tr);
                } else {
                    state = None; // drifting tracker
                }
            }
            if let Some(c) = contour {
                if box_match(&c, &chosen, &cfg.matching) {
                    chosen = box_selection(chosen, c);
                    source = BoxSource::Contour;
                }
            }
            final_box = Some((chosen, source));
            match state.take() {
                Some(mut tr) => {
                    tr = kalman_update(&tr, &chosen, &cfg.kalman);
                    tr.losses = 0.0;
                    state = Some(tr);
                }
                None => state = Some(TrackState::new(&chosen, &cfg.kalman)),
            }
        }
        None => {
            if let Some(tr) = state.take() {
                let mut tr = kalman_predict(&tr, &cfg.kalman);
                let track_box = tr.current_box(w, h);
                let contour = contour_candidate(frame);
                match contour.filter(|c| box_match(c, &track_box, &cfg.matching)) {
                    Some(c) => {
                        tr.losses += 0.5;
                        final_box = Some((c, BoxSource::Contour));
                        tr = kalman_update(&tr, &c, &cfg.kalman);
                    }
                    None => {
                        tr.losses += 1.0;
                        final_box = Some((track_box, BoxSource::Track));
                    }
                }
                state = Some(tr);
            }
        }
    }
    if let Some(tr) = &state {
        if tr.losses > cfg.max_age {
            state = None;
            final_box = None;
        }
    }
    (state, final_box)
}

/// Highest-confidence detection at or above the threshold.
fn select_detection<'a>(dets: &'a [Detection], cfg: &TrackerConfig) -> Option<&'a Detection> {
    dets.iter()
        .filter(|d| d.confidence >= cfg.confidence_min)
        .max_by(|a, b| a.confidence.partial_cmp(&b.confidence).unwrap())
}

/// Folds [`track_step`] over a frame sequence; `detections[i]` holds the
/// detector outputs for frame i.
pub fn run_tracker(
    frames: &[GrayImage],
    detections: &[Vec<Detection>],
    cfg: &TrackerConfig,
) -> Vec<Option<(BBox, BoxSource)>> {
    debug_assert_eq!(frames.len(), detections.len());
    let mut state: Option<TrackState> = None;
    let mut out = Vec::with_capacity(frames.len());
    for (frame, dets) in frames.iter().zip(detections) {
        let det = select_detection(dets, cfg).map(|d| d.bbox);
        let (next, fb) = track_step(state, frame, det.as_ref(), cfg);
        state = next;
        out.push(fb);
    }
    out
}

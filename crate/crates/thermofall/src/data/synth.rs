//! Synthetic thermal scenes with a scripted person and an oracle detector:
//! the desk-scale stand-in for a real thermal camera and person detector.

use super::VideoRole;
use crate::error::{Error, Result};
use crate::roi::{BBox, Detection};
use image::GrayImage;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Walk,
    Sit,
    Lie,
    Fall,
}

/// One scripted activity over frames [start, end).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VideoScript {
    pub id: String,
    pub role: VideoRole,
    pub length: usize,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Standing half-axes of the person ellipse.
    pub person_rx: f64,
    pub person_ry: f64,
    pub person_intensity: u8,
    pub background_intensity: u8,
    pub noise_sigma: f64,
    /// Uniform corner jitter of oracle detections, in pixels.
    pub detector_jitter: i32,
    /// Probability of a missing detection on a person-present frame.
    pub detector_miss_rate: f64,
    /// Probability of a detection carrying sub-threshold confidence.
    pub detector_low_conf_rate: f64,
    pub videos: Vec<VideoScript>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            width: 64,
            height: 64,
            person_rx: 6.0,
            person_ry: 14.0,
            person_intensity: 210,
            background_intensity: 30,
            noise_sigma: 2.0,
            detector_jitter: 2,
            detector_miss_rate: 0.05,
            detector_low_conf_rate: 0.04,
            videos: desk_scale_scripts(400, 220),
        }
    }
}

/// Default scenario: 5 ADL training videos (walking, sitting, lying) and 3
/// test videos with two scripted falls each.
pub fn desk_scale_scripts(adl_len: usize, fall_len: usize) -> Vec<VideoScript> {
    let mut videos = Vec::new();
    for k in 0..5 {
        let l = adl_len;
        videos.push(VideoScript {
            id: format!("adl{k}"),
            role: VideoRole::Adl,
            length: l,
            events: vec![
                Event {
                    kind: EventKind::Walk,
                    start: 0,
                    end: l * 2 / 5,
                },
                Event {
                    kind: EventKind::Sit,
                    start: l * 2 / 5,
                    end: l * 3 / 5,
                },
                Event {
                    kind: EventKind::Walk,
                    start: l * 3 / 5,
                    end: l * 4 / 5,
                },
                Event {
                    kind: EventKind::Lie,
                    start: l * 4 / 5,
                    end: l,
                },
            ],
        });
    }
    for k in 0..3 {
        let l = fall_len;
        let fall1 = l * 2 / 5;
        let fall2 = (l * 7 / 10).max(fall1 + 10 + 5);
        let mut events = vec![
            Event {
                kind: EventKind::Walk,
                start: 0,
                end: fall1,
            },
            Event {
                kind: EventKind::Fall,
                start: fall1,
                end: (fall1 + 10).min(l),
            },
        ];
        if fall1 + 10 < fall2 && fall2 + 10 <= l {
            events.push(Event {
                kind: EventKind::Lie,
                start: fall1 + 10,
                end: fall2.min(l),
            });
            events.push(Event {
                kind: EventKind::Walk,
                start: fall2,
                end: (fall2 + 8).min(l),
            });
            if fall2 + 8 < l {
                events.push(Event {
                    kind: EventKind::Fall,
                    start: fall2 + 8,
                    end: (fall2 + 18).min(l),
                });
            }
            if fall2 + 18 < l {
                events.push(Event {
                    kind: EventKind::Lie,
                    start: fall2 + 18,
                    end: l,
                });
            }
        } else if fall1 + 10 < l {
            events.push(Event {
                kind: EventKind::Lie,
                start: fall1 + 10,
                end: l,
            });
        }
        videos.push(VideoScript {
            id: format!("fall{k}"),
            role: VideoRole::Fall,
            length: l,
            events,
        });
    }
    videos
}

/// Person pose at one frame.
#[derive(Clone, Copy, Debug)]
struct Pose {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

pub struct SynthVideo {
    pub id: String,
    pub role: VideoRole,
    pub frames: Vec<GrayImage>,
    pub labels: Vec<bool>,
    pub detections: Vec<Vec<Detection>>,
    /// True person boxes, for tests.
    pub truth_boxes: Vec<BBox>,
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for v in &self.videos {
            for e in &v.events {
                if e.start >= e.end || e.end > v.length {
                    return Err(Error::Config(format!(
                        "event range {}..{} outside video `{}` of length {}",
                        e.start, e.end, v.id, v.length
                    )));
                }
            }
        }
        if self.person_ry + 2.0 > self.height as f64 / 2.0 {
            return Err(Error::Config("person taller than the frame".into()));
        }
        Ok(())
    }

    /// Pose track for one script: the walker paces horizontally; sitting and
    /// lying lower the center and reshape the ellipse over a short
    /// transition; a fall is a rapid drop with aspect-ratio collapse.
    fn poses(&self, script: &VideoScript) -> Vec<Pose> {
        let w = self.width as f64;
        let h = self.height as f64;
        let floor = h - 4.0;
        let stand = Pose {
            cx: w / 2.0,
            cy: floor - self.person_ry,
            rx: self.person_rx,
            ry: self.person_ry,
        };
        let sit = Pose {
            cx: 0.0, // cx filled per frame
            cy: floor - self.person_ry * 0.6,
            rx: self.person_rx * 1.2,
            ry: self.person_ry * 0.6,
        };
        let lie = Pose {
            cx: 0.0,
            cy: floor - self.person_rx * 0.9,
            rx: self.person_ry * 0.9,
            ry: self.person_rx * 0.9,
        };
        let mut out = Vec::with_capacity(script.length);
        let mut cx = w * 0.3;
        let mut dir = 1.0f64;
        let speed = 0.8f64;
        let margin = self.person_ry + 3.0;
        for t in 0..script.length {
            let event = script.events.iter().find(|e| (e.start..e.end).contains(&t));
            let kind = event.map(|e| e.kind);
            if kind == Some(EventKind::Walk) {
                cx += dir * speed;
                if cx > w - margin {
                    cx = w - margin;
                    dir = -1.0;
                }
                if cx < margin {
                    cx = margin;
                    dir = 1.0;
                }
            }
            let pose = match (kind, event) {
                (Some(EventKind::Walk), _) | (None, _) => {
                    let bob = 0.6 * ((t as f64) * 0.7).sin();
                    Pose {
                        cx,
                        cy: stand.cy + bob,
                        ..stand
                    }
                }
                (Some(EventKind::Sit), Some(e)) => {
                    let a = smoothstep((t - e.start) as f64 / 12.0);
                    Pose {
                        cx,
                        cy: stand.cy * (1.0 - a) + sit.cy * a,
                        rx: stand.rx * (1.0 - a) + sit.rx * a,
                        ry: stand.ry * (1.0 - a) + sit.ry * a,
                    }
                }
                (Some(EventKind::Lie), Some(e)) => {
                    let a = smoothstep((t - e.start) as f64 / 15.0);
                    Pose {
                        cx,
                        cy: stand.cy * (1.0 - a) + lie.cy * a,
                        rx: stand.rx * (1.0 - a) + lie.rx * a,
                        ry: stand.ry * (1.0 - a) + lie.ry * a,
                    }
                }
                (Some(EventKind::Fall), Some(e)) => {
                    // Rapid quadratic descent with aspect collapse.
                    let a = ((t - e.start) as f64 / (e.end - e.start).max(1) as f64).min(1.0);
                    let drop = a * a;
                    Pose {
                        cx: cx + 4.0 * a * dir,
                        cy: stand.cy * (1.0 - drop) + lie.cy * drop,
                        rx: stand.rx * (1.0 - drop) + lie.rx * drop,
                        ry: stand.ry * (1.0 - drop) + lie.ry * drop,
                    }
                }
                _ => stand,
            };
            out.push(pose);
        }
        out
    }

    fn truth_box(&self, p: &Pose) -> BBox {
        BBox::clipped(
            (p.cx - p.rx).floor() as i32,
            (p.cy - p.ry).floor() as i32,
            (p.cx + p.rx).ceil() as i32,
            (p.cy + p.ry).ceil() as i32,
            self.width,
            self.height,
        )
        .expect("person stays inside the frame")
    }
}

/// Renders every scripted video with per-frame labels and oracle detections.
/// Byte-deterministic for a fixed config.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<SynthVideo>> {
    cfg.validate()?;
    let noise = Normal::new(0.0f64, cfg.noise_sigma).map_err(|_| {
        Error::Config("noise_sigma must be non-negative".into())
    })?;
    let mut out = Vec::with_capacity(cfg.videos.len());
    for (vidx, script) in cfg.videos.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ ((vidx as u64 + 1) * 0x9E37_79B9));
        let poses = cfg.poses(script);
        let mut frames = Vec::with_capacity(script.length);
        let mut labels = Vec::with_capacity(script.length);
        let mut detections = Vec::with_capacity(script.length);
        let mut truth_boxes = Vec::with_capacity(script.length);
        for (t, pose) in poses.iter().enumerate() {
            let mut frame = GrayImage::new(cfg.width, cfg.height);
            for y in 0..cfg.height {
                for x in 0..cfg.width {
                    let dx = (x as f64 - pose.cx) / pose.rx;
                    let dy = (y as f64 - pose.cy) / pose.ry;
                    let d = dx * dx + dy * dy;
                    let base = if d <= 1.0 {
                        // Radial falloff gives the body internal texture.
                        cfg.person_intensity as f64 - 45.0 * d
                    } else {
                        cfg.background_intensity as f64
                    };
                    let v = base + noise.sample(&mut rng);
                    frame.put_pixel(x, y, image::Luma([v.clamp(0.0, 255.0) as u8]));
                }
            }
            let truth = cfg.truth_box(pose);
            let is_fall = script
                .events
                .iter()
                .any(|e| e.kind == EventKind::Fall && (e.start..e.end).contains(&t));
            let mut dets = Vec::new();
            if !rng.gen_bool(cfg.detector_miss_rate) {
                let j = cfg.detector_jitter;
                let jit = |rng: &mut ChaCha8Rng| rng.gen_range(-j..=j);
                let bbox = BBox::clipped(
                    truth.x1 + jit(&mut rng),
                    truth.y1 + jit(&mut rng),
                    truth.x2 + jit(&mut rng),
                    truth.y2 + jit(&mut rng),
                    cfg.width,
                    cfg.height,
                )
                .unwrap_or(truth);
                let confidence = if rng.gen_bool(cfg.detector_low_conf_rate) {
                    rng.gen_range(0.05..0.25)
                } else {
                    rng.gen_range(0.5..0.99)
                };
                dets.push(Detection {
                    bbox,
                    confidence,
                    source: "oracle".into(),
                });
            }
            frames.push(frame);
            labels.push(is_fall);
            detections.push(dets);
            truth_boxes.push(truth);
        }
        out.push(SynthVideo {
            id: script.id.clone(),
            role: script.role,
            frames,
            labels,
            detections,
            truth_boxes,
        });
    }
    Ok(out)
}

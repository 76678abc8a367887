//! Frame preprocessing: ROI min-max normalization to [-1, 1], background at
//! -1, resize to the 64x64 network input.

use crate::roi::BBox;
use image::GrayImage;

/// Network input edge length.
pub const PATCH: usize = 64;

/// Bilinear resample of an f32 plane.
pub fn resize_bilinear_f32(src: &[f32], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; dw * dh];
    let rx = sw as f64 / dw as f64;
    let ry = sh as f64 / dh as f64;
    for y in 0..dh {
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * rx - 0.5).max(0.0);
            let fy = ((y as f64 + 0.5) * ry - 0.5).max(0.0);
            let x0 = (fx.floor() as usize).min(sw - 1);
            let y0 = (fy.floor() as usize).min(sh - 1);
            let x1 = (x0 + 1).min(sw - 1);
            let y1 = (y0 + 1).min(sh - 1);
            let ax = (fx - x0 as f64) as f32;
            let ay = (fy - y0 as f64) as f32;
            let v = src[y0 * sw + x0] * (1.0 - ax) * (1.0 - ay)
                + src[y0 * sw + x1] * ax * (1.0 - ay)
                + src[y1 * sw + x0] * (1.0 - ax) * ay
                + src[y1 * sw + x1] * ax * ay;
            out[y * dw + x] = v;
        }
    }
    out
}

/// Nearest-neighbor resample keeps masks binary.
pub fn resize_nearest_u8(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<u8> {
    let mut out = vec![0u8; dw * dh];
    for y in 0..dh {
        for x in 0..dw {
            let sx = ((x as f64 + 0.5) * sw as f64 / dw as f64) as usize;
            let sy = ((y as f64 + 0.5) * sh as f64 / dh as f64) as usize;
            out[y * dw + x] = src[sy.min(sh - 1) * sw + sx.min(sw - 1)];
        }
    }
    out
}

/// Normalizes the pixels inside the box to [-1, 1] by their min-max, sets
/// everything outside to -1, and resizes the masked frame to PATCH x PATCH
/// (bilinear for intensities, nearest for the mask). A constant-intensity
/// ROI maps to all -1 with a warning.
pub fn preprocess_frame(frame: &GrayImage, roi: &BBox) -> (Vec<f32>, Vec<u8>) {
    let (w, h) = (frame.width() as usize, frame.height() as usize);
    let mut lo = u8::MAX;
    let mut hi = u8::MIN;
    for y in roi.y1.max(0)..roi.y2.min(h as i32) {
        for x in roi.x1.max(0)..roi.x2.min(w as i32) {
            let v = frame.get_pixel(x as u32, y as u32).0[0];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let mut plane = vec![-1.0f32; w * h];
    let mut mask = vec![0u8; w * h];
    if hi > lo {
        let span = (hi - lo) as f32;
        for y in roi.y1.max(0)..roi.y2.min(h as i32) {
            for x in roi.x1.max(0)..roi.x2.min(w as i32) {
                let v = frame.get_pixel(x as u32, y as u32).0[0];
                plane[y as usize * w + x as usize] = 2.0 * (v - lo) as f32 / span - 1.0;
                mask[y as usize * w + x as usize] = 1;
            }
        }
    } else {
        log::warn!("constant-intensity ROI; frame normalized to all -1");
        for y in roi.y1.max(0)..roi.y2.min(h as i32) {
            for x in roi.x1.max(0)..roi.x2.min(w as i32) {
                mask[y as usize * w + x as usize] = 1;
            }
        }
    }
    (
        resize_bilinear_f32(&plane, w, h, PATCH, PATCH),
        resize_nearest_u8(&mask, w, h, PATCH, PATCH),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roi_span_maps_to_full_range() {
        // Pixels 40..=200 inside the ROI at native 64x64 (no resampling).
        let frame = GrayImage::from_fn(64, 64, |x, y| {
            if (10..30).contains(&x) && (10..50).contains(&y) {
                image::Luma([if y < 30 { 40 } else { 200 }])
            } else {
                image::Luma([5])
            }
        });
        let roi = BBox {
            x1: 10,
            y1: 10,
            x2: 30,
            y2: 50,
        };
        let (plane, mask) = preprocess_frame(&frame, &roi);
        assert_eq!(plane.len(), PATCH * PATCH);
        let inside: Vec<f32> = plane
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m == 1)
            .map(|(&v, _)| v)
            .collect();
        let lo = inside.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = inside.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!(lo, -1.0);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn pixels_outside_the_box_are_exactly_minus_one() {
        let frame = GrayImage::from_pixel(64, 64, image::Luma([100]));
        let mut frame = frame;
        frame.put_pixel(20, 20, image::Luma([250]));
        let roi = BBox {
            x1: 16,
            y1: 16,
            x2: 32,
            y2: 32,
        };
        let (plane, mask) = preprocess_frame(&frame, &roi);
        for (v, m) in plane.iter().zip(&mask) {
            if *m == 0 {
                assert_eq!(*v, -1.0);
            }
        }
        assert!(mask.iter().any(|&m| m == 1));
    }

    #[test]
    fn output_is_64_by_64_from_any_input_size() {
        let frame = GrayImage::from_fn(640, 480, |x, _| image::Luma([(x % 251) as u8]));
        let roi = BBox {
            x1: 100,
            y1: 80,
            x2: 300,
            y2: 400,
        };
        let (plane, mask) = preprocess_frame(&frame, &roi);
        assert_eq!(plane.len(), 64 * 64);
        assert_eq!(mask.len(), 64 * 64);
        assert!(mask.iter().filter(|&&m| m == 1).count() > 0);
        assert!(plane.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn constant_roi_collapses_to_background() {
        let frame = GrayImage::from_pixel(64, 64, image::Luma([128]));
        let roi = BBox {
            x1: 8,
            y1: 8,
            x2: 24,
            y2: 40,
        };
        let (plane, mask) = preprocess_frame(&frame, &roi);
        assert!(plane.iter().all(|&v| v == -1.0));
        assert!(mask.iter().any(|&m| m == 1));
    }
}

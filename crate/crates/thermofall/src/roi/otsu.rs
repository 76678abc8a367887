//! Otsu's threshold over the 256-bin histogram of an 8-bit frame.

use super::RoiMask;
use image::GrayImage;

/// Threshold maximizing between-class variance, classes being pixels <= t and
/// pixels > t. Ties break toward the lowest threshold; a constant frame
/// returns that constant value (the induced foreground mask is then empty).
pub fn otsu_threshold(frame: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for p in frame.pixels() {
        hist[p.0[0] as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    debug_assert!(total > 0, "empty frame");
    let lo = hist.iter().position(|&c| c > 0).unwrap_or(0);
    let hi = hist.iter().rposition(|&c| c > 0).unwrap_or(0);
    if lo == hi {
        return lo as u8;
    }
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(v, &c)| v as f64 * c as f64)
        .sum();
    let mut best_t = 0u8;
    let mut best_var = f64::NEG_INFINITY;
    let mut w0 = 0.0f64;
    let mut sum0 = 0.0f64;
    for t in 0..256usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total as f64 - w0;
        if w0 == 0.0 {
            continue;
        }
        if w1 == 0.0 {
            break;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    best_t
}

/// Foreground mask of pixels strictly above the Otsu threshold.
pub fn otsu_mask(frame: &GrayImage) -> RoiMask {
    let t = otsu_threshold(frame);
    RoiMask::from_fn(frame.width(), frame.height(), |x, y| {
        frame.get_pixel(x, y).0[0] > t
    })
}

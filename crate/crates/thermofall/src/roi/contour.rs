//! Largest foreground blob and its tight bounding box.

use super::{BBox, RoiMask};

/// Tight bounding box of the 8-connected foreground component with the
/// largest pixel area; None for an empty mask. Equal areas break toward the
/// component found first in scan order.
pub fn biggest_contour_box(mask: &RoiMask) -> Option<BBox> {
    let (w, h) = (mask.width() as i32, mask.height() as i32);
    let mut labels = vec![0u32; (w * h) as usize];
    let mut best: Option<(usize, BBox)> = None;
    let mut next_label = 1u32;
    let mut stack = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            let idx = (sy * w + sx) as usize;
            if labels[idx] != 0 || !mask.get(sx as u32, sy as u32) {
                continue;
            }
            // Flood-fill one component.
            let label = next_label;
            next_label += 1;
            labels[idx] = label;
            stack.push((sx, sy));
            let (mut area, mut x1, mut y1, mut x2, mut y2) = (0usize, sx, sy, sx + 1, sy + 1);
            while let Some((x, y)) = stack.pop() {
                area += 1;
                x1 = x1.min(x);
                y1 = y1.min(y);
                x2 = x2.max(x + 1);
                y2 = y2.max(y + 1);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let nidx = (ny * w + nx) as usize;
                        if labels[nidx] == 0 && mask.get(nx as u32, ny as u32) {
                            labels[nidx] = label;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            let bbox = BBox { x1, y1, x2, y2 };
            if best.as_ref().map_or(true, |(a, _)| area > *a) {
                best = Some((area, bbox));
            }
        }
    }
    best.map(|(_, b)| b)
}

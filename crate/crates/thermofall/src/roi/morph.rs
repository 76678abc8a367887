//! Binary morphology with a 3x3 square structuring element: one opening then
//! one closing. Pixels beyond the frame count as background.

use super::RoiMask;

fn erode(mask: &RoiMask) -> RoiMask {
    let (w, h) = (mask.width(), mask.height());
    RoiMask::from_fn(w, h, |x, y| {
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                if nx < 0 || ny < 0 || nx >= w as i32 || ny >= h as i32 {
                    return false;
                }
                if !mask.get(nx as u32, ny as u32) {
                    return false;
                }
            }
        }
        true
    })
}

fn dilate(mask: &RoiMask) -> RoiMask {
    let (w, h) = (mask.width(), mask.height());
    RoiMask::from_fn(w, h, |x, y| {
        for dy in -1i32..=1 {
            for dx in -1i32..=1 {
                let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                if nx >= 0 && ny >= 0 && nx < w as i32 && ny < h as i32 && mask.get(nx as u32, ny as u32)
                {
                    return true;
                }
            }
        }
        false
    })
}

/// Opening (erode, dilate) removes speckle; closing (dilate, erode) fills
/// small holes.
pub fn morph_clean(mask: &RoiMask) -> RoiMask {
    let opened = dilate(&erode(mask));
    erode(&dilate(&opened))
}

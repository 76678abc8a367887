//! Dense two-frame optical flow (Farnebäck polynomial expansion), the
//! 3-channel flow image, and the binary flow cache format.

mod farneback;
mod io;
mod poly;

pub use farneback::{farneback_flow, FlowField};
pub use io::{read_flow_record, write_flow_record, FLOW_MAGIC};
pub use poly::{polynomial_expansion, Plane, PolyExpansion};

use crate::error::{Error, Result};
use crate::roi::RoiMask;
use serde::{Deserialize, Serialize};

/// Farnebäck estimation parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    /// Pyramid levels including the full resolution.
    pub levels: usize,
    /// Per-level downscale factor.
    pub scale: f64,
    /// Averaging window for the displacement solve (odd).
    pub window: usize,
    /// Refinement iterations per level.
    pub iterations: usize,
    /// Polynomial neighborhood half-width; the fit window is 2n+1.
    pub poly_n: usize,
    /// Gaussian weight sigma of the polynomial fit.
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            levels: 3,
            scale: 0.5,
            window: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::Config("flow: levels must be >= 1".into()));
        }
        if self.window % 2 == 0 {
            return Err(Error::Config("flow: window must be odd".into()));
        }
        if !(0.1..1.0).contains(&self.scale) {
            return Err(Error::Config("flow: scale must lie in [0.1, 1)".into()));
        }
        Ok(())
    }
}

/// Per-pixel (fx, fy, magnitude) channels, min-max normalized to [-1, 1],
/// with pixels outside the ROI forced to -1.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowImage {
    pub width: u32,
    pub height: u32,
    pub fx: Vec<f32>,
    pub fy: Vec<f32>,
    pub magnitude: Vec<f32>,
}

/// Min-max rescale of one channel to [-1, 1]; a constant channel maps to the
/// background value -1.
fn normalize_channel(values: &[f32]) -> Vec<f32> {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(hi > lo) {
        return vec![-1.0; values.len()];
    }
    let span = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| (2.0 * (v - lo) as f64 / span - 1.0) as f32)
        .collect()
}

/// Builds the 3-channel flow image: the magnitude channel is computed before
/// normalization, every channel is min-max rescaled to [-1, 1], and pixels
/// outside the union ROI are set to -1.
pub fn make_flow_image(field: &FlowField, roi_union: &RoiMask) -> Result<FlowImage> {
    if (roi_union.width(), roi_union.height()) != (field.width, field.height) {
        return Err(Error::Shape {
            context: "flow image ROI".into(),
            expected: vec![field.width as usize, field.height as usize],
            actual: vec![roi_union.width() as usize, roi_union.height() as usize],
        });
    }
    let magnitude: Vec<f32> = field
        .fx
        .iter()
        .zip(&field.fy)
        .map(|(&x, &y)| (x as f64).hypot(y as f64) as f32)
        .collect();
    let mut fx = normalize_channel(&field.fx);
    let mut fy = normalize_channel(&field.fy);
    let mut mag = normalize_channel(&magnitude);
    for y in 0..field.height {
        for x in 0..field.width {
            if !roi_union.get(x, y) {
                let i = (y * field.width + x) as usize;
                fx[i] = -1.0;
                fy[i] = -1.0;
                mag[i] = -1.0;
            }
        }
    }
    Ok(FlowImage {
        width: field.width,
        height: field.height,
        fx,
        fy,
        magnitude: mag,
    })
}

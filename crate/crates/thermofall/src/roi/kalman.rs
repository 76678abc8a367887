//! Constant-velocity Kalman filter over the two box corners.
//!
//! State: (x1, y1, x2, y2, vx1, vy1, vx2, vy2). Measurements are the four
//! corner coordinates.

use super::BBox;
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

type Vec8 = SVector<f64, 8>;
type Mat8 = SMatrix<f64, 8, 8>;
type Mat48 = SMatrix<f64, 4, 8>;
type Mat4 = SMatrix<f64, 4, 4>;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// Process noise on the velocity components.
    pub process_noise_vel: f64,
    /// Measurement noise on the corner coordinates.
    pub measurement_noise: f64,
    /// Initial covariance scale.
    pub initial_cov: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            process_noise_vel: 1e-2,
            measurement_noise: 1.0,
            initial_cov: 10.0,
        }
    }
}

/// Kalman state plus the tracker's fractional losses counter.
#[derive(Clone, Debug)]
pub struct TrackState {
    pub state: Vec8,
    pub cov: Mat8,
    pub losses: f64,
}

const EIG_FLOOR: f64 = 1e-9;

fn transition() -> Mat8 {
    let mut f = Mat8::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0; // unit time step
    }
    f
}

fn measurement() -> Mat48 {
    let mut h = Mat48::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

/// Symmetrizes and clamps the eigenvalue floor so the covariance stays PSD.
fn repair_cov(p: &mut Mat8) {
    let sym = (*p + p.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= EIG_FLOOR) {
        *p = sym;
        return;
    }
    let mut vals = eig.eigenvalues;
    for l in vals.iter_mut() {
        *l = l.max(EIG_FLOOR);
    }
    *p = eig.eigenvectors * Mat8::from_diagonal(&vals) * eig.eigenvectors.transpose();
}

impl TrackState {
    pub fn new(bbox: &BBox, cfg: &KalmanConfig) -> TrackState {
        let mut state = Vec8::zeros();
        state[0] = bbox.x1 as f64;
        state[1] = bbox.y1 as f64;
        state[2] = bbox.x2 as f64;
        state[3] = bbox.y2 as f64;
        TrackState {
            state,
            cov: Mat8::identity() * cfg.initial_cov,
            losses: 0.0,
        }
    }

    /// Current box estimate, clamped into the frame with at least one pixel
    /// of extent.
    pub fn current_box(&self, width: u32, height: u32) -> BBox {
        let (w, h) = (width as i32, height as i32);
        let x1 = (self.state[0].round() as i32).clamp(0, w - 1);
        let y1 = (self.state[1].round() as i32).clamp(0, h - 1);
        let x2 = (self.state[2].round() as i32).clamp(x1 + 1, w);
        let y2 = (self.state[3].round() as i32).clamp(y1 + 1, h);
        BBox { x1, y1, x2, y2 }
    }
}

/// Linear predict with unit time step under the constant-velocity model.
pub fn kalman_predict(st: &TrackState, cfg: &KalmanConfig) -> TrackState {
    let f = transition();
    let mut q = Mat8::zeros();
    for i in 4..8 {
        q[(i, i)] = cfg.process_noise_vel;
    }
    let state = f * st.state;
    let mut cov = f * st.cov * f.transpose() + q;
    repair_cov(&mut cov);
    TrackState {
        state,
        cov,
        losses: st.losses,
    }
}

/// Measurement update with the four corner coordinates of `measured`.
pub fn kalman_update(st: &TrackState, measured: &BBox, cfg: &KalmanConfig) -> TrackState {
    let h = measurement();
    let r = Mat4::identity() * cfg.measurement_noise;
    let z = SVector::<f64, 4>::new(
        measured.x1 as f64,
        measured.y1 as f64,
        measured.x2 as f64,
        measured.y2 as f64,
    );
    let innovation = z - h * st.state;
    let s = h * st.cov * h.transpose() + r;
    let s_inv = s.try_inverse().unwrap_or_else(Mat4::identity);
    let k = st.cov * h.transpose() * s_inv;
    let state = st.state + k * innovation;
    let mut cov = (Mat8::identity() - k * h) * st.cov;
    repair_cov(&mut cov);
    TrackState {
        state,
        cov,
        losses: st.losses,
    }
}

//! Per-pixel quadratic expansion: f(p + d) ~ d'Ad + b'd + c over a
//! Gaussian-weighted neighborhood, solved in closed form through the
//! constant Gram matrix of the basis (1, x, y, x^2, y^2, xy).

use crate::error::{Error, Result};
use nalgebra::{Matrix6, Vector6};

/// A borderless f64 image plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Plane {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_gray(img: &image::GrayImage) -> Plane {
        Plane {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.pixels().map(|p| p.0[0] as f64).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }
}

/// Reflect-101 index: ...dcb|abcd|cba...
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    i = i.rem_euclid(period);
    if i >= n {
        i = period - i;
    }
    i as usize
}

/// Per-pixel expansion coefficients in basis order (1, x, y, x², y², xy), as
/// six planes.
#[derive(Clone, Debug)]
pub struct PolyExpansion {
    pub width: usize,
    pub height: usize,
    /// [c, bx, by, axx, ayy, axy]
    pub coeffs: [Vec<f64>; 6],
}

impl PolyExpansion {
    /// A at a pixel: [[axx, axy/2], [axy/2, ayy]].
    #[inline]
    pub fn a_at(&self, idx: usize) -> [f64; 3] {
        [
            self.coeffs[3][idx],
            self.coeffs[4][idx],
            self.coeffs[5][idx] * 0.5,
        ]
    }

    /// b at a pixel: (bx, by).
    #[inline]
    pub fn b_at(&self, idx: usize) -> (f64, f64) {
        (self.coeffs[1][idx], self.coeffs[2][idx])
    }
}

fn correlate_rows(src: &Plane, kernel: &[f64], n: isize) -> Plane {
    let mut out = Plane::zeros(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let dx = k as isize - n;
                acc += kv * src.get(reflect(x as isize + dx, src.width), y);
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn correlate_cols(src: &Plane, kernel: &[f64], n: isize) -> Plane {
    let mut out = Plane::zeros(src.width, src.height);
    for y in 0..src.height {
        for x in 0..src.width {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let dy = k as isize - n;
                acc += kv * src.get(x, reflect(y as isize + dy, src.height));
            }
            out.set(x, y, acc);
        }
    }
    out
}

/// Least-squares quadratic fit per pixel. Border pixels use reflected
/// padding.
pub fn polynomial_expansion(frame: &Plane, n: usize, sigma: f64) -> Result<PolyExpansion> {
    if frame.width < 2 * n + 1 || frame.height < 2 * n + 1 {
        return Err(Error::Config(format!(
            "frame {}x{} smaller than the polynomial neighborhood {}",
            frame.width,
            frame.height,
            2 * n + 1
        )));
    }
    let ni = n as isize;
    let g: Vec<f64> = (-ni..=ni)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let tg: Vec<f64> = (-ni..=ni).map(|t| t as f64).zip(&g).map(|(t, &w)| t * w).collect();
    let ttg: Vec<f64> = (-ni..=ni)
        .map(|t| (t * t) as f64)
        .zip(&g)
        .map(|(t, &w)| t * w)
        .collect();

    // Separable moments: horizontal pass over x then vertical combinations.
    let u0 = correlate_rows(frame, &g, ni);
    let u1 = correlate_rows(frame, &tg, ni);
    let u2 = correlate_rows(frame, &ttg, ni);
    let m_c = correlate_cols(&u0, &g, ni);
    let m_x = correlate_cols(&u1, &g, ni);
    let m_y = correlate_cols(&u0, &tg, ni);
    let m_xx = correlate_cols(&u2, &g, ni);
    let m_yy = correlate_cols(&u0, &ttg, ni);
    let m_xy = correlate_cols(&u1, &tg, ni);

    // Gram matrix of the weighted basis, identical for every pixel.
    let mut gram = Matrix6::<f64>::zeros();
    for dy in -ni..=ni {
        for dx in -ni..=ni {
            let w = g[(dx + ni) as usize] * g[(dy + ni) as usize];
            let b = [
                1.0,
                dx as f64,
                dy as f64,
                (dx * dx) as f64,
                (dy * dy) as f64,
                (dx * dy) as f64,
            ];
            for i in 0..6 {
                for j in 0..6 {
                    gram[(i, j)] += w * b[i] * b[j];
                }
            }
        }
    }
    let gram_inv = gram
        .try_inverse()
        .ok_or_else(|| Error::Config("polynomial basis Gram matrix is singular".into()))?;

    let len = frame.width * frame.height;
    let mut coeffs: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; len]);
    for idx in 0..len {
        let m = Vector6::new(
            m_c.data[idx],
            m_x.data[idx],
            m_y.data[idx],
            m_xx.data[idx],
            m_yy.data[idx],
            m_xy.data[idx],
        );
        let r = gram_inv * m;
        for k in 0..6 {
            coeffs[k][idx] = r[k];
        }
    }
    Ok(PolyExpansion {
        width: frame.width,
        height: frame.height,
        coeffs,
    })
}

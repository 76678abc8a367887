//! Coarse-to-fine displacement estimation from polynomial expansions.

use super::poly::{polynomial_expansion, Plane, PolyExpansion};
use super::FlowParams;
use crate::error::Result;
use image::GrayImage;

/// Per-pixel displacement field in pixels (positive fx points right,
/// positive fy points down).
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: u32,
    pub height: u32,
    pub fx: Vec<f32>,
    pub fy: Vec<f32>,
}

/// 5-tap binomial blur before each pyramid downsample.
fn blur(src: &Plane) -> Plane {
    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
    let (w, h) = (src.width, src.height);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in K.iter().enumerate() {
                acc += kv * src.get(clamp(x as isize + k as isize - 2, w), y);
            }
            tmp.set(x, y, acc);
        }
    }
    let mut out = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in K.iter().enumerate() {
                acc += kv * tmp.get(x, clamp(y as isize + k as isize - 2, h));
            }
            out.set(x, y, acc);
        }
    }
    out
}

fn resize_bilinear(src: &Plane, w: usize, h: usize) -> Plane {
    let mut out = Plane::zeros(w, h);
    let sx = src.width as f64 / w as f64;
    let sy = src.height as f64 / h as f64;
    for y in 0..h {
        for x in 0..w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).max(0.0);
            let fy = ((y as f64 + 0.5) * sy - 0.5).max(0.0);
            let x0 = (fx.floor() as usize).min(src.width - 1);
            let y0 = (fy.floor() as usize).min(src.height - 1);
            let x1 = (x0 + 1).min(src.width - 1);
            let y1 = (y0 + 1).min(src.height - 1);
            let ax = fx - x0 as f64;
            let ay = fy - y0 as f64;
            let v = src.get(x0, y0) * (1.0 - ax) * (1.0 - ay)
                + src.get(x1, y0) * ax * (1.0 - ay)
                + src.get(x0, y1) * (1.0 - ax) * ay
                + src.get(x1, y1) * ax * ay;
            out.set(x, y, v);
        }
    }
    out
}

/// Border-aware box mean, separable running sums.
fn box_mean(src: &Plane, radius: usize) -> Plane {
    let (w, h) = (src.width, src.height);
    let r = radius as isize;
    let mut tmp = Plane::zeros(w, h);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let mut acc = 0.0;
        let mut count = 0usize;
        for x in 0..(r as usize).min(w) {
            acc += row[x];
            count += 1;
        }
        for x in 0..w {
            let add = x as isize + r;
            if add < w as isize {
                acc += row[add as usize];
                count += 1;
            }
            let drop = x as isize - r - 1;
            if drop >= 0 {
                acc -= row[drop as usize];
                count -= 1;
            }
            tmp.set(x, y, acc / count as f64);
        }
    }
    let mut out = Plane::zeros(w, h);
    for x in 0..w {
        let mut acc = 0.0;
        let mut count = 0usize;
        for y in 0..(r as usize).min(h) {
            acc += tmp.get(x, y);
            count += 1;
        }
        for y in 0..h {
            let add = y as isize + r;
            if add < h as isize {
                acc += tmp.get(x, add as usize);
                count += 1;
            }
            let drop = y as isize - r - 1;
            if drop >= 0 {
                acc -= tmp.get(x, drop as usize);
                count -= 1;
            }
            out.set(x, y, acc / count as f64);
        }
    }
    out
}

/// One refinement sweep at a single pyramid level.
fn refine(
    e1: &PolyExpansion,
    e2: &PolyExpansion,
    flow_x: &mut Plane,
    flow_y: &mut Plane,
    window: usize,
) {
    let (w, h) = (e1.width, e1.height);
    let mut g11 = Plane::zeros(w, h);
    let mut g12 = Plane::zeros(w, h);
    let mut g22 = Plane::zeros(w, h);
    let mut h1 = Plane::zeros(w, h);
    let mut h2 = Plane::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let dx0 = flow_x.data[idx];
            let dy0 = flow_y.data[idx];
            // Sample the second expansion at the displaced position.
            let tx = ((x as f64 + dx0).round() as isize).clamp(0, w as isize - 1) as usize;
            let ty = ((y as f64 + dy0).round() as isize).clamp(0, h as isize - 1) as usize;
            let tidx = ty * w + tx;
            let a1 = e1.a_at(idx);
            let a2 = e2.a_at(tidx);
            let a = [
                0.5 * (a1[0] + a2[0]),
                0.5 * (a1[1] + a2[1]),
                0.5 * (a1[2] + a2[2]),
            ];
            let (b1x, b1y) = e1.b_at(idx);
            let (b2x, b2y) = e2.b_at(tidx);
            // db = -(b2 - b1)/2 + A d0
            let dbx = -0.5 * (b2x - b1x) + a[0] * dx0 + a[2] * dy0;
            let dby = -0.5 * (b2y - b1y) + a[2] * dx0 + a[1] * dy0;
            // Accumulate A'A and A'db (A symmetric).
            g11.data[idx] = a[0] * a[0] + a[2] * a[2];
            g12.data[idx] = a[0] * a[2] + a[2] * a[1];
            g22.data[idx] = a[2] * a[2] + a[1] * a[1];
            h1.data[idx] = a[0] * dbx + a[2] * dby;
            h2.data[idx] = a[2] * dbx + a[1] * dby;
        }
    }
    let radius = window / 2;
    let g11 = box_mean(&g11, radius);
    let g12 = box_mean(&g12, radius);
    let g22 = box_mean(&g22, radius);
    let h1 = box_mean(&h1, radius);
    let h2 = box_mean(&h2, radius);
    for idx in 0..w * h {
        let det = g11.data[idx] * g22.data[idx] - g12.data[idx] * g12.data[idx];
        if det.abs() > 1e-12 {
            flow_x.data[idx] = (g22.data[idx] * h1.data[idx] - g12.data[idx] * h2.data[idx]) / det;
            flow_y.data[idx] = (g11.data[idx] * h2.data[idx] - g12.data[idx] * h1.data[idx]) / det;
        }
    }
}

/// Dense optical flow from `prev` to `next`.
pub fn farneback_flow(
    prev: &GrayImage,
    next: &GrayImage,
    params: &FlowParams,
) -> Result<FlowField> {
    params.validate()?;
    if prev.dimensions() != next.dimensions() {
        return Err(crate::error::Error::Shape {
            context: "flow frame pair".into(),
            expected: vec![prev.width() as usize, prev.height() as usize],
            actual: vec![next.width() as usize, next.height() as usize],
        });
    }
    let base1 = Plane::from_gray(prev);
    let base2 = Plane::from_gray(next);
    let min_dim = 2 * params.poly_n + 1;
    if base1.width < min_dim || base1.height < min_dim {
        return Err(crate::error::Error::Config(format!(
            "flow: frame {}x{} smaller than the polynomial neighborhood {min_dim}",
            base1.width, base1.height
        )));
    }

    // Pyramid sizes, finest first; deeper levels drop out once they would
    // underflow the fit neighborhood.
    let mut sizes = vec![(base1.width, base1.height)];
    for _ in 1..params.levels {
        let (pw, ph) = *sizes.last().unwrap();
        let nw = (pw as f64 * params.scale).round() as usize;
        let nh = (ph as f64 * params.scale).round() as usize;
        if nw < min_dim || nh < min_dim {
            break;
        }
        sizes.push((nw, nh));
    }

    let mut pyr1 = vec![base1];
    let mut pyr2 = vec![base2];
    for level in 1..sizes.len() {
        let (w, h) = sizes[level];
        pyr1.push(resize_bilinear(&blur(&pyr1[level - 1]), w, h));
        pyr2.push(resize_bilinear(&blur(&pyr2[level - 1]), w, h));
    }

    let (cw, ch) = sizes[sizes.len() - 1];
    let mut flow_x = Plane::zeros(cw, ch);
    let mut flow_y = Plane::zeros(cw, ch);
    for level in (0..sizes.len()).rev() {
        let (w, h) = sizes[level];
        if (flow_x.width, flow_x.height) != (w, h) {
            let scale_x = w as f64 / flow_x.width as f64;
            let scale_y = h as f64 / flow_x.height as f64;
            flow_x = resize_bilinear(&flow_x, w, h);
            flow_y = resize_bilinear(&flow_y, w, h);
            for v in flow_x.data.iter_mut() {
                *v *= scale_x;
            }
            for v in flow_y.data.iter_mut() {
                *v *= scale_y;
            }
        }
        let e1 = polynomial_expansion(&pyr1[level], params.poly_n, params.poly_sigma)?;
        let e2 = polynomial_expansion(&pyr2[level], params.poly_n, params.poly_sigma)?;
        for _ in 0..params.iterations {
            refine(&e1, &e2, &mut flow_x, &mut flow_y, params.window);
        }
    }
    Ok(FlowField {
        width: prev.width(),
        height: prev.height(),
        fx: flow_x.data.iter().map(|&v| v as f32).collect(),
        fy: flow_y.data.iter().map(|&v| v as f32).collect(),
    })
}

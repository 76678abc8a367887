//! Central-difference gradient verification, always in 64-bit.

use super::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of one check: the worst relative error and where it occurred.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: usize,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Checks `analytic` against central finite differences of `loss` at
/// `params`, coordinate by coordinate.
pub fn finite_diff_check(
    loss: &mut dyn FnMut(&[Tensor<f64>]) -> f64,
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    eps: f64,
) -> GradCheckReport {
    let all: Vec<(usize, Vec<usize>)> = params
        .iter()
        .map(|p| (0..p.len()).collect::<Vec<_>>())
        .enumerate()
        .collect();
    run_check(loss, params, analytic, eps, all)
}

/// Like [`finite_diff_check`] but probes at most `coords_per_tensor` random
/// coordinates per parameter tensor; large tensors stay affordable.
pub fn finite_diff_check_sampled(
    loss: &mut dyn FnMut(&[Tensor<f64>]) -> f64,
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    eps: f64,
    coords_per_tensor: usize,
    seed: u64,
) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<(usize, Vec<usize>)> = params
        .iter()
        .enumerate()
        .map(|(ti, p)| {
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(coords_per_tensor);
            (ti, idx)
        })
        .collect();
    run_check(loss, params, analytic, eps, picked)
}

fn run_check(
    loss: &mut dyn FnMut(&[Tensor<f64>]) -> f64,
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    eps: f64,
    coords: Vec<(usize, Vec<usize>)>,
) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len());
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: 0,
        worst_coord: 0,
        coords_checked: 0,
    };
    for (ti, idxs) in coords {
        for i in idxs {
            let orig = work[ti].data()[i];
            work[ti].data_mut()[i] = orig + eps;
            let up = loss(&work);
            work[ti].data_mut()[i] = orig - eps;
            let dn = loss(&work);
            work[ti].data_mut()[i] = orig;
            let fd = (up - dn) / (2.0 * eps);
            let a = analytic[ti].data()[i];
            let rel = (fd - a).abs() / fd.abs().max(a.abs()).max(1e-8);
            report.coords_checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst_tensor = ti;
                report.worst_coord = i;
            }
        }
    }
    report
}

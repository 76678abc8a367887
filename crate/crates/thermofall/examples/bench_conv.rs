//! Quick throughput probe for the conv kernels on Table-1-sized layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use thermofall::tensor::{
    conv3d_backward, conv3d_forward, same_conv_padding, Activation, ConvLayerSpec, Tensor,
};

fn spec(
    name: &str,
    kernel: (usize, usize, usize),
    ci: usize,
    co: usize,
    stride: (usize, usize, usize),
    in_dhw: (usize, usize, usize),
    out_dhw: (usize, usize, usize),
) -> ConvLayerSpec {
    let padding = [
        same_conv_padding(in_dhw.0, kernel.0, stride.0, out_dhw.0).unwrap(),
        same_conv_padding(in_dhw.1, kernel.1, stride.1, out_dhw.1).unwrap(),
        same_conv_padding(in_dhw.2, kernel.2, stride.2, out_dhw.2).unwrap(),
    ];
    ConvLayerSpec {
        name: name.into(),
        kernel,
        in_channels: ci,
        out_channels: co,
        stride,
        padding,
        has_batchnorm: false,
        activation: Activation::None,
        transposed: false,
    }
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layers = [
        spec("enc1", (5, 3, 3), 1, 16, (1, 1, 1), (8, 64, 64), (8, 64, 64)),
        spec("enc2", (5, 3, 3), 16, 8, (1, 2, 2), (8, 64, 64), (8, 32, 32)),
        spec("enc3", (5, 3, 3), 8, 8, (2, 2, 2), (8, 32, 32), (4, 16, 16)),
        spec("enc4", (5, 3, 3), 8, 8, (2, 2, 2), (4, 16, 16), (2, 8, 8)),
    ];
    let batch = 4usize;
    for s in &layers {
        let in_dhw = match s.name.as_str() {
            "enc1" | "enc2" => (if s.name == "enc1" { 8 } else { 8 }, 64, 64),
            "enc3" => (8, 32, 32),
            _ => (4, 16, 16),
        };
        let x = Tensor::<f32>::from_vec(
            &[batch, in_dhw.0, in_dhw.1, in_dhw.2, s.in_channels],
            (0..batch * in_dhw.0 * in_dhw.1 * in_dhw.2 * s.in_channels)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap();
        let w = Tensor::<f32>::randn(&s.weight_shape(), 0.02, &mut rng);
        let b = Tensor::<f32>::zeros(&[s.out_channels]);
        let y = conv3d_forward(&x, s, &w, &b).unwrap();
        let out_elems: usize = y.shape().iter().product();
        let macs = out_elems * s.kernel.0 * s.kernel.1 * s.kernel.2 * s.in_channels;

        let reps = (2_000_000_000 / macs).clamp(3, 200);
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = conv3d_forward(&x, s, &w, &b).unwrap();
        }
        let fwd = t0.elapsed().as_secs_f64() / reps as f64;
        let t0 = Instant::now();
        for _ in 0..reps {
            let _ = conv3d_backward(&x, s, &w, &y).unwrap();
        }
        let bwd = t0.elapsed().as_secs_f64() / reps as f64;
        println!(
            "{}: fwd {:>8.3} ms ({:>6.2} GFLOP/s)   bwd {:>8.3} ms ({:>6.2} GFLOP/s)",
            s.name,
            fwd * 1e3,
            2.0 * macs as f64 / fwd / 1e9,
            bwd * 1e3,
            2.0 * 2.0 * macs as f64 / bwd / 1e9,
        );
    }
}

//! Finite-difference helpers shared by the gradient and acceptance tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsegan::autodiff::{grad_check, same_padding, GradCheckInput, Tape, Var};
use wsegan::signal::StftConfig;
use wsegan::training::SpectralLoss;
use wsegan::Result;

pub const EPS: f64 = 1e-6;

pub fn rand_input(rng: &mut ChaCha8Rng, shape: &[usize]) -> GradCheckInput {
    let n = shape.iter().product();
    // Keep values away from the rectifier kinks at zero.
    let value = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    GradCheckInput::new(shape.to_vec(), value)
}

/// A fixed random projection makes every output coordinate matter.
pub fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    let r = tape.constant(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

/// Worst relative error of `f` (projected to a scalar) over seeds 0-4.
pub fn op_error<F>(shapes: &[Vec<usize>], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    (0..5u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<_> = shapes.iter().map(|s| rand_input(&mut rng, s)).collect();
            grad_check(|t, v| f(t, v).and_then(|y| project(t, y, seed)), &inputs, EPS)
                .unwrap()
                .max_rel_error
        })
        .fold(0.0, f64::max)
}

/// Named checks of every primitive layer operation.
pub fn primitive_errors() -> Vec<(&'static str, f64)> {
    let (pl, pr) = same_padding(7, 2);
    vec![
        (
            "conv1d",
            op_error(&[vec![2, 3, 12], vec![4, 3, 7], vec![4]], |t, v| t.conv1d(v[0], v[1], Some(v[2]), 2, pl, pr)),
        ),
        (
            "conv_transpose1d",
            op_error(&[vec![2, 3, 5], vec![3, 2, 7], vec![2]], |t, v| {
                t.conv_transpose1d(v[0], v[1], Some(v[2]), 2, pl, 10)
            }),
        ),
        ("prelu", op_error(&[vec![2, 3, 4], vec![3]], |t, v| t.prelu(v[0], v[1]))),
        ("leaky_relu", op_error(&[vec![2, 3, 4]], |t, v| t.leaky_relu(v[0], 0.3))),
        ("tanh", op_error(&[vec![2, 3, 4]], |t, v| t.tanh(v[0]))),
        (
            "channel_scale_add",
            op_error(&[vec![2, 3, 4], vec![2, 3, 4], vec![3]], |t, v| t.channel_scale_add(v[0], v[1], v[2])),
        ),
        ("linear", op_error(&[vec![3, 2, 4], vec![2, 8], vec![2]], |t, v| t.linear(v[0], v[1], Some(v[2])))),
        ("concat_channels", op_error(&[vec![2, 1, 4], vec![2, 3, 4]], |t, v| t.concat_channels(v[0], v[1]))),
    ]
}

/// Worst relative error of the spectral regularizer path over seeds 0-4.
pub fn spectral_path_error() -> f64 {
    let cfg = StftConfig {
        frame_len: 64,
        hop: 32,
        ..StftConfig::default()
    };
    let loss = SpectralLoss::new(cfg).unwrap();
    (0..5u64)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = 128;
            let natural: Vec<f64> = (0..2 * t).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let gen = rand_input(&mut rng, &[2, 1, t]);
            grad_check(|tape, v| loss.record(tape, v[0], &natural), &[gen], EPS)
                .unwrap()
                .max_rel_error
        })
        .fold(0.0, f64::max)
}

//! Minimal reverse-mode differentiation for the 1-D convolutional networks
//! used here: a dynamic [`Tape`], named [`ParamStore`]s, finite-difference
//! checking and a binary checkpoint format.

mod checkpoint;
mod gradcheck;
mod kernels;
mod params;
mod tape;

pub use checkpoint::{manifest_path, read_checkpoint, write_checkpoint, TensorRecord, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, relative_error, GradCheckInput, GradCheckReport};
pub use params::{ParamId, ParamKey, ParamStore, Parameter};
pub use tape::{CustomOp, Gradients, Tape, Var};

use rand::Rng;
use rand_distr::StandardNormal;

/// Lower clamp for spectral-norm estimates.
pub const SIGMA_MIN: f64 = 1e-12;

/// Left/right zero padding that makes a stride-`stride` convolution with a
/// `kernel`-wide filter map length `T` to exactly `T / stride`.
pub fn same_padding(kernel: usize, stride: usize) -> (usize, usize) {
    let total = kernel.saturating_sub(stride);
    (total / 2, total - total / 2)
}

/// I.i.d. standard normal values.
pub fn sample_gaussian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn paper_padding_split() {
        assert_eq!(same_padding(31, 4), (13, 14));
        assert_eq!(same_padding(1, 1), (0, 0));
    }

    #[test]
    fn conv_shape_for_full_canvas() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1, 1, 16384], vec![0.0; 16384]).unwrap();
        let w = tape.constant(vec![2, 1, 31], vec![0.1; 62]).unwrap();
        let y = tape.conv1d(x, w, None, 4, 13, 14).unwrap();
        assert_eq!(tape.shape(y), &[1, 2, 4096]);
    }

    #[test]
    fn identity_kernel_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let xv = rand_vec(&mut rng, 2 * 3 * 10);
        let x = tape.constant(vec![2, 3, 10], xv.clone()).unwrap();
        let mut eye = vec![0.0; 9];
        for c in 0..3 {
            eye[c * 3 + c] = 1.0;
        }
        let w = tape.constant(vec![3, 3, 1], eye).unwrap();
        let b = tape.constant(vec![3], vec![0.0; 3]).unwrap();
        let y = tape.conv1d(x, w, Some(b), 1, 0, 0).unwrap();
        assert_eq!(tape.value(y), &xv[..]);
    }

    #[test]
    fn conv_channel_mismatch_reports_both() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1, 2, 8], vec![0.0; 16]).unwrap();
        let w = tape.constant(vec![1, 3, 3], vec![0.0; 9]).unwrap();
        let err = tape.conv1d(x, w, None, 1, 1, 1).unwrap_err();
        match err {
            crate::Error::Shape { expected, actual, .. } => {
                assert!(expected.contains('3'));
                assert!(actual.contains('2'));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn transposed_upsamples_by_stride() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1, 2, 16], vec![0.5; 32]).unwrap();
        let w = tape.constant(vec![2, 3, 31], vec![0.01; 186]).unwrap();
        let y = tape.conv_transpose1d(x, w, None, 4, 13, 64).unwrap();
        assert_eq!(tape.shape(y), &[1, 3, 64]);
        assert!(tape.conv_transpose1d(x, w, None, 4, 13, 80).is_err());
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn adjoint_identity() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (b, ci, co, k, s) = (2, 3, 4, rng.gen_range(1..12), rng.gen_range(1..5));
            let k = k.max(s);
            let t_small = rng.gen_range(2..9);
            let t = t_small * s;
            let (pl, pr) = same_padding(k, s);
            let xv = rand_vec(&mut rng, b * ci * t);
            let yv = rand_vec(&mut rng, b * co * t_small);
            let wv = rand_vec(&mut rng, co * ci * k);
            let mut tape = Tape::new();
            let x = tape.constant(vec![b, ci, t], xv.clone()).unwrap();
            let w = tape.constant(vec![co, ci, k], wv).unwrap();
            let y = tape.constant(vec![b, co, t_small], yv.clone()).unwrap();
            let cx = tape.conv1d(x, w, None, s, pl, pr).unwrap();
            assert_eq!(tape.shape(cx), &[b, co, t_small]);
            let cty = tape.conv_transpose1d(y, w, None, s, pl, t).unwrap();
            let lhs = dot(tape.value(cx), &yv);
            let rhs = dot(&xv, tape.value(cty));
            assert!((lhs - rhs).abs() < 1e-10, "seed {seed}: {lhs} vs {rhs}");
        }
    }

    proptest! {
        #[test]
        fn conv_then_transpose_restores_length(
            t_small in 1usize..20, stride in 1usize..6, extra in 0usize..20, c in 1usize..4
        ) {
            let k = stride + extra;
            let t = t_small * stride;
            let (pl, pr) = same_padding(k, stride);
            let mut tape = Tape::new();
            let x = tape.constant(vec![1, c, t], vec![0.1; c * t]).unwrap();
            let w = tape.constant(vec![c, c, k], vec![0.01; c * c * k]).unwrap();
            let down = tape.conv1d(x, w, None, stride, pl, pr).unwrap();
            prop_assert_eq!(tape.shape(down), &[1, c, t_small][..]);
            let up = tape.conv_transpose1d(down, w, None, stride, pl, t).unwrap();
            prop_assert_eq!(tape.shape(up), &[1, c, t][..]);
        }
    }

    #[test]
    fn backward_examples() {
        let mut tape = Tape::new();
        let x = tape.var(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0; 4]);

        let mut tape = Tape::new();
        let x = tape.var(vec![4], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let sq = tape.square(x).unwrap();
        let s = tape.sum(sq).unwrap();
        let half = tape.scale(s, 0.5).unwrap();
        let g = tape.backward(half).unwrap();
        assert_eq!(g.get(x).unwrap(), &[1.0, -2.0, 3.0, 0.5]);
    }

    #[test]
    fn non_scalar_loss_is_usage_error() {
        let mut tape = Tape::new();
        let x = tape.var(vec![2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(tape.backward(x), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn activation_values() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![2], vec![-1.0, 0.0]).unwrap();
        let l = tape.leaky_relu(x, 0.3).unwrap();
        assert_eq!(tape.value(l)[0], -0.3);
        let t = tape.tanh(x).unwrap();
        assert_eq!(tape.value(t)[1], 0.0);
    }

    #[test]
    fn channel_scale_add_examples() {
        let mut tape = Tape::new();
        let d = tape.constant(vec![1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let e = tape.constant(vec![1, 2, 3], vec![0.5; 6]).unwrap();
        let ones = tape.constant(vec![2], vec![1.0; 2]).unwrap();
        let zeros = tape.constant(vec![2], vec![0.0; 2]).unwrap();
        let s = tape.channel_scale_add(d, e, ones).unwrap();
        assert_eq!(tape.value(s), &[1.5, 2.5, 3.5, 4.5, 5.5, 6.5]);
        let z = tape.channel_scale_add(d, e, zeros).unwrap();
        assert_eq!(tape.value(z), tape.value(d));
        let bad = tape.constant(vec![3], vec![1.0; 3]).unwrap();
        assert!(tape.channel_scale_add(d, e, bad).is_err());
    }

    #[test]
    fn channel_scale_gradient_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (b, c, t) = (2, 3, 5);
        let dec = rand_vec(&mut rng, b * c * t);
        let enc = rand_vec(&mut rng, b * c * t);
        let up = rand_vec(&mut rng, b * c * t);
        let mut tape = Tape::new();
        let d = tape.constant(vec![b, c, t], dec).unwrap();
        let e = tape.constant(vec![b, c, t], enc.clone()).unwrap();
        let a = tape.var(vec![c], vec![1.0; c]).unwrap();
        let r = tape.constant(vec![b, c, t], up.clone()).unwrap();
        let s = tape.channel_scale_add(d, e, a).unwrap();
        let m = tape.mul(s, r).unwrap();
        let loss = tape.sum(m).unwrap();
        let g = tape.backward(loss).unwrap();
        for ch in 0..c {
            let mut expected = 0.0;
            for bi in 0..b {
                for ti in 0..t {
                    let i = (bi * c + ch) * t + ti;
                    expected += enc[i] * up[i];
                }
            }
            assert!((g.get(a).unwrap()[ch] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![3, 4], vec![1.0; 12]).unwrap();
        let w = tape.constant(vec![1, 4], vec![0.0; 4]).unwrap();
        let b = tape.constant(vec![1], vec![0.5]).unwrap();
        let y = tape.linear(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y), &[0.5; 3]);
        let x1 = tape.constant(vec![2, 1], vec![0.25, -3.0]).unwrap();
        let w1 = tape.constant(vec![1, 1], vec![1.0]).unwrap();
        let b0 = tape.constant(vec![1], vec![0.0]).unwrap();
        let y1 = tape.linear(x1, w1, Some(b0)).unwrap();
        assert_eq!(tape.value(y1), &[0.25, -3.0]);
        let wbad = tape.constant(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(tape.linear(x, wbad, None).is_err());
    }

    #[test]
    fn gaussian_sampling_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = sample_gaussian(1_000_000, &mut rng);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
        let a = sample_gaussian(16 * 1024, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_gaussian(16 * 1024, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_forward_is_numeric_error() {
        let mut tape = Tape::new();
        let x = tape.constant(vec![1], vec![1e300]).unwrap();
        let err = tape.square(x).unwrap_err();
        match err {
            crate::Error::Numeric(msg) => assert!(msg.contains("square")),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn spectral_scale_zero_matrix() {
        let mut tape = Tape::new();
        let w = tape.var(vec![2, 2], vec![0.0; 4]).unwrap();
        let y = tape.spectral_scale(w, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(tape.value(y), &[0.0; 4]);
    }
}

//! Finite-difference checks of every differentiable operation.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wsegan::autodiff::{grad_check, same_padding, CustomOp};
use wsegan::model::SpectralNormState;

use common::{primitive_errors, project, rand_input, EPS};

const TOL: f64 = 1e-4;

#[test]
fn primitives() {
    for (name, err) in primitive_errors() {
        assert!(err < TOL, "{name}: max relative error {err:.3e}");
    }
}

#[test]
fn spectral_scale() {
    // u, v are constants of the op: fix them from a short power iteration on
    // the unperturbed weight.
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = rand_input(&mut rng, &[3, 2, 2]);
        let mut st = SpectralNormState::new(3, 4, &mut rng);
        st.power_iterate(&w.value, 5);
        let report = grad_check(
            |t, v| {
                let y = t.spectral_scale(v[0], &st.u, &st.v)?;
                project(t, y, seed)
            },
            &[w],
            EPS,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "seed {seed}: {:.3e}", report.max_rel_error);
    }
}

#[test]
fn composed_conv_prelu_linear() {
    let (pl, pr) = same_padding(5, 2);
    let err = common::op_error(&[vec![2, 1, 16], vec![3, 1, 5], vec![3], vec![3], vec![1, 24]], |t, v| {
        let h = t.conv1d(v[0], v[1], Some(v[2]), 2, pl, pr)?;
        let h = t.prelu(h, v[3])?;
        t.linear(h, v[4], None)
    });
    assert!(err < TOL, "{err:.3e}");
}

#[test]
fn sum_of_squares_is_tight() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = rand_input(&mut rng, &[10]);
    let report = grad_check(
        |t, v| {
            let s = t.square(v[0])?;
            t.sum(s)
        },
        &[x],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-8, "{}", report.max_rel_error);
}

#[test]
fn spectral_reg_loss_path() {
    let err = common::spectral_path_error();
    assert!(err < 1e-3, "{err:.3e}");
}

/// Backward rule that is deliberately wrong by a factor of two.
struct Doubled;

impl CustomOp for Doubled {
    fn name(&self) -> &str {
        "doubled"
    }

    fn backward(&self, inputs: &[&[f64]], _output: &[f64], grad_out: &[f64]) -> Vec<Option<Vec<f64>>> {
        vec![Some(inputs[0].iter().map(|x| 4.0 * x * grad_out[0]).collect())]
    }
}

#[test]
fn corrupted_backward_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = rand_input(&mut rng, &[6]);
    let report = grad_check(
        |t, v| {
            let value: f64 = t.value(v[0]).iter().map(|a| a * a).sum();
            t.custom(&[v[0]], vec![1], vec![value], Box::new(Doubled))
        },
        &[x],
        EPS,
    )
    .unwrap();
    assert!(report.max_rel_error > 1e-2, "{}", report.max_rel_error);
}

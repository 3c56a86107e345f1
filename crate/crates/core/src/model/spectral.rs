//! Power-iteration estimate of the largest singular value of a weight viewed
//! as a `[shape[0], rest]` matrix.

use rand::Rng;

use crate::autodiff::{sample_gaussian, SIGMA_MIN};
use crate::error::{Error, Result};

/// Persistent singular-vector estimates for one weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralNormState {
    /// Left singular vector estimate, unit length.
    pub u: Vec<f64>,
    /// Right singular vector estimate, unit length.
    pub v: Vec<f64>,
    /// Latest `u^T W v`, clamped below at [`SIGMA_MIN`].
    pub sigma: f64,
}

fn normalize(x: &mut [f64]) -> bool {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= f64::MIN_POSITIVE || !n.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= n);
    true
}

/// Rows and columns of the matrix view of `shape`.
pub fn matrix_dims(shape: &[usize]) -> Result<(usize, usize)> {
    match shape.split_first() {
        Some((&r, rest)) if r > 0 => Ok((r, rest.iter().product::<usize>().max(1))),
        _ => Err(Error::shape("spectral_normalize", "rank >= 1 with rows > 0", format!("{shape:?}"))),
    }
}

fn mat_vec(w: &[f64], v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    (0..rows)
        .map(|r| w[r * cols..(r + 1) * cols].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn mat_t_vec(w: &[f64], u: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let ur = u[r];
        for (o, a) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += ur * a;
        }
    }
    out
}

impl SpectralNormState {
    /// Random unit starting vectors.
    pub fn new<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut u = sample_gaussian(rows, rng);
        if !normalize(&mut u) {
            u = vec![1.0 / (rows as f64).sqrt(); rows];
        }
        let mut v = sample_gaussian(cols, rng);
        if !normalize(&mut v) {
            v = vec![1.0 / (cols as f64).sqrt(); cols];
        }
        Self { u, v, sigma: 1.0 }
    }

    pub fn rows(&self) -> usize {
        self.u.len()
    }

    pub fn cols(&self) -> usize {
        self.v.len()
    }

    /// `n_iter` rounds of `v <- W^T u / |.|`, `u <- W v / |.|`, then
    /// `sigma = u^T W v`. A zero matrix leaves the vectors untouched.
    pub fn power_iterate(&mut self, w: &[f64], n_iter: usize) -> f64 {
        let (rows, cols) = (self.rows(), self.cols());
        debug_assert_eq!(w.len(), rows * cols);
        for _ in 0..n_iter {
            let mut v = mat_t_vec(w, &self.u, rows, cols);
            if !normalize(&mut v) {
                break;
            }
            let mut u = mat_vec(w, &v, rows, cols);
            if !normalize(&mut u) {
                break;
            }
            self.u = u;
            self.v = v;
        }
        self.sigma = self.estimate(w);
        self.sigma
    }

    /// `max(u^T W v, SIGMA_MIN)` without updating the vectors.
    pub fn estimate(&self, w: &[f64]) -> f64 {
        let wv = mat_vec(w, &self.v, self.rows(), self.cols());
        wv.iter().zip(&self.u).map(|(a, b)| a * b).sum::<f64>().max(SIGMA_MIN)
    }
}

/// Updates `state` with `n_iter` power iterations and returns `w / sigma`
/// (all zeros when sigma is clamped).
pub fn spectral_normalize(w: &[f64], shape: &[usize], state: &mut SpectralNormState, n_iter: usize) -> Result<Vec<f64>> {
    let (rows, cols) = matrix_dims(shape)?;
    if w.len() != rows * cols || state.rows() != rows || state.cols() != cols {
        return Err(Error::shape(
            "spectral_normalize",
            format!("{rows}x{cols} weight and state"),
            format!("{} values, state {}x{}", w.len(), state.rows(), state.cols()),
        ));
    }
    let sigma = state.power_iterate(w, n_iter);
    if sigma <= SIGMA_MIN {
        return Ok(vec![0.0; w.len()]);
    }
    Ok(w.iter().map(|x| x / sigma).collect())
}

/// Largest singular value by power iteration run until the estimate settles
/// (relative change below `tol`) or `max_iter` rounds.
pub fn largest_singular_value(w: &[f64], shape: &[usize], tol: f64, max_iter: usize) -> Result<f64> {
    let (rows, cols) = matrix_dims(shape)?;
    // Deterministic dense start so no singular direction is missed.
    let mut state = SpectralNormState {
        u: (0..rows).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect(),
        v: vec![0.0; cols],
        sigma: 0.0,
    };
    normalize(&mut state.u);
    let mut prev = 0.0;
    for _ in 0..max_iter {
        let s = state.power_iterate(w, 1);
        if (s - prev).abs() <= tol * s {
            return Ok(s);
        }
        prev = s;
    }
    Ok(prev)
}

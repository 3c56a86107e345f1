//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckInput {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl GradCheckInput {
    pub fn new(shape: Vec<usize>, value: Vec<f64>) -> Self {
        Self { shape, value }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Input and flat coordinate where the maximum occurred.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

/// Relative error with the `max(|a|, |n|, 1e-8)` denominator.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, inputs: &[GradCheckInput]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|i| tape.var(i.shape.clone(), i.value.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    Ok((tape, vars, out))
}

/// Compares the reverse-mode gradient of the scalar `f` against
/// `(f(x + eps) - f(x - eps)) / (2 eps)` for every input coordinate.
pub fn grad_check<F>(f: F, inputs: &[GradCheckInput], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = evaluate(&f, inputs)?;
    if tape.value(out).len() != 1 {
        return Err(Error::Usage("grad_check needs a scalar function".into()));
    }
    let grads = tape.backward(out)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    let mut probe = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[which].value.len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let orig = inputs[which].value[j];
            probe[which].value[j] = orig + eps;
            let (t, _, o) = evaluate(&f, &probe)?;
            let plus = t.scalar(o);
            probe[which].value[j] = orig - eps;
            let (t, _, o) = evaluate(&f, &probe)?;
            let minus = t.scalar(o);
            probe[which].value[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(a, numeric);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (which, j);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

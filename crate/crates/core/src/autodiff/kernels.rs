//! Dense 1-D correlation kernels over `[batch, channels, time]` buffers.
//!
//! `correlate` computes `y[b,o,t] = sum_{c,k} w[o,c,k] * x[b,c,t*s + k - pad]`
//! with zeros outside the input. The other two kernels are its adjoints with
//! respect to the input and the weight. Strided convolution, its transpose
//! and all their gradients are expressed with these three.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct CorrGeom {
    pub batch: usize,
    /// Channels of the "wide" (input) side.
    pub c_in: usize,
    /// Channels of the "narrow" (output) side.
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub t_in: usize,
    pub t_out: usize,
}

impl CorrGeom {
    /// Output positions `t` for which `t*s + k - pad` falls inside `[0, t_in)`.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if k >= self.pad_left {
            0
        } else {
            (self.pad_left - k).div_ceil(s)
        };
        // t*s + k - pad <= t_in - 1  <=>  t <= (t_in - 1 + pad - k) / s
        let hi = if self.t_in + self.pad_left > k {
            ((self.t_in - 1 + self.pad_left - k) / s + 1).min(self.t_out)
        } else {
            0
        };
        let lo = lo.min(self.t_out);
        (lo, hi.max(lo))
    }
}

pub(crate) fn correlate(x: &[f64], w: &[f64], g: &CorrGeom) -> Vec<f64> {
    let mut y = vec![0.0; g.batch * g.c_out * g.t_out];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let yrow = &mut y[(b * g.c_out + o) * g.t_out..][..g.t_out];
            for c in 0..g.c_in {
                let xrow = &x[(b * g.c_in + c) * g.t_in..][..g.t_in];
                let wrow = &w[(o * g.c_in + c) * g.kernel..][..g.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    let (lo, hi) = g.valid_range(k);
                    if lo >= hi {
                        continue;
                    }
                    let mut idx = lo * g.stride + k - g.pad_left;
                    for yv in &mut yrow[lo..hi] {
                        *yv += wv * xrow[idx];
                        idx += g.stride;
                    }
                }
            }
        }
    }
    y
}

/// Adjoint of [`correlate`] with respect to `x`.
pub(crate) fn correlate_adjoint_input(gy: &[f64], w: &[f64], g: &CorrGeom) -> Vec<f64> {
    let mut gx = vec![0.0; g.batch * g.c_in * g.t_in];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let grow = &gy[(b * g.c_out + o) * g.t_out..][..g.t_out];
            for c in 0..g.c_in {
                let xrow = &mut gx[(b * g.c_in + c) * g.t_in..][..g.t_in];
                let wrow = &w[(o * g.c_in + c) * g.kernel..][..g.kernel];
                for (k, &wv) in wrow.iter().enumerate() {
                    let (lo, hi) = g.valid_range(k);
                    if lo >= hi {
                        continue;
                    }
                    let mut idx = lo * g.stride + k - g.pad_left;
                    for &gv in &grow[lo..hi] {
                        xrow[idx] += wv * gv;
                        idx += g.stride;
                    }
                }
            }
        }
    }
    gx
}

/// Adjoint of [`correlate`] with respect to `w`.
pub(crate) fn correlate_adjoint_weight(x: &[f64], gy: &[f64], g: &CorrGeom) -> Vec<f64> {
    let mut gw = vec![0.0; g.c_out * g.c_in * g.kernel];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let grow = &gy[(b * g.c_out + o) * g.t_out..][..g.t_out];
            for c in 0..g.c_in {
                let xrow = &x[(b * g.c_in + c) * g.t_in..][..g.t_in];
                let wrow = &mut gw[(o * g.c_in + c) * g.kernel..][..g.kernel];
                for (k, wv) in wrow.iter_mut().enumerate() {
                    let (lo, hi) = g.valid_range(k);
                    if lo >= hi {
                        continue;
                    }
                    let mut idx = lo * g.stride + k - g.pad_left;
                    let mut acc = 0.0;
                    for &gv in &grow[lo..hi] {
                        acc += gv * xrow[idx];
                        idx += g.stride;
                    }
                    *wv += acc;
                }
            }
        }
    }
    gw
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation with explicit bounds checks.
    fn naive(x: &[f64], w: &[f64], g: &CorrGeom) -> Vec<f64> {
        let mut y = vec![0.0; g.batch * g.c_out * g.t_out];
        for b in 0..g.batch {
            for o in 0..g.c_out {
                for t in 0..g.t_out {
                    let mut acc = 0.0;
                    for c in 0..g.c_in {
                        for k in 0..g.kernel {
                            let pos = (t * g.stride + k) as isize - g.pad_left as isize;
                            if pos >= 0 && (pos as usize) < g.t_in {
                                acc += w[(o * g.c_in + c) * g.kernel + k] * x[(b * g.c_in + c) * g.t_in + pos as usize];
                            }
                        }
                    }
                    y[(b * g.c_out + o) * g.t_out + t] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn matches_naive_loops() {
        let geoms = [
            CorrGeom { batch: 2, c_in: 3, c_out: 2, kernel: 5, stride: 2, pad_left: 2, t_in: 13, t_out: 7 },
            CorrGeom { batch: 1, c_in: 1, c_out: 1, kernel: 31, stride: 4, pad_left: 13, t_in: 64, t_out: 16 },
            CorrGeom { batch: 1, c_in: 2, c_out: 3, kernel: 3, stride: 1, pad_left: 0, t_in: 5, t_out: 3 },
            CorrGeom { batch: 1, c_in: 1, c_out: 1, kernel: 7, stride: 3, pad_left: 6, t_in: 4, t_out: 4 },
        ];
        for g in geoms {
            let x: Vec<f64> = (0..g.batch * g.c_in * g.t_in).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
            let w: Vec<f64> = (0..g.c_out * g.c_in * g.kernel).map(|i| ((i * 5 % 13) as f64) * 0.1 - 0.6).collect();
            let a = correlate(&x, &w, &g);
            let b = naive(&x, &w, &g);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12, "{g:?}");
            }
        }
    }
}

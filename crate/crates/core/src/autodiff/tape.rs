//! Tape-based reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends a
//! node holding its output value and enough bookkeeping to push gradients
//! back to its inputs; [`Tape::backward`] walks the nodes in reverse.

use super::kernels::{correlate, correlate_adjoint_input, correlate_adjoint_weight, CorrGeom};
use super::params::{ParamId, ParamKey, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// User-defined differentiable operation. The forward value is supplied when
/// the node is recorded; only the backward rule lives here.
pub trait CustomOp {
    fn name(&self) -> &str;

    /// Gradient contribution for each input (`None` to skip that input).
    fn backward(&self, inputs: &[&[f64]], output: &[f64], grad_out: &[f64]) -> Vec<Option<Vec<f64>>>;
}

enum Op {
    Input,
    Param(ParamKey),
    Conv1d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: CorrGeom,
    },
    /// Adjoint of a correlation with geometry `geom` (`t_in` is the output length here).
    ConvTranspose1d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: CorrGeom,
    },
    Prelu {
        x: usize,
        slope: usize,
        channels: usize,
        t: usize,
    },
    LeakyRelu {
        x: usize,
        slope: f64,
    },
    Tanh {
        x: usize,
    },
    ChannelScaleAdd {
        dec: usize,
        enc: usize,
        scale: usize,
        channels: usize,
        t: usize,
    },
    Linear {
        x: usize,
        w: usize,
        b: Option<usize>,
        n_in: usize,
        n_out: usize,
    },
    ConcatChannels {
        a: usize,
        b: usize,
        ca: usize,
        cb: usize,
        t: usize,
    },
    SpectralScale {
        w: usize,
        u: Vec<f64>,
        v: Vec<f64>,
        sigma: f64,
        clamped: bool,
    },
    WeightedSum {
        terms: Vec<(usize, f64)>,
    },
    Mul {
        a: usize,
        b: usize,
    },
    Square {
        x: usize,
    },
    Sum {
        x: usize,
    },
    MseTo {
        x: usize,
        target: f64,
    },
    Reshape {
        x: usize,
    },
    Custom {
        inputs: Vec<usize>,
        rule: Box<dyn CustomOp>,
    },
}

impl Op {
    fn name(&self) -> &str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::Conv1d { .. } => "conv1d",
            Op::ConvTranspose1d { .. } => "conv_transpose1d",
            Op::Prelu { .. } => "prelu",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Tanh { .. } => "tanh",
            Op::ChannelScaleAdd { .. } => "channel_scale_add",
            Op::Linear { .. } => "linear",
            Op::ConcatChannels { .. } => "concat_channels",
            Op::SpectralScale { .. } => "spectral_scale",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::Mul { .. } => "mul",
            Op::Square { .. } => "square",
            Op::Sum { .. } => "sum",
            Op::MseTo { .. } => "mse_to",
            Op::Reshape { .. } => "reshape",
            Op::Custom { rule, .. } => rule.name(),
        }
    }
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.of_node(v.0)
    }

    pub(crate) fn of_node(&self, node: usize) -> Option<&[f64]> {
        self.grads.get(node).and_then(|g| g.as_deref())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape").field("nodes", &self.nodes.len()).finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a one-element tensor.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn op_name(&self, v: Var) -> &str {
        self.nodes[v.0].op.name()
    }

    pub(crate) fn param_nodes(&self) -> impl Iterator<Item = (ParamKey, usize)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n.op {
            Op::Param(k) => Some((k, i)),
            _ => None,
        })
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Result<Var> {
        debug_assert_eq!(numel(&shape), value.len());
        if let Some(i) = value.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{} (node {}) produced non-finite value {} at index {i}",
                op.name(),
                self.nodes.len(),
                value[i]
            )));
        }
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[usize]) -> bool {
        vars.iter().any(|&i| self.nodes[i].requires_grad)
    }

    fn check_shape(&self, op: &'static str, v: Var, expected: &[usize]) -> Result<()> {
        let actual = &self.nodes[v.0].shape;
        if actual != expected {
            return Err(Error::shape(op, format!("{expected:?}"), format!("{actual:?}")));
        }
        Ok(())
    }

    fn rank3(&self, op: &'static str, v: Var) -> Result<(usize, usize, usize)> {
        match self.nodes[v.0].shape[..] {
            [b, c, t] => Ok((b, c, t)),
            ref s => Err(Error::shape(op, "rank-3 [batch, channels, time]", format!("{s:?}"))),
        }
    }

    /// Differentiable leaf.
    pub fn var(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        if numel(&shape) != value.len() {
            return Err(Error::shape("var", format!("{} values for {shape:?}", numel(&shape)), value.len()));
        }
        self.push(shape, value, Op::Input, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, shape: Vec<usize>, value: Vec<f64>) -> Result<Var> {
        if numel(&shape) != value.len() {
            return Err(Error::shape("constant", format!("{} values for {shape:?}", numel(&shape)), value.len()));
        }
        self.push(shape, value, Op::Input, false)
    }

    /// Copy of a tracked parameter; its gradient can be accumulated back with
    /// [`ParamStore::accumulate`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.nodes.push(Node {
            shape: p.shape.clone(),
            value: p.value.clone(),
            op: Op::Param(store.key(id)),
            requires_grad: p.trainable,
        });
        Var(self.nodes.len() - 1)
    }

    /// Parameter value used as a constant (no gradient is recorded).
    pub fn param_detached(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.nodes.push(Node {
            shape: p.shape.clone(),
            value: p.value.clone(),
            op: Op::Input,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Strided 1-D convolution (cross-correlation) of `x: [B, Cin, T]` with
    /// `w: [Cout, Cin, K]`, zero padding `pad_left`/`pad_right`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad_left: usize, pad_right: usize) -> Result<Var> {
        let (batch, c_in, t) = self.rank3("conv1d", x)?;
        let (c_out, wc, k) = match self.nodes[w.0].shape[..] {
            [o, c, k] => (o, c, k),
            ref s => return Err(Error::shape("conv1d", "weight [Cout, Cin, K]", format!("{s:?}"))),
        };
        if wc != c_in {
            return Err(Error::shape("conv1d", format!("{wc} input channels"), format!("{c_in} input channels")));
        }
        if stride == 0 {
            return Err(Error::Config("conv1d stride must be positive".into()));
        }
        let padded = t + pad_left + pad_right;
        if k > padded {
            return Err(Error::shape("conv1d", format!("kernel <= padded length {padded}"), format!("kernel {k}")));
        }
        if let Some(b) = b {
            self.check_shape("conv1d", b, &[c_out])?;
        }
        let geom = CorrGeom {
            batch,
            c_in,
            c_out,
            kernel: k,
            stride,
            pad_left,
            t_in: t,
            t_out: (padded - k) / stride + 1,
        };
        let mut y = correlate(&self.nodes[x.0].value, &self.nodes[w.0].value, &geom);
        if let Some(b) = b {
            add_channel_bias(&mut y, &self.nodes[b.0].value, geom.t_out);
        }
        let mut deps = vec![x.0, w.0];
        deps.extend(b.map(|b| b.0));
        let rg = self.rg(&deps);
        self.push(
            vec![batch, c_out, geom.t_out],
            y,
            Op::Conv1d {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                geom,
            },
            rg,
        )
    }

    /// Transposed convolution: the adjoint of [`Tape::conv1d`] with the same
    /// kernel, stride and left padding. `x: [B, Cin, T]`, `w: [Cin, Cout, K]`,
    /// output `[B, Cout, output_len]`.
    pub fn conv_transpose1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad_left: usize, output_len: usize) -> Result<Var> {
        let (batch, c_in, t) = self.rank3("conv_transpose1d", x)?;
        let (wc, c_out, k) = match self.nodes[w.0].shape[..] {
            [c, o, k] => (c, o, k),
            ref s => return Err(Error::shape("conv_transpose1d", "weight [Cin, Cout, K]", format!("{s:?}"))),
        };
        if wc != c_in {
            return Err(Error::shape("conv_transpose1d", format!("{wc} input channels"), format!("{c_in} input channels")));
        }
        if stride == 0 {
            return Err(Error::Config("conv_transpose1d stride must be positive".into()));
        }
        if output_len != stride * t || k < stride {
            return Err(Error::shape(
                "conv_transpose1d",
                format!("output_len = stride * T = {} with kernel >= stride", stride * t),
                format!("output_len {output_len}, kernel {k}"),
            ));
        }
        if let Some(b) = b {
            self.check_shape("conv_transpose1d", b, &[c_out])?;
        }
        // Geometry of the adjoint correlation: wide side = our output.
        let geom = CorrGeom {
            batch,
            c_in: c_out,
            c_out: c_in,
            kernel: k,
            stride,
            pad_left,
            t_in: output_len,
            t_out: t,
        };
        let mut y = correlate_adjoint_input(&self.nodes[x.0].value, &self.nodes[w.0].value, &geom);
        if let Some(b) = b {
            add_channel_bias(&mut y, &self.nodes[b.0].value, output_len);
        }
        let mut deps = vec![x.0, w.0];
        deps.extend(b.map(|b| b.0));
        let rg = self.rg(&deps);
        self.push(
            vec![batch, c_out, output_len],
            y,
            Op::ConvTranspose1d {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                geom,
            },
            rg,
        )
    }

    /// Parametric rectifier with one slope per channel.
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let (_, c, t) = self.rank3("prelu", x)?;
        self.check_shape("prelu", slope, &[c])?;
        let a = &self.nodes[slope.0].value;
        let y = self.nodes[x.0]
            .value
            .iter()
            .enumerate()
            .map(|(i, &v)| if v > 0.0 { v } else { a[(i / t) % c] * v })
            .collect();
        let rg = self.rg(&[x.0, slope.0]);
        let shape = self.nodes[x.0].shape.clone();
        self.push(
            shape,
            y,
            Op::Prelu {
                x: x.0,
                slope: slope.0,
                channels: c,
                t,
            },
            rg,
        )
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        if !slope.is_finite() {
            return Err(Error::Config("leaky_relu slope must be finite".into()));
        }
        let y = self.nodes[x.0]
            .value
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        let rg = self.rg(&[x.0]);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, y, Op::LeakyRelu { x: x.0, slope }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let y = self.nodes[x.0].value.iter().map(|v| v.tanh()).collect();
        let rg = self.rg(&[x.0]);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, y, Op::Tanh { x: x.0 }, rg)
    }

    /// `out[b,c,t] = dec[b,c,t] + scale[c] * enc[b,c,t]`.
    pub fn channel_scale_add(&mut self, dec: Var, enc: Var, scale: Var) -> Result<Var> {
        let (_, c, t) = self.rank3("channel_scale_add", dec)?;
        let dshape = self.nodes[dec.0].shape.clone();
        self.check_shape("channel_scale_add", enc, &dshape)?;
        self.check_shape("channel_scale_add", scale, &[c])?;
        let a = &self.nodes[scale.0].value;
        let y = self.nodes[dec.0]
            .value
            .iter()
            .zip(&self.nodes[enc.0].value)
            .enumerate()
            .map(|(i, (d, e))| d + a[(i / t) % c] * e)
            .collect();
        let rg = self.rg(&[dec.0, enc.0, scale.0]);
        self.push(
            dshape,
            y,
            Op::ChannelScaleAdd {
                dec: dec.0,
                enc: enc.0,
                scale: scale.0,
                channels: c,
                t,
            },
            rg,
        )
    }

    /// Affine map of the flattened per-item features: `x: [B, ...]` with N
    /// features per item, `w: [M, N]`, `b: [M]`, output `[B, M]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = &self.nodes[x.0].shape;
        if xs.is_empty() {
            return Err(Error::shape("linear", "[batch, features...]", "scalar"));
        }
        let batch = xs[0];
        let n_in = numel(&xs[1..]);
        let (n_out, wn) = match self.nodes[w.0].shape[..] {
            [m, n] => (m, n),
            ref s => return Err(Error::shape("linear", "weight [M, N]", format!("{s:?}"))),
        };
        if wn != n_in {
            return Err(Error::shape("linear", format!("{wn} input features"), format!("{n_in} input features")));
        }
        if let Some(b) = b {
            self.check_shape("linear", b, &[n_out])?;
        }
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let mut y = vec![0.0; batch * n_out];
        for bi in 0..batch {
            let xrow = &xv[bi * n_in..(bi + 1) * n_in];
            for o in 0..n_out {
                let wrow = &wv[o * n_in..(o + 1) * n_in];
                let bias = b.map(|b| self.nodes[b.0].value[o]).unwrap_or(0.0);
                y[bi * n_out + o] = bias + xrow.iter().zip(wrow).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        let mut deps = vec![x.0, w.0];
        deps.extend(b.map(|b| b.0));
        let rg = self.rg(&deps);
        self.push(
            vec![batch, n_out],
            y,
            Op::Linear {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                n_in,
                n_out,
            },
            rg,
        )
    }

    /// Stacks `a: [B, Ca, T]` and `b: [B, Cb, T]` into `[B, Ca + Cb, T]`.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ba, ca, ta) = self.rank3("concat_channels", a)?;
        let (bb, cb, tb) = self.rank3("concat_channels", b)?;
        if ba != bb || ta != tb {
            return Err(Error::shape("concat_channels", format!("[{ba}, _, {ta}]"), format!("[{bb}, _, {tb}]")));
        }
        let mut y = Vec::with_capacity(ba * (ca + cb) * ta);
        for i in 0..ba {
            y.extend_from_slice(&self.nodes[a.0].value[i * ca * ta..(i + 1) * ca * ta]);
            y.extend_from_slice(&self.nodes[b.0].value[i * cb * tb..(i + 1) * cb * tb]);
        }
        let rg = self.rg(&[a.0, b.0]);
        self.push(
            vec![ba, ca + cb, ta],
            y,
            Op::ConcatChannels {
                a: a.0,
                b: b.0,
                ca,
                cb,
                t: ta,
            },
            rg,
        )
    }

    /// `w / sigma` with `sigma = u^T W v`, where `W` is `w` viewed as
    /// `[shape[0], rest]`. `u` and `v` are treated as constants; the gradient
    /// flows through both the numerator and `sigma`.
    pub fn spectral_scale(&mut self, w: Var, u: &[f64], v: &[f64]) -> Result<Var> {
        let shape = self.nodes[w.0].shape.clone();
        let rows = *shape.first().ok_or_else(|| Error::shape("spectral_scale", "rank >= 1", "scalar"))?;
        let cols = numel(&shape) / rows.max(1);
        if u.len() != rows || v.len() != cols {
            return Err(Error::shape(
                "spectral_scale",
                format!("u[{rows}], v[{cols}]"),
                format!("u[{}], v[{}]", u.len(), v.len()),
            ));
        }
        let wv = &self.nodes[w.0].value;
        let raw = bilinear(wv, u, v, cols);
        let clamped = raw <= super::SIGMA_MIN;
        let sigma = raw.max(super::SIGMA_MIN);
        let y = if clamped {
            vec![0.0; wv.len()]
        } else {
            wv.iter().map(|x| x / sigma).collect()
        };
        let rg = self.rg(&[w.0]);
        self.push(
            shape,
            y,
            Op::SpectralScale {
                w: w.0,
                u: u.to_vec(),
                v: v.to_vec(),
                sigma,
                clamped,
            },
            rg,
        )
    }

    /// `sum_i coef_i * x_i` over equally shaped tensors.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let Some(&(first, _)) = terms.first() else {
            return Err(Error::Usage("weighted_sum of no terms".into()));
        };
        let shape = self.nodes[first.0].shape.clone();
        let mut y = vec![0.0; numel(&shape)];
        for &(v, c) in terms {
            self.check_shape("weighted_sum", v, &shape)?;
            y.iter_mut().zip(&self.nodes[v.0].value).for_each(|(a, x)| *a += c * x);
        }
        let deps: Vec<usize> = terms.iter().map(|(v, _)| v.0).collect();
        let rg = self.rg(&deps);
        self.push(
            shape,
            y,
            Op::WeightedSum {
                terms: terms.iter().map(|&(v, c)| (v.0, c)).collect(),
            },
            rg,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.weighted_sum(&[(a, 1.0), (b, 1.0)])
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        self.weighted_sum(&[(x, k)])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let shape = self.nodes[a.0].shape.clone();
        self.check_shape("mul", b, &shape)?;
        let y = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(&[a.0, b.0]);
        self.push(shape, y, Op::Mul { a: a.0, b: b.0 }, rg)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        let y = self.nodes[x.0].value.iter().map(|v| v * v).collect();
        let rg = self.rg(&[x.0]);
        let shape = self.nodes[x.0].shape.clone();
        self.push(shape, y, Op::Square { x: x.0 }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.nodes[x.0].value.iter().sum();
        let rg = self.rg(&[x.0]);
        self.push(vec![1], vec![s], Op::Sum { x: x.0 }, rg)
    }

    /// `mean((x - target)^2)` over all elements.
    pub fn mse_to(&mut self, x: Var, target: f64) -> Result<Var> {
        let xv = &self.nodes[x.0].value;
        if xv.is_empty() {
            return Err(Error::Usage("mse_to on an empty tensor".into()));
        }
        let m = xv.iter().map(|v| (v - target) * (v - target)).sum::<f64>() / xv.len() as f64;
        let rg = self.rg(&[x.0]);
        self.push(vec![1], vec![m], Op::MseTo { x: x.0, target }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if numel(&shape) != self.nodes[x.0].value.len() {
            return Err(Error::shape("reshape", format!("{} elements", self.nodes[x.0].value.len()), format!("{shape:?}")));
        }
        let y = self.nodes[x.0].value.clone();
        let rg = self.rg(&[x.0]);
        self.push(shape, y, Op::Reshape { x: x.0 }, rg)
    }

    /// Records a node computed outside the tape with a user-supplied backward rule.
    pub fn custom(&mut self, inputs: &[Var], shape: Vec<usize>, value: Vec<f64>, rule: Box<dyn CustomOp>) -> Result<Var> {
        if numel(&shape) != value.len() {
            return Err(Error::shape(
                "custom",
                format!("{} values for {shape:?}", numel(&shape)),
                value.len(),
            ));
        }
        let deps: Vec<usize> = inputs.iter().map(|v| v.0).collect();
        let rg = self.rg(&deps);
        self.push(shape, value, Op::Custom { inputs: deps, rule }, rg)
    }

    /// Reverse sweep from a one-element `loss`. Gradients are returned per
    /// node; use [`ParamStore::accumulate`] to move them onto parameters.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at {} (node {i}), index {j}",
                    node.op.name()
                )));
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |i: usize| self.nodes[i].value.as_slice();
        let wants = |i: usize| self.nodes[i].requires_grad;
        let mut acc = |i: usize, contrib: Vec<f64>| accumulate(grads, i, contrib);
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::Conv1d { x, w, b, geom } => {
                if wants(*x) {
                    acc(*x, correlate_adjoint_input(g, val(*w), geom));
                }
                if wants(*w) {
                    acc(*w, correlate_adjoint_weight(val(*x), g, geom));
                }
                if let Some(b) = b.filter(|&b| wants(b)) {
                    acc(b, channel_sums(g, geom.batch, geom.c_out, geom.t_out));
                }
            }
            Op::ConvTranspose1d { x, w, b, geom } => {
                if wants(*x) {
                    acc(*x, correlate(g, val(*w), geom));
                }
                if wants(*w) {
                    acc(*w, correlate_adjoint_weight(g, val(*x), geom));
                }
                if let Some(b) = b.filter(|&b| wants(b)) {
                    acc(b, channel_sums(g, geom.batch, geom.c_in, geom.t_in));
                }
            }
            Op::Prelu { x, slope, channels, t } => {
                let xv = val(*x);
                let a = val(*slope);
                if wants(*x) {
                    acc(
                        *x,
                        xv.iter()
                            .zip(g)
                            .enumerate()
                            .map(|(i, (&v, &gv))| if v > 0.0 { gv } else { a[(i / t) % channels] * gv })
                            .collect(),
                    );
                }
                if wants(*slope) {
                    let mut ga = vec![0.0; *channels];
                    for (i, (&v, &gv)) in xv.iter().zip(g).enumerate() {
                        if v <= 0.0 {
                            ga[(i / t) % channels] += v * gv;
                        }
                    }
                    acc(*slope, ga);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = val(*x);
                acc(*x, xv.iter().zip(g).map(|(&v, &gv)| if v > 0.0 { gv } else { slope * gv }).collect());
            }
            Op::Tanh { x } => {
                acc(*x, node.value.iter().zip(g).map(|(y, gv)| gv * (1.0 - y * y)).collect());
            }
            Op::ChannelScaleAdd { dec, enc, scale, channels, t } => {
                let a = val(*scale);
                if wants(*dec) {
                    acc(*dec, g.to_vec());
                }
                if wants(*enc) {
                    acc(*enc, g.iter().enumerate().map(|(i, gv)| a[(i / t) % channels] * gv).collect());
                }
                if wants(*scale) {
                    let mut ga = vec![0.0; *channels];
                    for (i, (e, gv)) in val(*enc).iter().zip(g).enumerate() {
                        ga[(i / t) % channels] += e * gv;
                    }
                    acc(*scale, ga);
                }
            }
            Op::Linear { x, w, b, n_in, n_out } => {
                let batch = g.len() / n_out;
                if wants(*x) {
                    let wv = val(*w);
                    let mut gx = vec![0.0; batch * n_in];
                    for bi in 0..batch {
                        let row = &mut gx[bi * n_in..(bi + 1) * n_in];
                        for o in 0..*n_out {
                            let gv = g[bi * n_out + o];
                            row.iter_mut().zip(&wv[o * n_in..(o + 1) * n_in]).for_each(|(r, w)| *r += gv * w);
                        }
                    }
                    acc(*x, gx);
                }
                if wants(*w) {
                    let xv = val(*x);
                    let mut gw = vec![0.0; n_out * n_in];
                    for bi in 0..batch {
                        for o in 0..*n_out {
                            let gv = g[bi * n_out + o];
                            gw[o * n_in..(o + 1) * n_in]
                                .iter_mut()
                                .zip(&xv[bi * n_in..(bi + 1) * n_in])
                                .for_each(|(r, x)| *r += gv * x);
                        }
                    }
                    acc(*w, gw);
                }
                if let Some(b) = b.filter(|&b| wants(b)) {
                    let mut gb = vec![0.0; *n_out];
                    for bi in 0..batch {
                        for o in 0..*n_out {
                            gb[o] += g[bi * n_out + o];
                        }
                    }
                    acc(b, gb);
                }
            }
            Op::ConcatChannels { a, b, ca, cb, t } => {
                let batch = g.len() / ((ca + cb) * t);
                let (la, lb) = (ca * t, cb * t);
                if wants(*a) {
                    acc(*a, (0..batch).flat_map(|i| g[i * (la + lb)..i * (la + lb) + la].iter().copied()).collect());
                }
                if wants(*b) {
                    acc(*b, (0..batch).flat_map(|i| g[i * (la + lb) + la..(i + 1) * (la + lb)].iter().copied()).collect());
                }
            }
            Op::SpectralScale { w, u, v, sigma, clamped } => {
                if *clamped {
                    acc(*w, vec![0.0; g.len()]);
                } else {
                    let wv = val(*w);
                    let cols = v.len();
                    let inner: f64 = g.iter().zip(wv).map(|(a, b)| a * b).sum();
                    let k = inner / (sigma * sigma);
                    acc(
                        *w,
                        g.iter()
                            .enumerate()
                            .map(|(i, gv)| gv / sigma - k * u[i / cols] * v[i % cols])
                            .collect(),
                    );
                }
            }
            Op::WeightedSum { terms } => {
                for &(i, c) in terms {
                    if wants(i) {
                        acc(i, g.iter().map(|gv| c * gv).collect());
                    }
                }
            }
            Op::Mul { a, b } => {
                if wants(*a) {
                    acc(*a, g.iter().zip(val(*b)).map(|(gv, y)| gv * y).collect());
                }
                if wants(*b) {
                    acc(*b, g.iter().zip(val(*a)).map(|(gv, x)| gv * x).collect());
                }
            }
            Op::Square { x } => {
                acc(*x, g.iter().zip(val(*x)).map(|(gv, v)| 2.0 * v * gv).collect());
            }
            Op::Sum { x } => {
                acc(*x, vec![g[0]; val(*x).len()]);
            }
            Op::MseTo { x, target } => {
                let xv = val(*x);
                let k = 2.0 * g[0] / xv.len() as f64;
                acc(*x, xv.iter().map(|v| k * (v - target)).collect());
            }
            Op::Reshape { x } => acc(*x, g.to_vec()),
            Op::Custom { inputs, rule } => {
                let vals: Vec<&[f64]> = inputs.iter().map(|&i| val(i)).collect();
                for (&i, contrib) in inputs.iter().zip(rule.backward(&vals, &node.value, g)) {
                    if let Some(c) = contrib.filter(|_| wants(i)) {
                        acc(i, c);
                    }
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], i: usize, contrib: Vec<f64>) {
    match &mut grads[i] {
        Some(g) => g.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
        slot @ None => *slot = Some(contrib),
    }
}

fn add_channel_bias(y: &mut [f64], bias: &[f64], t: usize) {
    let c = bias.len();
    for (row, chunk) in y.chunks_mut(t).enumerate() {
        let b = bias[row % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn channel_sums(g: &[f64], batch: usize, channels: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; channels];
    for b in 0..batch {
        for (c, o) in out.iter_mut().enumerate() {
            *o += g[(b * channels + c) * t..][..t].iter().sum::<f64>();
        }
    }
    out
}

/// `u^T W v` for row-major `W` with `cols` columns.
pub(crate) fn bilinear(w: &[f64], u: &[f64], v: &[f64], cols: usize) -> f64 {
    u.iter()
        .enumerate()
        .map(|(r, ur)| ur * w[r * cols..(r + 1) * cols].iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

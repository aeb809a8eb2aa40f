//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every operation of one forward pass together with its
//! value; [`Graph::backward`] then walks the tape in reverse. Complex arrays
//! are stored interleaved with a trailing dimension of 2, so the gradient of
//! a real loss with respect to a complex entry `z` is held as
//! `(dL/dRe z, dL/dIm z)`.
//!
//! Domain-specific operations plug in through [`CustomOp`].

mod conv;

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent f64 math is only visible when std is linked
use num_traits::Float;

use crate::tx::sigmoid;
use crate::{Error, Result, C64};
use conv::ConvGeom;

/// Sentinel in [`Graph::gather`] index maps: the output element is zero.
pub const ZERO: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(alloc::format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![v],
        }
    }

    /// Interleaved complex tensor of logical shape `shape` (a trailing 2 is
    /// appended).
    pub fn from_complex(shape: &[usize], values: &[C64]) -> Result<Self> {
        let mut full = shape.to_vec();
        full.push(2);
        Self::new(&full, bytemuck::cast_slice(values).to_vec())
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Complex view of an interleaved tensor.
    pub fn as_complex(&self) -> &[C64] {
        debug_assert_eq!(self.shape.last(), Some(&2));
        bytemuck::cast_slice(&self.data)
    }

    pub fn as_complex_mut(&mut self) -> &mut [C64] {
        debug_assert_eq!(self.shape.last(), Some(&2));
        bytemuck::cast_slice_mut(&mut self.data)
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on a tensor of shape {:?}", self.shape);
        self.data[0]
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    LeakyRelu(f64),
    Silu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    x
                } else {
                    a * x
                }
            }
            Activation::Silu => x * sigmoid(x),
        }
    }

    /// Derivative given input `x` and output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if x > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
        }
    }
}

/// An operation with a hand-written backward pass.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Gradients with respect to each input (in the order the inputs were
    /// registered). Entries for inputs with `wanted[i] == false` may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
        wanted: &[bool],
    ) -> Vec<Option<Tensor>>;
}

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Act(Var, Activation),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Conv {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        out_c: usize,
    },
    ConvT {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        in_c: usize,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Film {
        x: Var,
        scale: Var,
        shift: Var,
    },
    Concat(Var, Var),
    Gather {
        x: Var,
        index: Rc<Vec<usize>>,
    },
    SquaredError(Var, Var),
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Statistics of a batch-norm layer evaluated with batch statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    #[inline]
    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    #[inline]
    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf without gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add: shape mismatch");
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub: shape mismatch");
        let mut v = self.value(a).clone();
        for (x, y) in v.data.iter_mut().zip(&self.value(b).data) {
            *x -= y;
        }
        let ng = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut v = self.value(a).clone();
        v.data.iter_mut().for_each(|x| *x *= c);
        let ng = self.needs(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn act(&mut self, a: Var, f: Activation) -> Var {
        let x = self.value(a);
        let v = Tensor {
            shape: x.shape.clone(),
            data: x.data.iter().map(|&x| f.apply(x)).collect(),
        };
        let ng = self.needs(a);
        self.push(v, Op::Act(a, f), ng)
    }

    /// `x [N, in] -> x w^T + b` with `w [out, in]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xs, ws) = (self.shape(x), self.shape(w));
        assert!(xs.len() == 2 && ws.len() == 2 && xs[1] == ws[1], "linear: {xs:?} x {ws:?}^T");
        let (n, fin, fout) = (xs[0], xs[1], ws[0]);
        assert_eq!(self.shape(b), &[fout][..], "linear: bias shape");
        let mut y = vec![0.0; n * fout];
        for row in y.chunks_mut(fout) {
            row.copy_from_slice(&self.value(b).data);
        }
        conv::gemm(n, fin, fout, &self.value(x).data, false, &self.value(w).data, true, 1.0, &mut y);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(Tensor { shape: vec![n, fout], data: y }, Op::Linear { x, w, b }, ng)
    }

    /// Square-kernel 2D convolution, `x [B, Ci, H, W]`, `w [Co, Ci, k, k]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert!(xs.len() == 4 && ws.len() == 4 && ws[1] == xs[1] && ws[2] == ws[3], "conv2d: x {xs:?}, w {ws:?}");
        let out_c = ws[0];
        assert_eq!(self.shape(b), &[out_c][..], "conv2d: bias shape");
        let geom = ConvGeom::new(xs[1], xs[2], xs[3], ws[2], stride, pad);
        let mut y = vec![0.0; xs[0] * out_c * geom.col_cols()];
        conv::conv_forward(&geom, xs[0], &self.value(x).data, &self.value(w).data, &self.value(b).data, out_c, &mut y);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        let shape = vec![xs[0], out_c, geom.out_height, geom.out_width];
        self.push(Tensor { shape, data: y }, Op::Conv { x, w, b, geom, out_c }, ng)
    }

    /// Square-kernel transposed convolution, `w [Ci, Co, k, k]`. Output size
    /// is `(h - 1) * stride - 2 * pad + k + out_pad`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize, out_pad: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert!(xs.len() == 4 && ws.len() == 4 && ws[0] == xs[1] && ws[2] == ws[3], "conv_t: x {xs:?}, w {ws:?}");
        let (in_c, out_c, k) = (ws[0], ws[1], ws[2]);
        assert_eq!(self.shape(b), &[out_c][..], "conv_t: bias shape");
        let oh = (xs[2] - 1) * stride + k + out_pad - 2 * pad;
        let ow = (xs[3] - 1) * stride + k + out_pad - 2 * pad;
        let geom = ConvGeom::new(out_c, oh, ow, k, stride, pad);
        assert!(geom.out_height == xs[2] && geom.out_width == xs[3], "conv_t: inconsistent geometry");
        let mut y = vec![0.0; xs[0] * out_c * oh * ow];
        conv::conv_t_forward(&geom, xs[0], in_c, &self.value(x).data, &self.value(w).data, &self.value(b).data, &mut y);
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        let shape = vec![xs[0], out_c, oh, ow];
        self.push(Tensor { shape, data: y }, Op::ConvT { x, w, b, geom, in_c }, ng)
    }

    /// Per-channel normalization of `x [B, C, H, W]`. With `running = None`
    /// batch statistics are used (and returned); otherwise the given
    /// `(mean, var)` are applied as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(&[f64], &[f64])>,
    ) -> (Var, Option<BatchStats>) {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4, "batch_norm expects [B, C, H, W]");
        let (bn, c_n, hw) = (xs[0], xs[1], xs[2] * xs[3]);
        let xv = &self.value(x).data;
        let count = (bn * hw) as f64;
        let (mean, var) = match running {
            Some((m, v)) => (m.to_vec(), v.to_vec()),
            None => {
                let mut mean = vec![0.0; c_n];
                let mut var = vec![0.0; c_n];
                for b in 0..bn {
                    for c in 0..c_n {
                        let p = &xv[(b * c_n + c) * hw..(b * c_n + c + 1) * hw];
                        mean[c] += p.iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count);
                for b in 0..bn {
                    for c in 0..c_n {
                        let p = &xv[(b * c_n + c) * hw..(b * c_n + c + 1) * hw];
                        var[c] += p.iter().map(|v| (v - mean[c]) * (v - mean[c])).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= count);
                (mean, var)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let gv = &self.value(gamma).data;
        let bv = &self.value(beta).data;
        let mut xhat = vec![0.0; xv.len()];
        let mut y = vec![0.0; xv.len()];
        for b in 0..bn {
            for c in 0..c_n {
                let r = (b * c_n + c) * hw..(b * c_n + c + 1) * hw;
                for i in r {
                    xhat[i] = (xv[i] - mean[c]) * inv_std[c];
                    y[i] = gv[c] * xhat[i] + bv[c];
                }
            }
        }
        let batch_stats = running.is_none();
        let stats = batch_stats.then(|| BatchStats { mean, var });
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let v = self.push(
            Tensor { shape: xs, data: y },
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            ng,
        );
        (v, stats)
    }

    /// Feature-wise affine modulation `x * (1 + scale) + shift` with
    /// `scale`, `shift` of shape `[B, C]` broadcast over `H, W`.
    pub fn film(&mut self, x: Var, scale: Var, shift: Var) -> Var {
        let xs = self.shape(x).to_vec();
        assert_eq!(xs.len(), 4, "film expects [B, C, H, W]");
        assert_eq!(self.shape(scale), &xs[..2], "film: scale shape");
        assert_eq!(self.shape(shift), &xs[..2], "film: shift shape");
        let hw = xs[2] * xs[3];
        let (sc, sh) = (&self.value(scale).data, &self.value(shift).data);
        let mut y = self.value(x).data.clone();
        for (bc, plane) in y.chunks_mut(hw).enumerate() {
            let (a, o) = (1.0 + sc[bc], sh[bc]);
            plane.iter_mut().for_each(|v| *v = *v * a + o);
        }
        let ng = self.needs(x) || self.needs(scale) || self.needs(shift);
        self.push(Tensor { shape: xs, data: y }, Op::Film { x, scale, shift }, ng)
    }

    /// Channel concatenation of two `[B, C, H, W]` tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        assert!(sa.len() == 4 && sb.len() == 4 && sa[0] == sb[0] && sa[2..] == sb[2..], "concat: {sa:?} vs {sb:?}");
        let hw = sa[2] * sa[3];
        let (la, lb) = (sa[1] * hw, sb[1] * hw);
        let mut y = Vec::with_capacity(sa[0] * (la + lb));
        for n in 0..sa[0] {
            y.extend_from_slice(&self.value(a).data[n * la..(n + 1) * la]);
            y.extend_from_slice(&self.value(b).data[n * lb..(n + 1) * lb]);
        }
        let ng = self.needs(a) || self.needs(b);
        let shape = vec![sa[0], sa[1] + sb[1], sa[2], sa[3]];
        self.push(Tensor { shape, data: y }, Op::Concat(a, b), ng)
    }

    /// `out[i] = x[index[i]]`, or 0 where `index[i] == ZERO`.
    pub fn gather(&mut self, x: Var, index: Rc<Vec<usize>>, shape: &[usize]) -> Var {
        assert_eq!(index.len(), shape.iter().product::<usize>(), "gather: index length");
        let xv = &self.value(x).data;
        let y = index
            .iter()
            .map(|&i| if i == ZERO { 0.0 } else { xv[i] })
            .collect();
        let ng = self.needs(x);
        self.push(Tensor { shape: shape.to_vec(), data: y }, Op::Gather { x, index }, ng)
    }

    /// Scalar `sum (a - b)^2`.
    pub fn squared_error(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "squared_error: shape mismatch");
        let s: f64 = self
            .value(a)
            .data
            .iter()
            .zip(&self.value(b).data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let ng = self.needs(a) || self.needs(b);
        self.push(Tensor::scalar(s), Op::SquaredError(a, b), ng)
    }

    pub fn custom(&mut self, inputs: Vec<Var>, value: Tensor, op: Box<dyn CustomOp>) -> Var {
        let ng = inputs.iter().any(|&v| self.needs(v));
        self.push(value, Op::Custom { inputs, op }, ng)
    }

    /// Gradients of the scalar `root` with respect to every node that needs
    /// one.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor {
            shape: self.value(root).shape.clone(),
            data: vec![1.0],
        });
        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(node, &g, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn zeros_like(&self, v: Var) -> Tensor {
        Tensor::zeros(self.shape(v))
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    let mut n = g.clone();
                    n.data.iter_mut().for_each(|x| *x = -*x);
                    self.accumulate(grads, *b, n);
                }
            }
            Op::Scale(a, c) => {
                let mut n = g.clone();
                n.data.iter_mut().for_each(|x| *x *= c);
                self.accumulate(grads, *a, n);
            }
            Op::Act(a, f) => {
                let x = &self.value(*a).data;
                let y = &node.value.data;
                let data = g
                    .data
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(gi, (&xi, &yi))| gi * f.derivative(xi, yi))
                    .collect();
                self.accumulate(grads, *a, Tensor { shape: g.shape.clone(), data });
            }
            Op::Linear { x, w, b } => {
                let (n, fin) = (self.shape(*x)[0], self.shape(*x)[1]);
                let fout = self.shape(*w)[0];
                if self.needs(*x) {
                    let mut dx = self.zeros_like(*x);
                    conv::gemm(n, fout, fin, &g.data, false, &self.value(*w).data, false, 0.0, &mut dx.data);
                    self.accumulate(grads, *x, dx);
                }
                if self.needs(*w) {
                    let mut dw = self.zeros_like(*w);
                    conv::gemm(fout, n, fin, &g.data, true, &self.value(*x).data, false, 0.0, &mut dw.data);
                    self.accumulate(grads, *w, dw);
                }
                if self.needs(*b) {
                    let mut db = self.zeros_like(*b);
                    for row in g.data.chunks(fout) {
                        for (d, v) in db.data.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Conv { x, w, b, geom, out_c } => {
                let batch = self.shape(*x)[0];
                let mut dx = self.needs(*x).then(|| self.zeros_like(*x));
                let mut dw = self.needs(*w).then(|| self.zeros_like(*w));
                let mut db = self.needs(*b).then(|| self.zeros_like(*b));
                conv::conv_backward(
                    geom,
                    batch,
                    &self.value(*x).data,
                    &self.value(*w).data,
                    *out_c,
                    &g.data,
                    dx.as_mut().map(|t| t.data.as_mut_slice()),
                    dw.as_mut().map(|t| t.data.as_mut_slice()),
                    db.as_mut().map(|t| t.data.as_mut_slice()),
                );
                for (v, t) in [(*x, dx), (*w, dw), (*b, db)] {
                    if let Some(t) = t {
                        self.accumulate(grads, v, t);
                    }
                }
            }
            Op::ConvT { x, w, b, geom, in_c } => {
                let batch = self.shape(*x)[0];
                let mut dx = self.needs(*x).then(|| self.zeros_like(*x));
                let mut dw = self.needs(*w).then(|| self.zeros_like(*w));
                let mut db = self.needs(*b).then(|| self.zeros_like(*b));
                conv::conv_t_backward(
                    geom,
                    batch,
                    *in_c,
                    &self.value(*x).data,
                    &self.value(*w).data,
                    &g.data,
                    dx.as_mut().map(|t| t.data.as_mut_slice()),
                    dw.as_mut().map(|t| t.data.as_mut_slice()),
                    db.as_mut().map(|t| t.data.as_mut_slice()),
                );
                for (v, t) in [(*x, dx), (*w, dw), (*b, db)] {
                    if let Some(t) = t {
                        self.accumulate(grads, v, t);
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let xs = self.shape(*x);
                let (bn, c_n, hw) = (xs[0], xs[1], xs[2] * xs[3]);
                let gv = &self.value(*gamma).data;
                let mut dgamma = vec![0.0; c_n];
                let mut dbeta = vec![0.0; c_n];
                for b in 0..bn {
                    for c in 0..c_n {
                        let r = (b * c_n + c) * hw..(b * c_n + c + 1) * hw;
                        for i in r {
                            dgamma[c] += g.data[i] * xhat[i];
                            dbeta[c] += g.data[i];
                        }
                    }
                }
                if self.needs(*x) {
                    let mut dx = self.zeros_like(*x);
                    let count = (bn * hw) as f64;
                    for b in 0..bn {
                        for c in 0..c_n {
                            let r = (b * c_n + c) * hw..(b * c_n + c + 1) * hw;
                            for i in r {
                                dx.data[i] = if *batch_stats {
                                    // d xhat = g * gamma; sums over the channel
                                    // are gamma * dbeta and gamma * dgamma
                                    gv[c] * inv_std[c]
                                        * (g.data[i] - dbeta[c] / count - xhat[i] * dgamma[c] / count)
                                } else {
                                    g.data[i] * gv[c] * inv_std[c]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.needs(*gamma) {
                    self.accumulate(grads, *gamma, Tensor { shape: vec![c_n], data: dgamma });
                }
                if self.needs(*beta) {
                    self.accumulate(grads, *beta, Tensor { shape: vec![c_n], data: dbeta });
                }
            }
            Op::Film { x, scale, shift } => {
                let xs = self.shape(*x);
                let hw = xs[2] * xs[3];
                let xv = &self.value(*x).data;
                let sc = &self.value(*scale).data;
                let mut dscale = self.zeros_like(*scale);
                let mut dshift = self.zeros_like(*shift);
                let mut dx = self.needs(*x).then(|| self.zeros_like(*x));
                for bc in 0..xs[0] * xs[1] {
                    let r = bc * hw..(bc + 1) * hw;
                    let (gp, xp) = (&g.data[r.clone()], &xv[r.clone()]);
                    dscale.data[bc] = gp.iter().zip(xp).map(|(a, b)| a * b).sum();
                    dshift.data[bc] = gp.iter().sum();
                    if let Some(dx) = dx.as_mut() {
                        for (d, gi) in dx.data[r].iter_mut().zip(gp) {
                            *d = gi * (1.0 + sc[bc]);
                        }
                    }
                }
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if self.needs(*scale) {
                    self.accumulate(grads, *scale, dscale);
                }
                if self.needs(*shift) {
                    self.accumulate(grads, *shift, dshift);
                }
            }
            Op::Concat(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let hw = sa[2] * sa[3];
                let (la, lb) = (sa[1] * hw, sb[1] * hw);
                let mut da = self.zeros_like(*a);
                let mut db = self.zeros_like(*b);
                for n in 0..sa[0] {
                    let base = n * (la + lb);
                    da.data[n * la..(n + 1) * la].copy_from_slice(&g.data[base..base + la]);
                    db.data[n * lb..(n + 1) * lb].copy_from_slice(&g.data[base + la..base + la + lb]);
                }
                if self.needs(*a) {
                    self.accumulate(grads, *a, da);
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Gather { x, index } => {
                let mut dx = self.zeros_like(*x);
                for (&i, gi) in index.iter().zip(&g.data) {
                    if i != ZERO {
                        dx.data[i] += gi;
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::SquaredError(a, b) => {
                let s = g.data[0];
                let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                if self.needs(*a) {
                    let data = av.iter().zip(bv).map(|(x, y)| 2.0 * s * (x - y)).collect();
                    self.accumulate(grads, *a, Tensor { shape: self.shape(*a).to_vec(), data });
                }
                if self.needs(*b) {
                    let data = av.iter().zip(bv).map(|(x, y)| -2.0 * s * (x - y)).collect();
                    self.accumulate(grads, *b, Tensor { shape: self.shape(*b).to_vec(), data });
                }
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let wanted: Vec<bool> = inputs.iter().map(|v| self.needs(*v)).collect();
                let out = op.backward(&values, &node.value, g, &wanted);
                assert_eq!(out.len(), inputs.len(), "{}: wrong gradient count", op.name());
                for ((v, t), w) in inputs.iter().zip(out).zip(wanted) {
                    if let (Some(t), true) = (t, w) {
                        assert_eq!(t.shape(), self.shape(*v), "{}: gradient shape", op.name());
                        self.accumulate(grads, *v, t);
                    }
                }
            }
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf (or `None` if it did not influence the root).
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

//! Reverse-mode differentiation of real losses through complex computations.
//!
//! Gradients follow the convention `∇_z L = ∂L/∂Re(z) + j ∂L/∂Im(z)`. Under
//! it a linear map `y = A x` pulls back as `∇_x = Aᴴ ∇_y`, an elementwise
//! product `y = a b` gives `∇_a = conj(b) ∇_y`, and a real parameter `p`
//! embedded as `p + 0j` receives `Re(∇_z)`. An optimizer can then treat the
//! real and imaginary parts of every complex parameter as two independent
//! real parameters.
//!
//! The tape is define-by-run: build a fresh [`Tape`] per forward pass, record
//! operations through its methods, then call [`Tape::backward`].

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::ctensor::{gelu_derivative, CTensor, C64, ZERO};
use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Matrix applied along one axis, optionally depending on a real scalar
/// (a fractional order) through `dmatrix = d matrix / d order`.
#[derive(Clone, Debug)]
pub struct AxisKernel {
    pub matrix: CTensor,
    pub dmatrix: Option<CTensor>,
}

#[derive(Clone, Debug)]
pub enum Op {
    Leaf { slot: Option<usize>, real: bool },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, C64),
    /// Contracts the last axis of the first input with the rows of a matrix.
    Matmul(usize, usize),
    /// Adds a vector along the last axis.
    AddBias(usize, usize),
    CGelu(usize),
    RealPart(usize),
    AxisLinear {
        input: usize,
        axis: usize,
        kernel: Arc<AxisKernel>,
        order: Option<usize>,
    },
    /// `[B, modes.., C] x [modes.., C, D] -> [B, modes.., D]`, one matrix per mode.
    ModeMix(usize, usize),
    Pad { input: usize, axis: usize, extra: usize },
    Crop { input: usize, axis: usize, len: usize },
    SqNorm(usize),
    SumReal(usize),
    /// Mean over the leading (batch) axis of per-sample relative L2 error.
    RelL2 { pred: usize, target: Arc<CTensor> },
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match *self {
            Op::Leaf { .. } => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Matmul(a, b)
            | Op::AddBias(a, b)
            | Op::ModeMix(a, b) => vec![a, b],
            Op::Scale(a, _)
            | Op::CGelu(a)
            | Op::RealPart(a)
            | Op::SqNorm(a)
            | Op::SumReal(a)
            | Op::Pad { input: a, .. }
            | Op::Crop { input: a, .. }
            | Op::RelL2 { pred: a, .. } => vec![a],
            Op::AxisLinear { input, order, .. } => match order {
                Some(o) => vec![input, o],
                None => vec![input],
            },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub op: Op,
    pub value: CTensor,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients keyed by parameter slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<usize, CTensor>,
}

impl Gradients {
    pub fn get(&self, slot: usize) -> Option<&CTensor> {
        self.grads.get(&slot)
    }

    pub fn insert(&mut self, slot: usize, grad: CTensor) {
        self.grads.insert(slot, grad);
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &CTensor)> {
        self.grads.iter().map(|(&k, v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds `other` slot by slot.
    pub fn merge(&mut self, other: Gradients) -> Result<()> {
        for (slot, g) in other.grads {
            match self.grads.get_mut(&slot) {
                Some(acc) => acc.add_assign(&g)?,
                None => {
                    self.grads.insert(slot, g);
                }
            }
        }
        Ok(())
    }
}

fn complex_scalar(value: f64) -> CTensor {
    CTensor::scalar(C64::new(value, 0.0))
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

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn value(&self, v: Var) -> &CTensor {
        &self.nodes[v.0].value
    }

    /// Appends a node. Every input must already be on the tape.
    pub fn record(&mut self, op: Op, value: CTensor) -> Result<Var> {
        let id = self.nodes.len();
        if let Some(&bad) = op.inputs().iter().find(|&&i| i >= id) {
            return Err(Error::CycleDetected { node: id, input: bad });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(id))
    }

    /// Whether every node's inputs precede it.
    pub fn is_topologically_ordered(&self) -> bool {
        self.nodes
            .iter()
            .enumerate()
            .all(|(i, n)| n.op.inputs().iter().all(|&j| j < i))
    }

    /// Non-trainable input.
    pub fn constant(&mut self, value: CTensor) -> Var {
        self.record(Op::Leaf { slot: None, real: false }, value)
            .expect("leaf has no inputs")
    }

    /// Trainable leaf. Real parameters receive the real part of their gradient.
    pub fn param(&mut self, value: CTensor, slot: usize, real: bool) -> Var {
        self.record(Op::Leaf { slot: Some(slot), real }, value)
            .expect("leaf has no inputs")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        self.record(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        self.record(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).mul(self.value(b))?;
        self.record(Op::Mul(a.0, b.0), v)
    }

    pub fn scale(&mut self, a: Var, c: C64) -> Result<Var> {
        let v = self.value(a).scale(c);
        self.record(Op::Scale(a.0, c), v)
    }

    /// `[.., K] x [K, D] -> [.., D]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let v = last_axis_matmul(self.value(x), self.value(w))?;
        self.record(Op::Matmul(x.0, w.0), v)
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let c = *xv.shape().last().unwrap_or(&0);
        if bv.shape() != [c] {
            return Err(shape_err!("bias {:?} for input {:?}", bv.shape(), xv.shape()));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(c) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.record(Op::AddBias(x.0, bias.0), out)
    }

    pub fn cgelu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).cgelu();
        self.record(Op::CGelu(x.0), v)
    }

    pub fn real_part(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x).real_part();
        self.record(Op::RealPart(x.0), v)
    }

    /// Applies `kernel.matrix` along `axis`. When `order` is given, the kernel
    /// depends on that real scalar node through `kernel.dmatrix`.
    pub fn axis_linear(
        &mut self,
        x: Var,
        axis: usize,
        kernel: Arc<AxisKernel>,
        order: Option<Var>,
    ) -> Result<Var> {
        if let Some(o) = order {
            if self.value(o).len() != 1 {
                return Err(shape_err!("order must be a scalar"));
            }
            if kernel.dmatrix.is_none() {
                return Err(shape_err!("order-dependent kernel needs a derivative matrix"));
            }
        }
        let v = self.value(x).axis_apply(axis, &kernel.matrix)?;
        self.record(
            Op::AxisLinear {
                input: x.0,
                axis,
                kernel,
                order: order.map(|o| o.0),
            },
            v,
        )
    }

    pub fn mode_mix(&mut self, x: Var, weights: Var) -> Result<Var> {
        let v = mode_mix_forward(self.value(x), self.value(weights))?;
        self.record(Op::ModeMix(x.0, weights.0), v)
    }

    pub fn pad(&mut self, x: Var, axis: usize, extra: usize) -> Result<Var> {
        let v = self.value(x).pad_axis(axis, extra)?;
        self.record(Op::Pad { input: x.0, axis, extra }, v)
    }

    pub fn crop(&mut self, x: Var, axis: usize, len: usize) -> Result<Var> {
        let v = self.value(x).crop_axis(axis, len)?;
        self.record(Op::Crop { input: x.0, axis, len }, v)
    }

    /// `Σ |x|²`.
    pub fn sq_norm(&mut self, x: Var) -> Result<Var> {
        let v = complex_scalar(self.value(x).sq_l2_norm());
        self.record(Op::SqNorm(x.0), v)
    }

    /// `Re Σ x`.
    pub fn sum_real(&mut self, x: Var) -> Result<Var> {
        let v = complex_scalar(self.value(x).sum().re);
        self.record(Op::SumReal(x.0), v)
    }

    /// Mean relative L2 error over the leading axis.
    pub fn rel_l2(&mut self, pred: Var, target: Arc<CTensor>) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.rank() == 0 {
            return Err(shape_err!("rel_l2: {:?} vs {:?}", p.shape(), target.shape()));
        }
        let (loss, _) = rel_l2_parts(p, &target)?;
        let v = complex_scalar(loss);
        self.record(Op::RelL2 { pred: pred.0, target }, v)
    }

    /// Back-propagates from `loss` and returns gradients for every trainable leaf
    /// reached. An empty tape yields no gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Ok(Gradients::default());
        }
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(shape_err!("loss must be scalar, got {:?}", lv.shape()));
        }
        let im = lv.data()[0].im;
        if im.abs() >= 1e-12 {
            return Err(Error::NonRealLoss(im));
        }
        let mut adj: Vec<Option<CTensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(CTensor::from_fn(lv.shape(), |_| C64::new(1.0, 0.0)));
        let mut grads = Gradients::default();

        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf { slot, real } => {
                    if let Some(slot) = slot {
                        let g = if *real { g.real_part() } else { g };
                        match grads.grads.get_mut(slot) {
                            Some(acc) => acc.add_assign(&g)?,
                            None => {
                                grads.grads.insert(*slot, g);
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *b, g.clone())?;
                    accumulate(&mut adj, *a, g)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.scale(C64::new(-1.0, 0.0)))?;
                    accumulate(&mut adj, *a, g)?;
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[*a].value;
                    let bv = &self.nodes[*b].value;
                    accumulate(&mut adj, *b, g.mul(&av.conj())?)?;
                    accumulate(&mut adj, *a, g.mul(&bv.conj())?)?;
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.scale(c.conj()))?,
                Op::Matmul(x, w) => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let gw = matmul_input_adjoint(xv, &g)?;
                    accumulate(&mut adj, *w, gw)?;
                    let gx = last_axis_matmul(&g, &wv.adjoint()?)?;
                    accumulate(&mut adj, *x, gx)?;
                }
                Op::AddBias(x, b) => {
                    let c = self.nodes[*b].value.len();
                    let mut gb = vec![ZERO; c];
                    for row in g.data().chunks(c) {
                        for (acc, &v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut adj, *b, CTensor::new(vec![c], gb)?)?;
                    accumulate(&mut adj, *x, g)?;
                }
                Op::CGelu(x) => {
                    let xv = &self.nodes[*x].value;
                    let gx = CTensor::from_fn(xv.shape(), |i| {
                        let z = xv.data()[i];
                        let gi = g.data()[i];
                        C64::new(gelu_derivative(z.re) * gi.re, gelu_derivative(z.im) * gi.im)
                    });
                    accumulate(&mut adj, *x, gx)?;
                }
                Op::RealPart(x) => accumulate(&mut adj, *x, g.real_part())?,
                Op::AxisLinear {
                    input,
                    axis,
                    kernel,
                    order,
                } => {
                    if let Some(o) = order {
                        let dm = kernel.dmatrix.as_ref().expect("checked at record time");
                        let dx = self.nodes[*input].value.axis_apply(*axis, dm)?;
                        let ga: f64 = g
                            .data()
                            .iter()
                            .zip(dx.data())
                            .map(|(gi, di)| (gi.conj() * di).re)
                            .sum();
                        let shape = self.nodes[*o].value.shape().to_vec();
                        accumulate(&mut adj, *o, CTensor::new(shape, vec![C64::new(ga, 0.0)])?)?;
                    }
                    let gx = g.axis_apply(*axis, &kernel.matrix.adjoint()?)?;
                    accumulate(&mut adj, *input, gx)?;
                }
                Op::ModeMix(x, w) => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    let (gx, gw) = mode_mix_adjoint(xv, wv, &g)?;
                    accumulate(&mut adj, *w, gw)?;
                    accumulate(&mut adj, *x, gx)?;
                }
                Op::Pad { input, axis, .. } => {
                    let len = self.nodes[*input].value.shape()[*axis];
                    accumulate(&mut adj, *input, g.crop_axis(*axis, len)?)?;
                }
                Op::Crop { input, axis, .. } => {
                    let full = self.nodes[*input].value.shape()[*axis];
                    let cur = g.shape()[*axis];
                    accumulate(&mut adj, *input, g.pad_axis(*axis, full - cur)?)?;
                }
                Op::SqNorm(x) => {
                    let s = 2.0 * g.data()[0].re;
                    let gx = self.nodes[*x].value.scale(C64::new(s, 0.0));
                    accumulate(&mut adj, *x, gx)?;
                }
                Op::SumReal(x) => {
                    let s = g.data()[0].re;
                    let shape = self.nodes[*x].value.shape().to_vec();
                    accumulate(&mut adj, *x, CTensor::from_fn(&shape, |_| C64::new(s, 0.0)))?;
                }
                Op::RelL2 { pred, target } => {
                    let s = g.data()[0].re;
                    let (_, dp) = rel_l2_parts(&self.nodes[*pred].value, target)?;
                    accumulate(&mut adj, *pred, dp.scale(C64::new(s, 0.0)))?;
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<CTensor>], id: usize, g: CTensor) -> Result<()> {
    match &mut adj[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// `x [.., K]` times `w [K, D]`.
pub fn last_axis_matmul(x: &CTensor, w: &CTensor) -> Result<CTensor> {
    let k = *x.shape().last().unwrap_or(&0);
    if w.rank() != 2 || w.shape()[0] != k || x.rank() == 0 {
        return Err(shape_err!("matmul: {:?} x {:?}", x.shape(), w.shape()));
    }
    let d = w.shape()[1];
    let rows = x.len() / k.max(1);
    let flat = x.clone().reshape(&[rows, k])?;
    let out = flat.matmul(w)?;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank > 0") = d;
    out.reshape(&shape)
}

/// `Xᴴ G` with both flattened over all but the last axis.
fn matmul_input_adjoint(x: &CTensor, g: &CTensor) -> Result<CTensor> {
    let k = *x.shape().last().expect("rank > 0");
    let d = *g.shape().last().expect("rank > 0");
    let rows = x.len() / k.max(1);
    let mut out = vec![ZERO; k * d];
    for r in 0..rows {
        let xr = &x.data()[r * k..(r + 1) * k];
        let gr = &g.data()[r * d..(r + 1) * d];
        for (i, &xv) in xr.iter().enumerate() {
            let xc = xv.conj();
            let o = &mut out[i * d..(i + 1) * d];
            for (ov, &gv) in o.iter_mut().zip(gr) {
                *ov += xc * gv;
            }
        }
    }
    CTensor::new(vec![k, d], out)
}

fn mode_mix_dims(x: &CTensor, w: &CTensor) -> Result<(usize, usize, usize, usize)> {
    // x: [B, modes.., C]; w: [modes.., C, D]
    let xr = x.rank();
    if xr < 2 || w.rank() != xr || x.shape()[1..] != w.shape()[..xr - 1] {
        return Err(shape_err!("mode_mix: {:?} with {:?}", x.shape(), w.shape()));
    }
    let b = x.shape()[0];
    let c = x.shape()[xr - 1];
    let d = w.shape()[xr - 1];
    let modes: usize = x.shape()[1..xr - 1].iter().product();
    Ok((b, modes, c, d))
}

fn mode_mix_forward(x: &CTensor, w: &CTensor) -> Result<CTensor> {
    let (b, modes, c, d) = mode_mix_dims(x, w)?;
    let mut out = vec![ZERO; b * modes * d];
    for bi in 0..b {
        for m in 0..modes {
            let xin = &x.data()[(bi * modes + m) * c..(bi * modes + m + 1) * c];
            let o = &mut out[(bi * modes + m) * d..(bi * modes + m + 1) * d];
            let wm = &w.data()[m * c * d..(m + 1) * c * d];
            for (i, &xv) in xin.iter().enumerate() {
                for (ov, &wv) in o.iter_mut().zip(&wm[i * d..(i + 1) * d]) {
                    *ov += xv * wv;
                }
            }
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank >= 2") = d;
    CTensor::new(shape, out)
}

fn mode_mix_adjoint(x: &CTensor, w: &CTensor, g: &CTensor) -> Result<(CTensor, CTensor)> {
    let (b, modes, c, d) = mode_mix_dims(x, w)?;
    let mut gx = vec![ZERO; x.len()];
    let mut gw = vec![ZERO; w.len()];
    for bi in 0..b {
        for m in 0..modes {
            let base_x = (bi * modes + m) * c;
            let base_g = (bi * modes + m) * d;
            let gm = &g.data()[base_g..base_g + d];
            for i in 0..c {
                let xv = x.data()[base_x + i].conj();
                let wrow = &w.data()[(m * c + i) * d..(m * c + i + 1) * d];
                let gwrow = &mut gw[(m * c + i) * d..(m * c + i + 1) * d];
                let mut acc = ZERO;
                for ((gwv, &wv), &gv) in gwrow.iter_mut().zip(wrow).zip(gm) {
                    acc += gv * wv.conj();
                    *gwv += xv * gv;
                }
                gx[base_x + i] = acc;
            }
        }
    }
    Ok((
        CTensor::new(x.shape().to_vec(), gx)?,
        CTensor::new(w.shape().to_vec(), gw)?,
    ))
}

/// Loss value and its gradient with respect to `pred`.
fn rel_l2_parts(pred: &CTensor, target: &CTensor) -> Result<(f64, CTensor)> {
    let b = pred.shape()[0];
    let per = pred.len() / b.max(1);
    let mut loss = 0.0;
    let mut grad = vec![ZERO; pred.len()];
    for s in 0..b {
        let p = &pred.data()[s * per..(s + 1) * per];
        let t = &target.data()[s * per..(s + 1) * per];
        let tn = libm::sqrt(t.iter().map(|z| z.norm_sqr()).sum::<f64>());
        if tn < 1e-14 {
            return Err(Error::ZeroTarget(s));
        }
        let dn = libm::sqrt(p.iter().zip(t).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>());
        loss += dn / tn;
        if dn > 0.0 {
            let scale = 1.0 / (b as f64 * dn * tn);
            for ((gv, &pv), &tv) in grad[s * per..(s + 1) * per].iter_mut().zip(p).zip(t) {
                *gv = (pv - tv) * scale;
            }
        }
    }
    Ok((loss / b as f64, CTensor::new(pred.shape().to_vec(), grad)?))
}

/// Compares tape gradients with central differences.
///
/// `params[i]` is bound as slot `i`; `real[i]` marks real parameters, whose
/// imaginary parts are not perturbed. Returns the largest relative error
/// `|fd - analytic| / |analytic|` over components with `|analytic| > 1e-8`.
pub fn grad_check<F>(params: &[CTensor], real: &[bool], build: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[CTensor]| -> Result<(Tape, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values
            .iter()
            .enumerate()
            .map(|(i, v)| tape.param(v.clone(), i, real[i]))
            .collect();
        let loss = build(&mut tape, &vars)?;
        Ok((tape, loss))
    };
    let (tape, loss) = eval(params)?;
    let grads = tape.backward(loss)?;
    let mut worst: f64 = 0.0;
    let mut values = params.to_vec();
    for p in 0..params.len() {
        let analytic = grads
            .get(p)
            .cloned()
            .unwrap_or_else(|| CTensor::zeros(params[p].shape()));
        for e in 0..params[p].len() {
            let parts: &[C64] = if real[p] {
                &[C64::new(1.0, 0.0)]
            } else {
                &[C64::new(1.0, 0.0), C64::new(0.0, 1.0)]
            };
            for &dir in parts {
                values[p].data_mut()[e] = params[p].data()[e] + dir * h;
                let (t, l) = eval(&values)?;
                let up = t.value(l).data()[0].re;
                values[p].data_mut()[e] = params[p].data()[e] - dir * h;
                let (t, l) = eval(&values)?;
                let down = t.value(l).data()[0].re;
                values[p].data_mut()[e] = params[p].data()[e];
                let fd = (up - down) / (2.0 * h);
                let an = if dir.re != 0.0 {
                    analytic.data()[e].re
                } else {
                    analytic.data()[e].im
                };
                if an.abs() > 1e-8 {
                    worst = worst.max((fd - an).abs() / an.abs());
                }
            }
        }
    }
    Ok(worst)
}

//! Reverse-mode tape.
//!
//! Every operation appends a node holding its forward value. `backward`
//! walks the tape in reverse and returns gradients for every node that
//! depends on a tracked leaf; the tape itself is left intact.

use std::sync::atomic::{AtomicU64, Ordering};

use super::{NnError, Result, Tensor};
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Replicate-padding margins in rows/columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(m: usize) -> Self {
        Self { top: m, bottom: m, left: m, right: m }
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param { store: u64, index: usize },
    Conv2d { x: Var, w: Var, b: Var, stride: (usize, usize) },
    ReplicatePad { x: Var, pad: Padding },
    Linear { x: Var, w: Var, b: Var },
    Relu(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Reshape(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    Bce { p: Var, target: Vec<T> },
    MeanAbsError { x: Var, target: Vec<T> },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    tracked: bool,
}

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside the log.
pub const BCE_EPS: f64 = 1e-7;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

/// Trainable tensors and their accumulated gradients.
#[derive(Debug)]
pub struct ParamStore<T> {
    id: u64,
    params: Vec<Tensor<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Clone for ParamStore<T> {
    fn clone(&self) -> Self {
        Self {
            id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed),
            params: self.params.clone(),
            grads: self.grads.clone(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { id: NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed), params: Vec::new(), grads: Vec::new() }
    }

    pub fn push(&mut self, t: Tensor<T>) -> usize {
        self.params.push(t);
        self.grads.push(None);
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Tensor<T> {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.params.iter()
    }

    pub fn grad(&self, i: usize) -> Option<&Tensor<T>> {
        self.grads[i].as_ref()
    }

    pub fn has_grads(&self) -> bool {
        !self.grads.is_empty() && self.grads.iter().all(Option::is_some)
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    /// Adds this store's gradients from `grads`; returns how many were found.
    pub fn accumulate(&mut self, grads: &Gradients<T>) -> usize {
        let mut found = 0;
        for &(store, index, node) in &grads.params {
            if store != self.id {
                continue;
            }
            if let Some(g) = &grads.grads[node] {
                match &mut self.grads[index] {
                    Some(acc) => acc.add_assign(g),
                    slot @ None => *slot = Some(g.clone()),
                }
                found += 1;
            }
        }
        found
    }

    /// This store's gradients in `grads`, without accumulating them.
    pub fn grads_in(&self, grads: &Gradients<T>) -> Vec<Option<Tensor<T>>> {
        let mut out: Vec<Option<Tensor<T>>> = vec![None; self.params.len()];
        for &(store, index, node) in &grads.params {
            if store != self.id {
                continue;
            }
            if let Some(g) = &grads.grads[node] {
                match &mut out[index] {
                    Some(acc) => acc.add_assign(g),
                    slot @ None => *slot = Some(g.clone()),
                }
            }
        }
        out
    }

    pub(crate) fn take_parts(&mut self) -> (&mut [Tensor<T>], &mut [Option<Tensor<T>>]) {
        (&mut self.params, &mut self.grads)
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.push(p.cast());
        }
        out
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(u64, usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    pub fn of(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }
}

#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Leaf whose gradient is reported by `backward`.
    pub fn tracked_input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, true)
    }

    pub fn param(&mut self, store: &ParamStore<T>, index: usize) -> Var {
        self.push(store.get(index).clone(), Op::Param { store: store.id, index }, true)
    }

    /// Valid 2-D convolution. `x` is `[N, Ci, H, W]`, `w` is `[Co, Ci, kh, kw]`,
    /// `b` is `[Co]`; output spatial size is `floor((H - kh) / sh) + 1`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: (usize, usize)) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, ci, h, wd) = dims4(xv.shape(), "conv2d input")?;
        let (co, ci2, kh, kw) = dims4(wv.shape(), "conv2d weight")?;
        let (sh, sw) = stride;
        if ci != ci2 || bv.shape() != [co] || sh == 0 || sw == 0 || kh > h || kw > wd {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d input {:?}, weight {:?}, bias {:?}, stride {stride:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let geo = ConvGeometry { ci, h, w: wd, kh, kw, sh, sw, ho: (h - kh) / sh + 1, wo: (wd - kw) / sw + 1 };
        let (ho, wo, k, p) = (geo.ho, geo.wo, geo.k(), geo.ho * geo.wo);
        let (xd, wdat, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = vec![T::zero(); n * co * p];
        if sh == 1 && sw == 1 {
            geo.direct_forward(xd, wdat, bd, n, co, &mut out);
        } else {
            let mut col = vec![T::zero(); p * k];
            for b_ in 0..n {
                geo.im2col(&xd[b_ * ci * h * wd..(b_ + 1) * ci * h * wd], &mut col);
                let ob = &mut out[b_ * co * p..(b_ + 1) * co * p];
                for o in 0..co {
                    let wr = &wdat[o * k..(o + 1) * k];
                    for (q, v) in ob[o * p..(o + 1) * p].iter_mut().enumerate() {
                        *v = bd[o] + dot(wr, &col[q * k..(q + 1) * k]);
                    }
                }
            }
        }
        let tracked = self.tracked(&[x, w, b]);
        Ok(self.push(Tensor::new(vec![n, co, ho, wo], out)?, Op::Conv2d { x, w, b, stride }, tracked))
    }

    /// Pads `[N, C, H, W]` by repeating edge rows and columns.
    pub fn replicate_pad(&mut self, x: Var, pad: Padding) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, h, w) = dims4(xv.shape(), "replicate_pad input")?;
        let (ho, wo) = (h + pad.top + pad.bottom, w + pad.left + pad.right);
        let xd = xv.data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..ho {
                let si = i.saturating_sub(pad.top).min(h - 1);
                for j in 0..wo {
                    let sj = j.saturating_sub(pad.left).min(w - 1);
                    out.push(xd[base + si * w + sj]);
                }
            }
        }
        let tracked = self.tracked(&[x]);
        Ok(self.push(Tensor::new(vec![n, c, ho, wo], out)?, Op::ReplicatePad { x, pad }, tracked))
    }

    /// `x · wᵀ + b` with `x` `[N, in]`, `w` `[out, in]`, `b` `[out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (n, fin) = dims2(xv.shape(), "linear input")?;
        let (fout, fin2) = dims2(wv.shape(), "linear weight")?;
        if fin != fin2 || bv.shape() != [fout] {
            return Err(NnError::ShapeMismatch(format!(
                "linear input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let (xd, wd, bd) = (xv.data(), wv.data(), bv.data());
        let mut out = Vec::with_capacity(n * fout);
        for r in 0..n {
            let xr = &xd[r * fin..(r + 1) * fin];
            for o in 0..fout {
                let wr = &wd[o * fin..(o + 1) * fin];
                out.push(bd[o] + dot(xr, wr));
            }
        }
        let tracked = self.tracked(&[x, w, b]);
        Ok(self.push(Tensor::new(vec![n, fout], out)?, Op::Linear { x, w, b }, tracked))
    }

    fn unary(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let v = self.value(x).map(f);
        let tracked = self.tracked(&[x]);
        self.push(v, op, tracked)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(T::zero()))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(x, Op::LeakyRelu(x, slope), move |v| if v > T::zero() { v } else { v * slope })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), T::tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    /// `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = *xv.shape().first().ok_or_else(|| NnError::ShapeMismatch("flatten of a scalar".into()))?;
        let rest = xv.len() / n.max(1);
        let v = xv.clone().reshape(&[n, rest])?;
        let tracked = self.tracked(&[x]);
        Ok(self.push(v, Op::Reshape(x), tracked))
    }

    fn check_same(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "add")?;
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), tracked))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_same(a, b, "mul")?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let v = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(v, Op::Mul(a, b), tracked))
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        self.unary(x, Op::Scale(x, k), move |v| v * k)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        let tracked = self.tracked(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.data().iter().copied().sum::<T>() / T::of_usize(xv.len().max(1));
        let tracked = self.tracked(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), tracked)
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`.
    pub fn bce(&mut self, p: Var, target: &[T]) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != target.len() {
            return Err(NnError::ShapeMismatch(format!(
                "bce over {} probabilities, {} targets",
                pv.len(),
                target.len()
            )));
        }
        let loss = bce_value(pv.data(), target);
        let tracked = self.tracked(&[p]);
        Ok(self.push(Tensor::scalar(loss), Op::Bce { p, target: target.to_vec() }, tracked))
    }

    /// Mean absolute difference between `x` and a constant target.
    pub fn mean_abs_error(&mut self, x: Var, target: &[T]) -> Result<Var> {
        let xv = self.value(x);
        if xv.len() != target.len() {
            return Err(NnError::ShapeMismatch(format!("mae over {} values, {} targets", xv.len(), target.len())));
        }
        let n = T::of_usize(target.len().max(1));
        let loss = xv.data().iter().zip(target).map(|(&a, &b)| (a - b).abs()).sum::<T>() / n;
        let tracked = self.tracked(&[x]);
        Ok(self.push(Tensor::scalar(loss), Op::MeanAbsError { x, target: target.to_vec() }, tracked))
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(NnError::NotScalar(lv.shape().to_vec()));
        }
        if !self.nodes[loss.0].tracked {
            return Err(NnError::DetachedGraph);
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));
        let mut params = Vec::new();

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            match &node.op {
                Op::Input => {}
                Op::Param { store, index } => params.push((*store, *index, idx)),
                Op::Conv2d { x, w, b, stride } => self.conv2d_backward(&mut grads, &gy, *x, *w, *b, *stride),
                Op::ReplicatePad { x, pad } => {
                    let xv = self.value(*x);
                    let (_, _, h, w) = dims4(xv.shape(), "").expect("validated in forward");
                    let (ho, wo) = (h + pad.top + pad.bottom, w + pad.left + pad.right);
                    let mut gx = Tensor::zeros(xv.shape());
                    let gxd = gx.data_mut();
                    for (plane, gplane) in gy.data().chunks(ho * wo).enumerate() {
                        let base = plane * h * w;
                        for i in 0..ho {
                            let si = i.saturating_sub(pad.top).min(h - 1);
                            for j in 0..wo {
                                let sj = j.saturating_sub(pad.left).min(w - 1);
                                gxd[base + si * w + sj] += gplane[i * wo + j];
                            }
                        }
                    }
                    self.send(&mut grads, *x, gx);
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, fin) = (xv.shape()[0], xv.shape()[1]);
                    let fout = wv.shape()[0];
                    let gyd = gy.data();
                    if self.nodes[b.0].tracked {
                        let mut gb = Tensor::zeros(&[fout]);
                        for r in 0..n {
                            for (o, g) in gb.data_mut().iter_mut().enumerate() {
                                *g += gyd[r * fout + o];
                            }
                        }
                        self.send(&mut grads, *b, gb);
                    }
                    if self.nodes[w.0].tracked {
                        let mut gw = Tensor::zeros(wv.shape());
                        let gwd = gw.data_mut();
                        for r in 0..n {
                            let xr = &xv.data()[r * fin..(r + 1) * fin];
                            for o in 0..fout {
                                let g = gyd[r * fout + o];
                                if g == T::zero() {
                                    continue;
                                }
                                axpy(&mut gwd[o * fin..(o + 1) * fin], g, xr);
                            }
                        }
                        self.send(&mut grads, *w, gw);
                    }
                    if self.nodes[x.0].tracked {
                        let mut gx = Tensor::zeros(xv.shape());
                        let gxd = gx.data_mut();
                        for r in 0..n {
                            for o in 0..fout {
                                let g = gyd[r * fout + o];
                                if g == T::zero() {
                                    continue;
                                }
                                axpy(&mut gxd[r * fin..(r + 1) * fin], g, &wv.data()[o * fin..(o + 1) * fin]);
                            }
                        }
                        self.send(&mut grads, *x, gx);
                    }
                }
                Op::Relu(x) => {
                    let gx = zip_map(&gy, self.value(*x), |g, v| if v > T::zero() { g } else { T::zero() });
                    self.send(&mut grads, *x, gx);
                }
                Op::LeakyRelu(x, slope) => {
                    let s = *slope;
                    let gx = zip_map(&gy, self.value(*x), |g, v| if v > T::zero() { g } else { g * s });
                    self.send(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let gx = zip_map(&gy, &node.value, |g, y| g * (T::one() - y * y));
                    self.send(&mut grads, *x, gx);
                }
                Op::Sigmoid(x) => {
                    let gx = zip_map(&gy, &node.value, |g, y| g * y * (T::one() - y));
                    self.send(&mut grads, *x, gx);
                }
                Op::Reshape(x) => {
                    let shape = self.value(*x).shape().to_vec();
                    self.send(&mut grads, *x, gy.clone().reshape(&shape).expect("same element count"));
                }
                Op::Add(a, b) => {
                    self.send(&mut grads, *b, gy.clone());
                    self.send(&mut grads, *a, gy.clone());
                }
                Op::Mul(a, b) => {
                    let ga = zip_map(&gy, self.value(*b), |g, v| g * v);
                    let gb = zip_map(&gy, self.value(*a), |g, v| g * v);
                    self.send(&mut grads, *a, ga);
                    self.send(&mut grads, *b, gb);
                }
                Op::Scale(x, k) => {
                    let k = *k;
                    self.send(&mut grads, *x, gy.map(|g| g * k));
                }
                Op::Sum(x) => {
                    let g = gy.item();
                    self.send(&mut grads, *x, Tensor::full(self.value(*x).shape(), g));
                }
                Op::Mean(x) => {
                    let xv = self.value(*x);
                    let g = gy.item() / T::of_usize(xv.len().max(1));
                    self.send(&mut grads, *x, Tensor::full(xv.shape(), g));
                }
                Op::Bce { p, target } => {
                    let pv = self.value(*p);
                    let g = gy.item() / T::of_usize(target.len().max(1));
                    let (lo, hi) = (T::of(BCE_EPS), T::one() - T::of(BCE_EPS));
                    let data = pv
                        .data()
                        .iter()
                        .zip(target)
                        .map(
                            |(&pi, &y)| {
                                if pi < lo || pi > hi {
                                    T::zero()
                                } else {
                                    g * (pi - y) / (pi * (T::one() - pi))
                                }
                            },
                        )
                        .collect();
                    self.send(&mut grads, *p, Tensor::new(pv.shape().to_vec(), data).expect("same shape"));
                }
                Op::MeanAbsError { x, target } => {
                    let xv = self.value(*x);
                    let g = gy.item() / T::of_usize(target.len().max(1));
                    let data = xv
                        .data()
                        .iter()
                        .zip(target)
                        .map(|(&a, &b)| {
                            let d = a - b;
                            if d > T::zero() {
                                g
                            } else if d < T::zero() {
                                -g
                            } else {
                                T::zero()
                            }
                        })
                        .collect();
                    self.send(&mut grads, *x, Tensor::new(xv.shape().to_vec(), data).expect("same shape"));
                }
            }
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads, params })
    }

    fn send(&self, grads: &mut [Option<Tensor<T>>], to: Var, g: Tensor<T>) {
        if !self.nodes[to.0].tracked {
            return;
        }
        match &mut grads[to.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn conv2d_backward(
        &self,
        grads: &mut [Option<Tensor<T>>],
        gy: &Tensor<T>,
        x: Var,
        w: Var,
        b: Var,
        (sh, sw): (usize, usize),
    ) {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n, ci, h, wd) = dims4(xv.shape(), "").expect("validated in forward");
        let (co, _, kh, kw) = dims4(wv.shape(), "").expect("validated in forward");
        let (ho, wo) = ((h - kh) / sh + 1, (wd - kw) / sw + 1);
        let gyd = gy.data();
        let (xd, wdat) = (xv.data(), wv.data());

        if self.nodes[b.0].tracked {
            let mut gb = Tensor::zeros(&[co]);
            for b_ in 0..n {
                for (o, g) in gb.data_mut().iter_mut().enumerate() {
                    let base = (b_ * co + o) * ho * wo;
                    *g += gyd[base..base + ho * wo].iter().copied().sum::<T>();
                }
            }
            self.send(grads, b, gb);
        }
        let want_w = self.nodes[w.0].tracked;
        let want_x = self.nodes[x.0].tracked;
        if !want_w && !want_x {
            return;
        }
        let geo = ConvGeometry { ci, h, w: wd, kh, kw, sh, sw, ho, wo };
        let (k, p, plane) = (geo.k(), ho * wo, ci * h * wd);
        let mut gw = Tensor::zeros(wv.shape());
        let mut gx = Tensor::zeros(xv.shape());
        let (gwd, gxd) = (gw.data_mut(), gx.data_mut());
        if sh == 1 && sw == 1 {
            geo.direct_backward(xd, wdat, gyd, n, co, want_w.then_some(&mut *gwd), want_x.then_some(&mut *gxd));
        } else {
            let mut col = vec![T::zero(); p * k];
            let mut gcol = vec![T::zero(); p * k];
            for b_ in 0..n {
                let gb = &gyd[b_ * co * p..(b_ + 1) * co * p];
                if want_w {
                    geo.im2col(&xd[b_ * plane..(b_ + 1) * plane], &mut col);
                    for o in 0..co {
                        let gwr = &mut gwd[o * k..(o + 1) * k];
                        for (q, &g) in gb[o * p..(o + 1) * p].iter().enumerate() {
                            if g != T::zero() {
                                axpy(gwr, g, &col[q * k..(q + 1) * k]);
                            }
                        }
                    }
                }
                if want_x {
                    gcol.iter_mut().for_each(|v| *v = T::zero());
                    for o in 0..co {
                        let wr = &wdat[o * k..(o + 1) * k];
                        for (q, &g) in gb[o * p..(o + 1) * p].iter().enumerate() {
                            if g != T::zero() {
                                axpy(&mut gcol[q * k..(q + 1) * k], g, wr);
                            }
                        }
                    }
                    geo.col2im_add(&gcol, &mut gxd[b_ * plane..(b_ + 1) * plane]);
                }
            }
        }
        if want_w {
            self.send(grads, w, gw);
        }
        if want_x {
            self.send(grads, x, gx);
        }
    }
}

/// Valid-convolution geometry for one sample; im2col rows are output
/// pixels, columns follow the `[ci][kh][kw]` weight layout.
#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    ci: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }

    fn im2col<T: Scalar>(&self, x: &[T], col: &mut [T]) {
        let k = self.k();
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let row = &mut col[(oy * self.wo + ox) * k..(oy * self.wo + ox + 1) * k];
                let mut idx = 0;
                for c in 0..self.ci {
                    for ky in 0..self.kh {
                        let src = (c * self.h + oy * self.sh + ky) * self.w + ox * self.sw;
                        row[idx..idx + self.kw].copy_from_slice(&x[src..src + self.kw]);
                        idx += self.kw;
                    }
                }
            }
        }
    }

    /// Stride-1 forward as row-wise `axpy`s; faster than im2col for small kernels.
    fn direct_forward<T: Scalar>(&self, x: &[T], w: &[T], b: &[T], n: usize, co: usize, out: &mut [T]) {
        let (p, plane) = (self.ho * self.wo, self.ci * self.h * self.w);
        for b_ in 0..n {
            for o in 0..co {
                let ob = &mut out[(b_ * co + o) * p..(b_ * co + o + 1) * p];
                ob.iter_mut().for_each(|v| *v = b[o]);
                for c in 0..self.ci {
                    let xb = &x[b_ * plane + c * self.h * self.w..b_ * plane + (c + 1) * self.h * self.w];
                    for ky in 0..self.kh {
                        for kx in 0..self.kw {
                            let wk = w[((o * self.ci + c) * self.kh + ky) * self.kw + kx];
                            for oy in 0..self.ho {
                                let src = (oy + ky) * self.w + kx;
                                axpy(&mut ob[oy * self.wo..(oy + 1) * self.wo], wk, &xb[src..src + self.wo]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn direct_backward<T: Scalar>(
        &self,
        x: &[T],
        w: &[T],
        gy: &[T],
        n: usize,
        co: usize,
        mut gw: Option<&mut [T]>,
        mut gx: Option<&mut [T]>,
    ) {
        let (p, plane, hw) = (self.ho * self.wo, self.ci * self.h * self.w, self.h * self.w);
        for b_ in 0..n {
            for o in 0..co {
                let gb = &gy[(b_ * co + o) * p..(b_ * co + o + 1) * p];
                for c in 0..self.ci {
                    let xoff = b_ * plane + c * hw;
                    for ky in 0..self.kh {
                        for kx in 0..self.kw {
                            let widx = ((o * self.ci + c) * self.kh + ky) * self.kw + kx;
                            let wk = w[widx];
                            let mut acc = T::zero();
                            for oy in 0..self.ho {
                                let src = xoff + (oy + ky) * self.w + kx;
                                let grow = &gb[oy * self.wo..(oy + 1) * self.wo];
                                if gw.is_some() {
                                    acc += dot(grow, &x[src..src + self.wo]);
                                }
                                if let Some(gx) = gx.as_deref_mut() {
                                    axpy(&mut gx[src..src + self.wo], wk, grow);
                                }
                            }
                            if let Some(gw) = gw.as_deref_mut() {
                                gw[widx] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im_add<T: Scalar>(&self, col: &[T], x: &mut [T]) {
        let k = self.k();
        for oy in 0..self.ho {
            for ox in 0..self.wo {
                let row = &col[(oy * self.wo + ox) * k..(oy * self.wo + ox + 1) * k];
                let mut idx = 0;
                for c in 0..self.ci {
                    for ky in 0..self.kh {
                        let dst = (c * self.h + oy * self.sh + ky) * self.w + ox * self.sw;
                        for (d, &v) in x[dst..dst + self.kw].iter_mut().zip(&row[idx..idx + self.kw]) {
                            *d += v;
                        }
                        idx += self.kw;
                    }
                }
            }
        }
    }
}

/// Mean binary cross-entropy with the same clamping as [`Graph::bce`].
pub fn bce_value<T: Scalar>(p: &[T], target: &[T]) -> T {
    let (lo, hi) = (T::of(BCE_EPS), T::one() - T::of(BCE_EPS));
    let n = T::of_usize(p.len().max(1));
    p.iter()
        .zip(target)
        .map(|(&pi, &y)| {
            let pc = pi.max(lo).min(hi);
            -(y * pc.ln() + (T::one() - y) * (T::one() - pc).ln())
        })
        .sum::<T>()
        / n
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // independent partial sums so the loop vectorizes
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        let x: &[T; 8] = x.try_into().expect("chunk of 8");
        let y: &[T; 8] = y.try_into().expect("chunk of 8");
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn zip_map<T: Scalar>(g: &Tensor<T>, v: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = g.data().iter().zip(v.data()).map(|(&a, &b)| f(a, b)).collect();
    Tensor::new(v.shape().to_vec(), data).expect("same shape")
}

fn dims4(shape: &[usize], what: &str) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [a, b, c, d] => Ok((a, b, c, d)),
        _ => Err(NnError::ShapeMismatch(format!("{what} must be 4-D, got {shape:?}"))),
    }
}

fn dims2(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match *shape {
        [a, b] => Ok((a, b)),
        _ => Err(NnError::ShapeMismatch(format!("{what} must be 2-D, got {shape:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_gradient_is_input() {
        let mut g = Graph::<f64>::new();
        let mut store = ParamStore::new();
        let wi = store.push(Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.0]).unwrap());
        let x = g.input(Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let w = g.param(&store, wi);
        let prod = g.mul(w, x).unwrap();
        let loss = g.sum(prod);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.of(w).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(store.accumulate(&grads), 1);
        assert_eq!(store.grad(wi).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn sigmoid_bce_at_zero_logit() {
        let mut g = Graph::<f64>::new();
        let z = g.tracked_input(Tensor::new(vec![1, 1], vec![0.0]).unwrap());
        let p = g.sigmoid(z);
        let loss = g.bce(p, &[1.0]).unwrap();
        assert!((g.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let grads = g.backward(loss).unwrap();
        assert!((grads.of(z).unwrap().item() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn backward_errors() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let s = g.sum(x);
        assert!(matches!(g.backward(s), Err(NnError::DetachedGraph)));
        let t = g.tracked_input(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
        let y = g.tanh(t);
        assert!(matches!(g.backward(y), Err(NnError::NotScalar(_))));
    }

    #[test]
    fn backward_can_run_twice() {
        let mut g = Graph::<f64>::new();
        let t = g.tracked_input(Tensor::new(vec![3], vec![0.1, -0.2, 0.3]).unwrap());
        let y = g.tanh(t);
        let l = g.sum(y);
        let a = g.backward(l).unwrap();
        let b = g.backward(l).unwrap();
        assert_eq!(a.of(t), b.of(t));
    }

    #[test]
    fn replicate_pad_repeats_edges() {
        let mut g = Graph::<f64>::new();
        let x = g.input(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = g.replicate_pad(x, Padding::uniform(1)).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 4, 4]);
        assert_eq!(
            g.value(y).data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
    }
}

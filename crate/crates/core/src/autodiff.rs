//! Minimal reverse-mode automatic differentiation over `Tensor`.
//!
//! Define-by-run: every op eagerly computes its value and records a
//! backward closure plus parent links. Parameters are leaf `Var`s held by
//! the model across steps; interior nodes are created per forward pass and
//! freed when the loss is dropped. Everything is single-threaded and the
//! accumulation order is fixed by graph construction order, which keeps
//! runs bit-reproducible.

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use crate::scalar::{sigmoid, softplus, Scalar};
use crate::ssm;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Tensor};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

type BackwardFn<T> = Box<dyn Fn(&Tensor<T>, &[Var<T>])>;

struct Node<T: Scalar> {
    id: usize,
    value: RefCell<Tensor<T>>,
    grad: RefCell<Option<Tensor<T>>>,
    parents: Vec<Var<T>>,
    backward: Option<BackwardFn<T>>,
    requires_grad: bool,
}

/// Handle to a node in the computation graph.
pub struct Var<T: Scalar>(Rc<Node<T>>);

impl<T: Scalar> Clone for Var<T> {
    fn clone(&self) -> Self {
        Var(self.0.clone())
    }
}

impl<T: Scalar> Var<T> {
    /// Trainable leaf; gradients accumulate here.
    pub fn param(value: Tensor<T>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value: RefCell::new(value),
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
            requires_grad: true,
        }))
    }

    /// Non-trainable leaf (inputs, targets).
    pub fn constant(value: Tensor<T>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value: RefCell::new(value),
            grad: RefCell::new(None),
            parents: Vec::new(),
            backward: None,
            requires_grad: false,
        }))
    }

    fn from_op(value: Tensor<T>, parents: Vec<Var<T>>, backward: BackwardFn<T>) -> Self {
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value: RefCell::new(value),
            grad: RefCell::new(None),
            parents: if requires_grad { parents } else { Vec::new() },
            backward: if requires_grad { Some(backward) } else { None },
            requires_grad,
        }))
    }

    pub fn value(&self) -> Ref<'_, Tensor<T>> {
        self.0.value.borrow()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn item(&self) -> T {
        self.0.value.borrow().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// In-place value update (optimizer step on a leaf).
    pub fn set_value(&self, value: Tensor<T>) {
        *self.0.value.borrow_mut() = value;
    }

    pub fn grad(&self) -> Option<Tensor<T>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    fn accumulate(&self, g: Tensor<T>) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(existing) => existing.add_assign(&g),
            None => *slot = Some(g),
        }
    }

    /// Reverse pass from a scalar node. Seeds d(loss)/d(loss) = 1 and
    /// accumulates into every grad-requiring leaf reachable from here.
    pub fn backward(&self) {
        assert_eq!(
            self.0.value.borrow().len(),
            1,
            "backward() expects a scalar loss"
        );
        self.backward_seeded(Tensor::from_vec(
            self.0.value.borrow().shape(),
            vec![T::one()],
        ));
    }

    /// Reverse pass with an explicit output cotangent.
    pub fn backward_seeded(&self, seed: Tensor<T>) {
        if !self.0.requires_grad {
            return;
        }
        // iterative postorder topological sort
        let mut order: Vec<Var<T>> = Vec::new();
        let mut visited: HashSet<usize> = HashSet::new();
        let mut stack: Vec<(Var<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.0.id);
        while let Some((node, child_idx)) = stack.pop() {
            let parents = &node.0.parents;
            if child_idx < parents.len() {
                let next = parents[child_idx].clone();
                stack.push((node, child_idx + 1));
                if next.0.requires_grad && visited.insert(next.0.id) {
                    stack.push((next, 0));
                }
            } else {
                order.push(node);
            }
        }
        self.accumulate(seed);
        for node in order.into_iter().rev() {
            if let Some(bw) = &node.0.backward {
                let g = node
                    .0
                    .grad
                    .borrow()
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.0.value.borrow().shape()));
                bw(&g, &node.0.parents);
            }
        }
    }

    // ---- elementwise ----

    pub fn add(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_map(&other.value(), |a, b| a + b);
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                parents[0].accumulate(g.clone());
                parents[1].accumulate(g.clone());
            }),
        )
    }

    pub fn sub(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_map(&other.value(), |a, b| a - b);
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                parents[0].accumulate(g.clone());
                parents[1].accumulate(g.map(|x| -x));
            }),
        )
    }

    pub fn mul(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_map(&other.value(), |a, b| a * b);
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                let a = parents[0].value().clone();
                let b = parents[1].value().clone();
                parents[0].accumulate(g.zip_map(&b, |gv, bv| gv * bv));
                parents[1].accumulate(g.zip_map(&a, |gv, av| gv * av));
            }),
        )
    }

    pub fn div(&self, other: &Var<T>) -> Var<T> {
        let v = self.value().zip_map(&other.value(), |a, b| a / b);
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                let a = parents[0].value().clone();
                let b = parents[1].value().clone();
                parents[0].accumulate(g.zip_map(&b, |gv, bv| gv / bv));
                parents[1].accumulate(
                    g.zip_map(&a.zip_map(&b, |av, bv| -av / (bv * bv)), |gv, dv| gv * dv),
                );
            }),
        )
    }

    pub fn neg(&self) -> Var<T> {
        self.scale(-T::one())
    }

    pub fn scale(&self, s: T) -> Var<T> {
        let v = self.value().scale(s);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g, parents| parents[0].accumulate(g.scale(s))),
        )
    }

    pub fn add_scalar(&self, s: T) -> Var<T> {
        let v = self.value().map(|x| x + s);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(|g, parents| parents[0].accumulate(g.clone())),
        )
    }

    pub fn exp(&self) -> Var<T> {
        let v = self.value().map(|x| x.exp());
        let out = v.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g, parents| parents[0].accumulate(g.zip_map(&out, |gv, y| gv * y))),
        )
    }

    pub fn sigmoid(&self) -> Var<T> {
        let v = self.value().map(sigmoid);
        let out = v.clone();
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g, parents| {
                parents[0].accumulate(g.zip_map(&out, |gv, y| gv * y * (T::one() - y)))
            }),
        )
    }

    pub fn silu(&self) -> Var<T> {
        let v = self.value().map(crate::scalar::silu);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(|g, parents| {
                let x = parents[0].value().clone();
                parents[0].accumulate(g.zip_map(&x, |gv, xv| {
                    let s = sigmoid(xv);
                    gv * s * (T::one() + xv * (T::one() - s))
                }));
            }),
        )
    }

    pub fn softplus(&self) -> Var<T> {
        let v = self.value().map(softplus);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(|g, parents| {
                let x = parents[0].value().clone();
                parents[0].accumulate(g.zip_map(&x, |gv, xv| gv * sigmoid(xv)));
            }),
        )
    }

    // ---- reductions ----

    pub fn sum(&self) -> Var<T> {
        let v = Tensor::scalar(self.value().sum());
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(|g, parents| {
                let gs = g.item();
                let shape = parents[0].value().shape().to_vec();
                parents[0].accumulate(Tensor::full(&shape, gs));
            }),
        )
    }

    pub fn mean(&self) -> Var<T> {
        let n = self.value().len();
        let inv = T::one() / T::of_f64(n as f64);
        let v = Tensor::scalar(self.value().sum() * inv);
        Var::from_op(
            v,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let gs = g.item() * inv;
                let shape = parents[0].value().shape().to_vec();
                parents[0].accumulate(Tensor::full(&shape, gs));
            }),
        )
    }

    // ---- linear algebra ----

    /// [m, k] @ [k, n] -> [m, n].
    pub fn matmul(&self, other: &Var<T>) -> Var<T> {
        let v = matmul(&self.value(), &other.value());
        Var::from_op(
            v,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents| {
                let a = parents[0].value().clone();
                let b = parents[1].value().clone();
                parents[0].accumulate(matmul_nt(g, &b));
                parents[1].accumulate(matmul_tn(&a, g));
            }),
        )
    }

    /// Adds a [n] row vector to every row of [m, n].
    pub fn bias_add(&self, bias: &Var<T>) -> Var<T> {
        let (m, n) = (self.shape()[0], self.shape()[1]);
        assert_eq!(bias.shape(), vec![n], "bias_add width mismatch");
        let mut v = self.value().clone();
        for row in v.data_mut().chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bias.value().data()) {
                *o += b;
            }
        }
        Var::from_op(
            v,
            vec![self.clone(), bias.clone()],
            Box::new(move |g, parents| {
                parents[0].accumulate(g.clone());
                let mut gb = vec![T::zero(); n];
                for row in g.data().chunks(n) {
                    for (o, &gv) in gb.iter_mut().zip(row) {
                        *o += gv;
                    }
                }
                let _ = m;
                parents[1].accumulate(Tensor::from_vec(&[n], gb));
            }),
        )
    }

    /// Multiplies every row of [m, n] by a [n] vector.
    pub fn mul_row_vec(&self, v: &Var<T>) -> Var<T> {
        let n = self.shape()[1];
        assert_eq!(v.shape(), vec![n], "mul_row_vec width mismatch");
        let mut out = self.value().clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &s) in row.iter_mut().zip(v.value().data()) {
                *o *= s;
            }
        }
        Var::from_op(
            out,
            vec![self.clone(), v.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].value().clone();
                let scale = parents[1].value().clone();
                let mut gx = g.clone();
                for row in gx.data_mut().chunks_mut(n) {
                    for (o, &s) in row.iter_mut().zip(scale.data()) {
                        *o *= s;
                    }
                }
                parents[0].accumulate(gx);
                let mut gv = vec![T::zero(); n];
                for (grow, xrow) in g.data().chunks(n).zip(x.data().chunks(n)) {
                    for ((o, &gvl), &xv) in gv.iter_mut().zip(grow).zip(xrow) {
                        *o += gvl * xv;
                    }
                }
                parents[1].accumulate(Tensor::from_vec(&[n], gv));
            }),
        )
    }

    /// Column slice [m, n] -> [m, end-start].
    pub fn slice_cols(&self, start: usize, end: usize) -> Var<T> {
        let shape = self.shape();
        let (m, n) = (shape[0], shape[1]);
        assert!(start < end && end <= n, "slice_cols out of range");
        let w = end - start;
        let mut out = vec![T::zero(); m * w];
        {
            let val = self.value();
            for i in 0..m {
                out[i * w..(i + 1) * w]
                    .copy_from_slice(&val.data()[i * n + start..i * n + end]);
            }
        }
        Var::from_op(
            Tensor::from_vec(&[m, w], out),
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = Tensor::zeros(&[m, n]);
                for i in 0..m {
                    gx.data_mut()[i * n + start..i * n + end]
                        .copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                }
                parents[0].accumulate(gx);
            }),
        )
    }

    /// Row gather: out[t, :] = x[perm[t], :]. With a bijective perm this is
    /// a pure reordering and the backward pass is the inverse scatter.
    pub fn row_gather(&self, perm: Arc<Vec<usize>>) -> Var<T> {
        let shape = self.shape();
        let (m, n) = (shape[0], shape[1]);
        assert_eq!(perm.len(), m, "row_gather perm length");
        let mut out = vec![T::zero(); m * n];
        {
            let val = self.value();
            for (t, &idx) in perm.iter().enumerate() {
                out[t * n..(t + 1) * n].copy_from_slice(&val.data()[idx * n..(idx + 1) * n]);
            }
        }
        let perm_bw = perm.clone();
        Var::from_op(
            Tensor::from_vec(&[m, n], out),
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = Tensor::zeros(&[m, n]);
                for (t, &idx) in perm_bw.iter().enumerate() {
                    let src = &g.data()[t * n..(t + 1) * n];
                    let dst = &mut gx.data_mut()[idx * n..(idx + 1) * n];
                    for (o, &s) in dst.iter_mut().zip(src) {
                        *o += s;
                    }
                }
                parents[0].accumulate(gx);
            }),
        )
    }

    /// [h*w, c] -> [(h/f)*(w/f), f*f*c]; sub-pixel blocks in raster order.
    pub fn space_to_depth(&self, h: usize, w: usize, f: usize) -> Var<T> {
        let shape = self.shape();
        let c = shape[1];
        assert_eq!(shape[0], h * w, "space_to_depth rows");
        assert!(h % f == 0 && w % f == 0, "space_to_depth divisibility");
        let (h2, w2) = (h / f, w / f);
        let fwd = s2d_index_map(h, w, c, f);
        let mut out = vec![T::zero(); h * w * c];
        {
            let val = self.value();
            for (dst, &src) in fwd.iter().enumerate() {
                out[dst] = val.data()[src];
            }
        }
        Var::from_op(
            Tensor::from_vec(&[h2 * w2, f * f * c], out),
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = Tensor::zeros(&[h * w, c]);
                for (dst, &src) in fwd.iter().enumerate() {
                    gx.data_mut()[src] += g.data()[dst];
                }
                parents[0].accumulate(gx);
            }),
        )
    }

    /// [h*w, c] -> [(h*f)*(w*f), c/(f*f)]; inverse of `space_to_depth`.
    pub fn depth_to_space(&self, h: usize, w: usize, f: usize) -> Var<T> {
        let shape = self.shape();
        let c = shape[1];
        assert_eq!(shape[0], h * w, "depth_to_space rows");
        assert_eq!(c % (f * f), 0, "depth_to_space channels");
        let c_out = c / (f * f);
        // reuse the s2d map of the *output* geometry: s2d(out) == input
        let fwd = s2d_index_map(h * f, w * f, c_out, f);
        let mut out = vec![T::zero(); h * w * c];
        {
            let val = self.value();
            for (src, &dst) in fwd.iter().enumerate() {
                out[dst] = val.data()[src];
            }
        }
        Var::from_op(
            Tensor::from_vec(&[h * f * w * f, c_out], out),
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = Tensor::zeros(&[h * w, c]);
                for (src, &dst) in fwd.iter().enumerate() {
                    gx.data_mut()[src] += g.data()[dst];
                }
                parents[0].accumulate(gx);
            }),
        )
    }

    /// Depth-wise 3x3 convolution over a [h*w, c] map, zero padding 1.
    /// Kernel is [c, 9] (row-major 3x3), bias [c].
    pub fn dwconv3x3(&self, kernel: &Var<T>, bias: &Var<T>, h: usize, w: usize) -> Var<T> {
        let c = self.shape()[1];
        assert_eq!(self.shape()[0], h * w, "dwconv3x3 rows");
        assert_eq!(kernel.shape(), vec![c, 9], "dwconv3x3 kernel shape");
        assert_eq!(bias.shape(), vec![c], "dwconv3x3 bias shape");
        let v = dwconv3x3_forward(&self.value(), &kernel.value(), &bias.value(), h, w);
        Var::from_op(
            v,
            vec![self.clone(), kernel.clone(), bias.clone()],
            Box::new(move |g, parents| {
                let x = parents[0].value().clone();
                let k = parents[1].value().clone();
                let c = x.shape()[1];
                let mut gx = Tensor::zeros(&[h * w, c]);
                let mut gk = Tensor::zeros(&[c, 9]);
                let mut gb = vec![T::zero(); c];
                for y in 0..h {
                    for xcol in 0..w {
                        let p = y * w + xcol;
                        let grow = &g.data()[p * c..(p + 1) * c];
                        for (ch, &gv) in grow.iter().enumerate() {
                            gb[ch] += gv;
                        }
                        for ky in 0..3usize {
                            let sy = y as isize + ky as isize - 1;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for kx in 0..3usize {
                                let sx = xcol as isize + kx as isize - 1;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                let q = sy as usize * w + sx as usize;
                                for ch in 0..c {
                                    let gv = grow[ch];
                                    gk.data_mut()[ch * 9 + ky * 3 + kx] +=
                                        gv * x.data()[q * c + ch];
                                    gx.data_mut()[q * c + ch] +=
                                        gv * k.data()[ch * 9 + ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
                parents[0].accumulate(gx);
                parents[1].accumulate(gk);
                parents[2].accumulate(Tensor::from_vec(&[c], gb));
            }),
        )
    }

    /// Per-row layer norm with learned scale and shift: rows of [m, n] are
    /// standardized (biased variance) then scaled by gamma and shifted by
    /// beta.
    pub fn layer_norm(&self, gamma: &Var<T>, beta: &Var<T>, eps: T) -> Var<T> {
        let shape = self.shape();
        let (m, n) = (shape[0], shape[1]);
        assert_eq!(gamma.shape(), vec![n], "layer_norm gamma");
        assert_eq!(beta.shape(), vec![n], "layer_norm beta");
        let x = self.value().clone();
        let mut xhat = Tensor::zeros(&[m, n]);
        let mut inv_std = vec![T::zero(); m];
        let inv_n = T::one() / T::of_f64(n as f64);
        for i in 0..m {
            let row = &x.data()[i * n..(i + 1) * n];
            let mut mean = T::zero();
            for &v in row {
                mean += v;
            }
            mean = mean * inv_n;
            let mut var = T::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var = var * inv_n;
            let istd = T::one() / (var + eps).sqrt();
            inv_std[i] = istd;
            for (o, &v) in xhat.data_mut()[i * n..(i + 1) * n].iter_mut().zip(row) {
                *o = (v - mean) * istd;
            }
        }
        let mut out = xhat.clone();
        {
            let gv = gamma.value();
            let bv = beta.value();
            for row in out.data_mut().chunks_mut(n) {
                for ((o, &gm), &bt) in row.iter_mut().zip(gv.data()).zip(bv.data()) {
                    *o = *o * gm + bt;
                }
            }
        }
        let xhat_saved = xhat;
        Var::from_op(
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, parents| {
                let gamma_v = parents[1].value().clone();
                let mut gx = Tensor::zeros(&[m, n]);
                let mut ggamma = vec![T::zero(); n];
                let mut gbeta = vec![T::zero(); n];
                for i in 0..m {
                    let grow = &g.data()[i * n..(i + 1) * n];
                    let xrow = &xhat_saved.data()[i * n..(i + 1) * n];
                    let mut mean_gj = T::zero();
                    let mut mean_gjx = T::zero();
                    for ((&gv, &xh), &gm) in grow.iter().zip(xrow).zip(gamma_v.data()) {
                        let gj = gv * gm;
                        mean_gj += gj;
                        mean_gjx += gj * xh;
                    }
                    mean_gj = mean_gj * inv_n;
                    mean_gjx = mean_gjx * inv_n;
                    let istd = inv_std[i];
                    for (ch, ((&gv, &xh), &gm)) in
                        grow.iter().zip(xrow).zip(gamma_v.data()).enumerate()
                    {
                        let gj = gv * gm;
                        gx.data_mut()[i * n + ch] = istd * (gj - mean_gj - xh * mean_gjx);
                        ggamma[ch] += gv * xh;
                        gbeta[ch] += gv;
                    }
                }
                parents[0].accumulate(gx);
                parents[1].accumulate(Tensor::from_vec(&[n], ggamma));
                parents[2].accumulate(Tensor::from_vec(&[n], gbeta));
            }),
        )
    }

    /// Row-wise softmax over [m, k].
    pub fn softmax_rows(&self) -> Var<T> {
        let shape = self.shape();
        let (m, k) = (shape[0], shape[1]);
        let mut out = self.value().clone();
        for row in out.data_mut().chunks_mut(k) {
            let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v = *v / z;
            }
        }
        let probs = out.clone();
        Var::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut gx = Tensor::zeros(&[m, k]);
                for i in 0..m {
                    let grow = &g.data()[i * k..(i + 1) * k];
                    let prow = &probs.data()[i * k..(i + 1) * k];
                    let mut dot = T::zero();
                    for (&gv, &p) in grow.iter().zip(prow) {
                        dot += gv * p;
                    }
                    for ch in 0..k {
                        gx.data_mut()[i * k + ch] = prow[ch] * (grow[ch] - dot);
                    }
                }
                parents[0].accumulate(gx);
            }),
        )
    }

    /// Mean softmax cross-entropy of [m, k] logits against integer labels.
    pub fn cross_entropy_mean(&self, labels: Arc<Vec<usize>>) -> Var<T> {
        let shape = self.shape();
        let (m, k) = (shape[0], shape[1]);
        assert_eq!(labels.len(), m, "cross_entropy labels length");
        let x = self.value().clone();
        let mut total = T::zero();
        for (i, &lbl) in labels.iter().enumerate() {
            let row = &x.data()[i * k..(i + 1) * k];
            let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let mut z = T::zero();
            for &v in row {
                z += (v - mx).exp();
            }
            total += mx + z.ln() - row[lbl];
        }
        let inv_m = T::one() / T::of_f64(m as f64);
        let labels_bw = labels.clone();
        Var::from_op(
            Tensor::scalar(total * inv_m),
            vec![self.clone()],
            Box::new(move |g, parents| {
                let gs = g.item() * inv_m;
                let x = parents[0].value().clone();
                let mut gx = Tensor::zeros(&[m, k]);
                for (i, &lbl) in labels_bw.iter().enumerate() {
                    let row = &x.data()[i * k..(i + 1) * k];
                    let mx = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
                    let mut z = T::zero();
                    for &v in row {
                        z += (v - mx).exp();
                    }
                    for ch in 0..k {
                        let p = (row[ch] - mx).exp() / z;
                        let onehot = if ch == lbl { T::one() } else { T::zero() };
                        gx.data_mut()[i * k + ch] = gs * (p - onehot);
                    }
                }
                parents[0].accumulate(gx);
            }),
        )
    }

    /// Selective-SSM scan: channels-last token sequence [L, C] with
    /// per-token delta [L, C], projections b/c [L, N] and the diagonal
    /// state matrix a [C, N]. The D skip is applied by the caller.
    pub fn ssm_scan(
        x: &Var<T>,
        delta: &Var<T>,
        b_seq: &Var<T>,
        c_seq: &Var<T>,
        a: &Var<T>,
        exact_zoh: bool,
    ) -> Var<T> {
        let (y, h_all) = ssm::scan_forward(
            &x.value(),
            &delta.value(),
            &b_seq.value(),
            &c_seq.value(),
            &a.value(),
            exact_zoh,
        );
        Var::from_op(
            y,
            vec![
                x.clone(),
                delta.clone(),
                b_seq.clone(),
                c_seq.clone(),
                a.clone(),
            ],
            Box::new(move |g, parents| {
                let grads = ssm::scan_backward(
                    g,
                    &parents[0].value(),
                    &parents[1].value(),
                    &parents[2].value(),
                    &parents[3].value(),
                    &parents[4].value(),
                    exact_zoh,
                    &h_all,
                );
                parents[0].accumulate(grads.gx);
                parents[1].accumulate(grads.gdelta);
                parents[2].accumulate(grads.gb);
                parents[3].accumulate(grads.gc);
                parents[4].accumulate(grads.ga);
            }),
        )
    }
}

fn s2d_index_map(h: usize, w: usize, c: usize, f: usize) -> Vec<usize> {
    // flat output element index -> flat input element index, for
    // out[(y2, x2), (dy*f + dx)*c + ch] = in[(y2*f + dy, x2*f + dx), ch]
    let (h2, w2) = (h / f, w / f);
    let mut map = vec![0usize; h * w * c];
    for y2 in 0..h2 {
        for x2 in 0..w2 {
            let orow = (y2 * w2 + x2) * f * f * c;
            for dy in 0..f {
                for dx in 0..f {
                    let irow = ((y2 * f + dy) * w + (x2 * f + dx)) * c;
                    let block = (dy * f + dx) * c;
                    for ch in 0..c {
                        map[orow + block + ch] = irow + ch;
                    }
                }
            }
        }
    }
    map
}

fn dwconv3x3_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    h: usize,
    w: usize,
) -> Tensor<T> {
    let c = x.shape()[1];
    let mut out = Tensor::zeros(&[h * w, c]);
    for y in 0..h {
        for xcol in 0..w {
            let p = y * w + xcol;
            let orow = &mut out.data_mut()[p * c..(p + 1) * c];
            orow.copy_from_slice(bias.data());
            for ky in 0..3usize {
                let sy = y as isize + ky as isize - 1;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in 0..3usize {
                    let sx = xcol as isize + kx as isize - 1;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    let q = sy as usize * w + sx as usize;
                    for ch in 0..c {
                        orow[ch] += kernel.data()[ch * 9 + ky * 3 + kx] * x.data()[q * c + ch];
                    }
                }
            }
        }
    }
    out
}

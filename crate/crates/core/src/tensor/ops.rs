//! Graph operations: forward evaluation and backward rules.

use super::{Graph, Node, TensorError, Var};
use crate::scalar::Scalar;

pub(crate) enum OpKind<T> {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale(T),
    Clamp { lo: T, hi: T },
    Relu,
    Conv2d { stride: usize, padding: usize },
    Dense,
    MaxPool { switches: Vec<usize> },
    Reshape,
    Sum,
    SoftmaxCrossEntropy { target: usize, softmax: Vec<T> },
    GaussianBlob { sigma: T },
    Blend,
}

impl<T: Scalar> Graph<T> {
    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).requires_grad)
    }

    /// Elementwise sum; one operand may be a single-element tensor, which
    /// broadcasts over the other.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("add", OpKind::Add, a, b, |x, y| x + y)
    }

    /// Elementwise difference, with single-element broadcast as in [`Graph::add`].
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("sub", OpKind::Sub, a, b, |x, y| x - y)
    }

    /// Elementwise product, with single-element broadcast as in [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary("mul", OpKind::Mul, a, b, |x, y| x * y)
    }

    fn binary(
        &mut self,
        name: &'static str,
        op: OpKind<T>,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
    ) -> Result<Var, TensorError> {
        let (an, bn) = (self.node(a), self.node(b));
        let shape = broadcast_shape(name, &an.shape, &bn.shape)?;
        let (ad, bd) = (&an.data, &bn.data);
        let numel = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for i in 0..numel {
            let x = if ad.len() == 1 { ad[0] } else { ad[i] };
            let y = if bd.len() == 1 { bd[0] } else { bd[i] };
            data.push(f(x, y));
        }
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(shape, data, rg, op, vec![a, b]))
    }

    /// Multiplication by a compile-time-known scalar constant.
    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let data = self.node(a).data.iter().map(|&v| v * k).collect();
        let shape = self.node(a).shape.clone();
        let rg = self.node(a).requires_grad;
        self.push(shape, data, rg, OpKind::Scale(k), vec![a])
    }

    /// Elementwise clamp to `[lo, hi]`. The gradient passes only where the
    /// input lies strictly inside the interval.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        assert!(lo <= hi, "clamp bounds out of order");
        let data = self.node(a).data.iter().map(|&v| v.max(lo).min(hi)).collect();
        let shape = self.node(a).shape.clone();
        let rg = self.node(a).requires_grad;
        self.push(shape, data, rg, OpKind::Clamp { lo, hi }, vec![a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.node(a).data.iter().map(|&v| v.max(T::zero())).collect();
        let shape = self.node(a).shape.clone();
        let rg = self.node(a).requires_grad;
        self.push(shape, data, rg, OpKind::Relu, vec![a])
    }

    /// Cross-correlation of a `[C,H,W]` input with a `[K,C,kh,kw]` kernel,
    /// zero padding, no bias.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var, TensorError> {
        if stride == 0 {
            return Err(TensorError::ZeroStride);
        }
        let ishape = self.node(input).shape.clone();
        let kshape = self.node(kernel).shape.clone();
        if ishape.len() != 3 {
            return Err(TensorError::RankMismatch { op: "conv2d input", expected: 3, shape: ishape });
        }
        if kshape.len() != 4 {
            return Err(TensorError::RankMismatch { op: "conv2d kernel", expected: 4, shape: kshape });
        }
        let (c, h, w) = (ishape[0], ishape[1], ishape[2]);
        let (k, kc, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
        if c != kc {
            return Err(TensorError::ChannelMismatch { input: c, kernel: kc });
        }
        if kh > h + 2 * padding || kw > w + 2 * padding {
            return Err(TensorError::KernelTooLarge { kh, kw, h: h + 2 * padding, w: w + 2 * padding });
        }
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let idata = &self.node(input).data;
        let kdata = &self.node(kernel).data;
        let mut out = vec![T::zero(); k * oh * ow];
        for ko in 0..k {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = T::zero();
                    for ci in 0..c {
                        for a in 0..kh {
                            let i = oi * stride + a;
                            if i < padding || i >= h + padding {
                                continue;
                            }
                            let irow = (ci * h + (i - padding)) * w;
                            let krow = ((ko * c + ci) * kh + a) * kw;
                            for b in 0..kw {
                                let j = oj * stride + b;
                                if j < padding || j >= w + padding {
                                    continue;
                                }
                                acc = acc + idata[irow + (j - padding)] * kdata[krow + b];
                            }
                        }
                    }
                    out[(ko * oh + oi) * ow + oj] = acc;
                }
            }
        }
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(vec![k, oh, ow], out, rg, OpKind::Conv2d { stride, padding }, vec![input, kernel]))
    }

    /// Affine map `weight[m,n] * input[n] + bias[m]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let xs = self.node(input).shape.clone();
        let ws = self.node(weight).shape.clone();
        let bs = self.node(bias).shape.clone();
        if xs.len() != 1 {
            return Err(TensorError::RankMismatch { op: "dense input", expected: 1, shape: xs });
        }
        if ws.len() != 2 {
            return Err(TensorError::RankMismatch { op: "dense weight", expected: 2, shape: ws });
        }
        if ws[1] != xs[0] || bs != [ws[0]] {
            return Err(TensorError::ShapeMismatch { op: "dense", lhs: ws, rhs: xs });
        }
        let (m, n) = (ws[0], ws[1]);
        let x = &self.node(input).data;
        let wd = &self.node(weight).data;
        let bd = &self.node(bias).data;
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let row = &wd[i * n..(i + 1) * n];
            let mut acc = bd[i];
            for j in 0..n {
                acc = acc + row[j] * x[j];
            }
            out.push(acc);
        }
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(vec![m], out, rg, OpKind::Dense, vec![input, weight, bias]))
    }

    /// Non-overlapping max pooling with a square window; gradient routes to
    /// the first maximal element of each window in row-major order.
    pub fn maxpool2d(&mut self, input: Var, window: usize) -> Result<Var, TensorError> {
        let shape = self.node(input).shape.clone();
        if shape.len() != 3 {
            return Err(TensorError::RankMismatch { op: "maxpool2d", expected: 3, shape });
        }
        let (c, h, w) = (shape[0], shape[1], shape[2]);
        if window == 0 || window > h || window > w {
            return Err(TensorError::WindowTooLarge { window, h, w });
        }
        let (oh, ow) = (h / window, w / window);
        let data = &self.node(input).data;
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut switches = Vec::with_capacity(c * oh * ow);
        for ci in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut best_idx = (ci * h + oi * window) * w + oj * window;
                    let mut best = data[best_idx];
                    for a in 0..window {
                        for b in 0..window {
                            let idx = (ci * h + oi * window + a) * w + oj * window + b;
                            if data[idx] > best {
                                best = data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    out.push(best);
                    switches.push(best_idx);
                }
            }
        }
        let rg = self.node(input).requires_grad;
        Ok(self.push(vec![c, oh, ow], out, rg, OpKind::MaxPool { switches }, vec![input]))
    }

    /// Reshapes to a rank-1 tensor.
    pub fn flatten(&mut self, input: Var) -> Var {
        let data = self.node(input).data.clone();
        let rg = self.node(input).requires_grad;
        let numel = data.len();
        self.push(vec![numel], data, rg, OpKind::Reshape, vec![input])
    }

    /// Sum of all elements, as a single-element tensor.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.node(input).data.iter().copied().sum();
        let rg = self.node(input).requires_grad;
        self.push(vec![1], vec![total], rg, OpKind::Sum, vec![input])
    }

    /// Numerically stabilized cross-entropy of a logit vector against a class
    /// index; the backward rule is `softmax(logits) - onehot(target)`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let shape = self.node(logits).shape.clone();
        if shape.len() != 1 {
            return Err(TensorError::RankMismatch { op: "softmax_cross_entropy", expected: 1, shape });
        }
        let n = shape[0];
        if target >= n {
            return Err(TensorError::TargetOutOfRange { target, classes: n });
        }
        let data = &self.node(logits).data;
        let max = data.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = data.iter().map(|&v| (v - max).exp()).collect();
        let denom: T = exps.iter().copied().sum();
        let softmax: Vec<T> = exps.iter().map(|&e| e / denom).collect();
        let loss = denom.ln() - (data[target] - max);
        let rg = self.node(logits).requires_grad;
        Ok(self.push(vec![1], vec![loss], rg, OpKind::SoftmaxCrossEntropy { target, softmax }, vec![logits]))
    }

    /// Unnormalized isotropic Gaussian over a `rows x cols` pixel grid,
    /// centered at a continuous `(row, col)` tensor of shape `[2]`. Peak value
    /// is 1 when the center lies on a pixel; differentiable in the center.
    pub fn gaussian_blob(
        &mut self,
        center: Var,
        sigma: T,
        rows: usize,
        cols: usize,
    ) -> Result<Var, TensorError> {
        let shape = self.node(center).shape.clone();
        if shape != [2] {
            return Err(TensorError::RankMismatch { op: "gaussian_blob center", expected: 1, shape });
        }
        let (fr, fc) = (self.node(center).data[0], self.node(center).data[1]);
        let denom = T::of(2.0) * sigma * sigma;
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            let dr = T::of_usize(r) - fr;
            let dr2 = dr * dr;
            for c in 0..cols {
                let dc = T::of_usize(c) - fc;
                data.push((-(dr2 + dc * dc) / denom).exp());
            }
        }
        let rg = self.node(center).requires_grad;
        Ok(self.push(vec![rows, cols], data, rg, OpKind::GaussianBlob { sigma }, vec![center]))
    }

    /// Per-pixel convex combination `w*x + (1-w)*y` with the `[H,W]` weight
    /// broadcast over the channels of `[C,H,W]` images.
    pub fn blend(&mut self, weight: Var, x: Var, y: Var) -> Result<Var, TensorError> {
        let ws = self.node(weight).shape.clone();
        let xs = self.node(x).shape.clone();
        let ys = self.node(y).shape.clone();
        if ws.len() != 2 {
            return Err(TensorError::RankMismatch { op: "blend weight", expected: 2, shape: ws });
        }
        if xs.len() != 3 {
            return Err(TensorError::RankMismatch { op: "blend image", expected: 3, shape: xs });
        }
        if xs != ys {
            return Err(TensorError::ShapeMismatch { op: "blend", lhs: xs, rhs: ys });
        }
        if ws != xs[1..] {
            return Err(TensorError::ShapeMismatch { op: "blend", lhs: ws, rhs: xs });
        }
        let (c, hw) = (xs[0], ws[0] * ws[1]);
        let wd = &self.node(weight).data;
        let xd = &self.node(x).data;
        let yd = &self.node(y).data;
        let mut data = Vec::with_capacity(c * hw);
        for ci in 0..c {
            for p in 0..hw {
                let wv = wd[p];
                data.push(wv * xd[ci * hw + p] + (T::one() - wv) * yd[ci * hw + p]);
            }
        }
        let rg = self.any_grad(&[weight, x, y]);
        Ok(self.push(xs, data, rg, OpKind::Blend, vec![weight, x, y]))
    }
}

/// Accumulates `out_grad`-weighted contributions into the gradient table
/// entries of the node's inputs.
pub(crate) fn backprop<T: Scalar>(
    nodes: &[Node<T>],
    idx: usize,
    out_grad: &[T],
    table: &mut [Option<Vec<T>>],
) {
    let node = &nodes[idx];
    let inputs = &node.inputs;
    // Fetch-or-create the gradient buffer for a differentiable input.
    macro_rules! buf {
        ($v:expr) => {{
            let v: Var = $v;
            if nodes[v.0].requires_grad {
                Some(table[v.0].get_or_insert_with(|| vec![T::zero(); nodes[v.0].data.len()]))
            } else {
                None
            }
        }};
    }
    match &node.op {
        OpKind::Leaf => {}
        OpKind::Add => {
            for side in 0..2 {
                if let Some(g) = buf!(inputs[side]) {
                    accumulate_broadcast(g, out_grad, |go, _| go);
                }
            }
        }
        OpKind::Sub => {
            if let Some(g) = buf!(inputs[0]) {
                accumulate_broadcast(g, out_grad, |go, _| go);
            }
            if let Some(g) = buf!(inputs[1]) {
                accumulate_broadcast(g, out_grad, |go, _| -go);
            }
        }
        OpKind::Mul => {
            let (a, b) = (inputs[0], inputs[1]);
            let bd = &nodes[b.0].data;
            if let Some(g) = buf!(a) {
                accumulate_broadcast(g, out_grad, |go, i| go * pick(bd, i));
            }
            let ad = &nodes[a.0].data;
            if let Some(g) = buf!(b) {
                accumulate_broadcast(g, out_grad, |go, i| go * pick(ad, i));
            }
        }
        OpKind::Scale(k) => {
            if let Some(g) = buf!(inputs[0]) {
                for (gi, &go) in g.iter_mut().zip(out_grad) {
                    *gi = *gi + *k * go;
                }
            }
        }
        OpKind::Clamp { lo, hi } => {
            let input = &nodes[inputs[0].0].data;
            if let Some(g) = buf!(inputs[0]) {
                for i in 0..g.len() {
                    if input[i] > *lo && input[i] < *hi {
                        g[i] = g[i] + out_grad[i];
                    }
                }
            }
        }
        OpKind::Relu => {
            let input = &nodes[inputs[0].0].data;
            if let Some(g) = buf!(inputs[0]) {
                for i in 0..g.len() {
                    if input[i] > T::zero() {
                        g[i] = g[i] + out_grad[i];
                    }
                }
            }
        }
        OpKind::Conv2d { stride, padding } => {
            backprop_conv2d(nodes, idx, out_grad, table, *stride, *padding);
        }
        OpKind::Dense => {
            let (x, w) = (inputs[0], inputs[1]);
            let n = nodes[x.0].data.len();
            let m = out_grad.len();
            let wd = &nodes[w.0].data;
            if let Some(g) = buf!(x) {
                for i in 0..m {
                    let row = &wd[i * n..(i + 1) * n];
                    let go = out_grad[i];
                    for j in 0..n {
                        g[j] = g[j] + go * row[j];
                    }
                }
            }
            let xd = &nodes[x.0].data;
            if let Some(g) = buf!(w) {
                for i in 0..m {
                    let go = out_grad[i];
                    for j in 0..n {
                        g[i * n + j] = g[i * n + j] + go * xd[j];
                    }
                }
            }
            if let Some(g) = buf!(inputs[2]) {
                for i in 0..m {
                    g[i] = g[i] + out_grad[i];
                }
            }
        }
        OpKind::MaxPool { switches, .. } => {
            if let Some(g) = buf!(inputs[0]) {
                for (o, &src) in switches.iter().enumerate() {
                    g[src] = g[src] + out_grad[o];
                }
            }
        }
        OpKind::Reshape => {
            if let Some(g) = buf!(inputs[0]) {
                for (gi, &go) in g.iter_mut().zip(out_grad) {
                    *gi = *gi + go;
                }
            }
        }
        OpKind::Sum => {
            if let Some(g) = buf!(inputs[0]) {
                for gi in g.iter_mut() {
                    *gi = *gi + out_grad[0];
                }
            }
        }
        OpKind::SoftmaxCrossEntropy { target, softmax } => {
            if let Some(g) = buf!(inputs[0]) {
                for (i, gi) in g.iter_mut().enumerate() {
                    let onehot = if i == *target { T::one() } else { T::zero() };
                    *gi = *gi + out_grad[0] * (softmax[i] - onehot);
                }
            }
        }
        OpKind::GaussianBlob { sigma } => {
            let cols = node.shape[1];
            let (fr, fc) = (nodes[inputs[0].0].data[0], nodes[inputs[0].0].data[1]);
            let inv_s2 = (*sigma * *sigma).recip();
            if let Some(g) = buf!(inputs[0]) {
                let mut dfr = T::zero();
                let mut dfc = T::zero();
                for (p, &go) in out_grad.iter().enumerate() {
                    let common = go * node.data[p] * inv_s2;
                    dfr = dfr + common * (T::of_usize(p / cols) - fr);
                    dfc = dfc + common * (T::of_usize(p % cols) - fc);
                }
                g[0] = g[0] + dfr;
                g[1] = g[1] + dfc;
            }
        }
        OpKind::Blend => {
            let (w, x, y) = (inputs[0], inputs[1], inputs[2]);
            let hw = nodes[w.0].data.len();
            let c = nodes[x.0].data.len() / hw;
            let xd = &nodes[x.0].data;
            let yd = &nodes[y.0].data;
            if let Some(g) = buf!(w) {
                for ci in 0..c {
                    for p in 0..hw {
                        let o = ci * hw + p;
                        g[p] = g[p] + out_grad[o] * (xd[o] - yd[o]);
                    }
                }
            }
            let wd = &nodes[w.0].data;
            if let Some(g) = buf!(x) {
                for ci in 0..c {
                    for p in 0..hw {
                        let o = ci * hw + p;
                        g[o] = g[o] + out_grad[o] * wd[p];
                    }
                }
            }
            if let Some(g) = buf!(y) {
                for ci in 0..c {
                    for p in 0..hw {
                        let o = ci * hw + p;
                        g[o] = g[o] + out_grad[o] * (T::one() - wd[p]);
                    }
                }
            }
        }
    }
}

fn backprop_conv2d<T: Scalar>(
    nodes: &[Node<T>],
    idx: usize,
    out_grad: &[T],
    table: &mut [Option<Vec<T>>],
    stride: usize,
    padding: usize,
) {
    let node = &nodes[idx];
    let (input, kernel) = (node.inputs[0], node.inputs[1]);
    let ishape = &nodes[input.0].shape;
    let kshape = &nodes[kernel.0].shape;
    let (c, h, w) = (ishape[0], ishape[1], ishape[2]);
    let (k, kh, kw) = (kshape[0], kshape[2], kshape[3]);
    let (oh, ow) = (node.shape[1], node.shape[2]);
    let idata = &nodes[input.0].data;
    let kdata = &nodes[kernel.0].data;
    let want_input = nodes[input.0].requires_grad;
    let want_kernel = nodes[kernel.0].requires_grad;
    let mut dinput = want_input.then(|| vec![T::zero(); idata.len()]);
    let mut dkernel = want_kernel.then(|| vec![T::zero(); kdata.len()]);
    for ko in 0..k {
        for oi in 0..oh {
            for oj in 0..ow {
                let go = out_grad[(ko * oh + oi) * ow + oj];
                if go == T::zero() {
                    continue;
                }
                for ci in 0..c {
                    for a in 0..kh {
                        let i = oi * stride + a;
                        if i < padding || i >= h + padding {
                            continue;
                        }
                        let irow = (ci * h + (i - padding)) * w;
                        let krow = ((ko * c + ci) * kh + a) * kw;
                        for b in 0..kw {
                            let j = oj * stride + b;
                            if j < padding || j >= w + padding {
                                continue;
                            }
                            let ii = irow + (j - padding);
                            if let Some(d) = dinput.as_mut() {
                                d[ii] = d[ii] + go * kdata[krow + b];
                            }
                            if let Some(d) = dkernel.as_mut() {
                                d[krow + b] = d[krow + b] + go * idata[ii];
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(d) = dinput {
        let g = table[input.0].get_or_insert_with(|| vec![T::zero(); idata.len()]);
        for (gi, di) in g.iter_mut().zip(d) {
            *gi = *gi + di;
        }
    }
    if let Some(d) = dkernel {
        let g = table[kernel.0].get_or_insert_with(|| vec![T::zero(); kdata.len()]);
        for (gi, di) in g.iter_mut().zip(d) {
            *gi = *gi + di;
        }
    }
}

/// Value of a possibly size-1-broadcast operand at output position `i`.
fn pick<T: Scalar>(data: &[T], i: usize) -> T {
    if data.len() == 1 {
        data[0]
    } else {
        data[i]
    }
}

/// Adds `f(out_grad[i], i)` into a gradient buffer, reducing over the output
/// when the buffer belongs to a size-1 broadcast operand.
fn accumulate_broadcast<T: Scalar>(grad: &mut [T], out_grad: &[T], f: impl Fn(T, usize) -> T) {
    if grad.len() == 1 && out_grad.len() > 1 {
        let mut acc = T::zero();
        for (i, &go) in out_grad.iter().enumerate() {
            acc = acc + f(go, i);
        }
        grad[0] = grad[0] + acc;
    } else {
        for (i, &go) in out_grad.iter().enumerate() {
            grad[i] = grad[i] + f(go, i);
        }
    }
}

fn broadcast_shape(
    op: &'static str,
    lhs: &[usize],
    rhs: &[usize],
) -> Result<Vec<usize>, TensorError> {
    let ln: usize = lhs.iter().product();
    let rn: usize = rhs.iter().product();
    if lhs == rhs {
        Ok(lhs.to_vec())
    } else if ln == 1 {
        Ok(rhs.to_vec())
    } else if rn == 1 {
        Ok(lhs.to_vec())
    } else {
        Err(TensorError::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() })
    }
}

use super::kernels::{self, Conv3dGeom};
use super::{Real, Tensor};
use crate::error::{contract_err, dim_err, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    Relu(Var),
    Gelu(Var),
    Abs(Var),
    Conv3d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: Conv3dGeom,
    },
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gather {
        x: Var,
        index: Vec<usize>,
    },
    Reshape(Var),
    Concat(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Define-by-run computation record. A fresh tape is built for every forward
/// pass; values are immutable once recorded and every node's inputs precede it.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient in [`Tape::backward`].
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        self.push(Tensor { shape, data }, op, rg)
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(dim_err!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            ));
        }
        Ok(())
    }

    fn matrix_dims(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(dim_err!("{what}: expected a matrix, got shape {s:?}")),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul lhs")?;
        let (k2, n) = self.matrix_dims(b, "matmul rhs")?;
        if k != k2 {
            return Err(dim_err!("matmul inner extents {k} and {k2} differ"));
        }
        let out = kernels::matmul(self.data(a), self.data(b), m, k, n);
        Ok(self.derived(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Var {
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.derived(shape, data, op, &[a, b])
    }

    fn map(&mut self, x: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let data = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.derived(shape, data, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        self.map(x, Op::Scale(x, factor), |v| v * factor)
    }

    /// `x[..., n] + bias[n]`, broadcast along every leading axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self
            .shape(x)
            .last()
            .ok_or_else(|| dim_err!("add_bias on a scalar"))?;
        if self.shape(bias) != [n] {
            return Err(dim_err!(
                "bias shape {:?} does not match trailing extent {n}",
                self.shape(bias)
            ));
        }
        let b = self.data(bias);
        let data = self
            .data(x)
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bv)| v + bv))
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.derived(shape, data, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, Op::Relu(x), |v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, Op::Gelu(x), kernels::gelu)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.map(x, Op::Abs(x), |v| v.abs())
    }

    /// Unpadded strided cross-correlation of `input[C_in,D,H,W]` with
    /// `weight[C_out,C_in,k,k,k]`. Each spatial extent must tile exactly.
    pub fn conv3d(&mut self, input: Var, weight: Var, bias: Var, stride: usize) -> Result<Var> {
        let (c_in, in_dims) = match *self.shape(input) {
            [c, d, h, w] => (c, [d, h, w]),
            ref s => return Err(dim_err!("conv3d input must be [C,D,H,W], got {s:?}")),
        };
        let (c_out, kernel) = match *self.shape(weight) {
            [co, ci, kz, ky, kx] if ci == c_in && kz == ky && ky == kx => (co, kz),
            ref s => {
                return Err(dim_err!(
                    "conv3d weight {s:?} incompatible with {c_in} input channels"
                ))
            }
        };
        if self.shape(bias) != [c_out] {
            return Err(dim_err!(
                "conv3d bias {:?} does not match {c_out} output channels",
                self.shape(bias)
            ));
        }
        if stride == 0 || kernel == 0 {
            return Err(dim_err!("conv3d kernel and stride must be positive"));
        }
        let mut out_dims = [0; 3];
        for (axis, &extent) in in_dims.iter().enumerate() {
            if extent < kernel || (extent - kernel) % stride != 0 {
                return Err(dim_err!(
                    "conv3d spatial extent {extent} (axis {axis}) not tiled by kernel {kernel} stride {stride}"
                ));
            }
            out_dims[axis] = (extent - kernel) / stride + 1;
        }
        let geom = Conv3dGeom {
            c_in,
            c_out,
            in_dims,
            out_dims,
            kernel,
            stride,
        };
        let out = kernels::conv3d(self.data(input), self.data(weight), self.data(bias), &geom);
        let shape = vec![c_out, out_dims[0], out_dims[1], out_dims[2]];
        Ok(self.derived(
            shape,
            out,
            Op::Conv3d {
                input,
                weight,
                bias,
                geom,
            },
            &[input, weight, bias],
        ))
    }

    pub fn softmax_lastdim(&mut self, x: Var) -> Result<Var> {
        let n = match self.shape(x).last() {
            Some(&n) if n > 0 => n,
            _ => return Err(dim_err!("softmax needs a non-empty trailing axis")),
        };
        let out = kernels::softmax_rows(self.data(x), n);
        let shape = self.shape(x).to_vec();
        Ok(self.derived(shape, out, Op::Softmax(x), &[x]))
    }

    /// Normalizes each trailing-axis slice to zero mean and unit (biased)
    /// variance, then applies `gain` and `shift`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let d = match self.shape(x).last() {
            Some(&d) if d > 0 => d,
            _ => return Err(dim_err!("layer_norm needs a non-empty trailing axis")),
        };
        if self.shape(gain) != [d] || self.shape(shift) != [d] {
            return Err(dim_err!(
                "layer_norm affine shapes {:?}/{:?} do not match {d}",
                self.shape(gain),
                self.shape(shift)
            ));
        }
        let eps = T::lit(eps);
        let dn = T::lit(d as f64);
        let g = self.data(gain);
        let b = self.data(shift);
        let xs = self.data(x);
        let rows = xs.len() / d;
        let mut xhat = Vec::with_capacity(xs.len());
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xs.len());
        for row in xs.chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * r;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        let shape = self.shape(x).to_vec();
        Ok(self.derived(
            shape,
            out,
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                rstd,
            },
            &[x, gain, shift],
        ))
    }

    /// `out.flat[i] = x.flat[index[i]]`. Covers transposes, slices and
    /// block rearrangements; the backward rule scatter-adds.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(dim_err!(
                "gather shape {shape:?} needs {n} indices, got {}",
                index.len()
            ));
        }
        let src = self.data(x);
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(dim_err!("gather index {bad} out of bounds for {} elements", src.len()));
        }
        let data = index.iter().map(|&i| src[i]).collect();
        Ok(self.derived(shape, data, Op::Gather { x, index }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != self.value(x).numel() {
            return Err(dim_err!("cannot reshape {:?} into {shape:?}", self.shape(x)));
        }
        let data = self.data(x).to_vec();
        Ok(self.derived(shape.to_vec(), data, Op::Reshape(x), &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "transpose")?;
        let index = (0..c)
            .flat_map(|j| (0..r).map(move |i| i * c + j))
            .collect();
        self.gather(x, index, vec![c, r])
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "slice_cols")?;
        if start + len > c {
            return Err(dim_err!("column slice {start}..{} exceeds {c}", start + len));
        }
        let index = (0..r)
            .flat_map(|i| (start..start + len).map(move |j| i * c + j))
            .collect();
        self.gather(x, index, vec![r, len])
    }

    /// Stacks matrices with equal column counts along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| dim_err!("concat of zero tensors"))?;
        let (_, c) = self.matrix_dims(first, "concat")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, pc) = self.matrix_dims(p, "concat")?;
            if pc != c {
                return Err(dim_err!("concat column counts {c} and {pc} differ"));
            }
            rows += r;
            data.extend_from_slice(self.data(p));
        }
        Ok(self.derived(vec![rows, c], data, Op::Concat(parts.to_vec()), parts))
    }

    /// Column means of a matrix: `[R, C] -> [1, C]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims(x, "mean_rows")?;
        if r == 0 {
            return Err(dim_err!("mean over zero rows"));
        }
        let inv = T::one() / T::lit(r as f64);
        let mut out = vec![T::zero(); c];
        for row in self.data(x).chunks_exact(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = *o + v;
            }
        }
        out.iter_mut().for_each(|o| *o = *o * inv);
        Ok(self.derived(vec![1, c], out, Op::MeanRows(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum();
        self.derived(Vec::new(), vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = T::lit(self.value(x).numel().max(1) as f64);
        let s = self.data(x).iter().copied().sum::<T>() / n;
        self.derived(Vec::new(), vec![s], Op::Mean(x), &[x])
    }

    /// Reverse sweep from a single-element `loss`. Returns gradients for every
    /// trainable leaf reachable from it.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(contract_err!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if matches!(n.op, Op::Leaf) && n.requires_grad {
                    grads[i].take().or_else(|| Some(vec![T::zero(); n.value.numel()]))
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients { grads: leaves, shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect() })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let zero = T::zero();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if let Some(da) = self.slot(*a, grads) {
                    kernels::matmul_grad_a(g, self.data(*b), da, m, k, n);
                }
                if let Some(db) = self.slot(*b, grads) {
                    kernels::matmul_grad_b(g, self.data(*a), db, m, k, n);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.slot(v, grads) {
                        axpy(d, g, T::one());
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.slot(*a, grads) {
                    axpy(d, g, T::one());
                }
                if let Some(d) = self.slot(*b, grads) {
                    axpy(d, g, -T::one());
                }
            }
            Op::Mul(a, b) => {
                if let Some(da) = self.slot(*a, grads) {
                    for ((d, &gv), &bv) in da.iter_mut().zip(g).zip(self.data(*b)) {
                        *d = *d + gv * bv;
                    }
                }
                if let Some(db) = self.slot(*b, grads) {
                    for ((d, &gv), &av) in db.iter_mut().zip(g).zip(self.data(*a)) {
                        *d = *d + gv * av;
                    }
                }
            }
            Op::Scale(x, f) => {
                if let Some(d) = self.slot(*x, grads) {
                    axpy(d, g, *f);
                }
            }
            Op::AddBias(x, bias) => {
                if let Some(d) = self.slot(*x, grads) {
                    axpy(d, g, T::one());
                }
                let n = self.shape(*bias)[0];
                if let Some(db) = self.slot(*bias, grads) {
                    for row in g.chunks_exact(n) {
                        axpy(db, row, T::one());
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(d) = self.slot(*x, grads) {
                    for ((dv, &gv), &xv) in d.iter_mut().zip(g).zip(self.data(*x)) {
                        if xv > zero {
                            *dv = *dv + gv;
                        }
                    }
                }
            }
            Op::Gelu(x) => {
                if let Some(d) = self.slot(*x, grads) {
                    for ((dv, &gv), &xv) in d.iter_mut().zip(g).zip(self.data(*x)) {
                        *dv = *dv + gv * kernels::gelu_grad(xv);
                    }
                }
            }
            Op::Abs(x) => {
                if let Some(d) = self.slot(*x, grads) {
                    for ((dv, &gv), &xv) in d.iter_mut().zip(g).zip(self.data(*x)) {
                        if xv > zero {
                            *dv = *dv + gv;
                        } else if xv < zero {
                            *dv = *dv - gv;
                        }
                    }
                }
            }
            Op::Conv3d {
                input,
                weight,
                bias,
                geom,
            } => {
                // Each slot is taken out in turn so the three borrows stay disjoint.
                let mut di = self.take_slot(*input, grads);
                let mut dw = self.take_slot(*weight, grads);
                let mut db = self.take_slot(*bias, grads);
                kernels::conv3d_backward(
                    g,
                    self.data(*input),
                    self.data(*weight),
                    geom,
                    di.as_deref_mut(),
                    dw.as_deref_mut(),
                    db.as_deref_mut(),
                );
                self.put_slot(*input, di, grads);
                self.put_slot(*weight, dw, grads);
                self.put_slot(*bias, db, grads);
            }
            Op::Softmax(x) => {
                let n = *self.shape(*x).last().unwrap();
                if let Some(d) = self.slot(*x, grads) {
                    let y = node.value.data();
                    for ((drow, grow), yrow) in d
                        .chunks_exact_mut(n)
                        .zip(g.chunks_exact(n))
                        .zip(y.chunks_exact(n))
                    {
                        let dot: T = grow.iter().zip(yrow).map(|(&a, &b)| a * b).sum();
                        for ((dv, &gv), &yv) in drow.iter_mut().zip(grow).zip(yrow) {
                            *dv = *dv + yv * (gv - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                rstd,
            } => {
                let d = self.shape(*gain)[0];
                let dn = T::lit(d as f64);
                let gv = self.data(*gain);
                if let Some(dg) = self.slot(*gain, grads) {
                    for (grow, hrow) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for ((o, &a), &h) in dg.iter_mut().zip(grow).zip(hrow) {
                            *o = *o + a * h;
                        }
                    }
                }
                if let Some(ds) = self.slot(*shift, grads) {
                    for grow in g.chunks_exact(d) {
                        axpy(ds, grow, T::one());
                    }
                }
                if let Some(dx) = self.slot(*x, grads) {
                    for (((dxrow, grow), hrow), &r) in dx
                        .chunks_exact_mut(d)
                        .zip(g.chunks_exact(d))
                        .zip(xhat.chunks_exact(d))
                        .zip(rstd)
                    {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * hrow[j];
                        }
                        mean_dh = mean_dh / dn;
                        mean_dh_h = mean_dh_h / dn;
                        for j in 0..d {
                            let dh = grow[j] * gv[j];
                            dxrow[j] = dxrow[j] + r * (dh - mean_dh - hrow[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Gather { x, index } => {
                if let Some(d) = self.slot(*x, grads) {
                    for (&i, &gv) in index.iter().zip(g) {
                        d[i] = d[i] + gv;
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = self.slot(*x, grads) {
                    axpy(d, g, T::one());
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if let Some(d) = self.slot(p, grads) {
                        axpy(d, &g[offset..offset + len], T::one());
                    }
                    offset += len;
                }
            }
            Op::MeanRows(x) => {
                let r = self.shape(*x)[0];
                let inv = T::one() / T::lit(r as f64);
                if let Some(d) = self.slot(*x, grads) {
                    for row in d.chunks_exact_mut(g.len()) {
                        axpy(row, g, inv);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(d) = self.slot(*x, grads) {
                    d.iter_mut().for_each(|v| *v = *v + g[0]);
                }
            }
            Op::Mean(x) => {
                let n = T::lit(self.value(*x).numel().max(1) as f64);
                if let Some(d) = self.slot(*x, grads) {
                    let gv = g[0] / n;
                    d.iter_mut().for_each(|v| *v = *v + gv);
                }
            }
        }
    }

    fn slot<'g>(&self, v: Var, grads: &'g mut [Option<Vec<T>>]) -> Option<&'g mut [T]> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]).as_mut_slice())
    }

    fn take_slot(&self, v: Var, grads: &mut [Option<Vec<T>>]) -> Option<Vec<T>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].take().unwrap_or_else(|| vec![T::zero(); n]))
    }

    fn put_slot(&self, v: Var, g: Option<Vec<T>>, grads: &mut [Option<Vec<T>>]) {
        if g.is_some() {
            grads[v.0] = g;
        }
    }
}

fn axpy<T: Real>(dst: &mut [T], src: &[T], alpha: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + alpha * s;
    }
}

/// Gradients of trainable leaves produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient for a trainable leaf; `None` for constants and intermediates.
    pub fn get(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor {
            shape: self.shapes[v.0].clone(),
            data: g.clone(),
        })
    }

    pub fn data(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0)?.as_deref()
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0)?.take()
    }
}

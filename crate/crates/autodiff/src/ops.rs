//! Differentiable primitives. Forward passes live on [`Var`], the matching
//! vector-Jacobian products in [`backward`].

use crate::error::{AutodiffError, Result};
use crate::tape::{Node, Var};
use crate::tensor::{broadcast_shape, broadcast_zip, numel, unbroadcast, Tensor};

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Offset(usize),
    Powf(usize, f64),
    Exp(usize),
    Ln(usize),
    Log2(usize),
    Sigmoid(usize),
    LeakyRelu(usize, f64),
    Sqrt(usize),
    ClampMin(usize, f64),
    Cos(usize),
    Sin(usize),
    RecipOrZero(usize),
    StraightThrough(usize),
    SumAll(usize),
    SumAxis { x: usize, axis: usize },
    ProdAxis { x: usize, axis: usize },
    Reshape(usize),
    TransposeLast(usize),
    Narrow { x: usize, axis: usize, start: usize },
    Concat { parts: Vec<usize>, axis: usize },
    MatMul(usize, usize),
    Conv2d { x: usize, w: usize },
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![*a, *b],
            Conv2d { x, w } => vec![*x, *w],
            Neg(a) | Scale(a, _) | Offset(a) | Powf(a, _) | Exp(a) | Ln(a) | Log2(a)
            | Sigmoid(a) | LeakyRelu(a, _) | Sqrt(a) | ClampMin(a, _) | Cos(a) | Sin(a)
            | RecipOrZero(a) | StraightThrough(a) | SumAll(a) | Reshape(a)
            | TransposeLast(a) => vec![*a],
            SumAxis { x, .. } | ProdAxis { x, .. } | Narrow { x, .. } => vec![*x],
            Concat { parts, .. } => parts.clone(),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Split `shape` around `axis` into (outer, n, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, axis: usize, rank: usize) -> Result<()> {
    if axis >= rank {
        Err(AutodiffError::Axis { op, axis, rank })
    } else {
        Ok(())
    }
}

/// `c = a·b` for one (m×k)·(k×n) block with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass slices that cover the strided m×k, k×n and m×n
    // extents; c is densely row-major and does not alias a or b.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Batch geometry of a matmul: (batch, m, k, n, a_batched, b_batched).
fn matmul_dims(a: &[usize], b: &[usize]) -> Option<(usize, usize, usize, usize, bool, bool)> {
    if !(2..=3).contains(&a.len()) || !(2..=3).contains(&b.len()) {
        return None;
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return None;
    }
    let ab = a.len() == 3;
    let bb = b.len() == 3;
    let batch = match (ab, bb) {
        (true, true) if a[0] == b[0] => a[0],
        (true, true) => return None,
        (true, false) => a[0],
        (false, true) => b[0],
        (false, false) => 1,
    };
    Some((batch, m, k, n, ab, bb))
}

fn conv_dims(x: &[usize], w: &[usize]) -> Option<(usize, usize, usize, usize, usize, usize, usize)> {
    if x.len() != 4 || w.len() != 4 || x[1] != w[1] || w[2] % 2 == 0 || w[3] % 2 == 0 {
        return None;
    }
    Some((x[0], x[1], x[2], x[3], w[0], w[2], w[3]))
}

impl<'t> Var<'t> {
    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn binary(
        &self,
        other: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let out_shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
            AutodiffError::ShapeMismatch {
                op: name,
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            }
        })?;
        let out = broadcast_zip(&a, &b, &out_shape, f);
        Ok(self.tape.push(out, op))
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let out = self.value().map(f);
        self.tape.push(out, op)
    }

    /// Element-wise sum with broadcasting.
    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", |a, b| a + b, Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", |a, b| a - b, Op::Sub(self.id, other.id))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", |a, b| a * b, Op::Mul(self.id, other.id))
    }

    pub fn div(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "div", |a, b| a / b, Op::Div(self.id, other.id))
    }

    pub fn neg(&self) -> Var<'t> {
        self.unary(|x| -x, Op::Neg(self.id))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(|x| c * x, Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(|x| x + c, Op::Offset(self.id))
    }

    pub fn powf(&self, p: f64) -> Var<'t> {
        self.unary(|x| x.powf(p), Op::Powf(self.id, p))
    }

    pub fn square(&self) -> Var<'t> {
        self.powf(2.0)
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(f64::exp, Op::Exp(self.id))
    }

    pub fn ln(&self) -> Var<'t> {
        self.unary(f64::ln, Op::Ln(self.id))
    }

    pub fn log2(&self) -> Var<'t> {
        self.unary(f64::log2, Op::Log2(self.id))
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.unary(sigmoid, Op::Sigmoid(self.id))
    }

    pub fn leaky_relu(&self, slope: f64) -> Var<'t> {
        self.unary(
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(self.id, slope),
        )
    }

    pub fn sqrt(&self) -> Var<'t> {
        self.unary(f64::sqrt, Op::Sqrt(self.id))
    }

    /// `max(x, lo)`; the gradient is zero where `x <= lo`.
    pub fn clamp_min(&self, lo: f64) -> Var<'t> {
        self.unary(|x| x.max(lo), Op::ClampMin(self.id, lo))
    }

    pub fn cos(&self) -> Var<'t> {
        self.unary(f64::cos, Op::Cos(self.id))
    }

    pub fn sin(&self) -> Var<'t> {
        self.unary(f64::sin, Op::Sin(self.id))
    }

    /// Scalar Moore–Penrose inverse: `1/x`, or `0` where `x == 0`.
    pub fn recip_or_zero(&self) -> Var<'t> {
        self.unary(
            |x| if x == 0.0 { 0.0 } else { 1.0 / x },
            Op::RecipOrZero(self.id),
        )
    }

    /// Forward value `f(x)`, backward identity (straight-through estimator).
    pub fn straight_through(&self, f: impl Fn(f64) -> f64) -> Var<'t> {
        self.unary(f, Op::StraightThrough(self.id))
    }

    pub fn sum(&self) -> Var<'t> {
        let s = self.value().sum();
        self.tape.push(Tensor::scalar(s), Op::SumAll(self.id))
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum over `axis`, keeping it with size 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        check_axis("sum_axis", axis, x.ndim())?;
        let (outer, n, inner) = axis_split(x.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        let d = x.data();
        for o in 0..outer {
            for j in 0..n {
                let src = &d[(o * n + j) * inner..(o * n + j + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = 1;
        Ok(self
            .tape
            .push(Tensor::new(shape, out)?, Op::SumAxis { x: self.id, axis }))
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>> {
        let n = self.value().shape().get(axis).copied().unwrap_or(1) as f64;
        Ok(self.sum_axis(axis)?.scale(1.0 / n))
    }

    /// Product over `axis`, keeping it with size 1. Gradients are exact
    /// even when factors are zero.
    pub fn prod_axis(&self, axis: usize) -> Result<Var<'t>> {
        let x = self.value();
        check_axis("prod_axis", axis, x.ndim())?;
        let (outer, n, inner) = axis_split(x.shape(), axis);
        let mut out = vec![1.0; outer * inner];
        let d = x.data();
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    out[o * inner + i] *= d[(o * n + j) * inner + i];
                }
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = 1;
        Ok(self
            .tape
            .push(Tensor::new(shape, out)?, Op::ProdAxis { x: self.id, axis }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<'t>> {
        let out = self.value().reshaped(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id)))
    }

    /// Swap the last two axes.
    pub fn transpose(&self) -> Result<Var<'t>> {
        let x = self.value();
        let nd = x.ndim();
        if nd < 2 {
            return Err(AutodiffError::Axis {
                op: "transpose",
                axis: 1,
                rank: nd,
            });
        }
        let out = transpose_last(&x);
        Ok(self.tape.push(out, Op::TransposeLast(self.id)))
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Var<'t>> {
        let x = self.value();
        check_axis("narrow", axis, x.ndim())?;
        let (outer, n, inner) = axis_split(x.shape(), axis);
        if start + len > n {
            return Err(AutodiffError::Contract(format!(
                "narrow: range {start}..{} exceeds axis length {n}",
                start + len
            )));
        }
        let mut out = Vec::with_capacity(outer * len * inner);
        let d = x.data();
        for o in 0..outer {
            out.extend_from_slice(&d[(o * n + start) * inner..(o * n + start + len) * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        Ok(self.tape.push(
            Tensor::new(shape, out)?,
            Op::Narrow {
                x: self.id,
                axis,
                start,
            },
        ))
    }

    /// Matrix product over the last two axes. Rank-3 operands are batched;
    /// a rank-2 operand is shared across the batch of the other.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        let (batch, m, k, n, ab, bb) =
            matmul_dims(a.shape(), b.shape()).ok_or_else(|| AutodiffError::ShapeMismatch {
                op: "matmul",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            })?;
        let mut out = vec![0.0; batch * m * n];
        let (ad, bd) = (a.data(), b.data());
        if ab && !bb {
            gemm(batch * m, k, n, ad, k as isize, 1, bd, n as isize, 1, 0.0, &mut out);
        } else {
            for i in 0..batch {
                let asl = if ab { &ad[i * m * k..(i + 1) * m * k] } else { ad };
                let bsl = if bb { &bd[i * k * n..(i + 1) * k * n] } else { bd };
                gemm(
                    m,
                    k,
                    n,
                    asl,
                    k as isize,
                    1,
                    bsl,
                    n as isize,
                    1,
                    0.0,
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
        }
        let shape = if ab || bb { vec![batch, m, n] } else { vec![m, n] };
        Ok(self
            .tape
            .push(Tensor::new(shape, out)?, Op::MatMul(self.id, other.id)))
    }

    /// 2-D cross-correlation, stride 1, zero "same" padding.
    /// `self`: [B, C_in, H, W]; `weight`: [C_out, C_in, kh, kw] with odd kernel sides.
    pub fn conv2d(&self, weight: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&weight);
        let (x, w) = (self.value(), weight.value());
        let (b, c, h, wd, o, kh, kw) =
            conv_dims(x.shape(), w.shape()).ok_or_else(|| AutodiffError::ShapeMismatch {
                op: "conv2d",
                left: x.shape().to_vec(),
                right: w.shape().to_vec(),
            })?;
        let (ph, pw) = (kh / 2, kw / 2);
        let mut out = vec![0.0; b * o * h * wd];
        let (xd, wdta) = (x.data(), w.data());
        for bi in 0..b {
            for oc in 0..o {
                let dst = &mut out[(bi * o + oc) * h * wd..(bi * o + oc + 1) * h * wd];
                for ic in 0..c {
                    let src = &xd[(bi * c + ic) * h * wd..(bi * c + ic + 1) * h * wd];
                    let ker = &wdta[(oc * c + ic) * kh * kw..(oc * c + ic + 1) * kh * kw];
                    for di in 0..kh {
                        for dj in 0..kw {
                            let kv = ker[di * kw + dj];
                            for i in 0..h {
                                let si = i as isize + di as isize - ph as isize;
                                if si < 0 || si >= h as isize {
                                    continue;
                                }
                                let si = si as usize;
                                for j in 0..wd {
                                    let sj = j as isize + dj as isize - pw as isize;
                                    if sj < 0 || sj >= wd as isize {
                                        continue;
                                    }
                                    dst[i * wd + j] += kv * src[si * wd + sj as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(self.tape.push(
            Tensor::new(vec![b, o, h, wd], out)?,
            Op::Conv2d {
                x: self.id,
                w: weight.id,
            },
        ))
    }
}

/// Concatenate along `axis`; all other axes must agree.
pub fn concat<'t>(parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
    let first = parts
        .first()
        .ok_or_else(|| AutodiffError::Contract("concat of zero tensors".into()))?;
    let tape = first.tape;
    let values: Vec<_> = parts.iter().map(Var::value).collect();
    let rank = values[0].ndim();
    check_axis("concat", axis, rank)?;
    let mut shape = values[0].shape().to_vec();
    shape[axis] = 0;
    for v in &values {
        let s = v.shape();
        let compatible = s.len() == rank
            && s.iter()
                .zip(values[0].shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !compatible {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat",
                left: values[0].shape().to_vec(),
                right: s.to_vec(),
            });
        }
        shape[axis] += s[axis];
    }
    let (outer, _, inner) = axis_split(&shape, axis);
    let mut out = Vec::with_capacity(numel(&shape));
    for o in 0..outer {
        for v in &values {
            let n = v.shape()[axis];
            out.extend_from_slice(&v.data()[o * n * inner..(o + 1) * n * inner]);
        }
    }
    Ok(tape.push(
        Tensor::new(shape, out)?,
        Op::Concat {
            parts: parts.iter().map(|p| p.id).collect(),
            axis,
        },
    ))
}

fn transpose_last(x: &Tensor) -> Tensor {
    let nd = x.ndim();
    let (r, c) = (x.shape()[nd - 2], x.shape()[nd - 1]);
    let batch = x.len() / (r * c).max(1);
    let mut out = vec![0.0; x.len()];
    let d = x.data();
    for bi in 0..batch {
        let off = bi * r * c;
        for i in 0..r {
            for j in 0..c {
                out[off + j * r + i] = d[off + i * c + j];
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape.swap(nd - 2, nd - 1);
    Tensor::new(shape, out).expect("transpose preserves length")
}

/// Expand a keep-dim reduction gradient back over `axis` of `shape`.
fn expand_axis(g: &Tensor, shape: &[usize], axis: usize) -> Tensor {
    let (outer, n, inner) = axis_split(shape, axis);
    let mut out = Vec::with_capacity(outer * n * inner);
    let gd = g.data();
    for o in 0..outer {
        for _ in 0..n {
            out.extend_from_slice(&gd[o * inner..(o + 1) * inner]);
        }
    }
    Tensor::new(shape.to_vec(), out).expect("expanded length")
}

/// Vector-Jacobian products of `op`, as (parent id, gradient) pairs.
pub(crate) fn backward(op: &Op, g: &Tensor, out: &Tensor, nodes: &[Node]) -> Vec<(usize, Tensor)> {
    let val = |id: usize| -> &Tensor { &nodes[id].value };
    let elementwise = |a: usize, f: &dyn Fn(f64, f64, f64) -> f64| -> Vec<(usize, Tensor)> {
        // f(x, y, g): x = input, y = output
        let x = val(a);
        let data = x
            .data()
            .iter()
            .zip(out.data())
            .zip(g.data())
            .map(|((&x, &y), &g)| f(x, y, g))
            .collect();
        vec![(a, Tensor::new(x.shape().to_vec(), data).expect("same shape"))]
    };
    match op {
        Op::Leaf => Vec::new(),
        Op::Add(a, b) => vec![
            (*a, unbroadcast(g, val(*a).shape())),
            (*b, unbroadcast(g, val(*b).shape())),
        ],
        Op::Sub(a, b) => vec![
            (*a, unbroadcast(g, val(*a).shape())),
            (*b, unbroadcast(&g.map(|x| -x), val(*b).shape())),
        ],
        Op::Mul(a, b) => {
            let (x, y) = (val(*a), val(*b));
            let gx = broadcast_zip(g, y, g.shape(), |g, y| g * y);
            let gy = broadcast_zip(g, x, g.shape(), |g, x| g * x);
            vec![(*a, unbroadcast(&gx, x.shape())), (*b, unbroadcast(&gy, y.shape()))]
        }
        Op::Div(a, b) => {
            let (x, y) = (val(*a), val(*b));
            let gx = broadcast_zip(g, y, g.shape(), |g, y| g / y);
            // d(x/y)/dy = -out / y
            let q = broadcast_zip(out, y, g.shape(), |o, y| -o / y);
            let gy = g.zip_same(&q, |g, q| g * q);
            vec![(*a, unbroadcast(&gx, x.shape())), (*b, unbroadcast(&gy, y.shape()))]
        }
        Op::Neg(a) => vec![(*a, g.map(|x| -x))],
        Op::Scale(a, c) => vec![(*a, g.map(|x| c * x))],
        Op::Offset(a) | Op::StraightThrough(a) | Op::Reshape(a) => {
            vec![(*a, g.reshaped(val(*a).shape()).expect("same length"))]
        }
        Op::Powf(a, p) => elementwise(*a, &|x, _, g| g * p * x.powf(p - 1.0)),
        Op::Exp(a) => elementwise(*a, &|_, y, g| g * y),
        Op::Ln(a) => elementwise(*a, &|x, _, g| g / x),
        Op::Log2(a) => elementwise(*a, &|x, _, g| g / (x * std::f64::consts::LN_2)),
        Op::Sigmoid(a) => elementwise(*a, &|_, y, g| g * y * (1.0 - y)),
        Op::LeakyRelu(a, s) => elementwise(*a, &|x, _, g| if x > 0.0 { g } else { s * g }),
        Op::Sqrt(a) => elementwise(*a, &|_, y, g| g * 0.5 / y),
        Op::ClampMin(a, lo) => elementwise(*a, &|x, _, g| if x > *lo { g } else { 0.0 }),
        Op::Cos(a) => elementwise(*a, &|x, _, g| -g * x.sin()),
        Op::Sin(a) => elementwise(*a, &|x, _, g| g * x.cos()),
        Op::RecipOrZero(a) => elementwise(*a, &|x, y, g| if x == 0.0 { 0.0 } else { -g * y * y }),
        Op::SumAll(a) => vec![(*a, Tensor::full(val(*a).shape(), g.item()))],
        Op::SumAxis { x, axis } => vec![(*x, expand_axis(g, val(*x).shape(), *axis))],
        Op::ProdAxis { x, axis } => {
            let xv = val(*x);
            let (outer, n, inner) = axis_split(xv.shape(), *axis);
            let d = xv.data();
            let mut gx = vec![0.0; xv.len()];
            let mut prefix = vec![1.0; n + 1];
            let mut suffix = vec![1.0; n + 1];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| d[(o * n + j) * inner + i];
                    for j in 0..n {
                        prefix[j + 1] = prefix[j] * at(j);
                    }
                    for j in (0..n).rev() {
                        suffix[j] = suffix[j + 1] * at(j);
                    }
                    let gi = g.data()[o * inner + i];
                    for j in 0..n {
                        gx[(o * n + j) * inner + i] = gi * prefix[j] * suffix[j + 1];
                    }
                }
            }
            vec![(*x, Tensor::new(xv.shape().to_vec(), gx).expect("same shape"))]
        }
        Op::TransposeLast(a) => vec![(*a, transpose_last(g))],
        Op::Narrow { x, axis, start } => {
            let shape = val(*x).shape();
            let (outer, n, inner) = axis_split(shape, *axis);
            let len = g.shape()[*axis];
            let mut gx = vec![0.0; numel(shape)];
            for o in 0..outer {
                gx[(o * n + start) * inner..(o * n + start + len) * inner]
                    .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
            }
            vec![(*x, Tensor::new(shape.to_vec(), gx).expect("same shape"))]
        }
        Op::Concat { parts, axis } => {
            let (outer, total, inner) = axis_split(g.shape(), *axis);
            let mut offset = 0;
            parts
                .iter()
                .map(|&p| {
                    let shape = val(p).shape();
                    let n = shape[*axis];
                    let mut gp = Vec::with_capacity(numel(shape));
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        gp.extend_from_slice(&g.data()[base..base + n * inner]);
                    }
                    offset += n;
                    (p, Tensor::new(shape.to_vec(), gp).expect("same shape"))
                })
                .collect()
        }
        Op::MatMul(a, b) => matmul_backward(*a, *b, g, val(*a), val(*b)),
        Op::Conv2d { x, w } => conv2d_backward(*x, *w, g, val(*x), val(*w)),
    }
}

fn matmul_backward(ia: usize, ib: usize, g: &Tensor, a: &Tensor, b: &Tensor) -> Vec<(usize, Tensor)> {
    let (batch, m, k, n, ab, bb) = matmul_dims(a.shape(), b.shape()).expect("checked in forward");
    let (ad, bd, gd) = (a.data(), b.data(), g.data());
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    let (ki, ni) = (k as isize, n as isize);
    if ab && !bb {
        // ga = g·bᵀ ; gb = aᵀ·g with the batch folded into rows
        gemm(batch * m, n, k, gd, ni, 1, bd, 1, ni, 0.0, &mut ga);
        gemm(k, batch * m, n, ad, 1, ki, gd, ni, 1, 0.0, &mut gb);
    } else {
        for i in 0..batch {
            let asl = if ab { &ad[i * m * k..(i + 1) * m * k] } else { ad };
            let bsl = if bb { &bd[i * k * n..(i + 1) * k * n] } else { bd };
            let gsl = &gd[i * m * n..(i + 1) * m * n];
            let (ga_sl, beta_a) = if ab {
                (&mut ga[i * m * k..(i + 1) * m * k], 0.0)
            } else {
                (&mut ga[..], if i == 0 { 0.0 } else { 1.0 })
            };
            gemm(m, n, k, gsl, ni, 1, bsl, 1, ni, beta_a, ga_sl);
            let (gb_sl, beta_b) = if bb {
                (&mut gb[i * k * n..(i + 1) * k * n], 0.0)
            } else {
                (&mut gb[..], if i == 0 { 0.0 } else { 1.0 })
            };
            gemm(k, m, n, asl, 1, ki, gsl, ni, 1, beta_b, gb_sl);
        }
    }
    vec![
        (ia, Tensor::new(a.shape().to_vec(), ga).expect("same shape")),
        (ib, Tensor::new(b.shape().to_vec(), gb).expect("same shape")),
    ]
}

fn conv2d_backward(ix: usize, iw: usize, g: &Tensor, x: &Tensor, w: &Tensor) -> Vec<(usize, Tensor)> {
    let (b, c, h, wd, o, kh, kw) = conv_dims(x.shape(), w.shape()).expect("checked in forward");
    let (ph, pw) = (kh / 2, kw / 2);
    let (xd, wdta, gd) = (x.data(), w.data(), g.data());
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    for bi in 0..b {
        for oc in 0..o {
            let gsl = &gd[(bi * o + oc) * h * wd..(bi * o + oc + 1) * h * wd];
            for ic in 0..c {
                let xoff = (bi * c + ic) * h * wd;
                let koff = (oc * c + ic) * kh * kw;
                for di in 0..kh {
                    for dj in 0..kw {
                        let kv = wdta[koff + di * kw + dj];
                        let mut acc = 0.0;
                        for i in 0..h {
                            let si = i as isize + di as isize - ph as isize;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            let si = si as usize;
                            for j in 0..wd {
                                let sj = j as isize + dj as isize - pw as isize;
                                if sj < 0 || sj >= wd as isize {
                                    continue;
                                }
                                let src = xoff + si * wd + sj as usize;
                                let gv = gsl[i * wd + j];
                                acc += gv * xd[src];
                                gx[src] += gv * kv;
                            }
                        }
                        gw[koff + di * kw + dj] += acc;
                    }
                }
            }
        }
    }
    vec![
        (ix, Tensor::new(x.shape().to_vec(), gx).expect("same shape")),
        (iw, Tensor::new(w.shape().to_vec(), gw).expect("same shape")),
    ]
}

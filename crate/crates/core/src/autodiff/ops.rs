use super::{numel, Op, Tape, Var};
use crate::error::{Error, Result};

/// How the two operands of a binary op line up.
#[derive(Debug, Clone, Copy)]
enum Pairing {
    Same,
    /// Right operand repeats with the given period.
    RightRepeats(usize),
    /// Left operand repeats with the given period.
    LeftRepeats(usize),
}

/// Calls `f(out_index, left_index, right_index)` for every output element.
#[inline]
fn for_pairs(pairing: Pairing, len: usize, mut f: impl FnMut(usize, usize, usize)) {
    match pairing {
        Pairing::Same => (0..len).for_each(|i| f(i, i, i)),
        Pairing::RightRepeats(p) => (0..len).for_each(|i| {
            let k = if p == 1 { 0 } else { i % p };
            f(i, i, k)
        }),
        Pairing::LeftRepeats(p) => (0..len).for_each(|i| {
            let j = if p == 1 { 0 } else { i % p };
            f(i, j, i)
        }),
    }
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `tanh` through a single `exp`; absolute error stays at rounding level.
fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-major `C = A·B` (`m×k` times `k×n`) with arbitrary strides on the inputs.
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
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the caller's strides address only elements inside `a` and `b`
    // (checked by construction in matmul and its backward), and `c` holds m×n values.
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

impl Tape {
    fn pairing(&self, a: Var, b: Var) -> Result<(Pairing, Vec<usize>)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok((Pairing::Same, sa.to_vec()));
        }
        let (na, nb) = (numel(sa), numel(sb));
        if nb == 1 || (is_suffix(sb, sa) && nb > 0) {
            return Ok((Pairing::RightRepeats(nb), sa.to_vec()));
        }
        if na == 1 || (is_suffix(sa, sb) && na > 0) {
            return Ok((Pairing::LeftRepeats(na), sb.to_vec()));
        }
        Err(Error::shape(format!("{sa:?}"), format!("{sb:?}")))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (pairing, shape) = self.pairing(a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let value: Vec<f64> = match pairing {
            Pairing::Same => va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect(),
            Pairing::RightRepeats(p) => va.iter().enumerate().map(|(i, &x)| f(x, vb[i % p])).collect(),
            Pairing::LeftRepeats(p) => vb.iter().enumerate().map(|(i, &y)| f(va[i % p], y)).collect(),
        };
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(shape, value, rg, op)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(shape, value, rg, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    /// Addition of a constant.
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sin(a), f64::sin)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a), tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// `ln(1 + eˣ)`.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Square root; the input must be strictly positive for a finite gradient.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if self.value(a).iter().any(|&x| x <= 0.0) {
            return Err(Error::Numeric("sqrt of a non-positive value".into()));
        }
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).iter().sum();
        let rg = self.requires_grad(a);
        self.push(Vec::new(), vec![s], rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.is_empty() {
            return Err(Error::InvalidInput("mean of an empty tensor".into()));
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let rg = self.requires_grad(a);
        self.push(Vec::new(), vec![m], rg, Op::Mean(a))
    }

    /// `a (m×k) · b (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape(
                "m×k · k×n".to_string(),
                format!("{sa:?} · {sb:?}"),
            ));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a),
            k as isize,
            1,
            self.value(b),
            n as isize,
            1,
            &mut out,
            0.0,
        );
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(vec![m, n], out, rg, Op::MatMul(a, b))
    }

    /// Concatenation along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::InvalidInput(format!(
                "concat axis {axis} out of range for rank {}",
                base.len()
            )));
        }
        let mut axis_len = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::shape(format!("{base:?} (except axis {axis})"), format!("{s:?}")));
            }
            axis_len += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * axis_len * inner);
        for o in 0..outer {
            for &p in parts {
                let block = self.shape(p)[axis] * inner;
                out.extend_from_slice(&self.value(p)[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = axis_len;
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        self.push(shape, out, rg, Op::Concat(parts.to_vec(), axis))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start >= end || end > s[axis] {
            return Err(Error::InvalidInput(format!(
                "slice {start}..{end} on axis {axis} of shape {s:?}"
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let src = self.value(a);
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let row = o * s[axis] * inner;
            out.extend_from_slice(&src[row + start * inner..row + end * inner]);
        }
        let mut shape = s;
        shape[axis] = end - start;
        let rg = self.requires_grad(a);
        self.push(shape, out, rg, Op::Slice { src: a, axis, start })
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(Error::shape(
                format!("{} elements", self.value(a).len()),
                format!("{shape:?}"),
            ));
        }
        let value = self.value(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(shape.to_vec(), value, rg, Op::Reshape(a))
    }

    /// Pushes the contribution of node `v` (with upstream gradient `g`) into its inputs.
    pub(super) fn propagate(&mut self, v: Var, g: &[f64]) {
        let op = self.node(v).op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => self.propagate_binary(a, b, g, |_, _| (1.0, 1.0)),
            Op::Sub(a, b) => self.propagate_binary(a, b, g, |_, _| (1.0, -1.0)),
            Op::Mul(a, b) => self.propagate_binary(a, b, g, |x, y| (y, x)),
            Op::Scale(a, c) => self.accumulate(a, |_, ga| {
                ga.iter_mut().zip(g).for_each(|(d, &gi)| *d += c * gi)
            }),
            Op::AddScalar(a) | Op::Reshape(a) => {
                self.accumulate(a, |_, ga| ga.iter_mut().zip(g).for_each(|(d, &gi)| *d += gi))
            }
            Op::Sin(a) => {
                self.accumulate(a, |t, ga| {
                    let x = t.value(a);
                    for ((d, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *d += gi * xi.cos();
                    }
                })
            }
            Op::Tanh(a) => self.propagate_from_output(v, a, g, |y| 1.0 - y * y),
            Op::Sigmoid(a) => self.propagate_from_output(v, a, g, |y| y * (1.0 - y)),
            Op::Sqrt(a) => self.propagate_from_output(v, a, g, |y| 0.5 / y),
            Op::Softplus(a) => {
                self.accumulate(a, |t, ga| {
                    let x = t.value(a);
                    for ((d, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *d += gi * sigmoid(xi);
                    }
                })
            }
            Op::Square(a) => {
                self.accumulate(a, |t, ga| {
                    let x = t.value(a);
                    for ((d, &gi), &xi) in ga.iter_mut().zip(g).zip(x) {
                        *d += 2.0 * xi * gi;
                    }
                })
            }
            Op::Sum(a) => self.accumulate(a, |_, ga| ga.iter_mut().for_each(|d| *d += g[0])),
            Op::Mean(a) => {
                let n = self.value(a).len() as f64;
                self.accumulate(a, |_, ga| ga.iter_mut().for_each(|d| *d += g[0] / n))
            }
            Op::MatMul(a, b) => self.propagate_matmul(a, b, g),
            Op::Concat(parts, axis) => {
                let out_shape = self.shape(v).to_vec();
                let outer: usize = out_shape[..axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let row = out_shape[axis] * inner;
                let mut offset = 0;
                for p in parts {
                    let block = self.shape(p)[axis] * inner;
                    self.accumulate(p, |_, gp| {
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + block];
                            for (d, &s) in gp[o * block..(o + 1) * block].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    });
                    offset += block;
                }
            }
            Op::Slice { src, axis, start } => {
                let in_shape = self.shape(src).to_vec();
                let len = self.shape(v)[axis];
                let outer: usize = in_shape[..axis].iter().product();
                let inner: usize = in_shape[axis + 1..].iter().product();
                self.accumulate(src, |_, gs| {
                    for o in 0..outer {
                        let dst = o * in_shape[axis] * inner + start * inner;
                        let from = o * len * inner;
                        for (d, &s) in gs[dst..dst + len * inner]
                            .iter_mut()
                            .zip(&g[from..from + len * inner])
                        {
                            *d += s;
                        }
                    }
                });
            }
            Op::GridSample { image, coords } => self.propagate_grid_sample(image, coords, g),
        }
    }

    fn propagate_from_output(&mut self, v: Var, a: Var, g: &[f64], dfdy: impl Fn(f64) -> f64) {
        self.accumulate(a, |t, ga| {
            let y = t.value(v);
            for ((d, &gi), &yi) in ga.iter_mut().zip(g).zip(y) {
                *d += gi * dfdy(yi);
            }
        })
    }

    /// `partials(x, y)` returns `(∂f/∂x, ∂f/∂y)` at one element pair.
    fn propagate_binary(&mut self, a: Var, b: Var, g: &[f64], partials: impl Fn(f64, f64) -> (f64, f64)) {
        let (pairing, _) = self.pairing(a, b).expect("pairing validated in forward pass");
        if self.requires_grad(a) {
            self.accumulate(a, |t, ga| {
                let (va, vb) = (t.value(a), t.value(b));
                for_pairs(pairing, g.len(), |i, j, k| ga[j] += g[i] * partials(va[j], vb[k]).0)
            });
        }
        if self.requires_grad(b) {
            self.accumulate(b, |t, gb| {
                let (va, vb) = (t.value(a), t.value(b));
                for_pairs(pairing, g.len(), |i, j, k| gb[k] += g[i] * partials(va[j], vb[k]).1)
            });
        }
    }

    fn propagate_matmul(&mut self, a: Var, b: Var, g: &[f64]) {
        let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
        let n = self.shape(b)[1];
        if self.requires_grad(a) {
            // dA = G · Bᵀ
            self.accumulate(a, |t, ga| {
                gemm(m, n, k, g, n as isize, 1, t.value(b), 1, n as isize, ga, 1.0)
            });
        }
        if self.requires_grad(b) {
            // dB = Aᵀ · G
            self.accumulate(b, |t, gb| {
                gemm(k, m, n, t.value(a), 1, k as isize, g, n as isize, 1, gb, 1.0)
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin_derivative_at_zero() {
        let mut t = Tape::new();
        let x = t.scalar(0.0, true).unwrap();
        let y = t.sin(x).unwrap();
        assert_eq!(t.item(y).unwrap(), 0.0);
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[1.0]);
    }

    #[test]
    fn mean_of_constant() {
        let mut t = Tape::new();
        let x = t.param(vec![2.5; 8], &[2, 4]).unwrap();
        let m = t.mean(x).unwrap();
        assert_eq!(t.item(m).unwrap(), 2.5);
        t.backward(m).unwrap();
        assert!(t.grad(x).unwrap().iter().all(|&g| g == 1.0 / 8.0));
    }

    #[test]
    fn sum_gradient_is_one() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let s = t.sum(x).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn mse_gradient() {
        let xs = vec![0.5, -1.0, 2.0, 4.0];
        let ys = vec![1.0, 1.0, -1.0, 4.5];
        let mut t = Tape::new();
        let x = t.param(xs.clone(), &[4]).unwrap();
        let y = t.constant(ys.clone(), &[4]).unwrap();
        let d = t.sub(x, y).unwrap();
        let sq = t.square(d).unwrap();
        let l = t.mean(sq).unwrap();
        t.backward(l).unwrap();
        for (i, g) in t.grad(x).unwrap().iter().enumerate() {
            assert!((g - 2.0 * (xs[i] - ys[i]) / 4.0).abs() < 1e-15);
        }
        assert!(t.grad(y).is_none());
    }

    #[test]
    fn broadcast_bias_and_scalar() {
        let mut t = Tape::new();
        let x = t.constant(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[3, 2]).unwrap();
        let b = t.param(vec![10.0, 20.0], &[2]).unwrap();
        let s = t.scalar(2.0, true).unwrap();
        let y = t.add(x, b).unwrap();
        assert_eq!(t.value(y), &[11.0, 22.0, 13.0, 24.0, 15.0, 26.0]);
        let z = t.mul(s, y).unwrap();
        let l = t.sum(z).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(b).unwrap(), &[6.0, 6.0]);
        assert_eq!(t.grad(s).unwrap(), &[111.0]);
    }

    #[test]
    fn incompatible_shapes_fail() {
        let mut t = Tape::new();
        let a = t.constant(vec![0.0; 6], &[2, 3]).unwrap();
        let b = t.constant(vec![0.0; 2], &[2]).unwrap();
        assert!(matches!(t.add(a, b), Err(Error::ShapeMismatch { .. })));
        let c = t.constant(vec![0.0; 4], &[2, 2]).unwrap();
        assert!(t.matmul(a, c).is_err());
    }

    #[test]
    fn nan_is_flagged() {
        let mut t = Tape::new();
        let a = t.constant(vec![1e308, 1e308], &[2]).unwrap();
        assert!(matches!(t.mul(a, a), Err(Error::Numeric(_))));
        let z = t.constant(vec![0.0], &[1]).unwrap();
        assert!(matches!(t.sqrt(z), Err(Error::Numeric(_))));
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut t = Tape::new();
        let x = t.scalar(1.0, true).unwrap();
        let y = t.square(x).unwrap();
        t.backward(y).unwrap();
        assert!(matches!(t.backward(y), Err(Error::GraphConsumed)));
        assert!(matches!(t.square(x), Err(Error::GraphConsumed)));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(t.backward(x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut t = Tape::new();
        let a = t.param(vec![1.0, 2.0, 3.0], &[3, 1]).unwrap();
        let b = t.param(vec![4.0, 5.0, 6.0], &[3, 1]).unwrap();
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(c), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        let col = t.slice(c, 1, 1, 2).unwrap();
        assert_eq!(t.value(col), &[4.0, 5.0, 6.0]);
        let w = t.constant(vec![1.0, 10.0, 100.0], &[3, 1]).unwrap();
        let p = t.mul(col, w).unwrap();
        let l = t.sum(p).unwrap();
        t.backward(l).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[0.0, 0.0, 0.0]);
        assert_eq!(t.grad(b).unwrap(), &[1.0, 10.0, 100.0]);
    }
}

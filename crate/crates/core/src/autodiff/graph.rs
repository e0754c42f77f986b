use super::kernels::{self, MatRef};
use super::{Tensor, LOG_FLOOR};
use crate::error::{Error, Result};

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    Affine { x: Var, w: Var, b: Option<Var> },
    Relu(Var),
    Softmax(Var),
    Log(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    /// Column totals, `[r, c] → [1, c]`.
    SumRows(Var),
    /// Row totals, `[r, c] → [r, 1]`.
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    SliceRows { src: Var, start: usize },
}

/// Operation record for one forward pass.
///
/// Nodes are stored struct-of-arrays so that reading parent values and
/// accumulating into parent gradients can borrow disjoint fields.
#[derive(Default)]
pub struct Graph {
    ops: Vec<Op>,
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    tracks: Vec<bool>,
    differentiated: bool,
    visits: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, values: Vec<f64>, tracks: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.ops.push(op);
        self.shapes.push(shape);
        self.values.push(values);
        self.grads.push(Vec::new());
        self.tracks.push(tracks);
        Var(self.ops.len() - 1)
    }

    /// Inserts a leaf. Gradients are accumulated only for leaves created with
    /// `requires_grad` and for nodes that depend on one.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        let shape = t.shape().to_vec();
        self.push(Op::Leaf, shape, t.into_values(), requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.shapes[v.0]
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.values[v.0]
    }

    /// Value of a single-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.values[v.0][0]
    }

    /// Copy of a node's value as a standalone tensor.
    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::from_vec(self.shapes[v.0].clone(), self.values[v.0].clone())
            .expect("graph node shape is consistent")
    }

    /// `∂loss/∂v` after [`Graph::backward`]; `None` for nodes outside the
    /// differentiated subgraph.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let g = &self.grads[v.0];
        (!g.is_empty()).then_some(g.as_slice())
    }

    /// Number of nodes visited by the last backward pass.
    pub fn backward_visits(&self) -> usize {
        self.visits
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match self.shapes[v.0][..] {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::shape(op, format!("expected a matrix, got {:?}", s))),
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shapes[a.0] != self.shapes[b.0] {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shapes[a.0], self.shapes[b.0]),
            ));
        }
        Ok(())
    }

    /// `x·W + b` for `x: [B, D]`, `W: [D, H]`, `b: [H]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (_, h) = self.dims2(w, "affine")?;
        if self.shapes[b.0] != [h] {
            return Err(Error::shape(
                "affine",
                format!("bias {:?} does not match width {}", self.shapes[b.0], h),
            ));
        }
        self.affine_impl(x, w, Some(b), "affine")
    }

    /// Matrix product `a·b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.affine_impl(a, b, None, "matmul")
    }

    fn affine_impl(&mut self, x: Var, w: Var, b: Option<Var>, op: &'static str) -> Result<Var> {
        let (rows, d) = self.dims2(x, op)?;
        let (dw, h) = self.dims2(w, op)?;
        if d != dw {
            return Err(Error::shape(op, format!("inner dimensions {} and {}", d, dw)));
        }
        let out = match b {
            Some(b) => kernels::affine(&self.values[x.0], rows, &self.values[w.0], d, h, &self.values[b.0]),
            None => {
                let mut out = vec![0.0; rows * h];
                kernels::gemm(
                    MatRef::new(&self.values[x.0], rows, d),
                    MatRef::new(&self.values[w.0], d, h),
                    0.0,
                    &mut out,
                );
                out
            }
        };
        let tracks = self.tracks[x.0] || self.tracks[w.0] || b.is_some_and(|b| self.tracks[b.0]);
        Ok(self.push(Op::Affine { x, w, b }, vec![rows, h], out, tracks))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let mut out = self.values[a.0].clone();
        kernels::relu_inplace(&mut out);
        Ok(self.unary(Op::Relu(a), a, out))
    }

    /// Row-wise softmax of a `[B, C]` matrix, `C ≥ 2`.
    pub fn softmax_rows(&mut self, z: Var) -> Result<Var> {
        let (rows, cols) = self.dims2(z, "softmax_rows")?;
        if cols < 2 {
            return Err(Error::shape("softmax_rows", format!("need at least 2 columns, got {}", cols)));
        }
        let mut out = vec![0.0; rows * cols];
        if !kernels::softmax_rows(&self.values[z.0], cols, &mut out) {
            return Err(Error::NonFinite("softmax_rows"));
        }
        Ok(self.unary(Op::Softmax(z), z, out))
    }

    /// Natural log with the input clamped below at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let out = self.values[a.0].iter().map(|&x| x.max(LOG_FLOOR).ln()).collect();
        Ok(self.unary(Op::Log(a), a, out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Add(a, b), a, b, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Sub(a, b), a, b, "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Mul(a, b), a, b, "mul", |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Op::Div(a, b), a, b, "div", |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.values[a.0].iter().map(|&x| x * s).collect();
        Ok(self.unary(Op::Scale(a, s), a, out))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a, "transpose")?;
        let src = &self.values[a.0];
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let tracks = self.tracks[a.0];
        Ok(self.push(Op::Transpose(a), vec![c, r], out, tracks))
    }

    /// Column totals: `[r, c] → [1, c]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (_, c) = self.dims2(a, "sum_rows")?;
        let mut out = vec![0.0; c];
        for row in self.values[a.0].chunks_exact(c) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let tracks = self.tracks[a.0];
        Ok(self.push(Op::SumRows(a), vec![1, c], out, tracks))
    }

    /// Row totals: `[r, c] → [r, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims2(a, "sum_cols")?;
        let out = self.values[a.0].chunks_exact(c.max(1)).map(|row| row.iter().sum()).collect();
        let tracks = self.tracks[a.0];
        Ok(self.push(Op::SumCols(a), vec![r, 1], out, tracks))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.values[a.0].iter().sum();
        let tracks = self.tracks[a.0];
        Ok(self.push(Op::Sum(a), Vec::new(), vec![s], tracks))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.values[a.0].len();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s: f64 = self.values[a.0].iter().sum();
        let tracks = self.tracks[a.0];
        Ok(self.push(Op::Mean(a), Vec::new(), vec![s / n as f64], tracks))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims2(a, "slice_rows")?;
        if start > end || end > r {
            return Err(Error::shape("slice_rows", format!("range {}..{} of {} rows", start, end, r)));
        }
        let out = self.values[a.0][start * c..end * c].to_vec();
        let tracks = self.tracks[a.0];
        Ok(self.push(Op::SliceRows { src: a, start }, vec![end - start, c], out, tracks))
    }

    fn unary(&mut self, op: Op, a: Var, out: Vec<f64>) -> Var {
        let shape = self.shapes[a.0].clone();
        let tracks = self.tracks[a.0];
        self.push(op, shape, out, tracks)
    }

    fn binary(&mut self, op: Op, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let out = self.values[a.0]
            .iter()
            .zip(&self.values[b.0])
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shapes[a.0].clone();
        let tracks = self.tracks[a.0] || self.tracks[b.0];
        Ok(self.push(op, shape, out, tracks))
    }

    /// Reverse pass from a scalar node. A graph can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.differentiated {
            return Err(Error::contract("backward called twice on one graph"));
        }
        if self.values[loss.0].len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar, got shape {:?}",
                self.shapes[loss.0]
            )));
        }
        self.differentiated = true;
        for i in 0..=loss.0 {
            if self.tracks[i] || i == loss.0 {
                self.grads[i] = vec![0.0; self.values[i].len()];
            }
        }
        self.grads[loss.0][0] = 1.0;
        self.visits = 0;
        for i in (0..=loss.0).rev() {
            self.visits += 1;
            if !self.tracks[i] {
                continue;
            }
            let g = std::mem::take(&mut self.grads[i]);
            self.propagate(i, &g);
            self.grads[i] = g;
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, f: impl Fn(usize, &mut f64, &[Vec<f64>])) {
        if !self.tracks[v.0] {
            return;
        }
        let values = &self.values;
        for (k, dst) in self.grads[v.0].iter_mut().enumerate() {
            f(k, dst, values);
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let out = &self.values[i];
        match self.ops[i] {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let (rows, d) = (self.shapes[x.0][0], self.shapes[x.0][1]);
                let h = self.shapes[w.0][1];
                if self.tracks[x.0] {
                    kernels::gemm(
                        MatRef::new(g, rows, h),
                        MatRef::new(&self.values[w.0], d, h).t(),
                        1.0,
                        &mut self.grads[x.0],
                    );
                }
                if self.tracks[w.0] {
                    kernels::gemm(
                        MatRef::new(&self.values[x.0], rows, d).t(),
                        MatRef::new(g, rows, h),
                        1.0,
                        &mut self.grads[w.0],
                    );
                }
                if let Some(b) = b {
                    if self.tracks[b.0] {
                        let gb = &mut self.grads[b.0];
                        for row in g.chunks_exact(h) {
                            for (d, &v) in gb.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                    }
                }
            }
            Op::Relu(a) => self.accumulate(a, |k, d, vals| {
                if vals[a.0][k] > 0.0 {
                    *d += g[k];
                }
            }),
            Op::Softmax(a) => {
                let cols = self.shapes[i][1];
                if self.tracks[a.0] {
                    let ga = &mut self.grads[a.0];
                    for ((y, gr), dst) in out
                        .chunks_exact(cols)
                        .zip(g.chunks_exact(cols))
                        .zip(ga.chunks_exact_mut(cols))
                    {
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for k in 0..cols {
                            dst[k] += y[k] * (gr[k] - dot);
                        }
                    }
                }
            }
            Op::Log(a) => self.accumulate(a, |k, d, vals| {
                let x = vals[a.0][k];
                if x > LOG_FLOOR {
                    *d += g[k] / x;
                }
            }),
            Op::Add(a, b) => {
                self.accumulate(a, |k, d, _| *d += g[k]);
                self.accumulate(b, |k, d, _| *d += g[k]);
            }
            Op::Sub(a, b) => {
                self.accumulate(a, |k, d, _| *d += g[k]);
                self.accumulate(b, |k, d, _| *d -= g[k]);
            }
            Op::Mul(a, b) => {
                self.accumulate(a, |k, d, vals| *d += g[k] * vals[b.0][k]);
                self.accumulate(b, |k, d, vals| *d += g[k] * vals[a.0][k]);
            }
            Op::Div(a, b) => {
                self.accumulate(a, |k, d, vals| *d += g[k] / vals[b.0][k]);
                self.accumulate(b, |k, d, vals| {
                    let y = vals[b.0][k];
                    *d -= g[k] * vals[a.0][k] / (y * y);
                });
            }
            Op::Scale(a, s) => self.accumulate(a, |k, d, _| *d += s * g[k]),
            Op::Transpose(a) => {
                let (r, c) = (self.shapes[a.0][0], self.shapes[a.0][1]);
                self.accumulate(a, |k, d, _| *d += g[(k % c) * r + k / c]);
            }
            Op::SumRows(a) => {
                let c = self.shapes[a.0][1];
                self.accumulate(a, |k, d, _| *d += g[k % c]);
            }
            Op::SumCols(a) => {
                let c = self.shapes[a.0][1];
                self.accumulate(a, |k, d, _| *d += g[k / c]);
            }
            Op::Sum(a) => self.accumulate(a, |_, d, _| *d += g[0]),
            Op::Mean(a) => {
                let n = self.values[a.0].len() as f64;
                self.accumulate(a, |_, d, _| *d += g[0] / n);
            }
            Op::SliceRows { src, start } => {
                let c = self.shapes[i][1];
                let offset = start * c;
                if self.tracks[src.0] {
                    let dst = &mut self.grads[src.0][offset..offset + g.len()];
                    for (d, &v) in dst.iter_mut().zip(g) {
                        *d += v;
                    }
                }
            }
        }
    }
}

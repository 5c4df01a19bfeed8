//! Reverse-mode automatic differentiation over dynamically shaped `f64` arrays.
//!
//! A [`Graph`] records operations as they execute (define-by-run). Every node
//! owns its forward value; [`Graph::backward`] walks the tape in reverse and
//! accumulates gradients for every node, including the [`Graph::input`]
//! leaves that hold model parameters. The tape is append-only, so node ids
//! are already a topological order.
//!
//! The op set is deliberately small: elementwise arithmetic, 2-D matrix
//! products, single-axis reductions, row/column broadcasts, row-stable
//! softmax, and index gather/scatter. Layer normalization, attention and the
//! losses are composed from these primitives, which keeps every backward
//! rule short enough to verify against central finite differences (see the
//! tests at the bottom of this module).

use ndarray::{ArrayD, ArrayView1, ArrayView2, Axis, Ix1, Ix2, IxDyn};

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Tid(usize);

enum Op {
    Input,
    Add(Tid, Tid),
    Sub(Tid, Tid),
    Mul(Tid, Tid),
    Div(Tid, Tid),
    Scale(Tid, f64),
    AddScalar(Tid),
    /// `(r, c) + (c,)` broadcast over rows.
    AddRowVec(Tid, Tid),
    /// `(r, c) * (c,)` broadcast over rows.
    MulRowVec(Tid, Tid),
    /// `(r, c) - (r,)` broadcast over columns.
    SubColVec(Tid, Tid),
    /// `(r, c) / (r,)` broadcast over columns.
    DivColVec(Tid, Tid),
    MatMul(Tid, Tid),
    Transpose(Tid),
    Reshape(Tid),
    SumAll(Tid),
    MeanAll(Tid),
    SumAxis(Tid, usize),
    MeanAxis(Tid, usize),
    Sqrt(Tid),
    Square(Tid),
    Exp(Tid),
    Ln(Tid),
    Relu(Tid),
    SoftmaxRows(Tid),
    GatherRows(Tid, Vec<usize>),
    /// Place rows of the input at the given indices of an otherwise-zero
    /// `(n, c)` output. Indices must be distinct.
    ScatterRows(Tid, Vec<usize>),
    GatherCols(Tid, Vec<usize>),
    ScatterCols(Tid, Vec<usize>),
    /// `(c,)` repeated into `(r, c)`.
    RepeatRow(Tid),
    /// Stack `B` vectors of shape `(c,)` into `(B, c)`.
    StackRows(Vec<Tid>),
}

struct Node {
    op: Op,
    value: ArrayD<f64>,
}

/// Gradient buffers produced by [`Graph::backward`], indexed by [`Tid`].
pub struct Gradients {
    grads: Vec<Option<ArrayD<f64>>>,
}

impl Gradients {
    /// Gradient of the backward root with respect to node `t`. Zero if the
    /// node does not influence the root.
    pub fn get(&self, t: Tid, shape: &[usize]) -> ArrayD<f64> {
        match &self.grads[t.0] {
            Some(g) => g.clone(),
            None => ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn try_get(&self, t: Tid) -> Option<&ArrayD<f64>> {
        self.grads[t.0].as_ref()
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn as2(v: &ArrayD<f64>) -> ArrayView2<'_, f64> {
    v.view().into_dimensionality::<Ix2>().expect("expected 2-d node")
}

fn as1(v: &ArrayD<f64>) -> ArrayView1<'_, f64> {
    v.view().into_dimensionality::<Ix1>().expect("expected 1-d node")
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: ArrayD<f64>) -> Tid {
        self.nodes.push(Node { op, value });
        Tid(self.nodes.len() - 1)
    }

    pub fn value(&self, t: Tid) -> &ArrayD<f64> {
        &self.nodes[t.0].value
    }

    /// Forward value of a scalar (0-d or single-element) node.
    pub fn scalar(&self, t: Tid) -> f64 {
        let v = self.value(t);
        assert_eq!(v.len(), 1, "node is not a scalar");
        *v.iter().next().unwrap()
    }

    // ---- leaves ----------------------------------------------------------

    pub fn input(&mut self, value: ArrayD<f64>) -> Tid {
        self.push(Op::Input, value)
    }

    pub fn input2(&mut self, value: ndarray::Array2<f64>) -> Tid {
        self.input(value.into_dyn())
    }

    pub fn input1(&mut self, value: ndarray::Array1<f64>) -> Tid {
        self.input(value.into_dyn())
    }

    pub fn input_scalar(&mut self, value: f64) -> Tid {
        self.input(ArrayD::from_elem(IxDyn(&[]), value))
    }

    // ---- elementwise -----------------------------------------------------

    pub fn add(&mut self, a: Tid, b: Tid) -> Tid {
        let v = {
            let (va, vb) = (self.value(a), self.value(b));
            assert_eq!(va.shape(), vb.shape(), "add: shape mismatch");
            va + vb
        };
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Tid, b: Tid) -> Tid {
        let v = {
            let (va, vb) = (self.value(a), self.value(b));
            assert_eq!(va.shape(), vb.shape(), "sub: shape mismatch");
            va - vb
        };
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Tid {
        let v = {
            let (va, vb) = (self.value(a), self.value(b));
            assert_eq!(va.shape(), vb.shape(), "mul: shape mismatch");
            va * vb
        };
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: Tid, b: Tid) -> Tid {
        let v = {
            let (va, vb) = (self.value(a), self.value(b));
            assert_eq!(va.shape(), vb.shape(), "div: shape mismatch");
            va / vb
        };
        self.push(Op::Div(a, b), v)
    }

    pub fn scale(&mut self, a: Tid, k: f64) -> Tid {
        let v = self.value(a) * k;
        self.push(Op::Scale(a, k), v)
    }

    pub fn add_scalar(&mut self, a: Tid, k: f64) -> Tid {
        let v = self.value(a) + k;
        self.push(Op::AddScalar(a), v)
    }

    pub fn sqrt(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn square(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn exp(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn ln(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(f64::ln);
        self.push(Op::Ln(a), v)
    }

    pub fn relu(&mut self, a: Tid) -> Tid {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    // ---- broadcasts ------------------------------------------------------

    pub fn add_row_vec(&mut self, a: Tid, v: Tid) -> Tid {
        let out = {
            let (ma, vv) = (as2(self.value(a)), as1(self.value(v)));
            assert_eq!(ma.ncols(), vv.len(), "add_row_vec: width mismatch");
            &ma + &vv
        };
        self.push(Op::AddRowVec(a, v), out.into_dyn())
    }

    pub fn mul_row_vec(&mut self, a: Tid, v: Tid) -> Tid {
        let out = {
            let (ma, vv) = (as2(self.value(a)), as1(self.value(v)));
            assert_eq!(ma.ncols(), vv.len(), "mul_row_vec: width mismatch");
            &ma * &vv
        };
        self.push(Op::MulRowVec(a, v), out.into_dyn())
    }

    pub fn sub_col_vec(&mut self, a: Tid, v: Tid) -> Tid {
        let out = {
            let (ma, vv) = (as2(self.value(a)), as1(self.value(v)));
            assert_eq!(ma.nrows(), vv.len(), "sub_col_vec: height mismatch");
            &ma - &vv.insert_axis(Axis(1))
        };
        self.push(Op::SubColVec(a, v), out.into_dyn())
    }

    pub fn div_col_vec(&mut self, a: Tid, v: Tid) -> Tid {
        let out = {
            let (ma, vv) = (as2(self.value(a)), as1(self.value(v)));
            assert_eq!(ma.nrows(), vv.len(), "div_col_vec: height mismatch");
            &ma / &vv.insert_axis(Axis(1))
        };
        self.push(Op::DivColVec(a, v), out.into_dyn())
    }

    // ---- linear algebra ----------------------------------------------------

    pub fn matmul(&mut self, a: Tid, b: Tid) -> Tid {
        let out = {
            let (ma, mb) = (as2(self.value(a)), as2(self.value(b)));
            assert_eq!(ma.ncols(), mb.nrows(), "matmul: inner dim mismatch");
            ma.dot(&mb)
        };
        self.push(Op::MatMul(a, b), out.into_dyn())
    }

    pub fn transpose(&mut self, a: Tid) -> Tid {
        let out = as2(self.value(a)).t().to_owned();
        self.push(Op::Transpose(a), out.into_dyn())
    }

    pub fn reshape(&mut self, a: Tid, shape: &[usize]) -> Tid {
        let v = self.value(a);
        assert_eq!(v.len(), shape.iter().product::<usize>(), "reshape: length mismatch");
        let flat: Vec<f64> = v.iter().copied().collect();
        let out = ArrayD::from_shape_vec(IxDyn(shape), flat).expect("reshape: shape checked");
        self.push(Op::Reshape(a), out)
    }

    // ---- reductions --------------------------------------------------------

    pub fn sum_all(&mut self, a: Tid) -> Tid {
        let s = self.value(a).sum();
        self.push(Op::SumAll(a), ArrayD::from_elem(IxDyn(&[]), s))
    }

    pub fn mean_all(&mut self, a: Tid) -> Tid {
        let v = self.value(a);
        assert!(v.len() > 0, "mean_all: empty array");
        let m = v.sum() / v.len() as f64;
        self.push(Op::MeanAll(a), ArrayD::from_elem(IxDyn(&[]), m))
    }

    pub fn sum_axis(&mut self, a: Tid, axis: usize) -> Tid {
        let out = self.value(a).sum_axis(Axis(axis));
        self.push(Op::SumAxis(a, axis), out)
    }

    pub fn mean_axis(&mut self, a: Tid, axis: usize) -> Tid {
        let out = self.value(a).mean_axis(Axis(axis)).expect("mean_axis: empty axis");
        self.push(Op::MeanAxis(a, axis), out)
    }

    // ---- softmax -----------------------------------------------------------

    /// Row-wise stable softmax of a 2-d node.
    pub fn softmax_rows(&mut self, a: Tid) -> Tid {
        let m = as2(self.value(a));
        let mut out = m.to_owned();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(Op::SoftmaxRows(a), out.into_dyn())
    }

    // ---- indexing ----------------------------------------------------------

    pub fn gather_rows(&mut self, a: Tid, indices: &[usize]) -> Tid {
        let m = as2(self.value(a));
        let mut out = ndarray::Array2::zeros((indices.len(), m.ncols()));
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(k).assign(&m.row(i));
        }
        self.push(Op::GatherRows(a, indices.to_vec()), out.into_dyn())
    }

    pub fn scatter_rows(&mut self, a: Tid, indices: &[usize], n_rows: usize) -> Tid {
        let m = as2(self.value(a));
        assert_eq!(m.nrows(), indices.len(), "scatter_rows: row count mismatch");
        let mut out = ndarray::Array2::zeros((n_rows, m.ncols()));
        for (k, &i) in indices.iter().enumerate() {
            out.row_mut(i).assign(&m.row(k));
        }
        self.push(Op::ScatterRows(a, indices.to_vec()), out.into_dyn())
    }

    pub fn gather_cols(&mut self, a: Tid, indices: &[usize]) -> Tid {
        let m = as2(self.value(a));
        let mut out = ndarray::Array2::zeros((m.nrows(), indices.len()));
        for (k, &j) in indices.iter().enumerate() {
            out.column_mut(k).assign(&m.column(j));
        }
        self.push(Op::GatherCols(a, indices.to_vec()), out.into_dyn())
    }

    pub fn scatter_cols(&mut self, a: Tid, indices: &[usize], n_cols: usize) -> Tid {
        let m = as2(self.value(a));
        assert_eq!(m.ncols(), indices.len(), "scatter_cols: col count mismatch");
        let mut out = ndarray::Array2::zeros((m.nrows(), n_cols));
        for (k, &j) in indices.iter().enumerate() {
            out.column_mut(j).assign(&m.column(k));
        }
        self.push(Op::ScatterCols(a, indices.to_vec()), out.into_dyn())
    }

    pub fn repeat_row(&mut self, v: Tid, n_rows: usize) -> Tid {
        let row = as1(self.value(v)).to_owned();
        let mut out = ndarray::Array2::zeros((n_rows, row.len()));
        for mut r in out.rows_mut() {
            r.assign(&row);
        }
        self.push(Op::RepeatRow(v), out.into_dyn())
    }

    pub fn stack_rows(&mut self, parts: &[Tid]) -> Tid {
        assert!(!parts.is_empty(), "stack_rows: empty input");
        let c = self.value(parts[0]).len();
        let mut out = ndarray::Array2::zeros((parts.len(), c));
        for (k, &t) in parts.iter().enumerate() {
            let row = as1(self.value(t));
            assert_eq!(row.len(), c, "stack_rows: width mismatch");
            out.row_mut(k).assign(&row);
        }
        self.push(Op::StackRows(parts.to_vec()), out.into_dyn())
    }

    // ---- backward ----------------------------------------------------------

    /// Accumulate gradients of scalar node `root` with respect to every node.
    pub fn backward(&self, root: Tid) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward root must be a scalar");
        let mut grads: Vec<Option<ArrayD<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(ArrayD::from_elem(self.value(root).raw_dim(), 1.0));

        for i in (0..=root.0).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(&self.nodes[i].op, i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accumulate(&self, op: &Op, node: usize, g: &ArrayD<f64>, grads: &mut [Option<ArrayD<f64>>]) {
        let mut bump = |t: Tid, delta: ArrayD<f64>| {
            match &mut grads[t.0] {
                Some(acc) => *acc += &delta,
                slot @ None => *slot = Some(delta),
            }
        };
        match op {
            Op::Input => {}
            Op::Add(a, b) => {
                bump(*a, g.clone());
                bump(*b, g.clone());
            }
            Op::Sub(a, b) => {
                bump(*a, g.clone());
                bump(*b, -g);
            }
            Op::Mul(a, b) => {
                bump(*a, g * self.value(*b));
                bump(*b, g * self.value(*a));
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                bump(*a, g / vb);
                bump(*b, -(g * va) / (vb * vb));
            }
            Op::Scale(a, k) => bump(*a, g * *k),
            Op::AddScalar(a) => bump(*a, g.clone()),
            Op::AddRowVec(a, v) => {
                bump(*a, g.clone());
                bump(*v, g.sum_axis(Axis(0)));
            }
            Op::MulRowVec(a, v) => {
                let (gm, vv) = (as2(g), as1(self.value(*v)));
                bump(*a, (&gm * &vv).into_dyn());
                let prod = &gm * &as2(self.value(*a));
                bump(*v, prod.sum_axis(Axis(0)).into_dyn());
            }
            Op::SubColVec(a, v) => {
                bump(*a, g.clone());
                bump(*v, -g.sum_axis(Axis(1)));
            }
            Op::DivColVec(a, v) => {
                let (gm, vv) = (as2(g), as1(self.value(*v)));
                let vcol = vv.insert_axis(Axis(1));
                bump(*a, (&gm / &vcol).into_dyn());
                let num = &gm * &as2(self.value(*a));
                let gv = -(num.sum_axis(Axis(1))) / (&vv * &vv);
                bump(*v, gv.into_dyn());
            }
            Op::MatMul(a, b) => {
                let gm = as2(g);
                let (va, vb) = (as2(self.value(*a)), as2(self.value(*b)));
                bump(*a, gm.dot(&vb.t()).into_dyn());
                bump(*b, va.t().dot(&gm).into_dyn());
            }
            Op::Transpose(a) => bump(*a, as2(g).t().to_owned().into_dyn()),
            Op::Reshape(a) => {
                let shape = self.value(*a).raw_dim();
                let flat: Vec<f64> = g.iter().copied().collect();
                bump(*a, ArrayD::from_shape_vec(shape, flat).unwrap());
            }
            Op::SumAll(a) => {
                let gs = *g.iter().next().unwrap();
                bump(*a, ArrayD::from_elem(self.value(*a).raw_dim(), gs));
            }
            Op::MeanAll(a) => {
                let n = self.value(*a).len() as f64;
                let gs = *g.iter().next().unwrap() / n;
                bump(*a, ArrayD::from_elem(self.value(*a).raw_dim(), gs));
            }
            Op::SumAxis(a, axis) => {
                let parent = self.value(*a);
                let expanded = g
                    .view()
                    .insert_axis(Axis(*axis))
                    .broadcast(parent.raw_dim())
                    .unwrap()
                    .to_owned();
                bump(*a, expanded);
            }
            Op::MeanAxis(a, axis) => {
                let parent = self.value(*a);
                let n = parent.shape()[*axis] as f64;
                let expanded = g
                    .view()
                    .insert_axis(Axis(*axis))
                    .broadcast(parent.raw_dim())
                    .unwrap()
                    .to_owned();
                bump(*a, expanded / n);
            }
            Op::Sqrt(a) => {
                let y = &self.nodes[node].value;
                bump(*a, g * 0.5 / y);
            }
            Op::Square(a) => bump(*a, g * 2.0 * self.value(*a)),
            Op::Exp(a) => bump(*a, g * &self.nodes[node].value),
            Op::Ln(a) => bump(*a, g / self.value(*a)),
            Op::Relu(a) => {
                let mask = self.value(*a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                bump(*a, g * &mask);
            }
            Op::SoftmaxRows(a) => {
                let y = as2(&self.nodes[node].value);
                let gm = as2(g);
                let mut out = ndarray::Array2::zeros(y.raw_dim());
                for ((yrow, grow), mut orow) in
                    y.rows().into_iter().zip(gm.rows()).zip(out.rows_mut())
                {
                    let dot = yrow.dot(&grow);
                    for ((o, &yv), &gv) in orow.iter_mut().zip(yrow).zip(grow) {
                        *o = yv * (gv - dot);
                    }
                }
                bump(*a, out.into_dyn());
            }
            Op::GatherRows(a, idx) => {
                let gm = as2(g);
                let mut out = ndarray::Array2::zeros(as2(self.value(*a)).raw_dim());
                for (k, &i) in idx.iter().enumerate() {
                    let mut row = out.row_mut(i);
                    row += &gm.row(k);
                }
                bump(*a, out.into_dyn());
            }
            Op::ScatterRows(a, idx) => {
                let gm = as2(g);
                let mut out = ndarray::Array2::zeros(as2(self.value(*a)).raw_dim());
                for (k, &i) in idx.iter().enumerate() {
                    out.row_mut(k).assign(&gm.row(i));
                }
                bump(*a, out.into_dyn());
            }
            Op::GatherCols(a, idx) => {
                let gm = as2(g);
                let mut out = ndarray::Array2::zeros(as2(self.value(*a)).raw_dim());
                for (k, &j) in idx.iter().enumerate() {
                    let mut col = out.column_mut(j);
                    col += &gm.column(k);
                }
                bump(*a, out.into_dyn());
            }
            Op::ScatterCols(a, idx) => {
                let gm = as2(g);
                let mut out = ndarray::Array2::zeros(as2(self.value(*a)).raw_dim());
                for (k, &j) in idx.iter().enumerate() {
                    out.column_mut(k).assign(&gm.column(j));
                }
                bump(*a, out.into_dyn());
            }
            Op::RepeatRow(v) => bump(*v, g.sum_axis(Axis(0))),
            Op::StackRows(parts) => {
                let gm = as2(g);
                for (k, &t) in parts.iter().enumerate() {
                    bump(t, gm.row(k).to_owned().into_dyn());
                }
            }
        }
    }
}

// ---- composite building blocks ---------------------------------------------

/// `x @ w + b` for a 2-d `x` and optional bias row vector.
pub fn linear(g: &mut Graph, x: Tid, w: Tid, b: Option<Tid>) -> Tid {
    let y = g.matmul(x, w);
    match b {
        Some(b) => g.add_row_vec(y, b),
        None => y,
    }
}

/// Row-wise layer normalization with learnable gain and bias.
pub fn layer_norm(g: &mut Graph, x: Tid, gain: Tid, bias: Tid) -> Tid {
    const EPS: f64 = 1e-6;
    let mu = g.mean_axis(x, 1);
    let centered = g.sub_col_vec(x, mu);
    let sq = g.square(centered);
    let var = g.mean_axis(sq, 1);
    let var_eps = g.add_scalar(var, EPS);
    let std = g.sqrt(var_eps);
    let normed = g.div_col_vec(centered, std);
    let scaled = g.mul_row_vec(normed, gain);
    g.add_row_vec(scaled, bias)
}

/// Cosine similarity of two vectors given as `(1, d)` nodes.
pub fn cosine(g: &mut Graph, a: Tid, b: Tid) -> Tid {
    let prod = g.mul(a, b);
    let dot = g.sum_all(prod);
    let a2 = g.square(a);
    let a2s = g.sum_all(a2);
    let na = g.sqrt(a2s);
    let b2 = g.square(b);
    let b2s = g.sum_all(b2);
    let nb = g.sqrt(b2s);
    let denom = g.mul(na, nb);
    g.div(dot, denom)
}

/// Divide each row of a 2-d node by its Euclidean norm.
pub fn normalize_rows(g: &mut Graph, x: Tid) -> Tid {
    let sq = g.square(x);
    let sums = g.sum_axis(sq, 1);
    let norms = g.sqrt(sums);
    g.div_col_vec(x, norms)
}

use ndarray::{s, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BufferId, Index, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf(Option<ParamId>),
    MatMul(Var, Var),
    Add(Var, Var, Bcast),
    Sub(Var, Var, Bcast),
    Mul(Var, Var, Bcast),
    Scale(Var, f64),
    Expand(Var, Bcast),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Index),
    Exp(Var),
    Log(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Elu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    PRelu(Var, Var),
    RowSoftmax(Var),
    LogSoftmax(Var),
    SumAll(Var),
    SumAxis(Var),
    Pick(Var, Index),
    SegmentSum(Var, Index),
    SegmentMean(Var, Index, Vec<f64>),
    SegmentMax(Var, Vec<usize>),
    SegmentSoftmax(Var, Index),
    Dropout(Var, Matrix),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Matrix,
        training: bool,
    },
    L2Normalize(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of leaf values produced by [`Tape::gradients`].
#[derive(Debug)]
pub struct Grads {
    leaves: Vec<(Var, Option<ParamId>, Matrix)>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.leaves.iter().find(|(x, _, _)| *x == v).map(|(_, _, g)| g)
    }

    /// Gradient per parameter, summed over every leaf that read it.
    pub fn param(&self, id: ParamId) -> Option<Matrix> {
        let mut acc: Option<Matrix> = None;
        for (_, p, g) in &self.leaves {
            if *p == Some(id) {
                match &mut acc {
                    Some(a) => *a += g,
                    None => acc = Some(g.clone()),
                }
            }
        }
        acc
    }
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
const L2_EPS: f64 = 1e-12;

fn shape(m: &Matrix) -> [usize; 2] {
    [m.nrows(), m.ncols()]
}

fn standard(m: Matrix) -> Matrix {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

fn reduce_to(g: &Matrix, b: Bcast) -> Matrix {
    match b {
        Bcast::Same => g.clone(),
        Bcast::Row => g.sum_axis(Axis(0)).insert_axis(Axis(0)),
        Bcast::Col => g.sum_axis(Axis(1)).insert_axis(Axis(1)),
        Bcast::Scalar => Array2::from_elem((1, 1), g.sum()),
    }
}

fn check_index(op: &'static str, index: &[usize], segments: usize) -> Result<()> {
    match index.iter().find(|&&i| i >= segments) {
        Some(&i) => Err(Error::SegmentIndex {
            op,
            index: i,
            segments,
        }),
        None => Ok(()),
    }
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        shape(self.value(v))
    }

    /// Scalar value of a `1 × 1` var.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(shape(m), [1, 1]);
        m[(0, 0)]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: standard(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Matrix, param: Option<ParamId>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: standard(value),
            op: Op::Leaf(param),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, None, false)
    }

    /// A free input that receives a gradient but belongs to no parameter.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.leaf(value, None, true)
    }

    /// Reads the current value of a parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.leaf(store.value(id).clone(), Some(id), true)
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<Bcast> {
        let [ar, ac] = self.shape(a);
        let [br, bc] = self.shape(b);
        Ok(match (br, bc) {
            _ if (br, bc) == (ar, ac) => Bcast::Same,
            (1, 1) => Bcast::Scalar,
            (1, c) if c == ac => Bcast::Row,
            (r, 1) if r == ar => Bcast::Col,
            _ => {
                return Err(Error::shape(
                    op,
                    format!("cannot broadcast {br}x{bc} onto {ar}x{ac}"),
                ))
            }
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", shape(va), shape(vb)),
            ));
        }
        let out = va.dot(vb);
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.bcast("add", a, b)?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b, bc), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.bcast("sub", a, b)?;
        let out = self.value(a) - self.value(b);
        Ok(self.push(out, Op::Sub(a, b, bc), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let bc = self.bcast("mul", a, b)?;
        let out = self.value(a) * self.value(b);
        Ok(self.push(out, Op::Mul(a, b, bc), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// Explicit broadcast of a row vector, column vector or scalar to
    /// `rows × cols`.
    pub fn expand(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        let bc = match (r, c) {
            _ if (r, c) == (rows, cols) => Bcast::Same,
            (1, 1) => Bcast::Scalar,
            (1, c) if c == cols => Bcast::Row,
            (r, 1) if r == rows => Bcast::Col,
            _ => {
                return Err(Error::shape(
                    "expand",
                    format!("cannot expand {r}x{c} to {rows}x{cols}"),
                ))
            }
        };
        let out = self
            .value(a)
            .broadcast((rows, cols))
            .expect("checked above")
            .to_owned();
        Ok(self.push(out, Op::Expand(a, bc), &[a]))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        self.push(out, Op::Transpose(a), &[a])
    }

    /// Concatenation along columns (`axis = 1`) or rows (`axis = 0`).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat", "no inputs"));
        }
        let views: Vec<_> = parts.iter().map(|&v| self.value(v).view()).collect();
        let out = ndarray::concatenate(Axis(axis), &views)
            .map_err(|e| Error::shape("concat", e.to_string()))?;
        let op = if axis == 0 {
            Op::ConcatRows(parts.to_vec())
        } else {
            Op::ConcatCols(parts.to_vec())
        };
        Ok(self.push(out, op, parts))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let c = self.shape(a)[1];
        if start > end || end > c {
            return Err(Error::shape("slice", format!("columns {start}..{end} of {c}")));
        }
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let r = self.shape(a)[0];
        if start > end || end > r {
            return Err(Error::shape("slice", format!("rows {start}..{end} of {r}")));
        }
        let out = self.value(a).slice(s![start..end, ..]).to_owned();
        Ok(self.push(out, Op::SliceRows(a, start), &[a]))
    }

    /// `out[i] = a[index[i]]`.
    pub fn gather_rows(&mut self, a: Var, index: &Index) -> Result<Var> {
        let va = self.value(a);
        check_index("gather_rows", index, va.nrows())?;
        let d = va.ncols();
        let src = va.as_slice().unwrap();
        let mut out = Vec::with_capacity(index.len() * d);
        for &i in index.iter() {
            out.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let out = Array2::from_shape_vec((index.len(), d), out).unwrap();
        Ok(self.push(out, Op::GatherRows(a, index.clone()), &[a]))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::ln);
        self.push(out, Op::Log(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope), &[a])
    }

    /// ELU with `alpha = 1`.
    pub fn elu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(out, Op::Elu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(softplus);
        self.push(out, Op::Softplus(a), &[a])
    }

    /// Leaky ReLU with a learned `1 × 1` slope.
    pub fn prelu(&mut self, a: Var, slope: Var) -> Result<Var> {
        if self.shape(slope) != [1, 1] {
            return Err(Error::shape("prelu", "slope must be 1x1"));
        }
        let s = self.scalar(slope);
        let out = self.value(a).mapv(|x| if x > 0.0 { x } else { s * x });
        Ok(self.push(out, Op::PRelu(a, slope), &[a, slope]))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - m).exp());
            let z = row.sum();
            row /= z;
        }
        self.push(out, Op::RowSoftmax(a), &[a])
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        self.push(out, Op::LogSoftmax(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::SumAll(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sum over rows (`axis = 0`, giving `1 × c`) or columns (`axis = 1`,
    /// giving `r × 1`).
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Var {
        let out = self.value(a).sum_axis(Axis(axis)).insert_axis(Axis(axis));
        self.push(out, Op::SumAxis(a), &[a])
    }

    /// `out[i, 0] = a[i, index[i]]`.
    pub fn pick(&mut self, a: Var, index: &Index) -> Result<Var> {
        let va = self.value(a);
        if index.len() != va.nrows() {
            return Err(Error::shape(
                "pick",
                format!("{} indices for {} rows", index.len(), va.nrows()),
            ));
        }
        check_index("pick", index, va.ncols())?;
        let out = Array2::from_shape_fn((va.nrows(), 1), |(i, _)| va[(i, index[i])]);
        Ok(self.push(out, Op::Pick(a, index.clone()), &[a]))
    }

    /// Sums rows of `a` into `segments` groups given by `index`.
    pub fn segment_sum(&mut self, a: Var, index: &Index, segments: usize) -> Result<Var> {
        let va = self.value(a);
        self.check_segments("segment_sum", va, index, segments)?;
        let out = segment_sum(va, index, segments);
        Ok(self.push(out, Op::SegmentSum(a, index.clone()), &[a]))
    }

    /// Mean of each segment; empty segments give zero rows.
    pub fn segment_mean(&mut self, a: Var, index: &Index, segments: usize) -> Result<Var> {
        let va = self.value(a);
        self.check_segments("segment_mean", va, index, segments)?;
        let mut counts = vec![0.0; segments];
        for &i in index.iter() {
            counts[i] += 1.0;
        }
        let mut out = segment_sum(va, index, segments);
        for (mut row, &c) in out.rows_mut().into_iter().zip(&counts) {
            if c > 0.0 {
                row /= c;
            }
        }
        Ok(self.push(out, Op::SegmentMean(a, index.clone(), counts), &[a]))
    }

    /// Column-wise maximum of each segment; empty segments give zero rows.
    pub fn segment_max(&mut self, a: Var, index: &Index, segments: usize) -> Result<Var> {
        let va = self.value(a);
        self.check_segments("segment_max", va, index, segments)?;
        let d = va.ncols();
        let mut out = Array2::<f64>::zeros((segments, d));
        let mut arg = vec![usize::MAX; segments * d];
        for (e, &seg) in index.iter().enumerate() {
            for j in 0..d {
                let x = va[(e, j)];
                let k = seg * d + j;
                if arg[k] == usize::MAX || x > out[(seg, j)] {
                    out[(seg, j)] = x;
                    arg[k] = e;
                }
            }
        }
        Ok(self.push(out, Op::SegmentMax(a, arg), &[a]))
    }

    /// Softmax over the rows of each segment, independently per column. An
    /// input with no rows gives an output with no rows.
    pub fn segment_softmax(&mut self, a: Var, index: &Index, segments: usize) -> Result<Var> {
        let va = self.value(a);
        self.check_segments("segment_softmax", va, index, segments)?;
        let d = va.ncols();
        let mut max = Array2::from_elem((segments, d), f64::NEG_INFINITY);
        for (e, &seg) in index.iter().enumerate() {
            for j in 0..d {
                max[(seg, j)] = max[(seg, j)].max(va[(e, j)]);
            }
        }
        let mut out = va.clone();
        let mut z = Array2::<f64>::zeros((segments, d));
        for (e, &seg) in index.iter().enumerate() {
            for j in 0..d {
                let v = (va[(e, j)] - max[(seg, j)]).exp();
                out[(e, j)] = v;
                z[(seg, j)] += v;
            }
        }
        for (e, &seg) in index.iter().enumerate() {
            for j in 0..d {
                out[(e, j)] /= z[(seg, j)];
            }
        }
        Ok(self.push(out, Op::SegmentSoftmax(a, index.clone()), &[a]))
    }

    fn check_segments(&self, op: &'static str, va: &Matrix, index: &Index, segments: usize) -> Result<()> {
        if index.len() != va.nrows() {
            return Err(Error::shape(
                op,
                format!("{} indices for {} rows", index.len(), va.nrows()),
            ));
        }
        check_index(op, index, segments)
    }

    /// Inverted dropout: kept entries are scaled by `1 / (1 - p)`. Identity
    /// when not training or `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64, training: bool, seed: u64) -> Result<Var> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::shape("dropout", format!("p = {p} outside [0, 1]")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 - p;
        let mask = self.value(a).mapv(|_| {
            if keep > 0.0 && rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let out = self.value(a) * &mask;
        Ok(self.push(out, Op::Dropout(a, mask), &[a]))
    }

    /// Per-feature batch normalization over the rows of `x`.
    ///
    /// `gamma` and `beta` are `1 × d`. `running` holds a `2 × d` buffer of
    /// running mean (row 0) and variance (row 1), updated with momentum
    /// [`BN_MOMENTUM`] in training mode and used for normalization otherwise.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        store: &mut ParamStore,
        running: BufferId,
        training: bool,
    ) -> Result<Var> {
        let vx = self.value(x);
        let (n, d) = vx.dim();
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(v) != [1, d] {
                return Err(Error::shape(
                    "batch_norm",
                    format!("{name} must be 1x{d}, got {:?}", self.shape(v)),
                ));
            }
        }
        if store.buffer(running).dim() != (2, d) {
            return Err(Error::shape("batch_norm", "running stats must be 2 x d"));
        }
        let (mean, var) = if training {
            if n == 0 {
                return Err(Error::shape("batch_norm", "empty batch"));
            }
            let mean = vx.mean_axis(Axis(0)).unwrap();
            let centered = vx - &mean;
            let var = (&centered * &centered).mean_axis(Axis(0)).unwrap();
            let unbiased = if n > 1 {
                &var * (n as f64 / (n as f64 - 1.0))
            } else {
                var.clone()
            };
            let buf = store.buffer_mut(running);
            let m = BN_MOMENTUM;
            Zip::from(buf.row_mut(0)).and(&mean).for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
            Zip::from(buf.row_mut(1)).and(&unbiased).for_each(|r, &b| *r = (1.0 - m) * *r + m * b);
            (mean, var)
        } else {
            let buf = store.buffer(running);
            (buf.row(0).to_owned(), buf.row(1).to_owned())
        };
        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt()).insert_axis(Axis(0));
        let xhat = (vx - &mean.insert_axis(Axis(0))) * &inv_std;
        let out = &xhat * self.value(gamma) + self.value(beta);
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
            &[x, gamma, beta],
        ))
    }

    /// Scales every row (`axis = 1`) or column (`axis = 0`) to unit L2 norm;
    /// zero vectors stay zero.
    pub fn l2_normalize(&mut self, a: Var, axis: usize) -> Result<Var> {
        if axis > 1 {
            return Err(Error::shape("l2_normalize", format!("axis {axis}")));
        }
        if axis == 0 {
            let t = self.transpose(a);
            let n = self.l2_normalize(t, 1)?;
            return Ok(self.transpose(n));
        }
        let va = self.value(a);
        let norms: Vec<f64> = va.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mut out = va.clone();
        for (mut row, &nrm) in out.rows_mut().into_iter().zip(&norms) {
            row /= nrm.max(L2_EPS);
        }
        Ok(self.push(out, Op::L2Normalize(a, norms), &[a]))
    }

    /// Reverse pass from a scalar `loss`, returning gradients of every leaf.
    /// The tape can be differentiated only once.
    pub fn gradients(&mut self, loss: Var) -> Result<Grads> {
        if self.consumed {
            return Err(Error::BackwardTwice);
        }
        let s = self.shape(loss);
        if s != [1, 1] {
            return Err(Error::NonScalarLoss(s));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut leaves = Vec::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf(p) = self.nodes[i].op {
                leaves.push((Var(i), p, g));
                continue;
            }
            for (v, gv) in self.backward_node(i, &g) {
                let gv = standard(gv);
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => *acc += &gv,
                    slot => *slot = Some(gv),
                }
            }
        }
        Ok(Grads { leaves })
    }

    /// [`Tape::gradients`] plus accumulation (`+=`) into the parameter
    /// gradients of `store`.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<Grads> {
        let grads = self.gradients(loss)?;
        for (_, p, g) in &grads.leaves {
            if let Some(id) = p {
                store.accumulate(*id, g);
            }
        }
        Ok(grads)
    }

    fn backward_node(&self, i: usize, g: &Matrix) -> Vec<(Var, Matrix)> {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf(_) => vec![],
            Op::MatMul(a, b) => vec![
                (*a, g.dot(&val(*b).t())),
                (*b, val(*a).t().dot(g)),
            ],
            Op::Add(a, b, bc) => vec![(*a, g.clone()), (*b, reduce_to(g, *bc))],
            Op::Sub(a, b, bc) => vec![(*a, g.clone()), (*b, -reduce_to(g, *bc))],
            Op::Mul(a, b, bc) => vec![
                (*a, g * val(*b)),
                (*b, reduce_to(&(g * val(*a)), *bc)),
            ],
            Op::Scale(a, c) => vec![(*a, g * *c)],
            Op::Expand(a, bc) => vec![(*a, reduce_to(g, *bc))],
            Op::Transpose(a) => vec![(*a, g.t().to_owned())],
            Op::ConcatCols(parts) => {
                let mut start = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let w = val(p).ncols();
                        let piece = g.slice(s![.., start..start + w]).to_owned();
                        start += w;
                        (p, piece)
                    })
                    .collect()
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                parts
                    .iter()
                    .map(|&p| {
                        let h = val(p).nrows();
                        let piece = g.slice(s![start..start + h, ..]).to_owned();
                        start += h;
                        (p, piece)
                    })
                    .collect()
            }
            Op::SliceCols(a, start) => {
                let mut ga = Array2::zeros(val(*a).raw_dim());
                ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                vec![(*a, ga)]
            }
            Op::SliceRows(a, start) => {
                let mut ga = Array2::zeros(val(*a).raw_dim());
                ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                vec![(*a, ga)]
            }
            Op::GatherRows(a, index) => {
                vec![(*a, segment_sum(g, index, val(*a).nrows()))]
            }
            Op::Exp(a) => vec![(*a, g * y)],
            Op::Log(a) => vec![(*a, g / val(*a))],
            Op::Relu(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d = 0.0
                    }
                });
                vec![(*a, ga)]
            }
            Op::LeakyRelu(a, slope) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        *d *= slope
                    }
                });
                vec![(*a, ga)]
            }
            Op::Elu(a) => {
                let mut ga = g.clone();
                Zip::from(&mut ga).and(val(*a)).and(y).for_each(|d, &x, &yy| {
                    if x <= 0.0 {
                        *d *= yy + 1.0
                    }
                });
                vec![(*a, ga)]
            }
            Op::Tanh(a) => vec![(*a, g * &y.mapv(|t| 1.0 - t * t))],
            Op::Sigmoid(a) => vec![(*a, g * &y.mapv(|s| s * (1.0 - s)))],
            Op::Softplus(a) => vec![(*a, g * &val(*a).mapv(sigmoid))],
            Op::PRelu(a, slope) => {
                let s = val(*slope)[(0, 0)];
                let mut ga = g.clone();
                let mut gs = 0.0;
                Zip::from(&mut ga).and(val(*a)).for_each(|d, &x| {
                    if x <= 0.0 {
                        gs += *d * x;
                        *d *= s;
                    }
                });
                vec![(*a, ga), (*slope, Array2::from_elem((1, 1), gs))]
            }
            Op::RowSoftmax(a) => {
                let dot = (g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                vec![(*a, y * &(g - &dot))]
            }
            Op::LogSoftmax(a) => {
                let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                vec![(*a, g - &(y.mapv(f64::exp) * &gsum))]
            }
            Op::SumAll(a) => vec![(*a, Array2::from_elem(val(*a).raw_dim(), g[(0, 0)]))],
            Op::SumAxis(a) => {
                let shape = val(*a).raw_dim();
                vec![(*a, g.broadcast(shape).expect("reduced axis").to_owned())]
            }
            Op::Pick(a, index) => {
                let mut ga = Array2::zeros(val(*a).raw_dim());
                for (i, &j) in index.iter().enumerate() {
                    ga[(i, j)] = g[(i, 0)];
                }
                vec![(*a, ga)]
            }
            Op::SegmentSum(a, index) => vec![(*a, gather(g, index))],
            Op::SegmentMean(a, index, counts) => {
                let mut ga = gather(g, index);
                for (mut row, &seg) in ga.rows_mut().into_iter().zip(index.iter()) {
                    row /= counts[seg];
                }
                vec![(*a, ga)]
            }
            Op::SegmentMax(a, arg) => {
                let d = g.ncols();
                let mut ga = Array2::zeros(val(*a).raw_dim());
                for (k, &e) in arg.iter().enumerate() {
                    if e != usize::MAX {
                        ga[(e, k % d)] += g[(k / d, k % d)];
                    }
                }
                vec![(*a, ga)]
            }
            Op::SegmentSoftmax(a, index) => {
                let segments = index.iter().max().map_or(0, |m| m + 1);
                let dot = segment_sum(&(g * y), index, segments);
                let mut ga = g.clone();
                for (e, &seg) in index.iter().enumerate() {
                    for j in 0..g.ncols() {
                        ga[(e, j)] = y[(e, j)] * (g[(e, j)] - dot[(seg, j)]);
                    }
                }
                vec![(*a, ga)]
            }
            Op::Dropout(a, mask) => vec![(*a, g * mask)],
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            } => {
                let gv = val(*gamma);
                let dgamma = (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                let dbeta = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                let dxhat = g * gv;
                let dx = if *training {
                    let n = g.nrows() as f64;
                    let s1 = dxhat.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let s2 = (&dxhat * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    ((&dxhat * n) - &s1 - &(xhat * &s2)) * inv_std / n
                } else {
                    dxhat * inv_std
                };
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::L2Normalize(a, norms) => {
                let mut ga = g.clone();
                for ((mut grow, yrow), &nrm) in ga.rows_mut().into_iter().zip(y.rows()).zip(norms) {
                    if nrm > L2_EPS {
                        let dot = grow.dot(&yrow);
                        Zip::from(&mut grow).and(&yrow).for_each(|d, &yy| *d = (*d - yy * dot) / nrm);
                    } else {
                        grow /= L2_EPS;
                    }
                }
                vec![(*a, ga)]
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn segment_sum(a: &Matrix, index: &[usize], segments: usize) -> Matrix {
    let d = a.ncols();
    let mut out = vec![0.0; segments * d];
    let src = a.as_slice().expect("standard layout");
    for (e, &seg) in index.iter().enumerate() {
        let row = &src[e * d..(e + 1) * d];
        for (o, &x) in out[seg * d..(seg + 1) * d].iter_mut().zip(row) {
            *o += x;
        }
    }
    Array2::from_shape_vec((segments, d), out).unwrap()
}

fn gather(a: &Matrix, index: &[usize]) -> Matrix {
    let d = a.ncols();
    let src = a.as_slice().expect("standard layout");
    let mut out = Vec::with_capacity(index.len() * d);
    for &i in index {
        out.extend_from_slice(&src[i * d..(i + 1) * d]);
    }
    Array2::from_shape_vec((index.len(), d), out).unwrap()
}

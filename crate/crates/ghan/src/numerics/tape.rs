//! Reverse-mode gradient tape over dense tensors.
//!
//! Operations append one node each to the tape; [`Tape::backward`] replays
//! the nodes in exact reverse order of recording and accumulates adjoints.
//! A tensor that is not reachable from the loss keeps a zero gradient.
//!
//! The tape is single-threaded by design: one training step builds one tape
//! on one thread. Frozen values read out of a tape are plain [`Tensor`]s and
//! can be shared freely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};
use crate::error::{GhanError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TensorRef(pub(crate) usize);

enum Op {
    Leaf,
    MatMul {
        a: TensorRef,
        b: TensorRef,
    },
    Add {
        a: TensorRef,
        b: TensorRef,
    },
    Mul {
        a: TensorRef,
        b: TensorRef,
    },
    Scale {
        a: TensorRef,
        factor: f64,
    },
    Concat {
        parts: Vec<TensorRef>,
    },
    VStack {
        parts: Vec<TensorRef>,
    },
    GatherRows {
        a: TensorRef,
        indices: Vec<usize>,
    },
    SumReduce {
        a: TensorRef,
    },
    LeakyRelu {
        a: TensorRef,
        slope: f64,
    },
    SoftmaxVec {
        a: TensorRef,
    },
    SegmentSoftmax {
        a: TensorRef,
        groups: Vec<Vec<usize>>,
    },
    SegmentWeightedRows {
        weights: TensorRef,
        rows: TensorRef,
        row_for: Vec<usize>,
        groups: Vec<Vec<usize>>,
    },
    Dropout {
        a: TensorRef,
        mask: Vec<f64>,
    },
    AddBiasRow {
        a: TensorRef,
        bias: TensorRef,
    },
    Reshape {
        a: TensorRef,
    },
    CrossEntropySoftmax {
        logits: TensorRef,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of primitive operations with enough information to
/// replay adjoints.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, r: TensorRef) -> &Tensor {
        &self.grads[r.0]
    }

    pub fn take(&mut self, r: TensorRef) -> Tensor {
        std::mem::replace(&mut self.grads[r.0], Tensor::zeros(vec![0]))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor (parameter or constant).
    pub fn leaf(&mut self, value: Tensor) -> TensorRef {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, r: TensorRef) -> &Tensor {
        &self.nodes[r.0].value
    }

    /// Value of a one-element tensor.
    pub fn scalar_value(&self, r: TensorRef) -> f64 {
        self.nodes[r.0].value.data()[0]
    }

    fn push(&mut self, value: Tensor, op: Op) -> TensorRef {
        debug_assert!(value.is_finite(), "non-finite tensor recorded on tape");
        let id = self.nodes.len();
        self.nodes.push(Node { value, op });
        TensorRef(id)
    }

    // ── Forward operations ──────────────────────────────────────────────

    /// `a[m,k] * b[k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.ncols() != tb.nrows() {
            return Err(GhanError::ShapeMismatch {
                op: "matmul".into(),
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.nrows(), ta.ncols(), tb.ncols());
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::MatMul { a, b }))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(GhanError::ShapeMismatch {
                op: "add".into(),
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Add { a, b }))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(GhanError::ShapeMismatch {
                op: "mul".into(),
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul { a, b }))
    }

    /// Multiplies every element by a constant.
    pub fn scale(&mut self, a: TensorRef, factor: f64) -> TensorRef {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * factor).collect();
        let shape = ta.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("scale preserves shape"),
            Op::Scale { a, factor },
        )
    }

    /// Concatenates rank-1 tensors into one vector.
    pub fn concat(&mut self, parts: &[TensorRef]) -> Result<TensorRef> {
        if parts.is_empty() {
            return Err(GhanError::EmptyInput("concat of zero tensors".into()));
        }
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(GhanError::ShapeMismatch {
                    op: "concat".into(),
                    lhs: vec![1],
                    rhs: t.shape().to_vec(),
                });
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(
            Tensor::from_vec(data),
            Op::Concat {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Stacks rank-2 tensors with equal column counts on top of each other.
    pub fn vstack(&mut self, parts: &[TensorRef]) -> Result<TensorRef> {
        if parts.is_empty() {
            return Err(GhanError::EmptyInput("vstack of zero tensors".into()));
        }
        let ncols = self.value(parts[0]).ncols();
        let mut data = Vec::new();
        let mut nrows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 2 || t.ncols() != ncols {
                return Err(GhanError::ShapeMismatch {
                    op: "vstack".into(),
                    lhs: vec![ncols],
                    rhs: t.shape().to_vec(),
                });
            }
            nrows += t.nrows();
            data.extend_from_slice(t.data());
        }
        Ok(self.push(
            Tensor::matrix(nrows, ncols, data)?,
            Op::VStack {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Gathers rows of a matrix (or elements of a vector) by index.
    ///
    /// Indices may repeat; the backward pass scatter-adds. This is also the
    /// embedding-table lookup: the table is the matrix, ids are the indices.
    pub fn gather_rows(&mut self, a: TensorRef, indices: &[usize]) -> Result<TensorRef> {
        let ta = self.value(a);
        let out = match ta.rank() {
            1 => {
                let mut data = Vec::with_capacity(indices.len());
                for &i in indices {
                    if i >= ta.len() {
                        return Err(GhanError::IndexOutOfRange {
                            what: "gather_rows".into(),
                            index: i,
                            len: ta.len(),
                        });
                    }
                    data.push(ta.data()[i]);
                }
                Tensor::from_vec(data)
            }
            2 => {
                let c = ta.ncols();
                let mut data = Vec::with_capacity(indices.len() * c);
                for &i in indices {
                    if i >= ta.nrows() {
                        return Err(GhanError::IndexOutOfRange {
                            what: "gather_rows".into(),
                            index: i,
                            len: ta.nrows(),
                        });
                    }
                    data.extend_from_slice(ta.row(i));
                }
                Tensor::matrix(indices.len(), c, data)?
            }
            _ => {
                return Err(GhanError::InvalidArgument(
                    "gather_rows expects rank 1 or 2".into(),
                ))
            }
        };
        Ok(self.push(
            out,
            Op::GatherRows {
                a,
                indices: indices.to_vec(),
            },
        ))
    }

    /// Sums all elements into a one-element tensor.
    pub fn sum(&mut self, a: TensorRef) -> TensorRef {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumReduce { a })
    }

    /// Elementwise `max(x, slope * x)`.
    pub fn leaky_relu(&mut self, a: TensorRef, slope: f64) -> TensorRef {
        debug_assert!((0.0..1.0).contains(&slope));
        let ta = self.value(a);
        let data = ta
            .data()
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        let shape = ta.shape().to_vec();
        self.push(
            Tensor::new(shape, data).expect("leaky_relu preserves shape"),
            Op::LeakyRelu { a, slope },
        )
    }

    /// Softmax over a non-empty vector, computed with max-subtraction.
    ///
    /// Outputs are positive and sum to 1 within 1e-12.
    pub fn softmax(&mut self, a: TensorRef) -> Result<TensorRef> {
        let ta = self.value(a);
        if ta.rank() != 1 || ta.is_empty() {
            return Err(GhanError::EmptyInput("softmax of an empty vector".into()));
        }
        let data = softmax_slice(ta.data());
        Ok(self.push(Tensor::from_vec(data), Op::SoftmaxVec { a }))
    }

    /// Softmax applied independently within each index group of a vector.
    ///
    /// Every element index must appear in exactly one group.
    pub fn segment_softmax(&mut self, a: TensorRef, groups: &[Vec<usize>]) -> Result<TensorRef> {
        let ta = self.value(a);
        if ta.rank() != 1 {
            return Err(GhanError::InvalidArgument(
                "segment_softmax expects a vector".into(),
            ));
        }
        let mut data = vec![0.0; ta.len()];
        for group in groups {
            if group.is_empty() {
                return Err(GhanError::EmptyInput("empty softmax group".into()));
            }
            let vals: Vec<f64> = group.iter().map(|&i| ta.data()[i]).collect();
            let sm = softmax_slice(&vals);
            for (&i, v) in group.iter().zip(sm) {
                data[i] = v;
            }
        }
        Ok(self.push(
            Tensor::from_vec(data),
            Op::SegmentSoftmax {
                a,
                groups: groups.to_vec(),
            },
        ))
    }

    /// Grouped weighted sum of matrix rows.
    ///
    /// Output row `g` is `sum over p in groups[g] of weights[p] * rows[row_for[p]]`.
    /// A group left empty produces a zero row. Differentiable in both the
    /// weights and the rows.
    pub fn segment_weighted_rows(
        &mut self,
        weights: TensorRef,
        rows: TensorRef,
        row_for: &[usize],
        groups: &[Vec<usize>],
    ) -> Result<TensorRef> {
        let (tw, tr) = (self.value(weights), self.value(rows));
        if tw.rank() != 1 || tr.rank() != 2 || tw.len() != row_for.len() {
            return Err(GhanError::ShapeMismatch {
                op: "segment_weighted_rows".into(),
                lhs: tw.shape().to_vec(),
                rhs: vec![row_for.len()],
            });
        }
        let d = tr.ncols();
        let mut data = vec![0.0; groups.len() * d];
        for (g, group) in groups.iter().enumerate() {
            let out = &mut data[g * d..(g + 1) * d];
            for &p in group {
                let w = tw.data()[p];
                let src = tr.row(row_for[p]);
                for (o, s) in out.iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        Ok(self.push(
            Tensor::matrix(groups.len(), d, data)?,
            Op::SegmentWeightedRows {
                weights,
                rows,
                row_for: row_for.to_vec(),
                groups: groups.to_vec(),
            },
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`. In inference
    /// mode this is the identity (the input handle is returned unchanged).
    /// Deterministic for a given seed.
    pub fn dropout(&mut self, a: TensorRef, p: f64, seed: u64, training: bool) -> Result<TensorRef> {
        if !(0.0..1.0).contains(&p) {
            return Err(GhanError::InvalidArgument(format!(
                "dropout probability {p} outside [0, 1)"
            )));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let ta = self.value(a);
        let keep_scale = 1.0 / (1.0 - p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<f64> = (0..ta.len())
            .map(|_| {
                if rng.random::<f64>() < p {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let shape = ta.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Dropout { a, mask }))
    }

    /// Adds a bias row vector to every row of a matrix.
    pub fn add_bias_row(&mut self, a: TensorRef, bias: TensorRef) -> Result<TensorRef> {
        let (ta, tb) = (self.value(a), self.value(bias));
        if ta.rank() != 2 || tb.rank() != 1 || ta.ncols() != tb.len() {
            return Err(GhanError::ShapeMismatch {
                op: "add_bias_row".into(),
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let c = ta.ncols();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tb.data()[i % c])
            .collect();
        Ok(self.push(
            Tensor::matrix(ta.nrows(), c, data)?,
            Op::AddBiasRow { a, bias },
        ))
    }

    /// Reinterprets the storage under a new shape with the same length.
    pub fn reshape(&mut self, a: TensorRef, shape: Vec<usize>) -> Result<TensorRef> {
        let ta = self.value(a);
        if shape.iter().product::<usize>() != ta.len() {
            return Err(GhanError::ShapeMismatch {
                op: "reshape".into(),
                lhs: ta.shape().to_vec(),
                rhs: shape,
            });
        }
        let data = ta.data().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Reshape { a }))
    }

    /// Mean cross-entropy of row-wise softmax against integer targets.
    ///
    /// `logits` is `[rows, classes]`, `targets[i]` the true class of row `i`.
    pub fn cross_entropy_softmax(
        &mut self,
        logits: TensorRef,
        targets: &[usize],
    ) -> Result<TensorRef> {
        let tl = self.value(logits);
        if tl.rank() != 2 || tl.nrows() != targets.len() {
            return Err(GhanError::ShapeMismatch {
                op: "cross_entropy_softmax".into(),
                lhs: tl.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if targets.is_empty() {
            return Err(GhanError::EmptyInput("cross entropy over zero rows".into()));
        }
        let classes = tl.ncols();
        let mut probs = Vec::with_capacity(tl.len());
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= classes {
                return Err(GhanError::IndexOutOfRange {
                    what: "cross_entropy_softmax target".into(),
                    index: t,
                    len: classes,
                });
            }
            let row = softmax_slice(tl.row(i));
            loss -= row[t].ln();
            probs.extend_from_slice(&row);
        }
        loss /= targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropySoftmax {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    // ── Backward pass ───────────────────────────────────────────────────

    /// Propagates adjoints from `loss` back through every recorded
    /// operation, in exact reverse order of recording.
    pub fn backward(&self, loss: TensorRef) -> Gradients {
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros_like(&n.value))
            .collect();
        let loss_len = self.nodes[loss.0].value.len();
        grads[loss.0] = Tensor::new(
            self.nodes[loss.0].value.shape().to_vec(),
            vec![1.0; loss_len],
        )
        .expect("loss seed");

        for i in (0..=loss.0).rev() {
            let g = grads[i].clone();
            if g.data().iter().all(|&v| v == 0.0) {
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let ta = &self.nodes[a.0].value;
                    let tb = &self.nodes[b.0].value;
                    let (m, k, n) = (ta.nrows(), ta.ncols(), tb.ncols());
                    // dA = dC * B^T, dB = A^T * dC
                    let da = matmul_nt(g.data(), tb.data(), m, n, k);
                    let db = matmul_tn(ta.data(), g.data(), k, m, n);
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], g.data());
                    accumulate(&mut grads[b.0], g.data());
                }
                Op::Mul { a, b } => {
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[b.0].value.data())
                        .map(|(gv, bv)| gv * bv)
                        .collect();
                    let db: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(self.nodes[a.0].value.data())
                        .map(|(gv, av)| gv * av)
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::Scale { a, factor } => {
                    let da: Vec<f64> = g.data().iter().map(|gv| gv * factor).collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::Concat { parts } | Op::VStack { parts } => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.nodes[p.0].value.len();
                        accumulate_slice(&mut grads[p.0], &g.data()[offset..offset + len]);
                        offset += len;
                    }
                }
                Op::GatherRows { a, indices } => {
                    let width = g.len() / indices.len().max(1);
                    let ga = grads[a.0].data_mut();
                    for (pos, &src) in indices.iter().enumerate() {
                        let chunk = &g.data()[pos * width..(pos + 1) * width];
                        for (j, v) in chunk.iter().enumerate() {
                            ga[src * width + j] += v;
                        }
                    }
                }
                Op::SumReduce { a } => {
                    let gv = g.data()[0];
                    for v in grads[a.0].data_mut() {
                        *v += gv;
                    }
                }
                Op::LeakyRelu { a, slope } => {
                    let input = self.nodes[a.0].value.data();
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(input)
                        .map(|(gv, &x)| if x > 0.0 { *gv } else { gv * slope })
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::SoftmaxVec { a } => {
                    let y = self.nodes[i].value.data();
                    let dot: f64 = g.data().iter().zip(y).map(|(gv, yv)| gv * yv).sum();
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(y)
                        .map(|(gv, yv)| yv * (gv - dot))
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::SegmentSoftmax { a, groups } => {
                    let y = self.nodes[i].value.data();
                    let ga = grads[a.0].data_mut();
                    for group in groups {
                        let dot: f64 = group.iter().map(|&p| g.data()[p] * y[p]).sum();
                        for &p in group {
                            ga[p] += y[p] * (g.data()[p] - dot);
                        }
                    }
                }
                Op::SegmentWeightedRows {
                    weights,
                    rows,
                    row_for,
                    groups,
                } => {
                    let d = self.nodes[rows.0].value.ncols();
                    let w = self.nodes[weights.0].value.data().to_vec();
                    let src = self.nodes[rows.0].value.data().to_vec();
                    {
                        let gw = grads[weights.0].data_mut();
                        for (gidx, group) in groups.iter().enumerate() {
                            let gout = &g.data()[gidx * d..(gidx + 1) * d];
                            for &p in group {
                                let r = row_for[p];
                                let mut s = 0.0;
                                for j in 0..d {
                                    s += gout[j] * src[r * d + j];
                                }
                                gw[p] += s;
                            }
                        }
                    }
                    {
                        let gr = grads[rows.0].data_mut();
                        for (gidx, group) in groups.iter().enumerate() {
                            let gout = &g.data()[gidx * d..(gidx + 1) * d];
                            for &p in group {
                                let r = row_for[p];
                                for j in 0..d {
                                    gr[r * d + j] += w[p] * gout[j];
                                }
                            }
                        }
                    }
                }
                Op::Dropout { a, mask } => {
                    let da: Vec<f64> = g.data().iter().zip(mask).map(|(gv, m)| gv * m).collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::AddBiasRow { a, bias } => {
                    accumulate(&mut grads[a.0], g.data());
                    let c = self.nodes[bias.0].value.len();
                    let gb = grads[bias.0].data_mut();
                    for (j, v) in g.data().iter().enumerate() {
                        gb[j % c] += v;
                    }
                }
                Op::Reshape { a } => {
                    accumulate_slice(&mut grads[a.0], g.data());
                }
                Op::CrossEntropySoftmax {
                    logits,
                    targets,
                    probs,
                } => {
                    let gv = g.data()[0];
                    let rows = targets.len();
                    let classes = self.nodes[logits.0].value.ncols();
                    let gl = grads[logits.0].data_mut();
                    for (r, &t) in targets.iter().enumerate() {
                        for c in 0..classes {
                            let indicator = if c == t { 1.0 } else { 0.0 };
                            gl[r * classes + c] +=
                                gv * (probs[r * classes + c] - indicator) / rows as f64;
                        }
                    }
                }
            }
        }
        Gradients { grads }
    }
}

fn accumulate(into: &mut Tensor, delta: &[f64]) {
    for (t, d) in into.data_mut().iter_mut().zip(delta) {
        *t += d;
    }
}

fn accumulate_slice(into: &mut Tensor, delta: &[f64]) {
    accumulate(into, delta)
}

/// Numerically stable softmax of a slice.
pub(crate) fn softmax_slice(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

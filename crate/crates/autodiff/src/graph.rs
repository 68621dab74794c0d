use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::array::DenseArray;
use crate::error::{AutodiffError, Result};

/// Index of a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Picks `k` neighbors for every row of a metric array. Must return a flat
/// `rows * k` list of row indices. Neighbor selection is piecewise constant,
/// so no gradient flows through it.
pub type NeighborFn = Arc<dyn Fn(&DenseArray, usize) -> std::result::Result<Vec<usize>, String> + Send + Sync>;

/// Operation kinds. Every input id must refer to an earlier node.
#[derive(Clone)]
pub enum Op {
    /// Named input, bound at evaluation time.
    Input(String),
    Const(DenseArray),
    /// `[m, k] x [k, n] -> [m, n]`
    MatMul(NodeId, NodeId),
    /// Adds a `[c]` or `[1, c]` bias to every row of a `[n, c]` array.
    AddRowBias(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    LeakyRelu(NodeId, f64),
    /// Column-wise concatenation of `[n, c_i]` arrays.
    ConcatCols(Vec<NodeId>),
    SliceRows { input: NodeId, start: usize, end: usize },
    SliceCols { input: NodeId, start: usize, end: usize },
    /// Same data, new shape; the element count must match.
    Reshape { input: NodeId, shape: Vec<usize> },
    /// Sum of all entries, shape `[1]`.
    Sum(NodeId),
    /// Channel-wise maximum over rows: `[n, c] -> [1, c]`. Ties go to the
    /// lowest row index.
    MaxRows(NodeId),
    /// `out[i, c] = max over j in nbr(i) of values[j, c]`, where `nbr(i)` is
    /// chosen by `select` from the `metric` array (restricted to
    /// `metric_cols` when given). Ties go to the lowest row index.
    NeighborMax {
        metric: NodeId,
        metric_cols: Option<(usize, usize)>,
        values: NodeId,
        k: usize,
        select: NeighborFn,
    },
    /// Mean over rows of `-log softmax(logits[r])[targets[r]]`. `targets`
    /// holds one class index per row, stored as floats.
    SoftmaxCrossEntropy { logits: NodeId, targets: NodeId },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Input(_) | Op::Const(_) => vec![],
            Op::MatMul(a, b)
            | Op::AddRowBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _) | Op::LeakyRelu(a, _) | Op::Sum(a) | Op::MaxRows(a) => vec![*a],
            Op::ConcatCols(xs) => xs.clone(),
            Op::SliceRows { input, .. } | Op::SliceCols { input, .. } | Op::Reshape { input, .. } => vec![*input],
            Op::NeighborMax { metric, values, .. } => vec![*metric, *values],
            Op::SoftmaxCrossEntropy { logits, targets } => vec![*logits, *targets],
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Const(_) => "const",
            Op::MatMul(..) => "matmul",
            Op::AddRowBias(..) => "add_row_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::SliceCols { .. } => "slice_cols",
            Op::Reshape { .. } => "reshape",
            Op::Sum(..) => "sum",
            Op::MaxRows(..) => "max_rows",
            Op::NeighborMax { .. } => "neighbor_max",
            Op::SoftmaxCrossEntropy { .. } => "softmax_cross_entropy",
        }
    }
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Input(name) => write!(f, "Input({name})"),
            other => write!(f, "{}({:?})", other.kind(), other.inputs()),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    name: String,
}

/// Append-only computation graph. Node ids only ever point backwards, so
/// insertion order is a topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a node with an auto-generated name.
    pub fn add(&mut self, op: Op) -> NodeId {
        let name = format!("{}#{}", op.kind(), self.nodes.len());
        self.add_named(name, op)
    }

    /// Adds a node whose name shows up in shape errors.
    ///
    /// Panics if `op` references a node that does not exist yet.
    pub fn add_named(&mut self, name: impl Into<String>, op: Op) -> NodeId {
        for id in op.inputs() {
            assert!(id.0 < self.nodes.len(), "node {id:?} does not exist yet");
        }
        self.nodes.push(Node {
            op,
            name: name.into(),
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: &str) -> NodeId {
        self.add_named(name, Op::Input(name.to_string()))
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Names of all input nodes, in insertion order.
    pub fn input_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::Input(name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    /// Runs the forward pass and keeps every intermediate value for a later
    /// backward pass.
    pub fn forward<'a>(&'a self, inputs: &'a BTreeMap<String, DenseArray>) -> Result<Evaluation<'a>> {
        let mut values: Vec<Cow<'a, DenseArray>> = Vec::with_capacity(self.nodes.len());
        let mut aux: Vec<Aux> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let (value, extra) = self.eval_node(node, &values, inputs)?;
            values.push(value);
            aux.push(extra);
        }
        Ok(Evaluation {
            graph: self,
            values,
            aux,
        })
    }

    fn eval_node<'a>(
        &'a self,
        node: &'a Node,
        values: &[Cow<'a, DenseArray>],
        inputs: &'a BTreeMap<String, DenseArray>,
    ) -> Result<(Cow<'a, DenseArray>, Aux)> {
        let v = |id: &NodeId| -> &DenseArray { values[id.0].as_ref() };
        let shape_err = |detail: String| AutodiffError::Shape {
            node: node.name.clone(),
            detail,
        };
        let out = match &node.op {
            Op::Input(name) => {
                let a = inputs
                    .get(name)
                    .ok_or_else(|| AutodiffError::UnboundInput(name.clone()))?;
                return Ok((Cow::Borrowed(a), Aux::None));
            }
            Op::Const(a) => return Ok((Cow::Borrowed(a), Aux::None)),
            Op::MatMul(a, b) => {
                let (a, b) = (v(a), v(b));
                let (m, k) = dims2(a).ok_or_else(|| shape_err(format!("lhs {:?} is not rank 2", a.shape())))?;
                let (k2, n) = dims2(b).ok_or_else(|| shape_err(format!("rhs {:?} is not rank 2", b.shape())))?;
                if k != k2 {
                    return Err(shape_err(format!("inner dims differ: {:?} x {:?}", a.shape(), b.shape())));
                }
                DenseArray::from_parts(vec![m, n], matmul(a.data(), b.data(), m, k, n))
            }
            Op::AddRowBias(x, b) => {
                let (x, b) = (v(x), v(b));
                let (r, c) = x
                    .as_matrix_dims()
                    .ok_or_else(|| shape_err(format!("input {:?} is not rank 1 or 2", x.shape())))?;
                if b.len() != c || b.as_matrix_dims().map(|d| d.0) != Some(1) {
                    return Err(shape_err(format!("bias {:?} does not match {c} columns", b.shape())));
                }
                let mut data = x.data().to_vec();
                for row in data.chunks_exact_mut(c) {
                    for (o, bb) in row.iter_mut().zip(b.data()) {
                        *o += bb;
                    }
                }
                let _ = r;
                DenseArray::from_parts(x.shape().to_vec(), data)
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (a, b) = (v(a), v(b));
                if a.shape() != b.shape() {
                    return Err(shape_err(format!("operands {:?} and {:?} differ", a.shape(), b.shape())));
                }
                let data: Vec<f64> = match &node.op {
                    Op::Add(..) => a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect(),
                    Op::Sub(..) => a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect(),
                    _ => a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect(),
                };
                DenseArray::from_parts(a.shape().to_vec(), data)
            }
            Op::Scale(a, s) => {
                let a = v(a);
                DenseArray::from_parts(a.shape().to_vec(), a.data().iter().map(|x| x * s).collect())
            }
            Op::LeakyRelu(a, slope) => {
                let a = v(a);
                if !(0.0..1.0).contains(slope) {
                    return Err(shape_err(format!("slope {slope} outside [0, 1)")));
                }
                DenseArray::from_parts(
                    a.shape().to_vec(),
                    a.data().iter().map(|&x| leaky(x, *slope)).collect(),
                )
            }
            Op::ConcatCols(xs) => {
                if xs.is_empty() {
                    return Err(shape_err("nothing to concatenate".into()));
                }
                let mut rows = None;
                let mut widths = Vec::with_capacity(xs.len());
                for x in xs {
                    let a = v(x);
                    let (r, c) = dims2(a).ok_or_else(|| shape_err(format!("part {:?} is not rank 2", a.shape())))?;
                    if *rows.get_or_insert(r) != r {
                        return Err(shape_err(format!("row counts differ: {} vs {r}", rows.unwrap())));
                    }
                    widths.push(c);
                }
                let rows = rows.unwrap();
                let total: usize = widths.iter().sum();
                let mut data = Vec::with_capacity(rows * total);
                for i in 0..rows {
                    for (x, &w) in xs.iter().zip(&widths) {
                        data.extend_from_slice(&v(x).data()[i * w..(i + 1) * w]);
                    }
                }
                DenseArray::from_parts(vec![rows, total], data)
            }
            Op::SliceRows { input, start, end } => {
                let a = v(input);
                let (r, c) = dims2(a).ok_or_else(|| shape_err(format!("input {:?} is not rank 2", a.shape())))?;
                if start >= end || *end > r {
                    return Err(shape_err(format!("row range {start}..{end} invalid for {r} rows")));
                }
                DenseArray::from_parts(vec![end - start, c], a.data()[start * c..end * c].to_vec())
            }
            Op::SliceCols { input, start, end } => {
                let a = v(input);
                let (r, c) = dims2(a).ok_or_else(|| shape_err(format!("input {:?} is not rank 2", a.shape())))?;
                if start >= end || *end > c {
                    return Err(shape_err(format!("column range {start}..{end} invalid for {c} columns")));
                }
                let w = end - start;
                let mut data = Vec::with_capacity(r * w);
                for row in a.data().chunks_exact(c) {
                    data.extend_from_slice(&row[*start..*end]);
                }
                DenseArray::from_parts(vec![r, w], data)
            }
            Op::Reshape { input, shape } => {
                let a = v(input);
                if shape.iter().product::<usize>() != a.len() || shape.is_empty() {
                    return Err(shape_err(format!("cannot reshape {:?} to {shape:?}", a.shape())));
                }
                DenseArray::from_parts(shape.clone(), a.data().to_vec())
            }
            Op::Sum(a) => DenseArray::scalar(v(a).data().iter().sum()),
            Op::MaxRows(a) => {
                let a = v(a);
                let (r, c) = dims2(a).ok_or_else(|| shape_err(format!("input {:?} is not rank 2", a.shape())))?;
                let d = a.data();
                let mut best = d[..c].to_vec();
                let mut arg = vec![0usize; c];
                for i in 1..r {
                    let row = &d[i * c..(i + 1) * c];
                    for ch in 0..c {
                        // strict: earlier rows win ties
                        if row[ch] > best[ch] {
                            best[ch] = row[ch];
                            arg[ch] = i;
                        }
                    }
                }
                return Ok((Cow::Owned(DenseArray::from_parts(vec![1, c], best)), Aux::Argmax(arg)));
            }
            Op::NeighborMax {
                metric,
                metric_cols,
                values,
                k,
                select,
            } => {
                let (m, vals) = (v(metric), v(values));
                let (n, mc) = dims2(m).ok_or_else(|| shape_err(format!("metric {:?} is not rank 2", m.shape())))?;
                let (n2, c) = dims2(vals).ok_or_else(|| shape_err(format!("values {:?} is not rank 2", vals.shape())))?;
                if n != n2 {
                    return Err(shape_err(format!("metric has {n} rows, values {n2}")));
                }
                if *k == 0 || *k >= n {
                    return Err(shape_err(format!("k = {k} needs at least {} rows, got {n}", k + 1)));
                }
                let metric_owned;
                let metric_view = match metric_cols {
                    Some((s, e)) => {
                        if s >= e || *e > mc {
                            return Err(shape_err(format!("metric columns {s}..{e} invalid for {mc}")));
                        }
                        let w = e - s;
                        let mut data = Vec::with_capacity(n * w);
                        for row in m.data().chunks_exact(mc) {
                            data.extend_from_slice(&row[*s..*e]);
                        }
                        metric_owned = DenseArray::from_parts(vec![n, w], data);
                        &metric_owned
                    }
                    None => m,
                };
                let nbrs = select(metric_view, *k).map_err(|detail| AutodiffError::Neighbors {
                    node: node.name.clone(),
                    detail,
                })?;
                if nbrs.len() != n * k || nbrs.iter().any(|&j| j >= n) {
                    return Err(AutodiffError::Neighbors {
                        node: node.name.clone(),
                        detail: format!("selector returned {} indices for {n} x {k}", nbrs.len()),
                    });
                }
                let d = vals.data();
                let mut out = vec![0.0; n * c];
                let mut arg = vec![0usize; n * c];
                for i in 0..n {
                    let ns = &nbrs[i * k..(i + 1) * k];
                    let o = &mut out[i * c..(i + 1) * c];
                    let a = &mut arg[i * c..(i + 1) * c];
                    o.copy_from_slice(&d[ns[0] * c..(ns[0] + 1) * c]);
                    a.fill(ns[0]);
                    for &j in &ns[1..] {
                        let row = &d[j * c..(j + 1) * c];
                        for ch in 0..c {
                            if row[ch] > o[ch] || (row[ch] == o[ch] && j < a[ch]) {
                                o[ch] = row[ch];
                                a[ch] = j;
                            }
                        }
                    }
                }
                return Ok((
                    Cow::Owned(DenseArray::from_parts(vec![n, c], out)),
                    Aux::NeighborArg(arg),
                ));
            }
            Op::SoftmaxCrossEntropy { logits, targets } => {
                let (l, t) = (v(logits), v(targets));
                let (r, c) = l
                    .as_matrix_dims()
                    .ok_or_else(|| shape_err(format!("logits {:?} not rank 1 or 2", l.shape())))?;
                if c < 2 {
                    return Err(shape_err(format!("need at least 2 classes, got {c}")));
                }
                if t.len() != r {
                    return Err(shape_err(format!("{} targets for {r} rows", t.len())));
                }
                let mut probs = Vec::with_capacity(r * c);
                let mut total = 0.0;
                for (row, &target) in l.data().chunks_exact(c).zip(t.data()) {
                    if target < 0.0 || target.fract() != 0.0 || target as usize >= c {
                        return Err(AutodiffError::ClassIndex {
                            node: node.name.clone(),
                            index: target,
                            classes: c,
                        });
                    }
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
                    let lse = max + sum.ln();
                    total += lse - row[target as usize];
                    probs.extend(row.iter().map(|x| (x - max).exp() / sum));
                }
                return Ok((
                    Cow::Owned(DenseArray::scalar(total / r as f64)),
                    Aux::Softmax(probs),
                ));
            }
        };
        Ok((Cow::Owned(out), Aux::None))
    }
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Argmax(Vec<usize>),
    NeighborArg(Vec<usize>),
    Softmax(Vec<f64>),
}

/// Result of [`Graph::forward`]: every node value plus the bookkeeping the
/// backward pass needs.
pub struct Evaluation<'a> {
    graph: &'a Graph,
    values: Vec<Cow<'a, DenseArray>>,
    aux: Vec<Aux>,
}

impl<'a> Evaluation<'a> {
    pub fn value(&self, id: NodeId) -> &DenseArray {
        self.values[id.0].as_ref()
    }

    /// Argmax row per channel of a [`Op::MaxRows`] node.
    pub fn argmax_rows(&self, id: NodeId) -> Option<&[usize]> {
        match &self.aux[id.0] {
            Aux::Argmax(a) => Some(a),
            _ => None,
        }
    }

    /// Chosen neighbor per `(row, channel)` of a [`Op::NeighborMax`] node.
    pub fn neighbor_argmax(&self, id: NodeId) -> Option<&[usize]> {
        match &self.aux[id.0] {
            Aux::NeighborArg(a) => Some(a),
            _ => None,
        }
    }

    /// Reverse-mode gradients of the scalar `output` with respect to every
    /// named input. Inputs that do not influence the output get zeros.
    pub fn gradients(&self, output: NodeId) -> Result<BTreeMap<String, DenseArray>> {
        let out = self.value(output);
        if !out.is_scalar() {
            return Err(AutodiffError::NonScalarOutput(out.shape().to_vec()));
        }
        let nodes = &self.graph.nodes;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &nodes[idx];
            match &node.op {
                Op::Input(_) | Op::Const(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k) = dims2(av).unwrap();
                    let n = dims2(bv).unwrap().1;
                    // Constants never receive gradients, so skip their products.
                    if !matches!(nodes[a.0].op, Op::Const(_)) {
                        // dA = dC * B^T
                        let ga = acc(&mut grads, *a, m * k);
                        for i in 0..m {
                            let gi = &g[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let brow = &bv.data()[kk * n..(kk + 1) * n];
                                ga[i * k + kk] += dot(gi, brow);
                            }
                        }
                    }
                    if !matches!(nodes[b.0].op, Op::Const(_)) {
                        // dB = A^T * dC
                        let gb = acc(&mut grads, *b, k * n);
                        for i in 0..m {
                            let gi = &g[i * n..(i + 1) * n];
                            for kk in 0..k {
                                let aik = av.data()[i * k + kk];
                                if aik != 0.0 {
                                    axpy(aik, gi, &mut gb[kk * n..(kk + 1) * n]);
                                }
                            }
                        }
                    }
                }
                Op::AddRowBias(x, b) => {
                    let c = self.value(*b).len();
                    let gx = acc(&mut grads, *x, g.len());
                    axpy(1.0, &g, gx);
                    let gb = acc(&mut grads, *b, c);
                    for row in g.chunks_exact(c) {
                        axpy(1.0, row, gb);
                    }
                }
                Op::Add(a, b) => {
                    axpy(1.0, &g, acc(&mut grads, *a, g.len()));
                    axpy(1.0, &g, acc(&mut grads, *b, g.len()));
                }
                Op::Sub(a, b) => {
                    axpy(1.0, &g, acc(&mut grads, *a, g.len()));
                    axpy(-1.0, &g, acc(&mut grads, *b, g.len()));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    {
                        let ga = acc(&mut grads, *a, g.len());
                        for ((o, gg), y) in ga.iter_mut().zip(&g).zip(bv) {
                            *o += gg * y;
                        }
                    }
                    let gb = acc(&mut grads, *b, g.len());
                    for ((o, gg), x) in gb.iter_mut().zip(&g).zip(av) {
                        *o += gg * x;
                    }
                }
                Op::Scale(a, s) => axpy(*s, &g, acc(&mut grads, *a, g.len())),
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(*a).data();
                    let ga = acc(&mut grads, *a, g.len());
                    for ((o, gg), xx) in ga.iter_mut().zip(&g).zip(x) {
                        *o += if *xx >= 0.0 { *gg } else { gg * slope };
                    }
                }
                Op::ConcatCols(xs) => {
                    let widths: Vec<usize> = xs.iter().map(|x| dims2(self.value(*x)).unwrap().1).collect();
                    let total: usize = widths.iter().sum();
                    let rows = g.len() / total;
                    let mut offset = 0;
                    for (x, &w) in xs.iter().zip(&widths) {
                        let gx = acc(&mut grads, *x, rows * w);
                        for i in 0..rows {
                            axpy(1.0, &g[i * total + offset..i * total + offset + w], &mut gx[i * w..(i + 1) * w]);
                        }
                        offset += w;
                    }
                }
                Op::SliceRows { input, start, end } => {
                    let a = self.value(*input);
                    let c = dims2(a).unwrap().1;
                    let ga = acc(&mut grads, *input, a.len());
                    axpy(1.0, &g, &mut ga[start * c..end * c]);
                }
                Op::SliceCols { input, start, end } => {
                    let a = self.value(*input);
                    let c = dims2(a).unwrap().1;
                    let w = end - start;
                    let ga = acc(&mut grads, *input, a.len());
                    for (row, grow) in ga.chunks_exact_mut(c).zip(g.chunks_exact(w)) {
                        axpy(1.0, grow, &mut row[*start..*end]);
                    }
                }
                Op::Reshape { input, .. } => {
                    axpy(1.0, &g, acc(&mut grads, *input, g.len()));
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    let ga = acc(&mut grads, *a, n);
                    for o in ga.iter_mut() {
                        *o += g[0];
                    }
                }
                Op::MaxRows(a) => {
                    let n = self.value(*a).len();
                    let Aux::Argmax(arg) = &self.aux[idx] else { unreachable!() };
                    let c = arg.len();
                    let ga = acc(&mut grads, *a, n);
                    for (ch, &row) in arg.iter().enumerate() {
                        ga[row * c + ch] += g[ch];
                    }
                }
                Op::NeighborMax { values, .. } => {
                    let n = self.value(*values).len();
                    let Aux::NeighborArg(arg) = &self.aux[idx] else { unreachable!() };
                    let c = dims2(self.value(*values)).unwrap().1;
                    let gv = acc(&mut grads, *values, n);
                    for (flat, &j) in arg.iter().enumerate() {
                        gv[j * c + flat % c] += g[flat];
                    }
                }
                Op::SoftmaxCrossEntropy { logits, targets } => {
                    let Aux::Softmax(probs) = &self.aux[idx] else { unreachable!() };
                    let l = self.value(*logits);
                    let (r, c) = l.as_matrix_dims().unwrap();
                    let t = self.value(*targets).data();
                    let scale = g[0] / r as f64;
                    let gl = acc(&mut grads, *logits, l.len());
                    for i in 0..r {
                        for ch in 0..c {
                            let onehot = if ch == t[i] as usize { 1.0 } else { 0.0 };
                            gl[i * c + ch] += scale * (probs[i * c + ch] - onehot);
                        }
                    }
                }
            }
        }

        let mut out = BTreeMap::new();
        for (idx, node) in nodes.iter().enumerate() {
            if let Op::Input(name) = &node.op {
                let shape = self.value(NodeId(idx)).shape().to_vec();
                let data = match grads.get_mut(idx).and_then(Option::take) {
                    Some(d) => d,
                    None => vec![0.0; shape.iter().product()],
                };
                out.insert(name.clone(), DenseArray::from_parts(shape, data));
            }
        }
        Ok(out)
    }
}

/// Forward value of `output` plus gradients of it with respect to every named
/// input. Fails when `output` is not a scalar.
pub fn evaluate_with_gradients(
    graph: &Graph,
    output: NodeId,
    inputs: &BTreeMap<String, DenseArray>,
) -> Result<(DenseArray, BTreeMap<String, DenseArray>)> {
    let eval = graph.forward(inputs)?;
    let grads = eval.gradients(output)?;
    Ok((eval.value(output).clone(), grads))
}

/// Elementwise LeakyReLU outside of a graph.
pub fn leaky_relu(x: &DenseArray, slope: f64) -> DenseArray {
    DenseArray::from_parts(
        x.shape().to_vec(),
        x.data().iter().map(|&v| leaky(v, slope)).collect(),
    )
}

/// Cross-entropy of a single logit vector against `true_class`.
pub fn softmax_cross_entropy(logits: &DenseArray, true_class: usize) -> Result<f64> {
    let mut g = Graph::new();
    let l = g.input("logits");
    let t = g.input("target");
    let loss = g.add_named("loss", Op::SoftmaxCrossEntropy { logits: l, targets: t });
    let mut inputs = BTreeMap::new();
    inputs.insert("logits".to_string(), logits.clone());
    inputs.insert("target".to_string(), DenseArray::scalar(true_class as f64));
    let eval = g.forward(&inputs)?;
    Ok(eval.value(loss).data()[0])
}

#[inline]
fn leaky(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

fn dims2(a: &DenseArray) -> Option<(usize, usize)> {
    match a.shape() {
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

fn acc(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut [f64] {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yy, xx) in y.iter_mut().zip(x) {
        *yy += alpha * xx;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators so the loop vectorizes; fixed order keeps it deterministic
    let mut s = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            s[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        for kk in 0..k {
            let aik = a[i * k + kk];
            if aik != 0.0 {
                axpy(aik, &b[kk * n..(kk + 1) * n], ci);
            }
        }
    }
    c
}

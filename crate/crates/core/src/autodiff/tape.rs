use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::sparse::{CholFactor, CscMatrix, Pattern, SelectedInverse};

use super::symbolic_cache::SymbolicCache;
use super::vjp;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    /// Position on the tape; indexes the vector returned by [`Tape::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Scalar(f64),
    Vector(Vec<f64>),
    Sparse(CscMatrix),
}

impl Value {
    /// Flat view of the stored numbers; adjoints share this layout.
    pub fn data(&self) -> &[f64] {
        match self {
            Value::Scalar(v) => std::slice::from_ref(v),
            Value::Vector(v) => v,
            Value::Sparse(m) => m.values(),
        }
    }

    pub fn len(&self) -> usize {
        self.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Coefficient of a term in a sparse linear combination.
#[derive(Debug, Clone, Copy)]
pub enum Coef {
    Const(f64),
    Node(NodeId),
}

/// Fixed linear map from a vector to the values of a sparse matrix with a
/// fixed pattern: `values[out] += coef * x[in]` for each stored triple.
#[derive(Debug, Clone)]
pub struct SparseLinearMap {
    pub pattern: Arc<Pattern>,
    pub input_len: usize,
    pub terms: Vec<(u32, u32, f64)>,
}

impl SparseLinearMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.pattern.nnz()];
        for &(o, i, c) in &self.terms {
            v[o as usize] += c * x[i as usize];
        }
        v
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// Elementwise output with stored local partials; inputs of length 1 broadcast.
    Local { inputs: Vec<NodeId>, partials: Vec<Vec<f64>> },
    Sum(NodeId),
    Dot(NodeId, NodeId),
    Index(NodeId, usize),
    Concat(Vec<NodeId>),
    Min { x: NodeId, arg: usize },
    MatVecConst { m: Arc<CscMatrix>, x: NodeId },
    SparseLinear { map: Arc<SparseLinearMap>, x: NodeId },
    SpDiag(NodeId),
    SpLinComb { terms: Vec<(Coef, NodeId)>, maps: Vec<Vec<usize>> },
    SpMatMul(NodeId, NodeId),
    SpTranspose { a: NodeId, map: Vec<usize> },
    SpScaleRows { a: NodeId, d: NodeId },
    SpScaleCols { a: NodeId, d: NodeId },
    SpMatVec { a: NodeId, x: NodeId },
    SpHStack(NodeId, NodeId),
    SpBlockDiag(NodeId, NodeId),
    LogDet(NodeId),
    Solve { a: NodeId, b: NodeId },
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    active: bool,
}

/// Append-only record of matrix-level operations.
///
/// Nodes are evaluated eagerly when recorded; [`Tape::gradient`] runs one
/// reverse sweep. Sparse adjoints live on their primal's pattern.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    factors: HashMap<NodeId, Arc<CholFactor>>,
    cache: Option<Arc<SymbolicCache>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tape that reuses symbolic factorizations across tapes.
    pub fn with_cache(cache: Arc<SymbolicCache>) -> Self {
        Self {
            cache: Some(cache),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, active: bool) -> NodeId {
        self.nodes.push(Node { value, op, active });
        NodeId(self.nodes.len() - 1)
    }

    fn active(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].active)
    }

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        match &self.nodes[id.0].value {
            Value::Scalar(v) => *v,
            other => panic!("node {} is not a scalar: {:?}", id.0, kind(other)),
        }
    }

    pub fn vector(&self, id: NodeId) -> &[f64] {
        match &self.nodes[id.0].value {
            Value::Vector(v) => v,
            Value::Scalar(v) => std::slice::from_ref(v),
            other => panic!("node {} is not a vector: {:?}", id.0, kind(other)),
        }
    }

    pub fn sparse(&self, id: NodeId) -> &CscMatrix {
        match &self.nodes[id.0].value {
            Value::Sparse(m) => m,
            other => panic!("node {} is not sparse: {:?}", id.0, kind(other)),
        }
    }

    // ---- leaves

    pub fn var_scalar(&mut self, v: f64) -> NodeId {
        self.push(Value::Scalar(v), Op::Leaf, true)
    }

    pub fn var_vector(&mut self, v: Vec<f64>) -> NodeId {
        self.push(Value::Vector(v), Op::Leaf, true)
    }

    pub fn const_scalar(&mut self, v: f64) -> NodeId {
        self.push(Value::Scalar(v), Op::Leaf, false)
    }

    pub fn const_vector(&mut self, v: Vec<f64>) -> NodeId {
        self.push(Value::Vector(v), Op::Leaf, false)
    }

    pub fn const_sparse(&mut self, m: CscMatrix) -> NodeId {
        self.push(Value::Sparse(m), Op::Leaf, false)
    }

    pub fn var_sparse(&mut self, m: CscMatrix) -> NodeId {
        self.push(Value::Sparse(m), Op::Leaf, true)
    }

    // ---- elementwise

    /// Records an elementwise result with its local partial derivatives.
    ///
    /// `partials[j][i]` is `d out_i / d input_j` (or `d out_i / d input_j[0]`
    /// for a broadcast length-1 input). A scalar output requires every
    /// input to be length 1.
    pub fn local(&mut self, inputs: &[NodeId], value: Vec<f64>, partials: Vec<Vec<f64>>, scalar_out: bool) -> NodeId {
        debug_assert_eq!(inputs.len(), partials.len());
        for (id, p) in inputs.iter().zip(&partials) {
            let len = self.nodes[id.0].value.len();
            assert!(len == value.len() || len == 1, "input length {} incompatible with output {}", len, value.len());
            assert_eq!(p.len(), value.len());
        }
        let active = self.active(inputs);
        let v = if scalar_out {
            assert_eq!(value.len(), 1);
            Value::Scalar(value[0])
        } else {
            Value::Vector(value)
        };
        self.push(
            v,
            Op::Local {
                inputs: inputs.to_vec(),
                partials: if active { partials } else { Vec::new() },
            },
            active,
        )
    }

    fn is_scalar(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].value, Value::Scalar(_))
    }

    /// Unary elementwise map; `f` returns `(value, derivative)`.
    pub fn map(&mut self, x: NodeId, f: impl Fn(f64) -> (f64, f64)) -> NodeId {
        let (vals, ders): (Vec<f64>, Vec<f64>) = self.vector(x).iter().map(|&v| f(v)).unzip();
        let s = self.is_scalar(x);
        self.local(&[x], vals, vec![ders], s)
    }

    /// Binary elementwise map with scalar broadcasting; `f` returns `(value, d/da, d/db)`.
    pub fn map2(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> (f64, f64, f64)) -> NodeId {
        let (av, bv) = (self.vector(a), self.vector(b));
        let n = av.len().max(bv.len());
        assert!(av.len() == n || av.len() == 1);
        assert!(bv.len() == n || bv.len() == 1);
        let mut vals = Vec::with_capacity(n);
        let mut da = Vec::with_capacity(n);
        let mut db = Vec::with_capacity(n);
        for i in 0..n {
            let x = if av.len() == 1 { av[0] } else { av[i] };
            let y = if bv.len() == 1 { bv[0] } else { bv[i] };
            let (v, pa, pb) = f(x, y);
            vals.push(v);
            da.push(pa);
            db.push(pb);
        }
        let s = self.is_scalar(a) && self.is_scalar(b);
        self.local(&[a, b], vals, vec![da, db], s)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.map2(a, b, |x, y| (x + y, 1.0, 1.0))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.map2(a, b, |x, y| (x - y, 1.0, -1.0))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.map2(a, b, |x, y| (x * y, y, x))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.map2(a, b, |x, y| (x / y, 1.0 / y, -x / (y * y)))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.map(x, |v| (c * v, c))
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        self.map(x, |v| (v + c, 1.0))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| {
            let e = v.exp();
            (e, e)
        })
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| (v.ln(), 1.0 / v))
    }

    pub fn powf(&mut self, x: NodeId, p: f64) -> NodeId {
        self.map(x, |v| (v.powf(p), p * v.powf(p - 1.0)))
    }

    /// `a^b` for positive `a`.
    pub fn pow(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.map2(a, b, |x, y| {
            let v = x.powf(y);
            (v, y * x.powf(y - 1.0), v * x.ln())
        })
    }

    pub fn recip(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| (1.0 / v, -1.0 / (v * v)))
    }

    pub fn square(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| (v * v, 2.0 * v))
    }

    // ---- reductions and reshaping

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.vector(x).iter().sum();
        let active = self.active(&[x]);
        self.push(Value::Scalar(s), Op::Sum(x), active)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.vector(a), self.vector(b));
        assert_eq!(av.len(), bv.len(), "dot length mismatch");
        let s = av.iter().zip(bv).map(|(x, y)| x * y).sum();
        let active = self.active(&[a, b]);
        self.push(Value::Scalar(s), Op::Dot(a, b), active)
    }

    pub fn index(&mut self, x: NodeId, i: usize) -> NodeId {
        let v = self.vector(x)[i];
        let active = self.active(&[x]);
        self.push(Value::Scalar(v), Op::Index(x, i), active)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        let mut v = Vec::new();
        for &p in parts {
            v.extend_from_slice(self.vector(p));
        }
        let active = self.active(parts);
        self.push(Value::Vector(v), Op::Concat(parts.to_vec()), active)
    }

    /// Minimum entry; the gradient flows to the first minimizer.
    pub fn min(&mut self, x: NodeId) -> NodeId {
        let v = self.vector(x);
        assert!(!v.is_empty(), "min of empty vector");
        let mut arg = 0;
        for (i, &e) in v.iter().enumerate() {
            if e < v[arg] {
                arg = i;
            }
        }
        let m = v[arg];
        let active = self.active(&[x]);
        self.push(Value::Scalar(m), Op::Min { x, arg }, active)
    }

    /// `M x` with a constant sparse `M`.
    pub fn mat_vec_const(&mut self, m: Arc<CscMatrix>, x: NodeId) -> NodeId {
        let y = m.mul_vec(self.vector(x));
        let active = self.active(&[x]);
        self.push(Value::Vector(y), Op::MatVecConst { m, x }, active)
    }

    // ---- sparse

    pub fn sparse_linear(&mut self, map: Arc<SparseLinearMap>, x: NodeId) -> NodeId {
        let xv = self.vector(x);
        assert_eq!(xv.len(), map.input_len, "sparse linear map input length");
        let values = map.apply(xv);
        let m = CscMatrix::new(map.pattern.clone(), values);
        let active = self.active(&[x]);
        self.push(Value::Sparse(m), Op::SparseLinear { map, x }, active)
    }

    /// Diagonal matrix from a vector node.
    pub fn sp_diag(&mut self, d: NodeId) -> NodeId {
        let m = CscMatrix::from_diagonal(self.vector(d));
        let active = self.active(&[d]);
        self.push(Value::Sparse(m), Op::SpDiag(d), active)
    }

    pub fn sp_identity(&mut self, n: usize) -> NodeId {
        self.const_sparse(CscMatrix::identity(n))
    }

    /// `sum_k coef_k A_k` on the union pattern.
    pub fn sp_lincomb(&mut self, terms: &[(Coef, NodeId)]) -> NodeId {
        assert!(!terms.is_empty());
        let coefs: Vec<f64> = terms
            .iter()
            .map(|(c, _)| match c {
                Coef::Const(v) => *v,
                Coef::Node(id) => self.scalar(*id),
            })
            .collect();
        let pats: Vec<&Pattern> = terms.iter().map(|(_, m)| self.sparse(*m).pattern().as_ref()).collect();
        let (pat, maps) = Pattern::union_with_maps(&pats);
        let mut values = vec![0.0; pat.nnz()];
        for ((c, (_, m)), map) in coefs.iter().zip(terms).zip(&maps) {
            for (v, &q) in self.sparse(*m).values().iter().zip(map) {
                values[q] += c * v;
            }
        }
        let mut ids: Vec<NodeId> = terms.iter().map(|t| t.1).collect();
        ids.extend(terms.iter().filter_map(|t| match t.0 {
            Coef::Node(id) => Some(id),
            Coef::Const(_) => None,
        }));
        let active = self.active(&ids);
        self.push(
            Value::Sparse(CscMatrix::new(Arc::new(pat), values)),
            Op::SpLinComb {
                terms: terms.to_vec(),
                maps,
            },
            active,
        )
    }

    pub fn sp_matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let c = self.sparse(a).matmul(self.sparse(b));
        let active = self.active(&[a, b]);
        self.push(Value::Sparse(c), Op::SpMatMul(a, b), active)
    }

    pub fn sp_transpose(&mut self, a: NodeId) -> NodeId {
        let m = self.sparse(a);
        let (pat, map) = m.pattern().transpose_with_map();
        let values = map.iter().map(|&p| m.values()[p]).collect();
        let active = self.active(&[a]);
        self.push(
            Value::Sparse(CscMatrix::new(Arc::new(pat), values)),
            Op::SpTranspose { a, map },
            active,
        )
    }

    /// `diag(d) A`.
    pub fn sp_scale_rows(&mut self, a: NodeId, d: NodeId) -> NodeId {
        let m = self.sparse(a).scale_rows(self.vector(d));
        let active = self.active(&[a, d]);
        self.push(Value::Sparse(m), Op::SpScaleRows { a, d }, active)
    }

    /// `A diag(d)`.
    pub fn sp_scale_cols(&mut self, a: NodeId, d: NodeId) -> NodeId {
        let m = self.sparse(a).scale_cols(self.vector(d));
        let active = self.active(&[a, d]);
        self.push(Value::Sparse(m), Op::SpScaleCols { a, d }, active)
    }

    pub fn sp_matvec(&mut self, a: NodeId, x: NodeId) -> NodeId {
        let y = self.sparse(a).mul_vec(self.vector(x));
        let active = self.active(&[a, x]);
        self.push(Value::Vector(y), Op::SpMatVec { a, x }, active)
    }

    /// `[A, B]`.
    pub fn sp_hstack(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (am, bm) = (self.sparse(a), self.sparse(b));
        assert_eq!(am.nrows(), bm.nrows(), "hstack row mismatch");
        let (ap, bp) = (am.pattern(), bm.pattern());
        let mut colptr = ap.colptr().to_vec();
        let off = ap.nnz();
        colptr.extend(bp.colptr()[1..].iter().map(|&c| c + off));
        let mut rowidx = ap.rowidx().to_vec();
        rowidx.extend_from_slice(bp.rowidx());
        let pat = Pattern::new_unchecked(am.nrows(), am.ncols() + bm.ncols(), colptr, rowidx);
        let mut values = am.values().to_vec();
        values.extend_from_slice(bm.values());
        let active = self.active(&[a, b]);
        self.push(
            Value::Sparse(CscMatrix::new(Arc::new(pat), values)),
            Op::SpHStack(a, b),
            active,
        )
    }

    /// `blockdiag(A, B)`.
    pub fn sp_blockdiag(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (am, bm) = (self.sparse(a), self.sparse(b));
        let (ap, bp) = (am.pattern(), bm.pattern());
        let mut colptr = ap.colptr().to_vec();
        let off = ap.nnz();
        colptr.extend(bp.colptr()[1..].iter().map(|&c| c + off));
        let mut rowidx = ap.rowidx().to_vec();
        rowidx.extend(bp.rowidx().iter().map(|&r| r + am.nrows()));
        let pat = Pattern::new_unchecked(am.nrows() + bm.nrows(), am.ncols() + bm.ncols(), colptr, rowidx);
        let mut values = am.values().to_vec();
        values.extend_from_slice(bm.values());
        let active = self.active(&[a, b]);
        self.push(
            Value::Sparse(CscMatrix::new(Arc::new(pat), values)),
            Op::SpBlockDiag(a, b),
            active,
        )
    }

    /// Cholesky factor of a sparse SPD node, computed once per node.
    pub fn factor(&mut self, a: NodeId) -> Result<Arc<CholFactor>> {
        if let Some(f) = self.factors.get(&a) {
            return Ok(f.clone());
        }
        let m = self.sparse(a);
        let f = match &self.cache {
            Some(cache) => {
                let sym = cache.get_or_analyze(m.pattern())?;
                CholFactor::factorize_with(sym, m)?
            }
            None => CholFactor::factorize(m)?,
        };
        let f = Arc::new(f);
        self.factors.insert(a, f.clone());
        Ok(f)
    }

    pub fn logdet(&mut self, a: NodeId) -> Result<NodeId> {
        let f = self.factor(a)?;
        let active = self.active(&[a]);
        Ok(self.push(Value::Scalar(f.logdet()), Op::LogDet(a), active))
    }

    /// `A⁻¹ b` for a symmetric positive-definite node `A`.
    pub fn solve(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let f = self.factor(a)?;
        let x = f.solve_vec(self.vector(b))?;
        let active = self.active(&[a, b]);
        Ok(self.push(Value::Vector(x), Op::Solve { a, b }, active))
    }

    // ---- reverse sweep

    /// Gradient of scalar `output` with respect to `inputs`, flattened in order.
    pub fn gradient(&self, output: NodeId, inputs: &[NodeId]) -> Result<Vec<f64>> {
        let adj = self.backward(output)?;
        let mut g = Vec::new();
        for id in inputs {
            match &adj[id.0] {
                Some(a) => g.extend_from_slice(a),
                None => g.extend(std::iter::repeat(0.0).take(self.nodes[id.0].value.len())),
            }
        }
        Ok(g)
    }

    /// Adjoints of every node (None where unreached), after one reverse sweep.
    pub fn backward(&self, output: NodeId) -> Result<Vec<Option<Vec<f64>>>> {
        if !matches!(self.nodes[output.0].value, Value::Scalar(_)) {
            return Err(Error::NotScalar);
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        adj[output.0] = Some(vec![1.0]);
        for k in (0..=output.0).rev() {
            let node = &self.nodes[k];
            if !node.active || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(ybar) = adj[k].take() else { continue };
            self.propagate(k, &ybar, &mut adj)?;
            adj[k] = Some(ybar);
        }
        Ok(adj)
    }

    fn acc<'a>(&self, adj: &'a mut [Option<Vec<f64>>], id: NodeId) -> Option<&'a mut Vec<f64>> {
        let node = &self.nodes[id.0];
        if !node.active {
            return None;
        }
        let len = node.value.len();
        Some(adj[id.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn propagate(&self, k: usize, ybar: &[f64], adj: &mut [Option<Vec<f64>>]) -> Result<()> {
        match &self.nodes[k].op {
            Op::Leaf => {}
            Op::Local { inputs, partials } => {
                for (id, p) in inputs.iter().zip(partials) {
                    if let Some(a) = self.acc(adj, *id) {
                        if a.len() == 1 && ybar.len() != 1 {
                            a[0] += p.iter().zip(ybar).map(|(p, y)| p * y).sum::<f64>();
                        } else {
                            for ((ai, pi), yi) in a.iter_mut().zip(p).zip(ybar) {
                                *ai += pi * yi;
                            }
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(a) = self.acc(adj, *x) {
                    a.iter_mut().for_each(|v| *v += ybar[0]);
                }
            }
            Op::Dot(x, y) => {
                let (xv, yv) = (self.vector(*x).to_vec(), self.vector(*y).to_vec());
                if let Some(a) = self.acc(adj, *x) {
                    for (ai, yi) in a.iter_mut().zip(&yv) {
                        *ai += ybar[0] * yi;
                    }
                }
                if let Some(a) = self.acc(adj, *y) {
                    for (ai, xi) in a.iter_mut().zip(&xv) {
                        *ai += ybar[0] * xi;
                    }
                }
            }
            Op::Index(x, i) => {
                if let Some(a) = self.acc(adj, *x) {
                    a[*i] += ybar[0];
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.nodes[p.0].value.len();
                    if let Some(a) = self.acc(adj, *p) {
                        for (ai, yi) in a.iter_mut().zip(&ybar[off..off + len]) {
                            *ai += yi;
                        }
                    }
                    off += len;
                }
            }
            Op::Min { x, arg } => {
                if let Some(a) = self.acc(adj, *x) {
                    a[*arg] += ybar[0];
                }
            }
            Op::MatVecConst { m, x } => {
                if let Some(a) = self.acc(adj, *x) {
                    for (ai, v) in a.iter_mut().zip(m.tr_mul_vec(ybar)) {
                        *ai += v;
                    }
                }
            }
            Op::SparseLinear { map, x } => {
                if let Some(a) = self.acc(adj, *x) {
                    for &(o, i, c) in &map.terms {
                        a[i as usize] += c * ybar[o as usize];
                    }
                }
            }
            Op::SpDiag(d) => {
                if let Some(a) = self.acc(adj, *d) {
                    for (ai, yi) in a.iter_mut().zip(ybar) {
                        *ai += yi;
                    }
                }
            }
            Op::SpLinComb { terms, maps } => {
                for ((c, m), map) in terms.iter().zip(maps) {
                    let coef = match c {
                        Coef::Const(v) => *v,
                        Coef::Node(id) => self.scalar(*id),
                    };
                    if let Some(a) = self.acc(adj, *m) {
                        for (ai, &q) in a.iter_mut().zip(map) {
                            *ai += coef * ybar[q];
                        }
                    }
                    if let Coef::Node(id) = c {
                        let vals = self.sparse(*m).values();
                        let s: f64 = vals.iter().zip(map).map(|(v, &q)| v * ybar[q]).sum();
                        if let Some(a) = self.acc(adj, *id) {
                            a[0] += s;
                        }
                    }
                }
            }
            Op::SpMatMul(a, b) => {
                let cbar = CscMatrix::new(self.sparse(NodeId(k)).pattern().clone(), ybar.to_vec());
                let (am, bm) = (self.sparse(*a), self.sparse(*b));
                let need_a = self.nodes[a.0].active;
                let need_b = self.nodes[b.0].active;
                if need_a {
                    let abar = vjp::matmul_adjoint_left(&cbar, bm, am.pattern());
                    if let Some(acc) = self.acc(adj, *a) {
                        add_into(acc, &abar);
                    }
                }
                if need_b {
                    let bbar = vjp::matmul_adjoint_right(am, &cbar, bm.pattern());
                    if let Some(acc) = self.acc(adj, *b) {
                        add_into(acc, &bbar);
                    }
                }
            }
            Op::SpTranspose { a, map } => {
                if let Some(acc) = self.acc(adj, *a) {
                    for (q, &p) in map.iter().enumerate() {
                        acc[p] += ybar[q];
                    }
                }
            }
            Op::SpScaleRows { a, d } => {
                let m = self.sparse(*a);
                let dv = self.vector(*d).to_vec();
                let pat = m.pattern().clone();
                let vals = m.values().to_vec();
                if let Some(acc) = self.acc(adj, *a) {
                    for (p, i, _) in pat.entries() {
                        acc[p] += ybar[p] * dv[i];
                    }
                }
                if let Some(acc) = self.acc(adj, *d) {
                    for (p, i, _) in pat.entries() {
                        acc[i] += ybar[p] * vals[p];
                    }
                }
            }
            Op::SpScaleCols { a, d } => {
                let m = self.sparse(*a);
                let dv = self.vector(*d).to_vec();
                let pat = m.pattern().clone();
                let vals = m.values().to_vec();
                if let Some(acc) = self.acc(adj, *a) {
                    for (p, _, j) in pat.entries() {
                        acc[p] += ybar[p] * dv[j];
                    }
                }
                if let Some(acc) = self.acc(adj, *d) {
                    for (p, _, j) in pat.entries() {
                        acc[j] += ybar[p] * vals[p];
                    }
                }
            }
            Op::SpMatVec { a, x } => {
                let m = self.sparse(*a);
                let xv = self.vector(*x).to_vec();
                if self.nodes[x.0].active {
                    let g = m.tr_mul_vec(ybar);
                    if let Some(acc) = self.acc(adj, *x) {
                        add_into(acc, &g);
                    }
                }
                let pat = m.pattern().clone();
                if let Some(acc) = self.acc(adj, *a) {
                    for (p, i, j) in pat.entries() {
                        acc[p] += ybar[i] * xv[j];
                    }
                }
            }
            Op::SpHStack(a, b) | Op::SpBlockDiag(a, b) => {
                let na = self.nodes[a.0].value.len();
                if let Some(acc) = self.acc(adj, *a) {
                    add_into(acc, &ybar[..na]);
                }
                if let Some(acc) = self.acc(adj, *b) {
                    add_into(acc, &ybar[na..]);
                }
            }
            Op::LogDet(a) => {
                let f = self.factors.get(a).expect("factor recorded with logdet");
                let abar = vjp::logdet_adjoint(self.sparse(*a), f, ybar[0])?;
                if let Some(acc) = self.acc(adj, *a) {
                    add_into(acc, abar.values());
                }
            }
            Op::Solve { a, b } => {
                let f = self.factors.get(a).expect("factor recorded with solve");
                let c = self.vector(NodeId(k)).to_vec();
                let bbar = f.solve_vec(ybar)?;
                if self.nodes[a.0].active {
                    let pat = self.sparse(*a).pattern().clone();
                    if let Some(acc) = self.acc(adj, *a) {
                        for (p, i, j) in pat.entries() {
                            acc[p] -= bbar[i] * c[j];
                        }
                    }
                }
                if let Some(acc) = self.acc(adj, *b) {
                    add_into(acc, &bbar);
                }
            }
        }
        Ok(())
    }

    /// Selected inverse of a factored node (for callers that need more than the logdet adjoint).
    pub fn selected_inverse(&mut self, a: NodeId) -> Result<SelectedInverse> {
        let f = self.factor(a)?;
        Ok(SelectedInverse::compute(&f))
    }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Scalar(_) => "scalar",
        Value::Vector(_) => "vector",
        Value::Sparse(_) => "sparse",
    }
}

//! Computational graph with exact input derivatives and reverse-mode
//! parameter gradients.
//!
//! Every node holds a 2-D array: rows index the batch of evaluation points
//! and columns index features. Constants are `1×1` and broadcast against
//! any shape; `1×c` rows and `r×1` columns broadcast along the missing axis.
//!
//! Input derivatives are produced by [`Graph::d_input`], a graph-to-graph
//! forward pushforward: the result is an ordinary [`Expr`] that still refers
//! to the parameters, so [`Graph::grad_params`] can back-propagate through
//! it. Nodes are hash-consed, so identical subexpressions (for example the
//! network forward pass shared by all residuals) exist once.

mod batch;
mod eval;
mod transform;

use std::collections::HashMap;

use ndarray::Array2;

pub use batch::{value_and_grad_chunked, ChunkedResult};
pub use eval::{Bindings, GradResult, ParamGrads};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("input variable `{0}` is not bound")]
    UnboundInput(String),
    #[error("parameter `{0}` is not bound")]
    UnboundParam(String),
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },
    #[error("expression is not twice differentiable in its inputs: `{0}` node on the path")]
    NonSmooth(&'static str),
    #[error("unsupported derivative order {0}; only 1 and 2 are available")]
    Order(u8),
    #[error("expected a scalar expression, found shape {0:?}")]
    NotScalar((usize, usize)),
    #[error("graph supports at most 64 input variables")]
    TooManyInputs,
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Expr(pub(crate) u32);

impl Expr {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InputId(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) u32);

impl ParamId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// An input variable: a batch of coordinates (or other per-point data)
/// bound at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputVar {
    pub id: InputId,
    pub expr: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unary {
    Tanh,
    Sin,
    Cos,
    Exp,
    Abs,
    Relu,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Tanh => "tanh",
            Unary::Sin => "sin",
            Unary::Cos => "cos",
            Unary::Exp => "exp",
            Unary::Abs => "abs",
            Unary::Relu => "relu",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Tanh => x.tanh(),
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Exp => x.exp(),
            Unary::Abs => x.abs(),
            Unary::Relu => x.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum Op {
    /// Scalar constant stored as raw bits so the op can be hashed.
    Const(u64),
    Input(InputId),
    Param(ParamId),
    ZerosLike(Expr),
    OnesLike(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Neg(Expr),
    MatMul(Expr, Expr),
    Unary(Unary, Expr),
    Column(Expr, usize),
    Concat(Vec<Expr>),
    SumAll(Expr),
    MeanRows(Expr),
}

impl Op {
    fn operands(&self) -> Vec<Expr> {
        match self {
            Op::Const(_) | Op::Input(_) | Op::Param(_) => Vec::new(),
            Op::ZerosLike(a) | Op::OnesLike(a) => vec![*a],
            Op::Neg(a) | Op::Unary(_, a) | Op::Column(a, _) | Op::SumAll(a) | Op::MeanRows(a) => {
                vec![*a]
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) op: Op,
    /// Bit `i` set when the node depends on input `i`.
    pub(crate) input_mask: u64,
    pub(crate) has_param: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct InputDecl {
    pub(crate) name: String,
    pub(crate) cols: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamDecl {
    pub(crate) name: String,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) node: Expr,
}

/// Arena of hash-consed nodes. Construction needs `&mut self`; evaluation
/// only borrows, so a finished graph can be shared between threads.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    cache: HashMap<Op, Expr>,
    pub(crate) inputs: Vec<InputDecl>,
    pub(crate) params: Vec<ParamDecl>,
    input_nodes: HashMap<String, InputVar>,
    pub(crate) tangents: HashMap<(Expr, InputId), Option<Expr>>,
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

    pub(crate) fn node(&self, e: Expr) -> &Node {
        &self.nodes[e.index()]
    }

    fn push(&mut self, op: Op) -> Expr {
        if let Some(&e) = self.cache.get(&op) {
            return e;
        }
        let (mut input_mask, mut has_param) = (0u64, false);
        match &op {
            Op::Input(id) => input_mask = 1 << id.0,
            Op::Param(_) => has_param = true,
            // Shape-only nodes carry no value dependence.
            Op::ZerosLike(_) | Op::OnesLike(_) | Op::Const(_) => {}
            other => {
                for a in other.operands() {
                    let n = &self.nodes[a.index()];
                    input_mask |= n.input_mask;
                    has_param |= n.has_param;
                }
            }
        }
        let e = Expr(self.nodes.len() as u32);
        self.nodes.push(Node { op: op.clone(), input_mask, has_param });
        self.cache.insert(op, e);
        e
    }

    /// Declares (or returns the existing) input variable with `cols` columns.
    pub fn input(&mut self, name: &str, cols: usize) -> Result<InputVar> {
        if let Some(v) = self.input_nodes.get(name) {
            return Ok(*v);
        }
        if self.inputs.len() >= 64 {
            return Err(AutodiffError::TooManyInputs);
        }
        let id = InputId(self.inputs.len() as u32);
        self.inputs.push(InputDecl { name: name.to_string(), cols });
        let expr = self.push(Op::Input(id));
        let var = InputVar { id, expr };
        self.input_nodes.insert(name.to_string(), var);
        Ok(var)
    }

    pub fn input_named(&self, name: &str) -> Option<InputVar> {
        self.input_nodes.get(name).copied()
    }

    pub fn input_name(&self, id: InputId) -> &str {
        &self.inputs[id.0 as usize].name
    }

    /// Declares a trainable parameter array of shape `rows × cols`.
    pub fn param(&mut self, name: &str, rows: usize, cols: usize) -> (ParamId, Expr) {
        let id = ParamId(self.params.len() as u32);
        let node = self.push(Op::Param(id));
        self.params.push(ParamDecl { name: name.to_string(), rows, cols, node });
        (id, node)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param_shape(&self, id: ParamId) -> (usize, usize) {
        let p = &self.params[id.index()];
        (p.rows, p.cols)
    }

    pub fn param_expr(&self, id: ParamId) -> Expr {
        self.params[id.index()].node
    }

    pub fn param_name(&self, id: ParamId) -> &str {
        &self.params[id.index()].name
    }

    pub fn constant(&mut self, c: f64) -> Expr {
        self.push(Op::Const(c.to_bits()))
    }

    pub fn zeros_like(&mut self, a: Expr) -> Expr {
        self.push(Op::ZerosLike(a))
    }

    pub fn ones_like(&mut self, a: Expr) -> Expr {
        self.push(Op::OnesLike(a))
    }

    pub fn add(&mut self, a: Expr, b: Expr) -> Expr {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Expr, b: Expr) -> Expr {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Expr, b: Expr) -> Expr {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.push(Op::Mul(a, b))
    }

    pub fn neg(&mut self, a: Expr) -> Expr {
        self.push(Op::Neg(a))
    }

    pub fn scale(&mut self, c: f64, a: Expr) -> Expr {
        if c == 1.0 {
            return a;
        }
        let k = self.constant(c);
        self.mul(k, a)
    }

    pub fn square(&mut self, a: Expr) -> Expr {
        self.mul(a, a)
    }

    pub fn matmul(&mut self, a: Expr, b: Expr) -> Expr {
        self.push(Op::MatMul(a, b))
    }

    pub fn tanh(&mut self, a: Expr) -> Expr {
        self.push(Op::Unary(Unary::Tanh, a))
    }

    pub fn sin(&mut self, a: Expr) -> Expr {
        self.push(Op::Unary(Unary::Sin, a))
    }

    pub fn cos(&mut self, a: Expr) -> Expr {
        self.push(Op::Unary(Unary::Cos, a))
    }

    pub fn exp(&mut self, a: Expr) -> Expr {
        self.push(Op::Unary(Unary::Exp, a))
    }

    /// Absolute value. Allowed in losses; rejected by [`Graph::d_input`].
    pub fn abs(&mut self, a: Expr) -> Expr {
        self.push(Op::Unary(Unary::Abs, a))
    }

    /// `max(0, a)`. Allowed in losses; rejected by [`Graph::d_input`].
    pub fn relu(&mut self, a: Expr) -> Expr {
        self.push(Op::Unary(Unary::Relu, a))
    }

    pub fn column(&mut self, a: Expr, j: usize) -> Expr {
        self.push(Op::Column(a, j))
    }

    pub fn concat(&mut self, parts: &[Expr]) -> Expr {
        if parts.len() == 1 {
            return parts[0];
        }
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn sum_all(&mut self, a: Expr) -> Expr {
        self.push(Op::SumAll(a))
    }

    /// Mean over the batch axis: `r×c → 1×c`.
    pub fn mean_rows(&mut self, a: Expr) -> Expr {
        self.push(Op::MeanRows(a))
    }

    /// Sum of a list of expressions, left to right.
    pub fn sum_of(&mut self, terms: &[Expr]) -> Option<Expr> {
        let mut it = terms.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, &t| self.add(acc, t)))
    }

    /// True if `e` depends on input `var`.
    pub fn depends_on(&self, e: Expr, var: InputVar) -> bool {
        self.node(e).input_mask & (1 << var.id.0) != 0
    }

    /// Counts nodes of kind `kind` among the ancestors of `roots`
    /// (inclusive). Used by tests and diagnostics.
    pub fn count_unary(&self, roots: &[Expr], kind: Unary) -> usize {
        let live = self.live_set(roots);
        live.iter()
            .enumerate()
            .filter(|(i, &l)| l && matches!(self.nodes[*i].op, Op::Unary(k, _) if k == kind))
            .count()
    }

    /// Number of nodes reachable from `roots`.
    pub fn reachable(&self, roots: &[Expr]) -> usize {
        self.live_set(roots).iter().filter(|&&l| l).count()
    }

    pub(crate) fn live_set(&self, roots: &[Expr]) -> Vec<bool> {
        let mut live = vec![false; self.nodes.len()];
        let top = roots.iter().map(|e| e.index()).max().unwrap_or(0);
        for r in roots {
            live[r.index()] = true;
        }
        for i in (0..=top.min(self.nodes.len().saturating_sub(1))).rev() {
            if !live[i] {
                continue;
            }
            for a in self.nodes[i].op.operands() {
                live[a.index()] = true;
            }
        }
        live
    }

    /// Convenience for tests: evaluates a `1×1` result as `f64`.
    pub fn eval_scalar(&self, e: Expr, b: &Bindings) -> Result<f64> {
        let v = self.eval(e, b)?;
        scalar_of(&v)
    }
}

pub(crate) fn scalar_of(v: &Array2<f64>) -> Result<f64> {
    if v.dim() != (1, 1) {
        return Err(AutodiffError::NotScalar(v.dim()));
    }
    Ok(v[[0, 0]])
}

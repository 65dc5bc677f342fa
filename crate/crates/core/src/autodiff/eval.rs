use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use super::{scalar_of, AutodiffError, Expr, Graph, InputId, Op, ParamId, Result, Unary};

/// Values for the free variables of a graph.
///
/// Inputs are per-point arrays (`rows` = batch size). Parameters are shared
/// through `Arc` so chunked evaluation does not copy them.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    inputs: Vec<Option<Arc<Array2<f64>>>>,
    params: Vec<Option<Arc<Array2<f64>>>>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind_input(&mut self, id: InputId, values: Array2<f64>) -> &mut Self {
        let i = id.0 as usize;
        if self.inputs.len() <= i {
            self.inputs.resize(i + 1, None);
        }
        self.inputs[i] = Some(Arc::new(values));
        self
    }

    /// Binds a single-column input from a slice.
    pub fn bind_column(&mut self, id: InputId, values: &[f64]) -> &mut Self {
        let col = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column shape");
        self.bind_input(id, col)
    }

    pub fn bind_param(&mut self, id: ParamId, values: Array2<f64>) -> &mut Self {
        self.bind_param_shared(id, Arc::new(values))
    }

    pub fn bind_param_shared(&mut self, id: ParamId, values: Arc<Array2<f64>>) -> &mut Self {
        let i = id.index();
        if self.params.len() <= i {
            self.params.resize(i + 1, None);
        }
        self.params[i] = Some(values);
        self
    }

    pub fn input(&self, id: InputId) -> Option<&Array2<f64>> {
        self.inputs.get(id.0 as usize).and_then(|v| v.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.params.get(id.index()).and_then(|v| v.as_deref())
    }

    /// Row count shared by the bound inputs, if any are bound.
    pub fn batch_len(&self) -> Option<usize> {
        self.inputs.iter().flatten().map(|a| a.nrows()).max()
    }

    /// Restricts every bound input to rows `start..end`; parameters are
    /// shared.
    pub fn slice_rows(&self, start: usize, end: usize) -> Bindings {
        let inputs = self
            .inputs
            .iter()
            .map(|v| {
                v.as_ref().map(|a| {
                    let end = end.min(a.nrows());
                    Arc::new(a.slice(ndarray::s![start..end, ..]).to_owned())
                })
            })
            .collect();
        Bindings { inputs, params: self.params.clone() }
    }
}

/// Gradients with respect to every declared parameter, indexed by
/// [`ParamId`]. Parameters the scalar does not depend on get zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(pub Vec<Array2<f64>>);

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> &Array2<f64> {
        &self.0[id.index()]
    }

    pub fn zeros(graph: &Graph) -> Self {
        ParamGrads(graph.params.iter().map(|p| Array2::zeros((p.rows, p.cols))).collect())
    }

    /// `self += w * other`, parameter by parameter in declaration order.
    pub fn add_scaled(&mut self, w: f64, other: &ParamGrads) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.scaled_add(w, b);
        }
    }

    pub fn scale(&mut self, w: f64) {
        for a in &mut self.0 {
            a.mapv_inplace(|x| x * w);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone)]
pub struct GradResult {
    pub value: f64,
    /// Values of the extra expressions requested alongside the gradient.
    pub extras: Vec<Array2<f64>>,
    pub grads: ParamGrads,
}

struct Forward<'a> {
    graph: &'a Graph,
    bindings: &'a Bindings,
    values: Vec<Option<Array2<f64>>>,
}

impl<'a> Forward<'a> {
    fn value(&self, e: Expr) -> &Array2<f64> {
        match &self.graph.node(e).op {
            Op::Input(id) => self.bindings.input(*id).expect("checked at bind time"),
            Op::Param(id) => self.bindings.param(*id).expect("checked at bind time"),
            _ => self.values[e.index()].as_ref().expect("operand evaluated before use"),
        }
    }

    fn run(graph: &'a Graph, roots: &[Expr], bindings: &'a Bindings) -> Result<(Self, Vec<bool>)> {
        let live = graph.live_set(roots);
        let mut fwd = Forward { graph, bindings, values: vec![None; graph.nodes.len()] };
        for (i, &is_live) in live.iter().enumerate() {
            if !is_live {
                continue;
            }
            let e = Expr(i as u32);
            let v = fwd.compute(e)?;
            fwd.values[i] = v;
        }
        Ok((fwd, live))
    }

    fn compute(&self, e: Expr) -> Result<Option<Array2<f64>>> {
        let g = self.graph;
        let out = match &g.node(e).op {
            Op::Const(bits) => Array2::from_elem((1, 1), f64::from_bits(*bits)),
            Op::Input(id) => {
                let decl = &g.inputs[id.0 as usize];
                let v =
                    self.bindings.input(*id).ok_or_else(|| AutodiffError::UnboundInput(decl.name.clone()))?;
                if v.ncols() != decl.cols {
                    return Err(AutodiffError::Shape {
                        op: "input binding",
                        lhs: v.dim(),
                        rhs: (v.nrows(), decl.cols),
                    });
                }
                return Ok(None);
            }
            Op::Param(id) => {
                let decl = &g.params[id.index()];
                let v =
                    self.bindings.param(*id).ok_or_else(|| AutodiffError::UnboundParam(decl.name.clone()))?;
                if v.dim() != (decl.rows, decl.cols) {
                    return Err(AutodiffError::Shape {
                        op: "parameter binding",
                        lhs: v.dim(),
                        rhs: (decl.rows, decl.cols),
                    });
                }
                return Ok(None);
            }
            Op::ZerosLike(a) => Array2::zeros(self.value(*a).dim()),
            Op::OnesLike(a) => Array2::ones(self.value(*a).dim()),
            Op::Add(a, b) => binary(self.value(*a), self.value(*b), "add", |x, y| x + y)?,
            Op::Sub(a, b) => binary(self.value(*a), self.value(*b), "sub", |x, y| x - y)?,
            Op::Mul(a, b) => binary(self.value(*a), self.value(*b), "mul", |x, y| x * y)?,
            Op::Neg(a) => self.value(*a).mapv(|x| -x),
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if x.ncols() != y.nrows() {
                    return Err(AutodiffError::Shape { op: "matmul", lhs: x.dim(), rhs: y.dim() });
                }
                x.dot(y)
            }
            Op::Unary(k, a) => {
                let k = *k;
                self.value(*a).mapv(|x| k.apply(x))
            }
            Op::Column(a, j) => {
                let x = self.value(*a);
                if *j >= x.ncols() {
                    return Err(AutodiffError::Shape {
                        op: "column",
                        lhs: x.dim(),
                        rhs: (x.nrows(), *j + 1),
                    });
                }
                x.column(*j).to_owned().insert_axis(Axis(1))
            }
            Op::Concat(parts) => {
                let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
                let rows = views[0].nrows();
                if let Some(bad) = views.iter().find(|v| v.nrows() != rows) {
                    return Err(AutodiffError::Shape { op: "concat", lhs: views[0].dim(), rhs: bad.dim() });
                }
                ndarray::concatenate(Axis(1), &views).expect("rows checked")
            }
            Op::SumAll(a) => Array2::from_elem((1, 1), self.value(*a).sum()),
            Op::MeanRows(a) => {
                let x = self.value(*a);
                let n = x.nrows().max(1) as f64;
                x.sum_axis(Axis(0)).insert_axis(Axis(0)) / n
            }
        };
        Ok(Some(out))
    }
}

fn broadcast_dim(a: (usize, usize), b: (usize, usize), op: &'static str) -> Result<(usize, usize)> {
    let one = |x: usize, y: usize| -> Option<usize> {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (one(a.0, b.0), one(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(AutodiffError::Shape { op, lhs: a, rhs: b }),
    }
}

fn binary(
    a: &Array2<f64>,
    b: &Array2<f64>,
    op: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Array2<f64>> {
    if a.dim() == b.dim() {
        return Ok(Zip::from(a).and(b).map_collect(|&x, &y| f(x, y)));
    }
    let dim = broadcast_dim(a.dim(), b.dim(), op)?;
    let av = a.broadcast(dim).expect("broadcast checked");
    let bv = b.broadcast(dim).expect("broadcast checked");
    Ok(Zip::from(&av).and(&bv).map_collect(|&x, &y| f(x, y)))
}

/// Sums `g` down to `dim` along broadcast axes.
fn reduce_to(g: Array2<f64>, dim: (usize, usize)) -> Array2<f64> {
    let mut g = g;
    if dim.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if dim.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn accumulate(slot: &mut Option<Array2<f64>>, g: Array2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl Graph {
    /// Evaluates `e` under `b`. Deterministic: identical bindings give
    /// bit-identical results.
    pub fn eval(&self, e: Expr, b: &Bindings) -> Result<Array2<f64>> {
        Ok(self.eval_many(&[e], b)?.pop().expect("one output"))
    }

    /// Evaluates several expressions with one shared forward pass.
    pub fn eval_many(&self, es: &[Expr], b: &Bindings) -> Result<Vec<Array2<f64>>> {
        let (fwd, _) = Forward::run(self, es, b)?;
        Ok(es.iter().map(|&e| fwd.value(e).clone()).collect())
    }

    /// Reverse-mode gradient of a `1×1` expression with respect to every
    /// parameter.
    pub fn grad_params(&self, scalar: Expr, b: &Bindings) -> Result<ParamGrads> {
        Ok(self.value_and_grad(scalar, &[], b)?.grads)
    }

    /// Value and parameter gradient of `scalar`, plus the values of
    /// `extras`, sharing one forward pass.
    pub fn value_and_grad(&self, scalar: Expr, extras: &[Expr], b: &Bindings) -> Result<GradResult> {
        let mut roots = vec![scalar];
        roots.extend_from_slice(extras);
        let (fwd, live) = Forward::run(self, &roots, b)?;
        let value = scalar_of(fwd.value(scalar))?;
        let extras_v = extras.iter().map(|&e| fwd.value(e).clone()).collect();

        let mut adj: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        adj[scalar.index()] = Some(Array2::ones((1, 1)));
        let mut grads = ParamGrads::zeros(self);

        for i in (0..=scalar.index()).rev() {
            if !live[i] || !self.nodes[i].has_param {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            let e = Expr(i as u32);
            let wants = |x: Expr| self.node(x).has_param;
            match &self.nodes[i].op {
                Op::Param(id) => {
                    grads.0[id.index()] += &g;
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        let ga = reduce_to(g.clone(), fwd.value(*a).dim());
                        accumulate(&mut adj[a.index()], ga);
                    }
                    if wants(*b) {
                        let gb = reduce_to(g, fwd.value(*b).dim());
                        accumulate(&mut adj[b.index()], gb);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*a) {
                        let ga = reduce_to(g.clone(), fwd.value(*a).dim());
                        accumulate(&mut adj[a.index()], ga);
                    }
                    if wants(*b) {
                        let gb = reduce_to(g.mapv(|x| -x), fwd.value(*b).dim());
                        accumulate(&mut adj[b.index()], gb);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (fwd.value(*a), fwd.value(*b));
                    if wants(*a) {
                        let ga = reduce_to(binary(&g, vb, "mul", |x, y| x * y)?, va.dim());
                        accumulate(&mut adj[a.index()], ga);
                    }
                    if wants(*b) {
                        let gb = reduce_to(binary(&g, va, "mul", |x, y| x * y)?, vb.dim());
                        accumulate(&mut adj[b.index()], gb);
                    }
                }
                Op::Neg(a) => accumulate(&mut adj[a.index()], g.mapv(|x| -x)),
                Op::MatMul(a, b) => {
                    let (va, vb) = (fwd.value(*a), fwd.value(*b));
                    if wants(*a) {
                        accumulate(&mut adj[a.index()], g.dot(&vb.t()));
                    }
                    if wants(*b) {
                        accumulate(&mut adj[b.index()], va.t().dot(&g));
                    }
                }
                Op::Unary(k, a) => {
                    let x = fwd.value(*a);
                    let ga = match k {
                        Unary::Tanh => {
                            let y = fwd.value(e);
                            Zip::from(&g).and(y).map_collect(|&g, &y| g * (1.0 - y * y))
                        }
                        Unary::Sin => Zip::from(&g).and(x).map_collect(|&g, &x| g * x.cos()),
                        Unary::Cos => Zip::from(&g).and(x).map_collect(|&g, &x| -g * x.sin()),
                        Unary::Exp => {
                            let y = fwd.value(e);
                            Zip::from(&g).and(y).map_collect(|&g, &y| g * y)
                        }
                        Unary::Abs => Zip::from(&g).and(x).map_collect(|&g, &x| {
                            if x > 0.0 {
                                g
                            } else if x < 0.0 {
                                -g
                            } else {
                                0.0
                            }
                        }),
                        Unary::Relu => {
                            Zip::from(&g).and(x).map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 })
                        }
                    };
                    accumulate(&mut adj[a.index()], ga);
                }
                Op::Column(a, j) => {
                    let mut ga = Array2::zeros(fwd.value(*a).dim());
                    ga.column_mut(*j).assign(&g.column(0));
                    accumulate(&mut adj[a.index()], ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = fwd.value(*p).ncols();
                        if wants(*p) {
                            let gp = g.slice(ndarray::s![.., offset..offset + w]).to_owned();
                            accumulate(&mut adj[p.index()], gp);
                        }
                        offset += w;
                    }
                }
                Op::SumAll(a) => {
                    let ga = Array2::from_elem(fwd.value(*a).dim(), g[[0, 0]]);
                    accumulate(&mut adj[a.index()], ga);
                }
                Op::MeanRows(a) => {
                    let dim = fwd.value(*a).dim();
                    let n = dim.0.max(1) as f64;
                    let ga = g.broadcast(dim).expect("row broadcast").mapv(|x| x / n);
                    accumulate(&mut adj[a.index()], ga);
                }
                Op::Const(_) | Op::Input(_) | Op::ZerosLike(_) | Op::OnesLike(_) => {}
            }
        }
        Ok(GradResult { value, extras: extras_v, grads })
    }
}

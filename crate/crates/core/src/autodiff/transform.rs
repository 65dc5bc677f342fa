use super::{AutodiffError, Expr, Graph, InputVar, Op, Result, Unary};

impl Graph {
    /// Derivative of `e` with respect to input `var`, of order 1 or 2.
    ///
    /// The result is a new expression in the same graph. For a
    /// multi-column input the derivative is taken along the all-ones
    /// direction, so coordinates should be declared as single columns.
    /// Fails with [`AutodiffError::NonSmooth`] if `abs` or `relu` lie on a
    /// path from `var` to `e`.
    pub fn d_input(&mut self, e: Expr, var: InputVar, order: u8) -> Result<Expr> {
        match order {
            1 => self.d1(e, var),
            2 => {
                let d = self.d1(e, var)?;
                self.d1(d, var)
            }
            n => Err(AutodiffError::Order(n)),
        }
    }

    /// Mixed derivative `∂ⁿe / ∂v₁…∂vₙ`, applied left to right.
    pub fn d_mixed(&mut self, e: Expr, vars: &[InputVar]) -> Result<Expr> {
        if vars.len() > 2 {
            return Err(AutodiffError::Order(vars.len() as u8));
        }
        vars.iter().try_fold(e, |acc, &v| self.d1(acc, v))
    }

    fn d1(&mut self, e: Expr, var: InputVar) -> Result<Expr> {
        Ok(match self.tangent(e, var)? {
            Some(t) => t,
            None => self.zeros_like(e),
        })
    }

    /// Tangent of `e` along `var`; `None` means identically zero.
    fn tangent(&mut self, e: Expr, var: InputVar) -> Result<Option<Expr>> {
        let bit = 1u64 << var.id.0;
        if self.node(e).input_mask & bit == 0 {
            return Ok(None);
        }
        if let Some(t) = self.tangents.get(&(e, var.id)) {
            return Ok(*t);
        }

        // Ancestors that depend on `var` and have no tangent yet, in
        // topological (index) order.
        let mut todo = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![e];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) || self.tangents.contains_key(&(n, var.id)) {
                continue;
            }
            todo.push(n);
            for a in self.node(n).op.operands() {
                if self.node(a).input_mask & bit != 0 {
                    stack.push(a);
                }
            }
        }
        todo.sort_unstable();

        for n in todo {
            let t = self.tangent_rule(n, var)?;
            self.tangents.insert((n, var.id), t);
        }
        Ok(self.tangents[&(e, var.id)])
    }

    fn known(&self, e: Expr, var: InputVar) -> Option<Expr> {
        if self.node(e).input_mask & (1u64 << var.id.0) == 0 {
            return None;
        }
        self.tangents[&(e, var.id)]
    }

    fn tangent_rule(&mut self, n: Expr, var: InputVar) -> Result<Option<Expr>> {
        let op = self.node(n).op.clone();
        Ok(match op {
            Op::Input(id) => (id == var.id).then(|| self.ones_like(n)),
            Op::Const(_) | Op::Param(_) | Op::ZerosLike(_) | Op::OnesLike(_) => None,
            Op::Add(a, b) => match (self.known(a, var), self.known(b, var)) {
                (Some(x), Some(y)) => Some(self.add(x, y)),
                (x, y) => x.or(y),
            },
            Op::Sub(a, b) => match (self.known(a, var), self.known(b, var)) {
                (Some(x), Some(y)) => Some(self.sub(x, y)),
                (Some(x), None) => Some(x),
                (None, Some(y)) => Some(self.neg(y)),
                (None, None) => None,
            },
            Op::Mul(a, b) => {
                let l = self.known(a, var).map(|ta| self.mul(ta, b));
                let r = self.known(b, var).map(|tb| self.mul(a, tb));
                self.add_opt(l, r)
            }
            Op::Neg(a) => self.known(a, var).map(|t| self.neg(t)),
            Op::MatMul(a, b) => {
                let l = self.known(a, var).map(|ta| self.matmul(ta, b));
                let r = self.known(b, var).map(|tb| self.matmul(a, tb));
                self.add_opt(l, r)
            }
            Op::Unary(k, a) => {
                let Some(ta) = self.known(a, var) else {
                    return Ok(None);
                };
                let slope = match k {
                    Unary::Tanh => {
                        let one = self.constant(1.0);
                        let y2 = self.square(n);
                        self.sub(one, y2)
                    }
                    Unary::Sin => self.cos(a),
                    Unary::Cos => {
                        let s = self.sin(a);
                        self.neg(s)
                    }
                    Unary::Exp => n,
                    Unary::Abs | Unary::Relu => return Err(AutodiffError::NonSmooth(k.name())),
                };
                Some(self.mul(slope, ta))
            }
            Op::Column(a, j) => self.known(a, var).map(|t| self.column(t, j)),
            Op::Concat(parts) => {
                let ts: Vec<_> = parts.iter().map(|&p| self.known(p, var)).collect();
                if ts.iter().all(Option::is_none) {
                    None
                } else {
                    let full: Vec<Expr> =
                        parts.iter().zip(ts).map(|(&p, t)| t.unwrap_or_else(|| self.zeros_like(p))).collect();
                    Some(self.concat(&full))
                }
            }
            Op::SumAll(a) => self.known(a, var).map(|t| self.sum_all(t)),
            Op::MeanRows(a) => self.known(a, var).map(|t| self.mean_rows(t)),
        })
    }

    fn add_opt(&mut self, a: Option<Expr>, b: Option<Expr>) -> Option<Expr> {
        match (a, b) {
            (Some(x), Some(y)) => Some(self.add(x, y)),
            (x, y) => x.or(y),
        }
    }
}

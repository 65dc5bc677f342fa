use std::sync::Arc;

use ndarray::Array2;

use crate::autodiff::{value_and_grad_chunked, Bindings, Expr, Graph, InputVar, ParamGrads};
use crate::dataset::LabelSet;
use crate::network::{Architecture, InputScaling, NetworkParams};
use crate::physics::{
    build_residuals, consistency_tbar, Coords, Equation, FlowFields, FluidParams, Forcing, ResidualSet,
};

use super::{DivPenalty, LossConfig, LossMode, Result, TrainError};

#[derive(Debug, Clone)]
struct LabelTerm {
    coords: Coords,
    values: InputVar,
    mask: InputVar,
    loss: Expr,
}

#[derive(Debug, Clone)]
struct PdeTerm {
    coords: Coords,
    set: ResidualSet,
    /// Weighted sum of all residual terms.
    loss: Expr,
    /// Unweighted per-equation terms, in `Equation::ALL` order where present.
    parts: Vec<(Equation, Expr)>,
    identity: Option<Expr>,
}

/// Losses and gradient of one optimiser step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub label: f64,
    /// Unweighted residual terms indexed like `Equation::ALL`; 0 when absent.
    pub parts: [f64; 6],
    pub identity: f64,
    pub total: f64,
    pub grads: ParamGrads,
}

/// Loss graph over a label batch and a residual batch.
#[derive(Debug, Clone)]
pub struct Trainer {
    graph: Graph,
    net: NetworkParams,
    loss: LossConfig,
    label: LabelTerm,
    pde: Option<PdeTerm>,
}

fn mean_square(g: &mut Graph, r: Expr) -> Expr {
    let sq = g.square(r);
    let m = g.mean_rows(sq);
    g.sum_all(m)
}

impl Trainer {
    pub fn new(
        arch: &Architecture,
        scaling: &InputScaling,
        fp: &FluidParams,
        loss: &LossConfig,
        forcing: &Forcing,
    ) -> Result<Self> {
        loss.validate()?;
        arch.validate()?;
        let dim = fp.dim;
        if arch.inputs() != dim.n_inputs() || arch.outputs() != dim.n_outputs() {
            return Err(TrainError::Shape(format!(
                "a {}-dimensional problem needs {} inputs and {} outputs",
                dim.n(),
                dim.n_inputs(),
                dim.n_outputs()
            )));
        }
        let mut g = Graph::new();
        let net = NetworkParams::declare(&mut g, arch);

        // Label term: mean over records of the squared error summed over
        // observed components.
        let coords = Coords::declare(&mut g, dim, "l_")?;
        let out = net.forward(&mut g, arch, scaling, &coords.all())?;
        let values = g.input("l_values", arch.outputs())?;
        let mask = g.input("l_mask", arch.outputs())?;
        let diff = g.sub(out, values.expr);
        let sq = g.square(diff);
        let masked = g.mul(mask.expr, sq);
        let per_comp = g.mean_rows(masked);
        let label_loss = g.sum_all(per_comp);
        let label = LabelTerm { coords, values, mask, loss: label_loss };

        let pde = if loss.mode() == LossMode::PlainDnn {
            None
        } else {
            let coords = Coords::declare(&mut g, dim, "r_")?;
            let out = net.forward(&mut g, arch, scaling, &coords.all())?;
            let fields = FlowFields::from_output(&mut g, out, dim, arch.outputs())?;
            let set = build_residuals(&mut g, &fields, &coords, fp, forcing)?;
            let mut parts = Vec::new();
            let mut weighted = Vec::new();
            for eq in Equation::ALL {
                let Some(r) = set.get(eq) else { continue };
                let term = match (eq, loss.div_penalty) {
                    (Equation::Continuity, DivPenalty::DeadZone { tau }) => {
                        let a = g.abs(r);
                        let t = g.constant(tau);
                        let excess = g.sub(a, t);
                        let hinge = g.relu(excess);
                        mean_square(&mut g, hinge)
                    }
                    _ => mean_square(&mut g, r),
                };
                parts.push((eq, term));
                let w = loss.weights.get(eq);
                if w != 0.0 {
                    weighted.push(g.scale(w, term));
                }
            }
            let identity = (loss.tbar_identity > 0.0).then(|| {
                let c = consistency_tbar(&mut g, &fields);
                let term = mean_square(&mut g, c);
                weighted.push(g.scale(loss.tbar_identity, term));
                term
            });
            let total = match g.sum_of(&weighted) {
                Some(t) => t,
                None => g.constant(0.0),
            };
            Some(PdeTerm { coords, set, loss: total, parts, identity })
        };
        Ok(Trainer { graph: g, net, loss: *loss, label, pde })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn has_residual_graph(&self) -> bool {
        self.pde.is_some()
    }

    pub fn loss_config(&self) -> &LossConfig {
        &self.loss
    }

    /// Total loss recomputed from its logged parts, in a fixed order:
    /// label, then `Equation::ALL`, then the identity term.
    pub fn combine(loss: &LossConfig, label: f64, parts: &[f64; 6], identity: f64) -> f64 {
        let mut t = loss.lambda_label * label;
        for (eq, &p) in Equation::ALL.iter().zip(parts) {
            t += loss.weights.get(*eq) * p;
        }
        t + loss.tbar_identity * identity
    }

    /// Losses and parameter gradient over one label batch and one residual
    /// batch; residual rows are processed in chunks of `chunk`.
    pub fn step(
        &self,
        params: &[Arc<Array2<f64>>],
        labels: &LabelSet,
        residual_points: &Array2<f64>,
        chunk: usize,
    ) -> Result<StepResult> {
        if labels.is_empty() {
            return Err(TrainError::Config("empty label batch".into()));
        }
        let mut bl = Bindings::new();
        self.net.bind(&mut bl, params);
        self.label.coords.bind(&mut bl, &labels.points);
        bl.bind_input(self.label.values.id, labels.values.clone());
        bl.bind_input(self.label.mask.id, labels.mask.clone());
        let lr = value_and_grad_chunked(&self.graph, self.label.loss, &[], &bl, chunk)?;
        let mut grads = lr.grads;
        grads.scale(self.loss.lambda_label);

        let mut parts = [0.0; 6];
        let mut identity = 0.0;
        if let Some(pde) = &self.pde {
            if residual_points.nrows() == 0 {
                return Err(TrainError::Config("empty residual batch".into()));
            }
            let mut br = Bindings::new();
            self.net.bind(&mut br, params);
            pde.coords.bind(&mut br, residual_points);
            pde.set.bind_forcing(&mut br, residual_points);
            let mut extras: Vec<Expr> = pde.parts.iter().map(|(_, e)| *e).collect();
            extras.extend(pde.identity);
            let pr = value_and_grad_chunked(&self.graph, pde.loss, &extras, &br, chunk)?;
            for ((eq, _), v) in pde.parts.iter().zip(&pr.extras) {
                parts[Equation::ALL.iter().position(|e| e == eq).expect("known")] = *v;
            }
            if pde.identity.is_some() {
                identity = *pr.extras.last().expect("identity extra");
            }
            grads.add_scaled(1.0, &pr.grads);
        }
        let total = Self::combine(&self.loss, lr.value, &parts, identity);
        Ok(StepResult { label: lr.value, parts, identity, total, grads })
    }
}

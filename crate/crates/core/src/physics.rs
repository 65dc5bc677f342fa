//! Boussinesq residuals in convective units:
//!
//! ```text
//! ∂t v + (v·∇)v + ∇p − (Pr/√Ra) Δv − Pr T e_z = f_v
//! ∂t T + v·∇T − Ra^{-1/2} ΔT = f_T
//! ∂t T̄ + v·∇T̄ − Ra^{-1/2} ΔT̄ = f_T̄
//! ∇·v = f_div
//! ```
//!
//! `e_z` is the last spatial axis. Each residual is an `rows × 1` graph
//! expression; forcing enters as bound input columns so the same graph
//! serves forced (manufactured) and unforced problems.

use std::sync::Arc;

use ndarray::Array2;

use crate::autodiff::{AutodiffError, Bindings, Expr, Graph, InputVar};

#[derive(Debug, thiserror::Error)]
pub enum PhysicsError {
    #[error("invalid fluid parameters: {0}")]
    Params(String),
    #[error("network output has {found} columns, {expected} required")]
    MissingOutput { expected: usize, found: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, PhysicsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SpatialDim {
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
}

impl SpatialDim {
    pub fn n(self) -> usize {
        match self {
            SpatialDim::Two => 2,
            SpatialDim::Three => 3,
        }
    }

    pub fn from_n(n: usize) -> Option<Self> {
        match n {
            2 => Some(SpatialDim::Two),
            3 => Some(SpatialDim::Three),
            _ => None,
        }
    }

    /// Network inputs: spatial axes then time.
    pub fn n_inputs(self) -> usize {
        self.n() + 1
    }

    /// Network outputs: velocity components, p, T, T̄.
    pub fn n_outputs(self) -> usize {
        self.n() + 3
    }

    pub fn axis_names(self) -> &'static [&'static str] {
        match self {
            SpatialDim::Two => &["x", "z"],
            SpatialDim::Three => &["x", "y", "z"],
        }
    }

    pub fn equations(self) -> &'static [Equation] {
        use Equation::*;
        match self {
            SpatialDim::Two => &[MomentumX, MomentumZ, Temperature, TemperatureBar, Continuity],
            SpatialDim::Three => &[MomentumX, MomentumY, MomentumZ, Temperature, TemperatureBar, Continuity],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    pub ra: f64,
    pub pr: f64,
    pub dim: SpatialDim,
}

impl FluidParams {
    pub fn new(ra: f64, pr: f64, dim: SpatialDim) -> Result<Self> {
        if !(ra > 0.0 && ra.is_finite()) {
            return Err(PhysicsError::Params(format!("Ra must be positive, got {ra}")));
        }
        if !(pr > 0.0 && pr.is_finite()) {
            return Err(PhysicsError::Params(format!("Pr must be positive, got {pr}")));
        }
        Ok(FluidParams { ra, pr, dim })
    }

    /// Momentum diffusion coefficient `Pr/√Ra`.
    pub fn nu(&self) -> f64 {
        self.pr / self.ra.sqrt()
    }

    /// Thermal diffusion coefficient `1/√Ra`.
    pub fn kappa(&self) -> f64 {
        1.0 / self.ra.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Equation {
    MomentumX,
    MomentumY,
    MomentumZ,
    Temperature,
    TemperatureBar,
    Continuity,
}

impl Equation {
    pub const ALL: [Equation; 6] = [
        Equation::MomentumX,
        Equation::MomentumY,
        Equation::MomentumZ,
        Equation::Temperature,
        Equation::TemperatureBar,
        Equation::Continuity,
    ];

    /// Short name used in logs and CSV headers.
    pub fn name(self) -> &'static str {
        match self {
            Equation::MomentumX => "mx",
            Equation::MomentumY => "my",
            Equation::MomentumZ => "mz",
            Equation::Temperature => "T",
            Equation::TemperatureBar => "Tbar",
            Equation::Continuity => "div",
        }
    }
}

/// Space-time coordinates of a batch, one input column each.
#[derive(Debug, Clone)]
pub struct Coords {
    /// Spatial axes in order (x, z) or (x, y, z).
    pub space: Vec<InputVar>,
    pub t: InputVar,
}

impl Coords {
    /// Declares inputs named `<prefix>x`, …, `<prefix>t`.
    pub fn declare(g: &mut Graph, dim: SpatialDim, prefix: &str) -> Result<Self> {
        let space = dim
            .axis_names()
            .iter()
            .map(|a| g.input(&format!("{prefix}{a}"), 1))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let t = g.input(&format!("{prefix}t"), 1)?;
        Ok(Coords { space, t })
    }

    /// Inputs in network order: spatial axes then time.
    pub fn all(&self) -> Vec<InputVar> {
        let mut v = self.space.clone();
        v.push(self.t);
        v
    }

    /// Binds an `n × (d+1)` point array column by column.
    pub fn bind(&self, b: &mut Bindings, points: &Array2<f64>) {
        for (k, var) in self.all().iter().enumerate() {
            b.bind_input(var.id, points.column(k).to_owned().insert_axis(ndarray::Axis(1)));
        }
    }
}

/// Flow fields as `rows × 1` expressions.
#[derive(Debug, Clone)]
pub struct FlowFields {
    pub v: Vec<Expr>,
    pub p: Expr,
    pub t: Expr,
    pub tbar: Expr,
}

impl FlowFields {
    /// Splits a network output `rows × n_u` into fields, ordered
    /// (v…, p, T, T̄).
    pub fn from_output(g: &mut Graph, out: Expr, dim: SpatialDim, n_cols: usize) -> Result<Self> {
        let d = dim.n();
        if n_cols < dim.n_outputs() {
            return Err(PhysicsError::MissingOutput { expected: dim.n_outputs(), found: n_cols });
        }
        let v = (0..d).map(|i| g.column(out, i)).collect();
        Ok(FlowFields { v, p: g.column(out, d), t: g.column(out, d + 1), tbar: g.column(out, d + 2) })
    }
}

/// Analytic source term evaluated at a point `(space…, t)`.
pub trait ForcingField: Send + Sync + std::fmt::Debug {
    fn forcing(&self, eq: Equation, point: &[f64]) -> f64;
}

#[derive(Debug, Clone, Default)]
pub enum Forcing {
    #[default]
    None,
    Field(Arc<dyn ForcingField>),
}

/// The residual expressions of one batch of points.
#[derive(Debug, Clone)]
pub struct ResidualSet {
    pub residuals: Vec<(Equation, Expr)>,
    /// Forcing input columns, present only for forced problems.
    forcing_inputs: Vec<(Equation, InputVar)>,
    forcing: Forcing,
}

impl ResidualSet {
    pub fn get(&self, eq: Equation) -> Option<Expr> {
        self.residuals.iter().find(|(e, _)| *e == eq).map(|(_, x)| *x)
    }

    pub fn exprs(&self) -> Vec<Expr> {
        self.residuals.iter().map(|(_, e)| *e).collect()
    }

    /// Evaluates the forcing at `points` and binds the forcing columns.
    pub fn bind_forcing(&self, b: &mut Bindings, points: &Array2<f64>) {
        let Forcing::Field(f) = &self.forcing else {
            return;
        };
        for (eq, var) in &self.forcing_inputs {
            let col: Vec<f64> = points
                .rows()
                .into_iter()
                .map(|r| f.forcing(*eq, r.as_slice().expect("row-major points")))
                .collect();
            b.bind_column(var.id, &col);
        }
    }
}

/// Builds the residuals of the Boussinesq system for `fields` over `coords`.
pub fn build_residuals(
    g: &mut Graph,
    fields: &FlowFields,
    coords: &Coords,
    fp: &FluidParams,
    forcing: &Forcing,
) -> Result<ResidualSet> {
    let d = fp.dim.n();
    if fields.v.len() != d || coords.space.len() != d {
        return Err(PhysicsError::MissingOutput {
            expected: d,
            found: fields.v.len().min(coords.space.len()),
        });
    }
    let nu = fp.nu();
    let kappa = fp.kappa();

    // Advection-diffusion operator ∂t q + v·∇q − c Δq.
    let transport = |g: &mut Graph, q: Expr, c: f64| -> Result<Expr> {
        let mut terms = vec![g.d_input(q, coords.t, 1)?];
        for (j, &xj) in coords.space.iter().enumerate() {
            let dq = g.d_input(q, xj, 1)?;
            terms.push(g.mul(fields.v[j], dq));
        }
        let adv = g.sum_of(&terms).expect("non-empty");
        let lap_terms =
            coords.space.iter().map(|&xj| g.d_input(q, xj, 2)).collect::<std::result::Result<Vec<_>, _>>()?;
        let lap = g.sum_of(&lap_terms).expect("non-empty");
        let diff = g.scale(c, lap);
        Ok(g.sub(adv, diff))
    };

    let eqs = fp.dim.equations();
    let mut raw = Vec::with_capacity(eqs.len());
    let mom_eqs: &[Equation] = match fp.dim {
        SpatialDim::Two => &[Equation::MomentumX, Equation::MomentumZ],
        SpatialDim::Three => &[Equation::MomentumX, Equation::MomentumY, Equation::MomentumZ],
    };
    for (i, &eq) in mom_eqs.iter().enumerate() {
        let tr = transport(g, fields.v[i], nu)?;
        let dp = g.d_input(fields.p, coords.space[i], 1)?;
        let mut r = g.add(tr, dp);
        if i == d - 1 {
            let buoy = g.scale(fp.pr, fields.t);
            r = g.sub(r, buoy);
        }
        raw.push((eq, r));
    }
    let rt = transport(g, fields.t, kappa)?;
    raw.push((Equation::Temperature, rt));
    let rtb = transport(g, fields.tbar, kappa)?;
    raw.push((Equation::TemperatureBar, rtb));
    let divs = coords
        .space
        .iter()
        .zip(&fields.v)
        .map(|(&xi, &vi)| g.d_input(vi, xi, 1))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    raw.push((Equation::Continuity, g.sum_of(&divs).expect("non-empty")));

    let mut forcing_inputs = Vec::new();
    let residuals = match forcing {
        Forcing::None => raw,
        Forcing::Field(_) => {
            let prefix = g.input_name(coords.t.id).trim_end_matches('t').to_string();
            raw.into_iter()
                .map(|(eq, r)| {
                    let f = g.input(&format!("{prefix}forcing_{}", eq.name()), 1)?;
                    forcing_inputs.push((eq, f));
                    Ok((eq, g.sub(r, f.expr)))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(ResidualSet { residuals, forcing_inputs, forcing: forcing.clone() })
}

/// Diagnostic `T + T̄ − 1`.
pub fn consistency_tbar(g: &mut Graph, fields: &FlowFields) -> Expr {
    let s = g.add(fields.t, fields.tbar);
    let one = g.constant(1.0);
    g.sub(s, one)
}

/// Reference velocity `(κ/H)·√Ra`.
pub fn convective_velocity(kappa: f64, h: f64, ra: f64) -> Result<f64> {
    if !(kappa > 0.0 && h > 0.0 && ra > 0.0) {
        return Err(PhysicsError::Params("diffusivity, length and Ra must be positive".into()));
    }
    Ok(kappa / h * ra.sqrt())
}

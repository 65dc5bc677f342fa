//! Manufactured solutions built from separable trigonometric terms.
//!
//! A field is a sum of terms `c · Π_i f_i(k_i · x_i)` over the axes
//! `(space…, t)` with `f ∈ {1, sin, cos}`. Derivatives of such sums are
//! again such sums, which gives exact forcing without going through the
//! autodiff engine.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::autodiff::{Expr, Graph, InputVar};
use crate::dataset::{Axis, FieldKind, SnapshotDb};
use crate::physics::{Coords, Equation, FlowFields, FluidParams, ForcingField, SpatialDim};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    One,
    Sin(f64),
    Cos(f64),
}

impl Basis {
    fn eval(self, x: f64) -> f64 {
        match self {
            Basis::One => 1.0,
            Basis::Sin(k) => (k * x).sin(),
            Basis::Cos(k) => (k * x).cos(),
        }
    }

    /// `(factor, basis)` with `d/dx f = factor · basis`, or `None` if zero.
    fn deriv(self) -> Option<(f64, Basis)> {
        match self {
            Basis::One => None,
            Basis::Sin(k) => Some((k, Basis::Cos(k))),
            Basis::Cos(k) => Some((-k, Basis::Sin(k))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub c: f64,
    pub f: Vec<Basis>,
}

/// Sum of separable terms over `(space…, t)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Field(pub Vec<Term>);

impl Field {
    pub fn term(c: f64, f: Vec<Basis>) -> Self {
        Field(vec![Term { c, f }])
    }

    pub fn constant(c: f64, axes: usize) -> Self {
        Field::term(c, vec![Basis::One; axes])
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.0.iter().map(|t| t.c * t.f.iter().zip(p).map(|(b, &x)| b.eval(x)).product::<f64>()).sum()
    }

    pub fn deriv(&self, axis: usize) -> Field {
        Field(
            self.0
                .iter()
                .filter_map(|t| {
                    let (k, b) = t.f[axis].deriv()?;
                    let mut f = t.f.clone();
                    f[axis] = b;
                    Some(Term { c: t.c * k, f })
                })
                .collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> Field {
        Field(self.0.iter().map(|t| Term { c: t.c * s, f: t.f.clone() }).collect())
    }

    pub fn plus(&self, other: &Field) -> Field {
        Field(self.0.iter().chain(&other.0).cloned().collect())
    }

    /// Graph expression over `vars` (one per axis); an empty field is zero.
    pub fn expr(&self, g: &mut Graph, vars: &[InputVar]) -> Expr {
        let mut terms = Vec::new();
        for t in &self.0 {
            let mut prod: Option<Expr> = None;
            for (b, v) in t.f.iter().zip(vars) {
                let f = match *b {
                    Basis::One => continue,
                    Basis::Sin(k) => {
                        let a = g.scale(k, v.expr);
                        g.sin(a)
                    }
                    Basis::Cos(k) => {
                        let a = g.scale(k, v.expr);
                        g.cos(a)
                    }
                };
                prod = Some(match prod {
                    Some(p) => g.mul(p, f),
                    None => f,
                });
            }
            let term = match prod {
                Some(p) => g.scale(t.c, p),
                None => {
                    let one = g.ones_like(vars[0].expr);
                    g.scale(t.c, one)
                }
            };
            terms.push(term);
        }
        match g.sum_of(&terms) {
            Some(e) => e,
            None => g.zeros_like(vars[0].expr),
        }
    }
}

#[derive(Debug, Clone)]
struct Derivs {
    q: Field,
    /// First derivatives along (space…, t).
    d: Vec<Field>,
    /// Second derivatives along each spatial axis.
    dd: Vec<Field>,
}

impl Derivs {
    fn new(q: Field, d_space: usize) -> Self {
        let d = (0..=d_space).map(|i| q.deriv(i)).collect::<Vec<_>>();
        let dd = (0..d_space).map(|i| d[i].deriv(i)).collect();
        Derivs { q, d, dd }
    }

    fn laplacian(&self, p: &[f64]) -> f64 {
        self.dd.iter().map(|f| f.eval(p)).sum()
    }
}

/// Analytic velocity (from streamfunctions), pressure and temperature,
/// with the forcing that makes them exact solutions of the Boussinesq
/// system.
#[derive(Debug, Clone)]
pub struct ManufacturedSolution {
    pub fp: FluidParams,
    pub name: String,
    v: Vec<Derivs>,
    p: Derivs,
    t: Derivs,
    tbar: Derivs,
}

/// Amplitudes and frequency of the default solutions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ManufacturedParams {
    /// Streamfunction amplitude.
    pub psi: f64,
    /// Unsteady pressure amplitude.
    pub pressure: f64,
    /// Amplitude of the travelling temperature wave.
    pub wave: f64,
    /// Angular frequency in time.
    pub omega: f64,
}

impl Default for ManufacturedParams {
    fn default() -> Self {
        ManufacturedParams { psi: 0.15, pressure: 0.2, wave: 0.2, omega: PI }
    }
}

impl ManufacturedSolution {
    /// Builds from a velocity, pressure and temperature; `T̄ = 1 − T`.
    pub fn from_fields(name: &str, fp: FluidParams, v: Vec<Field>, p: Field, t: Field) -> Self {
        let d = fp.dim.n();
        assert_eq!(v.len(), d, "one velocity component per axis");
        let tbar = Field::constant(1.0, d + 1).plus(&t.scaled(-1.0));
        ManufacturedSolution {
            fp,
            name: name.to_string(),
            v: v.into_iter().map(|f| Derivs::new(f, d)).collect(),
            p: Derivs::new(p, d),
            t: Derivs::new(t, d),
            tbar: Derivs::new(tbar, d),
        }
    }

    /// Unsteady 2D case on the unit square:
    /// `ψ = A sin πx sin πz cos ωt`, `v = (∂zψ, −∂xψ)`,
    /// `p = P cos πx cos πz sin ωt`,
    /// `T = ½ + ¼ cos πz + W sin(πx − ωt) sin πz`.
    pub fn default_2d(fp: FluidParams, m: ManufacturedParams) -> Self {
        use Basis::*;
        assert_eq!(fp.dim, SpatialDim::Two);
        let w = m.omega;
        let psi = Field::term(m.psi, vec![Sin(PI), Sin(PI), Cos(w)]);
        let vx = psi.deriv(1);
        let vz = psi.deriv(0).scaled(-1.0);
        let p = Field::term(m.pressure, vec![Cos(PI), Cos(PI), Sin(w)]);
        let t = Field::constant(0.5, 3)
            .plus(&Field::term(0.25, vec![One, Cos(PI), One]))
            .plus(&Field::term(m.wave, vec![Sin(PI), Sin(PI), Cos(w)]))
            .plus(&Field::term(-m.wave, vec![Cos(PI), Sin(PI), Sin(w)]));
        Self::from_fields("manufactured-2d", fp, vec![vx, vz], p, t)
    }

    /// 3D case on the unit cube with two streamfunctions,
    /// `v = (∂zψ₁, ∂zψ₂, −∂xψ₁ − ∂yψ₂)`.
    pub fn default_3d(fp: FluidParams, m: ManufacturedParams) -> Self {
        use Basis::*;
        assert_eq!(fp.dim, SpatialDim::Three);
        let w = m.omega;
        let psi1 = Field::term(m.psi, vec![Sin(PI), Cos(PI), Sin(PI), Cos(w)]);
        let psi2 = Field::term(0.5 * m.psi, vec![Cos(PI), Sin(PI), Sin(PI), Sin(w)]);
        let vx = psi1.deriv(2);
        let vy = psi2.deriv(2);
        let vz = psi1.deriv(0).plus(&psi2.deriv(1)).scaled(-1.0);
        let p = Field::term(m.pressure, vec![Cos(PI), Cos(PI), Cos(PI), Sin(w)]);
        let t = Field::constant(0.5, 4)
            .plus(&Field::term(0.25, vec![One, One, Cos(PI), One]))
            .plus(&Field::term(m.wave, vec![Sin(PI), Cos(PI), Sin(PI), Cos(w)]))
            .plus(&Field::term(-m.wave, vec![Cos(PI), Cos(PI), Sin(PI), Sin(w)]));
        Self::from_fields("manufactured-3d", fp, vec![vx, vy, vz], p, t)
    }

    pub fn dim(&self) -> SpatialDim {
        self.fp.dim
    }

    /// Exact value of a stored field at `(space…, t)`.
    pub fn value(&self, f: FieldKind, p: &[f64]) -> f64 {
        let last = self.fp.dim.n() - 1;
        match f {
            FieldKind::Vx => self.v[0].q.eval(p),
            FieldKind::Vy => self.v[1].q.eval(p),
            FieldKind::Vz => self.v[last].q.eval(p),
            FieldKind::P => self.p.q.eval(p),
            FieldKind::T => self.t.q.eval(p),
        }
    }

    /// Exact network-ordered output `(v…, p, T, T̄)`.
    pub fn outputs(&self, p: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self.v.iter().map(|d| d.q.eval(p)).collect();
        out.push(self.p.q.eval(p));
        out.push(self.t.q.eval(p));
        out.push(self.tbar.q.eval(p));
        out
    }

    /// Divergence `Σ ∂ᵢvᵢ` from the symbolic derivatives.
    pub fn divergence(&self, p: &[f64]) -> f64 {
        self.v.iter().enumerate().map(|(i, d)| d.d[i].eval(p)).sum()
    }

    fn transport(&self, q: &Derivs, c: f64, p: &[f64]) -> f64 {
        let d = self.fp.dim.n();
        let mut r = q.d[d].eval(p);
        for j in 0..d {
            r += self.v[j].q.eval(p) * q.d[j].eval(p);
        }
        r - c * q.laplacian(p)
    }

    /// The fields as graph expressions over `coords`.
    pub fn fields_expr(&self, g: &mut Graph, coords: &Coords) -> FlowFields {
        let vars = coords.all();
        FlowFields {
            v: self.v.iter().map(|d| d.q.expr(g, &vars)).collect(),
            p: self.p.q.expr(g, &vars),
            t: self.t.q.expr(g, &vars),
            tbar: self.tbar.q.expr(g, &vars),
        }
    }

    /// Samples the exact fields on a grid.
    pub fn sample_db(&self, axes: Vec<Axis>, times: Vec<f64>) -> SnapshotDb {
        let mut db = SnapshotDb::zeros(self.fp.dim, axes, times, self.fp.ra, self.fp.pr);
        db.provenance = format!("exact:{}", self.name);
        for flat in 0..db.size() {
            let p = db.point(flat);
            for &f in FieldKind::stored(self.fp.dim) {
                let v = self.value(f, &p);
                db.field_mut(f).expect("stored")[flat] = v;
            }
        }
        db
    }

    pub fn into_forcing(self) -> crate::physics::Forcing {
        crate::physics::Forcing::Field(Arc::new(self))
    }
}

impl ForcingField for ManufacturedSolution {
    fn forcing(&self, eq: Equation, p: &[f64]) -> f64 {
        let d = self.fp.dim.n();
        let mom = |i: usize| {
            let mut r = self.transport(&self.v[i], self.fp.nu(), p) + self.p.d[i].eval(p);
            if i == d - 1 {
                r -= self.fp.pr * self.t.q.eval(p);
            }
            r
        };
        match eq {
            Equation::MomentumX => mom(0),
            Equation::MomentumY if d == 3 => mom(1),
            Equation::MomentumY => 0.0,
            Equation::MomentumZ => mom(d - 1),
            Equation::Temperature => self.transport(&self.t, self.fp.kappa(), p),
            Equation::TemperatureBar => self.transport(&self.tbar, self.fp.kappa(), p),
            Equation::Continuity => self.divergence(p),
        }
    }
}

/// Samples `ms` on a grid; equivalent to [`ManufacturedSolution::sample_db`].
pub fn manufactured_db(ms: &ManufacturedSolution, axes: Vec<Axis>, times: Vec<f64>) -> SnapshotDb {
    ms.sample_db(axes, times)
}

//! WebAssembly bindings for a single-page demo (`www/index.html`).
//!
//! The page drives one [`Demo`]: a small network trained in the browser on
//! the manufactured 2D convection case, with temperature everywhere and
//! velocity only on the walls. Three operations are exposed:
//!
//! - [`Demo::train`] runs epochs and returns the logged losses,
//! - [`Demo::field`] samples a predicted or exact field on a grid,
//! - [`Demo::errors`] scores the current network against the exact fields.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use ndarray::Array2;
use plumenet::dataset::{
    Axis, Face, FieldKind, LabelSpec, PaddingSpec, Placement, ResidualSpec, TrainingSet,
};
use plumenet::metrics::{center_per_time, field_stats};
use plumenet::network::Architecture;
use plumenet::physics::{FluidParams, Forcing, SpatialDim};
use plumenet::refsolver::{ManufacturedParams, ManufacturedSolution};
use plumenet::training::{Cycle, Schedule, Session, TrainConfig};
use wasm_bindgen::prelude::*;

const FIELDS: [&str; 5] = ["vx", "vz", "p", "T", "Tbar"];

fn field_index(name: &str) -> Result<usize, JsError> {
    FIELDS
        .iter()
        .position(|f| *f == name)
        .ok_or_else(|| JsError::new(&format!("unknown field `{name}`; expected one of {FIELDS:?}")))
}

#[wasm_bindgen]
pub struct Demo {
    exact: ManufacturedSolution,
    ts: TrainingSet,
    session: Session,
    fp: FluidParams,
    forcing: Forcing,
    cfg: TrainConfig,
}

#[wasm_bindgen]
impl Demo {
    /// A fresh demo on an `n × n × n_t` grid over `t ∈ [0, 2]`, with a
    /// `(3, width × depth, 5)` network.
    #[wasm_bindgen(constructor)]
    pub fn new(
        n: usize,
        n_t: usize,
        width: usize,
        depth: usize,
        ra: f64,
        seed: u64,
    ) -> Result<Demo, JsError> {
        if !(3..=64).contains(&n) || !(2..=64).contains(&n_t) {
            return Err(JsError::new("grid must be 3..=64 points per axis and 2..=64 snapshots"));
        }
        if width == 0 || depth == 0 || width > 128 || depth > 8 {
            return Err(JsError::new("network must have 1..=128 units and 1..=8 hidden layers"));
        }
        let fp = FluidParams::new(ra, 1.0, SpatialDim::Two).map_err(|e| JsError::new(&e.to_string()))?;
        let exact = ManufacturedSolution::default_2d(fp, ManufacturedParams::default());
        let axes = vec![Axis::new(0.0, 1.0, n), Axis::new(0.0, 1.0, n)];
        let db = exact.sample_db(axes, Axis::new(0.0, 2.0, n_t).coords());
        let labels = LabelSpec {
            bulk_fraction: 0.5,
            boundary_faces: Face::all(SpatialDim::Two).to_vec(),
            boundary_fraction: 1.0,
            ic_fraction: 0.0,
            seed,
        };
        let residuals = ResidualSpec {
            n_r: db.size(),
            padding: PaddingSpec::none(),
            placement: Placement::UniformRandom,
            seed: seed.wrapping_add(1),
        };
        let ts = TrainingSet::build(&db, &labels, &residuals).map_err(|e| JsError::new(&e.to_string()))?;
        let mut cfg = TrainConfig::new(Architecture::mlp(3, width, depth, 5), seed);
        cfg.schedule = Schedule { minibatch: 128, ..Schedule::default() };
        // One long cycle at a fixed rate; the page decides how long to run.
        cfg.schedule.cycles = vec![Cycle { epochs: usize::MAX / 2, lr: 3e-3 }];
        let forcing = exact.clone().into_forcing();
        let session = Session::new(&ts, &fp, &forcing, &cfg).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Demo { exact, ts, session, fp, forcing, cfg })
    }

    pub fn n_labels(&self) -> usize {
        self.ts.labels.len()
    }

    pub fn n_residuals(&self) -> usize {
        self.ts.residuals.nrows()
    }

    pub fn iterations(&self) -> usize {
        self.session.history().len()
    }

    /// Runs `epochs` passes over the labels; returns the total, label and
    /// continuity losses of every iteration, interleaved.
    pub fn train(&mut self, epochs: usize, lr: f64) -> Result<Vec<f64>, JsError> {
        if !(lr > 0.0) {
            return Err(JsError::new("learning rate must be positive"));
        }
        let before = self.session.history().len();
        let ck = self.session.checkpoint();
        let mut cfg = self.cfg.clone();
        cfg.schedule.cycles = vec![Cycle { epochs, lr }];
        let mut ck = ck;
        ck.cycles_done = 0;
        self.session = Session::resume(&self.ts, &self.fp, &self.forcing, &cfg, ck)
            .map_err(|e| JsError::new(&e.to_string()))?;
        self.session.run_cycle(&self.ts).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(self.session.history().records[before..]
            .iter()
            .flat_map(|r| [r.total, r.label, r.pde_div])
            .collect())
    }

    /// `field` on an `n × n` grid at time `t`, row-major with x fastest;
    /// the exact solution when `exact` is set.
    pub fn field(&self, name: &str, t: f64, n: usize, exact: bool) -> Result<Vec<f64>, JsError> {
        let col = field_index(name)?;
        if n < 2 {
            return Err(JsError::new("need at least 2 points per axis"));
        }
        let pts = slice_points(n, t);
        if exact {
            return Ok(pts
                .rows()
                .into_iter()
                .map(|p| self.exact.outputs(p.as_slice().expect("row"))[col])
                .collect());
        }
        let out = self.session.model().predict(&pts);
        Ok(out.column(col).to_vec())
    }

    /// R² of `vx`, `vz`, `T` and relative L₂ error (percent) of pressure
    /// with each snapshot's mean removed, over the training grid.
    pub fn errors(&self) -> Result<Vec<f64>, JsError> {
        let grid = plumenet::dataset::all_records(&self.exact.sample_db(
            vec![Axis::new(0.0, 1.0, 24), Axis::new(0.0, 1.0, 24)],
            Axis::new(0.0, 2.0, 9).coords(),
        ));
        let pred = self.session.model().predict(&grid.points);
        let times = grid.points.column(2).to_vec();
        let err = |e: plumenet::metrics::MetricsError| JsError::new(&e.to_string());
        let mut out = Vec::new();
        for f in [FieldKind::Vx, FieldKind::Vz, FieldKind::T] {
            let c = f.output_column(SpatialDim::Two);
            let st =
                field_stats(&pred.column(c).to_vec(), &grid.values.column(c).to_vec(), false).map_err(err)?;
            out.push(st.r2.unwrap_or(f64::NAN));
        }
        let c = FieldKind::P.output_column(SpatialDim::Two);
        let a = center_per_time(&pred.column(c).to_vec(), &times).map_err(err)?;
        let b = center_per_time(&grid.values.column(c).to_vec(), &times).map_err(err)?;
        out.push(plumenet::metrics::relative_l2(&a, &b, false).map_err(err)?);
        Ok(out)
    }
}

fn slice_points(n: usize, t: f64) -> Array2<f64> {
    let ax = Axis::new(0.0, 1.0, n);
    Array2::from_shape_fn((n * n, 3), |(r, c)| match c {
        0 => ax.coord(r % n),
        1 => ax.coord(r / n),
        _ => t,
    })
}

/// Reference velocity `(κ/H)·√Ra`.
#[wasm_bindgen]
pub fn convective_velocity(kappa: f64, h: f64, ra: f64) -> Result<f64, JsError> {
    plumenet::physics::convective_velocity(kappa, h, ra).map_err(|e| JsError::new(&e.to_string()))
}

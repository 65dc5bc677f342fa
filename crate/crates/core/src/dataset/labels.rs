//! Label selection: initial-condition snapshot, boundary faces and bulk
//! temperature.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::index;

use super::{DataError, FieldKind, Result, SnapshotDb};
use crate::physics::SpatialDim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Face {
    XMin,
    XMax,
    YMin,
    YMax,
    ZMin,
    ZMax,
}

impl Face {
    pub fn all(dim: SpatialDim) -> &'static [Face] {
        use Face::*;
        match dim {
            SpatialDim::Two => &[XMin, XMax, ZMin, ZMax],
            SpatialDim::Three => &[XMin, XMax, YMin, YMax, ZMin, ZMax],
        }
    }

    /// `(axis index, at max end)` for a given dimension.
    fn locate(self, dim: SpatialDim) -> Option<(usize, bool)> {
        let last = dim.n() - 1;
        Some(match self {
            Face::XMin => (0, false),
            Face::XMax => (0, true),
            Face::YMin if dim == SpatialDim::Three => (1, false),
            Face::YMax if dim == SpatialDim::Three => (1, true),
            Face::ZMin => (last, false),
            Face::ZMax => (last, true),
            _ => return None,
        })
    }

    fn holds(self, dim: SpatialDim, idx: &[usize], shape: &[usize]) -> bool {
        match self.locate(dim) {
            Some((a, true)) => idx[a] == shape[a] - 1,
            Some((a, false)) => idx[a] == 0,
            None => false,
        }
    }
}

/// How labels are drawn from a database.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabelSpec {
    /// Fraction of bulk space-time points carrying temperature.
    pub bulk_fraction: f64,
    /// Faces whose points carry velocity.
    pub boundary_faces: Vec<Face>,
    pub boundary_fraction: f64,
    /// Fraction of the first snapshot carrying velocity and temperature.
    /// When positive, the first snapshot is reserved for these records.
    pub ic_fraction: f64,
    pub seed: u64,
}

impl Default for LabelSpec {
    fn default() -> Self {
        LabelSpec {
            bulk_fraction: 1.0,
            boundary_faces: Vec::new(),
            boundary_fraction: 1.0,
            ic_fraction: 0.0,
            seed: 0,
        }
    }
}

/// Record counts implied by a [`LabelSpec`] on a grid shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelPlan {
    pub n_ic: usize,
    pub boundary_per_snapshot: usize,
    pub n_boundary: usize,
    pub n_bulk: usize,
}

impl LabelPlan {
    pub fn total(&self) -> usize {
        self.n_ic + self.n_boundary + self.n_bulk
    }
}

fn frac_of(f: f64, n: usize) -> usize {
    ((f * n as f64) + 1e-9).floor().min(n as f64) as usize
}

impl LabelSpec {
    pub fn validate(&self, dim: SpatialDim) -> Result<()> {
        for (name, f) in [
            ("bulk_fraction", self.bulk_fraction),
            ("boundary_fraction", self.boundary_fraction),
            ("ic_fraction", self.ic_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(DataError::Config(format!("{name} must lie in [0, 1], got {f}")));
            }
        }
        if let Some(f) = self.boundary_faces.iter().find(|f| f.locate(dim).is_none()) {
            return Err(DataError::Config(format!("face {f:?} does not exist in {}D", dim.n())));
        }
        Ok(())
    }

    fn face_points(&self, dim: SpatialDim, shape: &[usize]) -> Vec<Vec<usize>> {
        let excluded: Vec<Face> =
            Face::all(dim).iter().copied().filter(|f| !self.boundary_faces.contains(f)).collect();
        let g: usize = shape.iter().product();
        let mut out = Vec::new();
        for face in Face::all(dim).iter().filter(|f| self.boundary_faces.contains(f)) {
            let pts = (0..g)
                .filter(|&s| {
                    let idx = unflatten(s, shape);
                    face.holds(dim, &idx, shape) && !excluded.iter().any(|e| e.holds(dim, &idx, shape))
                })
                .collect();
            out.push(pts);
        }
        out
    }

    /// Counts only; usable on grids too large to materialise.
    pub fn plan(&self, dim: SpatialDim, shape: &[usize], n_snapshots: usize) -> Result<LabelPlan> {
        self.validate(dim)?;
        let g: usize = shape.iter().product();
        let reserve_ic = self.ic_fraction > 0.0;
        let n_ic = if reserve_ic { frac_of(self.ic_fraction, g) } else { 0 };
        let rest = n_snapshots - usize::from(reserve_ic && n_snapshots > 0);
        let per = boundary_count(self, dim, shape);
        let n_boundary = frac_of(self.boundary_fraction, per * rest);
        let n_bulk = frac_of(self.bulk_fraction, g * rest);
        let plan = LabelPlan { n_ic, boundary_per_snapshot: per, n_boundary, n_bulk };
        if plan.total() == 0 {
            return Err(DataError::Config("label selection is empty".into()));
        }
        Ok(plan)
    }
}

/// Points per snapshot on the included faces, excluding any point that
/// also lies on an excluded face. Edges shared by two included faces count
/// once per face.
fn boundary_count(spec: &LabelSpec, dim: SpatialDim, shape: &[usize]) -> usize {
    let mut total = 0;
    for face in Face::all(dim).iter().filter(|f| spec.boundary_faces.contains(f)) {
        let (a, _) = face.locate(dim).expect("validated");
        // Product over the other axes of the points not removed by an
        // excluded face on that axis.
        let mut n = 1;
        for (b, &nb) in shape.iter().enumerate() {
            if b == a {
                continue;
            }
            let mut keep = nb;
            for f in Face::all(dim) {
                if spec.boundary_faces.contains(f) {
                    continue;
                }
                if f.locate(dim).map(|(fa, _)| fa) == Some(b) {
                    keep = keep.saturating_sub(1);
                }
            }
            n *= keep;
        }
        // An excluded face on the same axis coincides with this one only
        // when the axis is degenerate.
        total += n;
    }
    total
}

fn unflatten(mut s: usize, shape: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .map(|&n| {
            let i = s % n;
            s /= n;
            i
        })
        .collect()
}

/// Label records: coordinates, values and an observation mask, with
/// columns in network output order (v…, p, T, T̄).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub points: Array2<f64>,
    pub values: Array2<f64>,
    pub mask: Array2<f64>,
    /// Flat space-time index of each record in the source database.
    pub source: Vec<u64>,
}

impl LabelSet {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> LabelSet {
        LabelSet {
            points: self.points.select(ndarray::Axis(0), rows),
            values: self.values.select(ndarray::Axis(0), rows),
            mask: self.mask.select(ndarray::Axis(0), rows),
            source: rows.iter().map(|&r| self.source[r]).collect(),
        }
    }
}

#[derive(Clone, Copy)]
enum Carry {
    Velocity,
    Temperature,
    Both,
}

struct Builder<'a> {
    db: &'a SnapshotDb,
    n_u: usize,
    points: Vec<f64>,
    values: Vec<f64>,
    mask: Vec<f64>,
    source: Vec<u64>,
}

impl Builder<'_> {
    fn push(&mut self, flat: usize, carry: Carry) {
        let dim = self.db.dim;
        self.points.extend(self.db.point(flat));
        let mut vals = vec![0.0; self.n_u];
        let mut m = vec![0.0; self.n_u];
        let (vel, temp) = match carry {
            Carry::Velocity => (true, false),
            Carry::Temperature => (false, true),
            Carry::Both => (true, true),
        };
        for &f in FieldKind::stored(dim) {
            let c = f.output_column(dim);
            let v = self.db.field(f).map(|d| d[flat]).unwrap_or(0.0);
            vals[c] = v;
            let observed = match f {
                FieldKind::Vx | FieldKind::Vy | FieldKind::Vz => vel,
                FieldKind::T => temp,
                FieldKind::P => false,
            };
            if observed {
                m[c] = 1.0;
            }
        }
        let tc = FieldKind::T.output_column(dim);
        vals[tc + 1] = 1.0 - vals[tc];
        m[tc + 1] = m[tc];
        self.values.extend(vals);
        self.mask.extend(m);
        self.source.push(flat as u64);
    }
}

/// Draws label records. Deterministic given `spec.seed`.
pub fn make_labels(db: &SnapshotDb, spec: &LabelSpec) -> Result<LabelSet> {
    let shape: Vec<usize> = db.axes.iter().map(|a| a.n).collect();
    let nt = db.n_snapshots();
    let plan = spec.plan(db.dim, &shape, nt)?;
    let g = db.points_per_snapshot();
    let reserve_ic = spec.ic_fraction > 0.0;
    let first = usize::from(reserve_ic);
    let n_u = db.dim.n_outputs();
    let mut b =
        Builder { db, n_u, points: Vec::new(), values: Vec::new(), mask: Vec::new(), source: Vec::new() };

    if plan.n_ic > 0 {
        let mut rng = crate::seed::rng(spec.seed, &[1]);
        let mut idx = index::sample(&mut rng, g, plan.n_ic).into_vec();
        idx.sort_unstable();
        for s in idx {
            b.push(s, Carry::Both);
        }
    }
    if plan.n_boundary > 0 {
        let faces = spec.face_points(db.dim, &shape);
        let per: usize = faces.iter().map(Vec::len).sum();
        debug_assert_eq!(per, plan.boundary_per_snapshot);
        let candidates = per * (nt - first);
        let mut rng = crate::seed::rng(spec.seed, &[2]);
        let mut idx = index::sample(&mut rng, candidates, plan.n_boundary).into_vec();
        idx.sort_unstable();
        let flat_face: Vec<usize> = faces.into_iter().flatten().collect();
        for c in idx {
            let (ti, k) = (first + c / per, c % per);
            b.push(ti * g + flat_face[k], Carry::Velocity);
        }
    }
    if plan.n_bulk > 0 {
        let mut rng = crate::seed::rng(spec.seed, &[3]);
        let mut idx = index::sample(&mut rng, g * (nt - first), plan.n_bulk).into_vec();
        idx.sort_unstable();
        for c in idx {
            b.push(first * g + c, Carry::Temperature);
        }
    }
    let n = b.source.len();
    let d1 = db.dim.n_inputs();
    Ok(LabelSet {
        points: Array2::from_shape_vec((n, d1), b.points).expect("sized"),
        values: Array2::from_shape_vec((n, n_u), b.values).expect("sized"),
        mask: Array2::from_shape_vec((n, n_u), b.mask).expect("sized"),
        source: b.source,
    })
}

/// Every point of `db` with all field values (mask all ones except p).
pub fn all_records(db: &SnapshotDb) -> LabelSet {
    let n_u = db.dim.n_outputs();
    let mut b = Builder {
        db,
        n_u,
        points: Vec::with_capacity(db.size() * db.dim.n_inputs()),
        values: Vec::with_capacity(db.size() * n_u),
        mask: Vec::with_capacity(db.size() * n_u),
        source: Vec::with_capacity(db.size()),
    };
    for flat in 0..db.size() {
        b.push(flat, Carry::Both);
    }
    let n = db.size();
    LabelSet {
        points: Array2::from_shape_vec((n, db.dim.n_inputs()), b.points).expect("sized"),
        values: Array2::from_shape_vec((n, n_u), b.values).expect("sized"),
        mask: Array2::from_shape_vec((n, n_u), b.mask).expect("sized"),
        source: b.source,
    }
}

/// Draws up to `n` test records from points of `db` that carry no label.
/// Values include every field; the mask marks velocity and temperature.
pub fn test_split(db: &SnapshotDb, labels: &LabelSet, n: usize, seed: u64) -> Result<LabelSet> {
    let used: HashSet<u64> = labels.source.iter().copied().collect();
    let free: Vec<usize> = (0..db.size()).filter(|i| !used.contains(&(*i as u64))).collect();
    if free.is_empty() {
        return Err(DataError::Config("no points left for a test split".into()));
    }
    let k = n.min(free.len());
    let mut rng = crate::seed::rng(seed, &[4]);
    let mut pick = index::sample(&mut rng, free.len(), k).into_vec();
    pick.sort_unstable();
    let n_u = db.dim.n_outputs();
    let mut b =
        Builder { db, n_u, points: Vec::new(), values: Vec::new(), mask: Vec::new(), source: Vec::new() };
    for i in pick {
        b.push(free[i], Carry::Both);
    }
    Ok(LabelSet {
        points: Array2::from_shape_vec((k, db.dim.n_inputs()), b.points).expect("sized"),
        values: Array2::from_shape_vec((k, n_u), b.values).expect("sized"),
        mask: Array2::from_shape_vec((k, n_u), b.mask).expect("sized"),
        source: b.source,
    })
}

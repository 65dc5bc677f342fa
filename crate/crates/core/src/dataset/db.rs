//! Structured-grid snapshot database and its binary container.
//!
//! # File layout
//!
//! Little-endian throughout.
//!
//! ```text
//! magic       8 bytes "PLUMEDB\0"
//! version     u32 = 1
//! dim         u32 (2 or 3)
//! axes        dim × (f64 min, f64 max, u32 n)      order x, [y,] z
//! n_times     u32, then f64 × n_times
//! Ra, Pr      f64, f64
//! provenance  u32 len + UTF-8
//! n_fields    u32, then per field u32 len + UTF-8 tag
//! body        per field, per snapshot, per point: f64
//! ```
//!
//! Within a snapshot `x` varies fastest, then `y`, then `z`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::{DataError, Result};
use crate::physics::SpatialDim;

const DB_MAGIC: &[u8; 8] = b"PLUMEDB\0";
const DB_VERSION: u32 = 1;

/// Uniform grid axis: `n` points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, n: usize) -> Self {
        Axis { min, max, n }
    }

    /// Exact at both ends.
    pub fn coord(&self, i: usize) -> f64 {
        if self.n <= 1 {
            self.min
        } else {
            let s = i as f64 / (self.n - 1) as f64;
            self.min * (1.0 - s) + self.max * s
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coord(i)).collect()
    }

    pub fn spacing(&self) -> f64 {
        if self.n <= 1 {
            0.0
        } else {
            (self.max - self.min) / (self.n - 1) as f64
        }
    }

    pub fn sub(&self, start: usize, end: usize) -> Axis {
        Axis::new(self.coord(start), self.coord(end - 1), end - start)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.n == 0 || !(self.min.is_finite() && self.max.is_finite()) {
            return Err(DataError::Config(format!("axis {name}: empty or non-finite")));
        }
        if self.n > 1 && self.max <= self.min {
            return Err(DataError::Config(format!("axis {name}: max must exceed min")));
        }
        Ok(())
    }

    /// `true` if `other` spans a subset of this axis.
    pub fn contains(&self, other: &Axis) -> bool {
        let tol = 1e-12 * (1.0 + self.max.abs().max(self.min.abs()));
        other.min >= self.min - tol && other.max <= self.max + tol
    }
}

/// Stored field. Network outputs add `T̄ = 1 − T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum FieldKind {
    Vx,
    Vy,
    Vz,
    P,
    T,
}

impl FieldKind {
    pub fn tag(self) -> &'static str {
        match self {
            FieldKind::Vx => "vx",
            FieldKind::Vy => "vy",
            FieldKind::Vz => "vz",
            FieldKind::P => "p",
            FieldKind::T => "T",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        Some(match s {
            "vx" => FieldKind::Vx,
            "vy" => FieldKind::Vy,
            "vz" => FieldKind::Vz,
            "p" => FieldKind::P,
            "T" => FieldKind::T,
            _ => return None,
        })
    }

    /// Fields stored for a given dimension, in network output order.
    pub fn stored(dim: SpatialDim) -> &'static [FieldKind] {
        match dim {
            SpatialDim::Two => &[FieldKind::Vx, FieldKind::Vz, FieldKind::P, FieldKind::T],
            SpatialDim::Three => &[FieldKind::Vx, FieldKind::Vy, FieldKind::Vz, FieldKind::P, FieldKind::T],
        }
    }

    /// Column of this field in the network output.
    pub fn output_column(self, dim: SpatialDim) -> usize {
        FieldKind::stored(dim).iter().position(|&f| f == self).expect("field present in this dimension")
    }
}

/// Space-time snapshot database on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotDb {
    pub dim: SpatialDim,
    /// Spatial axes, order (x, z) or (x, y, z).
    pub axes: Vec<Axis>,
    pub times: Vec<f64>,
    pub ra: f64,
    pub pr: f64,
    pub provenance: String,
    /// Field data, in [`FieldKind::stored`] order; each has
    /// `points_per_snapshot × n_snapshots` entries.
    pub fields: Vec<(FieldKind, Vec<f64>)>,
}

impl SnapshotDb {
    /// A database with every field zero.
    pub fn zeros(dim: SpatialDim, axes: Vec<Axis>, times: Vec<f64>, ra: f64, pr: f64) -> Self {
        let n = axes.iter().map(|a| a.n).product::<usize>() * times.len();
        let fields = FieldKind::stored(dim).iter().map(|&f| (f, vec![0.0; n])).collect();
        SnapshotDb { dim, axes, times, ra, pr, provenance: String::new(), fields }
    }

    pub fn points_per_snapshot(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn n_snapshots(&self) -> usize {
        self.times.len()
    }

    /// Total number of space-time grid points.
    pub fn size(&self) -> usize {
        self.points_per_snapshot() * self.n_snapshots()
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn time_axis(&self) -> Axis {
        Axis::new(self.times[0], *self.times.last().expect("non-empty"), self.times.len())
    }

    pub fn field(&self, f: FieldKind) -> Option<&[f64]> {
        self.fields.iter().find(|(k, _)| *k == f).map(|(_, v)| v.as_slice())
    }

    pub fn field_mut(&mut self, f: FieldKind) -> Option<&mut Vec<f64>> {
        self.fields.iter_mut().find(|(k, _)| *k == f).map(|(_, v)| v)
    }

    /// Grid indices of spatial point `s` (x fastest).
    pub fn spatial_indices(&self, mut s: usize) -> Vec<usize> {
        self.axes
            .iter()
            .map(|a| {
                let i = s % a.n;
                s /= a.n;
                i
            })
            .collect()
    }

    pub fn spatial_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).rev().fold(0, |acc, (&i, a)| acc * a.n + i)
    }

    /// Coordinates `(space…, t)` of flat space-time index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let g = self.points_per_snapshot();
        let (ti, s) = (flat / g, flat % g);
        let mut p: Vec<f64> =
            self.spatial_indices(s).iter().zip(&self.axes).map(|(&i, a)| a.coord(i)).collect();
        p.push(self.times[ti]);
        p
    }

    /// Evaluates `model` at every grid point of `axes × times`, in blocks
    /// of `block` points.
    pub fn from_model(
        model: &crate::network::Model,
        dim: SpatialDim,
        axes: Vec<Axis>,
        times: Vec<f64>,
        ra: f64,
        pr: f64,
        block: usize,
    ) -> Result<SnapshotDb> {
        if axes.len() != dim.n()
            || model.arch.inputs() != dim.n_inputs()
            || model.arch.outputs() < dim.n_outputs()
        {
            return Err(DataError::Config("model and grid dimensions differ".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            a.validate(&format!("#{i}"))?;
        }
        if times.is_empty() {
            return Err(DataError::Config("no snapshot times".into()));
        }
        let mut db = SnapshotDb::zeros(dim, axes, times, ra, pr);
        db.provenance = "model".into();
        let n = db.size();
        let block = block.max(1);
        let d1 = dim.n_inputs();
        let mut start = 0;
        while start < n {
            let end = (start + block).min(n);
            let mut pts = ndarray::Array2::zeros((end - start, d1));
            for (r, flat) in (start..end).enumerate() {
                for (c, x) in db.point(flat).into_iter().enumerate() {
                    pts[[r, c]] = x;
                }
            }
            let out = model.predict(&pts);
            for (f, data) in db.fields.iter_mut() {
                let col = f.output_column(dim);
                for (r, flat) in (start..end).enumerate() {
                    data[flat] = out[[r, col]];
                }
            }
            start = end;
        }
        Ok(db)
    }

    /// Extracts a sub-box `ranges[axis] = start..end` over snapshots
    /// `time.0..time.1`.
    pub fn subset(&self, ranges: &[(usize, usize)], time: (usize, usize)) -> Result<SnapshotDb> {
        if ranges.len() != self.axes.len()
            || ranges.iter().zip(&self.axes).any(|(r, a)| r.0 >= r.1 || r.1 > a.n)
            || time.0 >= time.1
            || time.1 > self.times.len()
        {
            return Err(DataError::Config("subset out of range".into()));
        }
        let axes: Vec<Axis> = ranges.iter().zip(&self.axes).map(|(r, a)| a.sub(r.0, r.1)).collect();
        let times = self.times[time.0..time.1].to_vec();
        let mut out = SnapshotDb {
            dim: self.dim,
            axes,
            times,
            ra: self.ra,
            pr: self.pr,
            provenance: format!("{} | subset {:?} t{:?}", self.provenance, ranges, time),
            fields: Vec::new(),
        };
        let g_out = out.points_per_snapshot();
        let g_in = self.points_per_snapshot();
        for (kind, data) in &self.fields {
            let mut v = Vec::with_capacity(out.size());
            for ti in time.0..time.1 {
                for s in 0..g_out {
                    let idx: Vec<usize> =
                        out.spatial_indices(s).iter().zip(ranges).map(|(&i, r)| i + r.0).collect();
                    v.push(data[ti * g_in + self.spatial_index(&idx)]);
                }
            }
            out.fields.push((*kind, v));
        }
        Ok(out)
    }

    /// Time series of `f` at spatial grid index `idx`.
    pub fn probe(&self, f: FieldKind, idx: &[usize]) -> Option<Vec<f64>> {
        let data = self.field(f)?;
        let g = self.points_per_snapshot();
        let s = self.spatial_index(idx);
        Some((0..self.n_snapshots()).map(|t| data[t * g + s]).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.len() != self.dim.n() {
            return Err(DataError::Format(format!(
                "{} axes for dimension {}",
                self.axes.len(),
                self.dim.n()
            )));
        }
        for (a, name) in self.axes.iter().zip(self.dim.axis_names()) {
            a.validate(name)?;
        }
        if self.times.is_empty() {
            return Err(DataError::Format("no snapshots".into()));
        }
        if self.times.len() > 1 {
            let dt = self.dt();
            if !(dt > 0.0) {
                return Err(DataError::Format("times must increase".into()));
            }
            for w in self.times.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0) {
                    return Err(DataError::Format("time spacing is not constant".into()));
                }
            }
        }
        let n = self.size();
        for (k, v) in &self.fields {
            if v.len() != n {
                return Err(DataError::Format(format!(
                    "field {} has {} values, expected {n}",
                    k.tag(),
                    v.len()
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(DB_MAGIC)?;
        w.write_u32::<LE>(DB_VERSION)?;
        w.write_u32::<LE>(self.dim.n() as u32)?;
        for a in &self.axes {
            w.write_f64::<LE>(a.min)?;
            w.write_f64::<LE>(a.max)?;
            w.write_u32::<LE>(a.n as u32)?;
        }
        w.write_u32::<LE>(self.times.len() as u32)?;
        for &t in &self.times {
            w.write_f64::<LE>(t)?;
        }
        w.write_f64::<LE>(self.ra)?;
        w.write_f64::<LE>(self.pr)?;
        write_str(w, &self.provenance)?;
        w.write_u32::<LE>(self.fields.len() as u32)?;
        for (k, _) in &self.fields {
            write_str(w, k.tag())?;
        }
        for (_, v) in &self.fields {
            for &x in v {
                w.write_f64::<LE>(x)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != DB_MAGIC {
            return Err(DataError::BadMagic);
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != DB_VERSION {
            return Err(DataError::Version(version));
        }
        let d = r.read_u32::<LE>().map_err(truncated)? as usize;
        let dim = SpatialDim::from_n(d).ok_or_else(|| DataError::Format(format!("dimension {d}")))?;
        let mut axes = Vec::with_capacity(d);
        for _ in 0..d {
            let min = r.read_f64::<LE>().map_err(truncated)?;
            let max = r.read_f64::<LE>().map_err(truncated)?;
            let n = r.read_u32::<LE>().map_err(truncated)? as usize;
            axes.push(Axis::new(min, max, n));
        }
        let nt = r.read_u32::<LE>().map_err(truncated)? as usize;
        let mut times = vec![0.0; nt];
        r.read_f64_into::<LE>(&mut times).map_err(truncated)?;
        let ra = r.read_f64::<LE>().map_err(truncated)?;
        let pr = r.read_f64::<LE>().map_err(truncated)?;
        let provenance = read_str(r)?;
        let nf = r.read_u32::<LE>().map_err(truncated)? as usize;
        if nf > 16 {
            return Err(DataError::Format(format!("{nf} fields")));
        }
        let mut kinds = Vec::with_capacity(nf);
        for _ in 0..nf {
            let tag = read_str(r)?;
            kinds.push(FieldKind::from_tag(&tag).ok_or(DataError::Format(format!("field tag `{tag}`")))?);
        }
        let n = axes.iter().map(|a| a.n).product::<usize>() * nt;
        let mut fields = Vec::with_capacity(nf);
        for k in kinds {
            let mut v = vec![0.0; n];
            r.read_f64_into::<LE>(&mut v).map_err(truncated)?;
            fields.push((k, v));
        }
        let db = SnapshotDb { dim, axes, times, ra, pr, provenance, fields };
        db.validate()?;
        Ok(db)
    }
}

pub(crate) fn truncated(e: std::io::Error) -> DataError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        DataError::Truncated
    } else {
        DataError::Io(e)
    }
}

pub(crate) fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

pub(crate) fn read_str(r: &mut impl Read) -> Result<String> {
    let n = r.read_u32::<LE>().map_err(truncated)? as usize;
    if n > 1 << 24 {
        return Err(DataError::Format("string length".into()));
    }
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(truncated)?;
    String::from_utf8(b).map_err(|_| DataError::Format("invalid UTF-8".into()))
}

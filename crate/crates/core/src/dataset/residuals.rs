//! Residual-point placement, optionally padded beyond the label region.

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;

use super::{Axis, DataError, Result, SnapshotDb};

/// Space-time grid: spatial axes (x, [y,] z) and a time axis.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Region {
    pub space: Vec<Axis>,
    pub time: Axis,
}

impl Region {
    pub fn of_db(db: &SnapshotDb) -> Self {
        Region { space: db.axes.clone(), time: db.time_axis() }
    }

    pub fn grid_size(&self) -> usize {
        self.space.iter().map(|a| a.n).product::<usize>() * self.time.n
    }

    /// Coordinates of flat grid index `flat` (x fastest, time slowest).
    pub fn point(&self, mut flat: usize) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.space.len() + 1);
        for a in &self.space {
            p.push(a.coord(flat % a.n));
            flat /= a.n;
        }
        p.push(self.time.coord(flat));
        p
    }

    pub fn contains(&self, other: &Region) -> bool {
        self.space.len() == other.space.len()
            && self.space.iter().zip(&other.space).all(|(a, b)| a.contains(b))
            && self.time.contains(&other.time)
    }

    fn axes(&self) -> impl Iterator<Item = &Axis> {
        self.space.iter().chain(std::iter::once(&self.time))
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.axes().enumerate() {
            a.validate(&format!("#{i}"))?;
        }
        Ok(())
    }
}

fn strictly_extends(outer: &Axis, inner: &Axis) -> bool {
    outer.contains(inner) && (outer.min < inner.min || outer.max > inner.max)
}

fn same_extent(a: &Axis, b: &Axis) -> bool {
    a.contains(b) && b.contains(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaddingMode {
    None,
    Temporal,
    VerticalSpatial,
    HorizontalSpatial,
    Custom,
}

/// Where residual points live relative to the label region.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PaddingSpec {
    pub mode: PaddingMode,
    /// Padded grid; ignored for [`PaddingMode::None`].
    pub region: Option<Region>,
}

impl PaddingSpec {
    pub fn none() -> Self {
        PaddingSpec { mode: PaddingMode::None, region: None }
    }

    pub fn new(mode: PaddingMode, region: Region) -> Self {
        PaddingSpec { mode, region: Some(region) }
    }

    /// The grid residual points are drawn from, after checking that it
    /// relates to `label` as the mode requires.
    pub fn resolve(&self, label: &Region) -> Result<Region> {
        if self.mode == PaddingMode::None {
            return Ok(label.clone());
        }
        let r =
            self.region.as_ref().ok_or_else(|| DataError::Config("padding mode needs a region".into()))?;
        r.validate()?;
        if r.space.len() != label.space.len() {
            return Err(DataError::Config("padded region has the wrong dimension".into()));
        }
        if !r.contains(label) {
            return Err(DataError::Config("padded region does not contain the label region".into()));
        }
        let last = r.space.len() - 1;
        let ok = match self.mode {
            PaddingMode::Temporal => strictly_extends(&r.time, &label.time),
            PaddingMode::VerticalSpatial => strictly_extends(&r.space[last], &label.space[last]),
            PaddingMode::HorizontalSpatial => {
                (0..last).all(|i| strictly_extends(&r.space[i], &label.space[i]))
            }
            PaddingMode::Custom | PaddingMode::None => true,
        };
        let unchanged_time = same_extent(&r.time, &label.time);
        let ok = ok
            && match self.mode {
                PaddingMode::VerticalSpatial | PaddingMode::HorizontalSpatial => unchanged_time,
                _ => true,
            };
        if !ok {
            return Err(DataError::Config(format!(
                "padded region does not strictly extend the label region as {:?} padding requires",
                self.mode
            )));
        }
        Ok(r.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Distinct nodes of the residual grid.
    OnGrid,
    /// Independent uniform draws over the residual box.
    UniformRandom,
}

/// Draws `n_r` residual coordinates (`n_r × (d+1)`).
pub fn make_residual_points(
    label: &Region,
    n_r: usize,
    padding: &PaddingSpec,
    placement: Placement,
    seed: u64,
) -> Result<Array2<f64>> {
    if n_r == 0 {
        return Err(DataError::Config("n_R must be positive".into()));
    }
    let region = padding.resolve(label)?;
    let d1 = region.space.len() + 1;
    let mut rng = crate::seed::rng(seed, &[5]);
    let mut out = Vec::with_capacity(n_r * d1);
    match placement {
        Placement::OnGrid => {
            let n = region.grid_size();
            if n_r > n {
                return Err(DataError::Config(format!(
                    "n_R = {n_r} exceeds the {n} nodes of the residual grid"
                )));
            }
            let mut idx = index::sample(&mut rng, n, n_r).into_vec();
            idx.sort_unstable();
            for i in idx {
                out.extend(region.point(i));
            }
        }
        Placement::UniformRandom => {
            for _ in 0..n_r {
                for a in region.axes() {
                    out.push(if a.max > a.min { rng.gen_range(a.min..=a.max) } else { a.min });
                }
            }
        }
    }
    Ok(Array2::from_shape_vec((n_r, d1), out).expect("sized"))
}

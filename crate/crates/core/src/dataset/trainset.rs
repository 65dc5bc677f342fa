//! Training sets, their manifest and minibatch streams.
//!
//! # File layout
//!
//! ```text
//! magic      8 bytes "PLUMETS\0"
//! version    u32 = 1
//! dim        u32
//! N_L, N_R   u64, u64
//! labels     points N_L×(d+1), values N_L×n_u, mask N_L×n_u (f64, row-major)
//! source     u64 × N_L
//! residuals  N_R×(d+1) f64
//! manifest   u32 len + UTF-8 TOML
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rand::seq::SliceRandom;

use super::db::{read_str, truncated, write_str};
use super::{
    make_labels, make_residual_points, DataError, LabelSet, LabelSpec, PaddingSpec, Placement, Region,
    Result, SnapshotDb,
};
use crate::physics::SpatialDim;

const TS_MAGIC: &[u8; 8] = b"PLUMETS\0";
const TS_VERSION: u32 = 1;

/// How residual points are drawn.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResidualSpec {
    pub n_r: usize,
    pub padding: PaddingSpec,
    pub placement: Placement,
    pub seed: u64,
}

/// Everything needed to rebuild a training set from its database.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Manifest {
    pub labels: LabelSpec,
    pub residuals: ResidualSpec,
    pub label_region: Region,
    pub db_provenance: String,
    /// Rayleigh and Prandtl numbers of the source database.
    pub ra: f64,
    pub pr: f64,
    pub n_labels: usize,
    pub n_residuals: usize,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialises")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| DataError::Format(format!("manifest: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub dim: SpatialDim,
    pub labels: LabelSet,
    pub residuals: Array2<f64>,
    pub manifest: Manifest,
}

impl TrainingSet {
    /// Labels from `db`; residual points from `db`'s grid or its padding.
    pub fn build(db: &SnapshotDb, labels: &LabelSpec, residuals: &ResidualSpec) -> Result<Self> {
        let ls = make_labels(db, labels)?;
        let region = Region::of_db(db);
        let rs = make_residual_points(
            &region,
            residuals.n_r,
            &residuals.padding,
            residuals.placement,
            residuals.seed,
        )?;
        let manifest = Manifest {
            labels: labels.clone(),
            residuals: residuals.clone(),
            label_region: region,
            db_provenance: db.provenance.clone(),
            ra: db.ra,
            pr: db.pr,
            n_labels: ls.len(),
            n_residuals: rs.nrows(),
        };
        Ok(TrainingSet { dim: db.dim, labels: ls, residuals: rs, manifest })
    }

    /// Rebuilds from a manifest; bit-identical to the original build.
    pub fn rebuild(db: &SnapshotDb, m: &Manifest) -> Result<Self> {
        Self::build(db, &m.labels, &m.residuals)
    }

    /// Union of the label and residual extents per input column, used to
    /// normalise network inputs.
    pub fn input_ranges(&self) -> Vec<(f64, f64)> {
        let d1 = self.dim.n_inputs();
        (0..d1)
            .map(|c| {
                let it = self.labels.points.column(c).into_iter().chain(self.residuals.column(c)).copied();
                it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(TS_MAGIC)?;
        w.write_u32::<LE>(TS_VERSION)?;
        w.write_u32::<LE>(self.dim.n() as u32)?;
        w.write_u64::<LE>(self.labels.len() as u64)?;
        w.write_u64::<LE>(self.residuals.nrows() as u64)?;
        for a in [&self.labels.points, &self.labels.values, &self.labels.mask] {
            for &x in a.iter() {
                w.write_f64::<LE>(x)?;
            }
        }
        for &s in &self.labels.source {
            w.write_u64::<LE>(s)?;
        }
        for &x in self.residuals.iter() {
            w.write_f64::<LE>(x)?;
        }
        write_str(&mut w, &self.manifest.to_toml())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != TS_MAGIC {
            return Err(DataError::BadMagic);
        }
        let v = r.read_u32::<LE>().map_err(truncated)?;
        if v != TS_VERSION {
            return Err(DataError::Version(v));
        }
        let d = r.read_u32::<LE>().map_err(truncated)? as usize;
        let dim = SpatialDim::from_n(d).ok_or_else(|| DataError::Format(format!("dimension {d}")))?;
        let nl = r.read_u64::<LE>().map_err(truncated)? as usize;
        let nr = r.read_u64::<LE>().map_err(truncated)? as usize;
        let (d1, nu) = (dim.n_inputs(), dim.n_outputs());
        let mut read = |rows: usize, cols: usize| -> Result<Array2<f64>> {
            let mut v = vec![0.0; rows * cols];
            r.read_f64_into::<LE>(&mut v).map_err(truncated)?;
            Ok(Array2::from_shape_vec((rows, cols), v).expect("sized"))
        };
        let points = read(nl, d1)?;
        let values = read(nl, nu)?;
        let mask = read(nl, nu)?;
        let mut source = vec![0u64; nl];
        r.read_u64_into::<LE>(&mut source).map_err(truncated)?;
        let mut v = vec![0.0; nr * d1];
        r.read_f64_into::<LE>(&mut v).map_err(truncated)?;
        let residuals = Array2::from_shape_vec((nr, d1), v).expect("sized");
        let manifest = Manifest::from_toml(&read_str(r)?)?;
        Ok(TrainingSet { dim, labels: LabelSet { points, values, mask, source }, residuals, manifest })
    }
}

/// Index batches for one epoch: a shuffled pass over the labels, paired
/// with residual batches from an independent stream of shuffled passes.
#[derive(Debug, Clone)]
pub struct EpochBatches {
    label_order: Vec<usize>,
    residual_order: Vec<usize>,
    n_r: usize,
    mb: usize,
    pos_l: usize,
    pos_r: usize,
    pass: u64,
    seed: u64,
    epoch: u64,
}

/// Batches of epoch `epoch`. Deterministic given `(seed, epoch)`; the
/// residual stream restarts each epoch so resuming at an epoch boundary
/// reproduces an uninterrupted run.
pub fn minibatch_iter(n_l: usize, n_r: usize, mb: usize, seed: u64, epoch: u64) -> EpochBatches {
    let mut label_order: Vec<usize> = (0..n_l).collect();
    label_order.shuffle(&mut crate::seed::rng(seed, &[6, epoch]));
    let mut b = EpochBatches {
        label_order,
        residual_order: Vec::new(),
        n_r,
        mb: mb.max(1),
        pos_l: 0,
        pos_r: 0,
        pass: 0,
        seed,
        epoch,
    };
    b.reshuffle_residuals();
    b
}

impl EpochBatches {
    fn reshuffle_residuals(&mut self) {
        self.residual_order = (0..self.n_r).collect();
        self.residual_order.shuffle(&mut crate::seed::rng(self.seed, &[7, self.epoch, self.pass]));
        self.pass += 1;
        self.pos_r = 0;
    }

    pub fn iterations(&self) -> usize {
        self.label_order.len().div_ceil(self.mb)
    }
}

impl Iterator for EpochBatches {
    type Item = (Vec<usize>, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos_l >= self.label_order.len() {
            return None;
        }
        let end = (self.pos_l + self.mb).min(self.label_order.len());
        let labels = self.label_order[self.pos_l..end].to_vec();
        self.pos_l = end;
        let want = self.mb.min(self.n_r);
        let mut res = Vec::with_capacity(want);
        while res.len() < want {
            if self.pos_r >= self.n_r {
                self.reshuffle_residuals();
            }
            let take = (want - res.len()).min(self.n_r - self.pos_r);
            res.extend_from_slice(&self.residual_order[self.pos_r..self.pos_r + take]);
            self.pos_r += take;
        }
        Some((labels, res))
    }
}

//! Checkpoint file, little-endian:
//!
//! ```text
//! magic        8 bytes  "PLUMECK\0"
//! version      u32      = 1
//! cycles_done  u32
//! epoch        u64
//! iteration    u64
//! model        model file (see `network`)
//! beta1 beta2 delta  f64 × 3
//! adam_t       u64
//! moments      m then v, each shaped like the parameters, row-major f64
//! history      u64 byte length + loss-history CSV
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::network::Model;

use super::{Adam, LossHistory, Result, TrainError};

const MAGIC: &[u8; 8] = b"PLUMECK\0";
const VERSION: u32 = 1;

/// Training state at a cycle boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Adam,
    pub history: LossHistory,
    pub cycles_done: usize,
    pub epoch: u64,
    pub iteration: u64,
}

fn trunc(e: std::io::Error) -> TrainError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        TrainError::Format(format!("truncated checkpoint: {e}"))
    } else {
        TrainError::Io(e)
    }
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
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
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        w.write_u32::<LE>(self.cycles_done as u32)?;
        w.write_u64::<LE>(self.epoch)?;
        w.write_u64::<LE>(self.iteration)?;
        self.model.write_to(w)?;
        for x in [self.adam.beta1, self.adam.beta2, self.adam.delta] {
            w.write_f64::<LE>(x)?;
        }
        w.write_u64::<LE>(self.adam.t)?;
        for a in self.adam.m.iter().chain(&self.adam.v) {
            for &x in a.iter() {
                w.write_f64::<LE>(x)?;
            }
        }
        let csv = self.history.to_csv();
        w.write_u64::<LE>(csv.len() as u64)?;
        w.write_all(csv.as_bytes())?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(trunc)?;
        if &magic != MAGIC {
            return Err(TrainError::Format("not a checkpoint file".into()));
        }
        let v = r.read_u32::<LE>().map_err(trunc)?;
        if v != VERSION {
            return Err(TrainError::Format(format!("unsupported checkpoint version {v}")));
        }
        let cycles_done = r.read_u32::<LE>().map_err(trunc)? as usize;
        let epoch = r.read_u64::<LE>().map_err(trunc)?;
        let iteration = r.read_u64::<LE>().map_err(trunc)?;
        let model = Model::read_from(r)?;
        let beta1 = r.read_f64::<LE>().map_err(trunc)?;
        let beta2 = r.read_f64::<LE>().map_err(trunc)?;
        let delta = r.read_f64::<LE>().map_err(trunc)?;
        let t = r.read_u64::<LE>().map_err(trunc)?;
        let shapes: Vec<_> = model.params.arrays.iter().map(|a| a.dim()).collect();
        let mut read_set = || -> Result<Vec<Array2<f64>>> {
            shapes
                .iter()
                .map(|&s| {
                    let mut buf = vec![0.0; s.0 * s.1];
                    r.read_f64_into::<LE>(&mut buf).map_err(trunc)?;
                    Ok(Array2::from_shape_vec(s, buf).expect("sized"))
                })
                .collect()
        };
        let m = read_set()?;
        let v = read_set()?;
        let n = r.read_u64::<LE>().map_err(trunc)?;
        if n > 1 << 34 {
            return Err(TrainError::Format("history length".into()));
        }
        let mut csv = vec![0u8; n as usize];
        r.read_exact(&mut csv).map_err(trunc)?;
        let csv = String::from_utf8(csv).map_err(|_| TrainError::Format("history is not UTF-8".into()))?;
        Ok(Checkpoint {
            model,
            adam: Adam { beta1, beta2, delta, t, m, v },
            history: LossHistory::from_csv(&csv)?,
            cycles_done,
            epoch,
            iteration,
        })
    }
}

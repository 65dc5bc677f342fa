use std::fmt::Write as _;

use super::{Result, TrainError};

/// One logged optimiser iteration. Residual terms are unweighted means of
/// squared residuals (for the dead-zone continuity penalty, the mean
/// penalty); absent equations are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Record {
    pub iteration: u64,
    pub epoch: u64,
    pub cycle: u32,
    pub lr: f64,
    pub total: f64,
    pub label: f64,
    pub pde_t: f64,
    pub pde_tbar: f64,
    pub pde_mx: f64,
    pub pde_my: f64,
    pub pde_mz: f64,
    pub pde_div: f64,
    pub wall_ms: f64,
}

pub const HEADER: &str =
    "iteration,epoch,cycle,lr,total,label,pde_T,pde_Tbar,pde_mx,pde_my,pde_mz,pde_div,wall_ms";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory {
    pub records: Vec<Record>,
}

impl LossHistory {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Records of cycle `c` (1-based).
    pub fn cycle(&self, c: u32) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.cycle == c)
    }

    /// CSV with a fixed column order; floats are written in shortest
    /// round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.records.len() + 1));
        s.push_str(HEADER);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.iteration,
                r.epoch,
                r.cycle,
                r.lr,
                r.total,
                r.label,
                r.pde_t,
                r.pde_tbar,
                r.pde_mx,
                r.pde_my,
                r.pde_mz,
                r.pde_div,
                r.wall_ms
            );
        }
        s
    }

    pub fn from_csv(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        if lines.next() != Some(HEADER) {
            return Err(TrainError::Format("loss history header".into()));
        }
        let bad = |l: &str| TrainError::Format(format!("loss history line `{l}`"));
        let mut records = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 13 {
                return Err(bad(line));
            }
            let f = |i: usize| c[i].parse::<f64>().map_err(|_| bad(line));
            records.push(Record {
                iteration: c[0].parse().map_err(|_| bad(line))?,
                epoch: c[1].parse().map_err(|_| bad(line))?,
                cycle: c[2].parse().map_err(|_| bad(line))?,
                lr: f(3)?,
                total: f(4)?,
                label: f(5)?,
                pde_t: f(6)?,
                pde_tbar: f(7)?,
                pde_mx: f(8)?,
                pde_my: f(9)?,
                pde_mz: f(10)?,
                pde_div: f(11)?,
                wall_ms: f(12)?,
            });
        }
        Ok(LossHistory { records })
    }
}

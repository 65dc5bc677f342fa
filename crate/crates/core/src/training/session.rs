use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array2, Axis};

use crate::dataset::{minibatch_iter, TrainingSet};
use crate::network::{Architecture, InputScaling, Model, Parameters};
use crate::physics::{Equation, FluidParams, Forcing};

use super::{Adam, Checkpoint, LossConfig, LossHistory, Record, Result, Schedule, TrainError, Trainer};

/// Everything that determines a training run besides the data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub arch: Architecture,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub schedule: Schedule,
    pub seed: u64,
    /// Residual rows per autodiff chunk.
    #[serde(default = "default_chunk")]
    pub chunk: usize,
    /// Fill the `wall_ms` column; off by default so histories are
    /// reproducible byte for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_chunk() -> usize {
    512
}

impl TrainConfig {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        TrainConfig {
            arch,
            loss: LossConfig::standard(),
            schedule: Schedule::default(),
            seed,
            chunk: default_chunk(),
            record_wall_time: false,
        }
    }
}

/// End-of-cycle report.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSummary {
    /// 1-based.
    pub cycle: u32,
    pub epochs: usize,
    pub iterations: u64,
    pub lr: f64,
    pub mean_total: f64,
    pub last: Record,
}

/// A training run that can be advanced cycle by cycle and checkpointed.
#[derive(Debug)]
pub struct Session {
    trainer: Trainer,
    cfg: TrainConfig,
    scaling: InputScaling,
    model_seed: u64,
    params: Vec<Arc<Array2<f64>>>,
    adam: Adam,
    history: LossHistory,
    cycles_done: usize,
    epoch: u64,
    iteration: u64,
}

fn scaling_of(ts: &TrainingSet) -> InputScaling {
    InputScaling { ranges: ts.input_ranges() }
}

impl Session {
    pub fn new(ts: &TrainingSet, fp: &FluidParams, forcing: &Forcing, cfg: &TrainConfig) -> Result<Self> {
        let model = Model::new(cfg.arch.clone(), scaling_of(ts), cfg.seed)?;
        Self::start(ts, fp, forcing, cfg, model, None, LossHistory::default(), 0, 0, 0)
    }

    /// Continues from a checkpoint; the result is identical to an
    /// uninterrupted run with the same configuration.
    pub fn resume(
        ts: &TrainingSet,
        fp: &FluidParams,
        forcing: &Forcing,
        cfg: &TrainConfig,
        ck: Checkpoint,
    ) -> Result<Self> {
        if ck.model.arch != cfg.arch {
            return Err(TrainError::Config("checkpoint architecture differs from the configuration".into()));
        }
        if ck.cycles_done > cfg.schedule.cycles.len() {
            return Err(TrainError::Config("checkpoint is past the end of the schedule".into()));
        }
        Self::start(
            ts,
            fp,
            forcing,
            cfg,
            ck.model,
            Some(ck.adam),
            ck.history,
            ck.cycles_done,
            ck.epoch,
            ck.iteration,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn start(
        ts: &TrainingSet,
        fp: &FluidParams,
        forcing: &Forcing,
        cfg: &TrainConfig,
        model: Model,
        adam: Option<Adam>,
        history: LossHistory,
        cycles_done: usize,
        epoch: u64,
        iteration: u64,
    ) -> Result<Self> {
        cfg.schedule.validate()?;
        if ts.dim != fp.dim {
            return Err(TrainError::Config("training set and fluid parameters differ in dimension".into()));
        }
        if ts.labels.is_empty() {
            return Err(TrainError::Config("training set has no labels".into()));
        }
        let trainer = Trainer::new(&cfg.arch, &model.scaling, fp, &cfg.loss, forcing)?;
        if trainer.has_residual_graph() && ts.residuals.nrows() == 0 {
            return Err(TrainError::Config(
                "residual terms are weighted but there are no residual points".into(),
            ));
        }
        let shapes: Vec<_> = model.params.arrays.iter().map(|a| a.dim()).collect();
        let s = &cfg.schedule;
        let adam = match adam {
            Some(a) => {
                if a.m.iter().map(|m| m.dim()).ne(shapes.iter().copied()) {
                    return Err(TrainError::Shape("optimiser state vs parameters".into()));
                }
                a
            }
            None => Adam::new(&shapes, s.beta1, s.beta2, s.delta),
        };
        Ok(Session {
            trainer,
            cfg: cfg.clone(),
            scaling: model.scaling.clone(),
            model_seed: model.params.seed,
            params: model.shared_params(),
            adam,
            history,
            cycles_done,
            epoch,
            iteration,
        })
    }

    pub fn trainer(&self) -> &Trainer {
        &self.trainer
    }

    pub fn history(&self) -> &LossHistory {
        &self.history
    }

    pub fn cycles_done(&self) -> usize {
        self.cycles_done
    }

    pub fn is_finished(&self) -> bool {
        self.cycles_done >= self.cfg.schedule.cycles.len()
    }

    pub fn params(&self) -> &[Arc<Array2<f64>>] {
        &self.params
    }

    pub fn model(&self) -> Model {
        Model {
            arch: self.cfg.arch.clone(),
            scaling: self.scaling.clone(),
            params: Parameters {
                arrays: self.params.iter().map(|a| (**a).clone()).collect(),
                seed: self.model_seed,
            },
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model(),
            adam: self.adam.clone(),
            history: self.history.clone(),
            cycles_done: self.cycles_done,
            epoch: self.epoch,
            iteration: self.iteration,
        }
    }

    /// Runs the next cycle; `None` once the schedule is exhausted.
    pub fn run_cycle(&mut self, ts: &TrainingSet) -> Result<Option<CycleSummary>> {
        let Some(cycle) = self.cfg.schedule.cycles.get(self.cycles_done).copied() else {
            return Ok(None);
        };
        let c = self.cycles_done as u32 + 1;
        let mb = self.cfg.schedule.minibatch;
        let n_r = if self.trainer.has_residual_graph() { ts.residuals.nrows() } else { 0 };
        let first = self.history.len();
        let empty = Array2::zeros((0, ts.dim.n_inputs()));
        for _ in 0..cycle.epochs {
            self.epoch += 1;
            for (li, ri) in minibatch_iter(ts.labels.len(), n_r, mb, self.cfg.seed, self.epoch) {
                self.iteration += 1;
                // `Instant` is unavailable on wasm32, so only read the clock on request.
                let started = self.cfg.record_wall_time.then(Instant::now);
                let labels = ts.labels.select(&li);
                let points = if n_r > 0 { ts.residuals.select(Axis(0), &ri) } else { empty.clone() };
                let step = self.trainer.step(&self.params, &labels, &points, self.cfg.chunk)?;
                self.check_finite(&step.label, &step.parts, step.identity)?;
                if !step.grads.is_finite() {
                    return Err(TrainError::NonFinite { iteration: self.iteration, term: "gradient".into() });
                }
                self.adam.step(&mut self.params, &step.grads.0, cycle.lr)?;
                let [mx, my, mz, t, tbar, div] = step.parts;
                self.history.push(Record {
                    iteration: self.iteration,
                    epoch: self.epoch,
                    cycle: c,
                    lr: cycle.lr,
                    total: step.total,
                    label: step.label,
                    pde_t: t,
                    pde_tbar: tbar,
                    pde_mx: mx,
                    pde_my: my,
                    pde_mz: mz,
                    pde_div: div,
                    wall_ms: started.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3),
                });
            }
        }
        self.cycles_done += 1;
        let recs = &self.history.records[first..];
        let mean_total = recs.iter().map(|r| r.total).sum::<f64>() / recs.len().max(1) as f64;
        Ok(Some(CycleSummary {
            cycle: c,
            epochs: cycle.epochs,
            iterations: recs.len() as u64,
            lr: cycle.lr,
            mean_total,
            last: recs.last().copied().unwrap_or_default(),
        }))
    }

    fn check_finite(&self, label: &f64, parts: &[f64; 6], identity: f64) -> Result<()> {
        let bad = |term: &str| TrainError::NonFinite { iteration: self.iteration, term: term.into() };
        if !label.is_finite() {
            return Err(bad("label"));
        }
        for (eq, p) in Equation::ALL.iter().zip(parts) {
            if !p.is_finite() {
                return Err(bad(&format!("pde_{}", eq.name())));
            }
        }
        if !identity.is_finite() {
            return Err(bad("tbar_identity"));
        }
        Ok(())
    }

    /// Runs the remaining cycles, writing `cycle_NN.ckpt` into
    /// `checkpoint_dir` after each one.
    pub fn run(
        &mut self,
        ts: &TrainingSet,
        checkpoint_dir: Option<&Path>,
        mut on_cycle: impl FnMut(&CycleSummary),
    ) -> Result<()> {
        if let Some(d) = checkpoint_dir {
            std::fs::create_dir_all(d)?;
        }
        while let Some(summary) = self.run_cycle(ts)? {
            if let Some(d) = checkpoint_dir {
                self.checkpoint().save(&d.join(format!("cycle_{:02}.ckpt", summary.cycle)))?;
            }
            on_cycle(&summary);
        }
        Ok(())
    }
}

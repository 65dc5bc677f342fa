use crate::physics::Equation;

use super::{Result, TrainError};

/// Per-equation residual weights.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EqWeights {
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "Tbar")]
    pub tbar: f64,
    pub div: f64,
}

impl EqWeights {
    pub fn uniform(w: f64) -> Self {
        EqWeights { mx: w, my: w, mz: w, t: w, tbar: w, div: w }
    }

    pub fn get(&self, eq: Equation) -> f64 {
        match eq {
            Equation::MomentumX => self.mx,
            Equation::MomentumY => self.my,
            Equation::MomentumZ => self.mz,
            Equation::Temperature => self.t,
            Equation::TemperatureBar => self.tbar,
            Equation::Continuity => self.div,
        }
    }

    fn all(&self) -> [f64; 6] {
        [self.mx, self.my, self.mz, self.t, self.tbar, self.div]
    }
}

/// Penalty applied to the continuity residual.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DivPenalty {
    /// `mean(r_div²)`.
    Square,
    /// `mean(max(0, |r_div| − tau)²)`.
    DeadZone { tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Labels only; no residual graph is built.
    PlainDnn,
    /// All residual weights equal.
    Standard,
    /// Continuity weight below the others.
    Relaxed,
    Custom,
}

/// Weights of the composite loss
/// `λ_label·L_label + Σ_eq λ_eq·mean(r_eq²)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossConfig {
    pub lambda_label: f64,
    pub weights: EqWeights,
    pub div_penalty: DivPenalty,
    /// Weight of `mean((T + T̄ − 1)²)` on residual points; 0 disables it.
    #[serde(default)]
    pub tbar_identity: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::standard()
    }
}

impl LossConfig {
    pub fn standard() -> Self {
        LossConfig {
            lambda_label: 1.0,
            weights: EqWeights::uniform(1.0),
            div_penalty: DivPenalty::Square,
            tbar_identity: 0.0,
        }
    }

    pub fn plain_dnn() -> Self {
        LossConfig { weights: EqWeights::uniform(0.0), ..Self::standard() }
    }

    /// Standard weights with `λ_div = lambda_div`.
    pub fn relaxed(lambda_div: f64) -> Self {
        let mut c = Self::standard();
        c.weights.div = lambda_div;
        c
    }

    pub fn mode(&self) -> LossMode {
        let w = self.weights.all();
        if w.iter().all(|&x| x == 0.0) && self.tbar_identity == 0.0 {
            return LossMode::PlainDnn;
        }
        let others = &w[..5];
        if others.iter().all(|&x| x == others[0]) {
            if w[5] == others[0] && self.div_penalty == DivPenalty::Square {
                return LossMode::Standard;
            }
            if w[5] < others[0] || matches!(self.div_penalty, DivPenalty::DeadZone { .. }) {
                return LossMode::Relaxed;
            }
        }
        LossMode::Custom
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.weights.all();
        if self.lambda_label < 0.0 || self.tbar_identity < 0.0 || all.iter().any(|&w| w < 0.0) {
            return Err(TrainError::Config("loss weights must be non-negative".into()));
        }
        if let DivPenalty::DeadZone { tau } = self.div_penalty {
            if tau < 0.0 {
                return Err(TrainError::Config("dead-zone tau must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// One cycle of the schedule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Cycle {
    pub epochs: usize,
    pub lr: f64,
}

/// Cyclic learning-rate schedule and Adam constants.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Schedule {
    pub cycles: Vec<Cycle>,
    pub minibatch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl Default for Schedule {
    /// Seven cycles, 1337 epochs, learning rate from 1e-3 down to 1e-6,
    /// minibatches of 2000.
    fn default() -> Self {
        let table = [
            (50, 1e-3),
            (62, 6.683e-4),
            (138, 2.992e-4),
            (309, 1.337e-4),
            (309, 5.98e-5),
            (309, 1e-5),
            (160, 1e-6),
        ];
        Schedule {
            cycles: table.iter().map(|&(epochs, lr)| Cycle { epochs, lr }).collect(),
            minibatch: 2000,
            beta1: 0.9,
            beta2: 0.999,
            delta: 1e-8,
        }
    }
}

impl Schedule {
    pub fn total_epochs(&self) -> usize {
        self.cycles.iter().map(|c| c.epochs).sum()
    }

    /// Same learning rates with the epochs rescaled to sum to `total`
    /// (largest-remainder rounding; each cycle keeps at least one epoch
    /// when `total` allows it).
    pub fn with_total_epochs(&self, total: usize) -> Schedule {
        let sum = self.total_epochs() as f64;
        let n = self.cycles.len();
        let exact: Vec<f64> = self.cycles.iter().map(|c| c.epochs as f64 * total as f64 / sum).collect();
        let mut e: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        if total >= n {
            e.iter_mut().for_each(|x| *x = (*x).max(1));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        let mut have: usize = e.iter().sum();
        let mut i = 0;
        while have < total {
            e[order[i % n]] += 1;
            have += 1;
            i += 1;
        }
        while have > total {
            // Trim from the largest cycles.
            let j = (0..n).max_by_key(|&j| (e[j], n - j)).expect("non-empty");
            e[j] -= 1;
            have -= 1;
        }
        Schedule {
            cycles: self.cycles.iter().zip(e).map(|(c, epochs)| Cycle { epochs, lr: c.lr }).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cycles.is_empty() || self.minibatch == 0 {
            return Err(TrainError::Config("schedule needs cycles and a positive minibatch".into()));
        }
        if self.cycles.iter().any(|c| !(c.lr > 0.0)) {
            return Err(TrainError::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.delta > 0.0) {
            return Err(TrainError::Config("invalid Adam constants".into()));
        }
        Ok(())
    }
}

use std::sync::Arc;

use ndarray::{Array2, Zip};

use super::{Result, TrainError};

/// Adam moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
    pub t: u64,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(shapes: &[(usize, usize)], beta1: f64, beta2: f64, delta: f64) -> Self {
        Adam {
            beta1,
            beta2,
            delta,
            t: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    /// One bias-corrected update with learning rate `lr`.
    pub fn step(&mut self, params: &mut [Arc<Array2<f64>>], grads: &[Array2<f64>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::Shape("parameter count".into()));
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.delta);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.dim() != g.dim() || m.dim() != g.dim() {
                return Err(TrainError::Shape(format!("{:?} vs {:?}", p.dim(), g.dim())));
            }
            let p = Arc::make_mut(p);
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
        Ok(())
    }
}

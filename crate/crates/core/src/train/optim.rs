use ndarray::Zip;

use crate::layers::choice_enum;
use crate::tensor::{Matrix, ParamStore};

choice_enum! {
    OptimizerKind { Adam => "Adam", Sgd => "SGD" }
}

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;

/// First-order optimizer over every parameter of a store. Adam keeps its
/// moment estimates in the parameters' optimizer slots.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, steps: 0 }
    }

    /// Applies one update from the accumulated gradients. Gradients are
    /// left in place; callers zero them between steps.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.steps += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in store.iter_mut() {
                    p.value.scaled_add(-lr, &p.grad);
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = ADAM_BETAS;
                let c1 = 1.0 - b1.powi(self.steps);
                let c2 = 1.0 - b2.powi(self.steps);
                for p in store.iter_mut() {
                    if p.slots.len() != 2 {
                        p.slots = vec![Matrix::zeros(p.value.raw_dim()), Matrix::zeros(p.value.raw_dim())];
                    }
                    let (m, v) = p.slots.split_at_mut(1);
                    Zip::from(&mut p.value)
                        .and(&p.grad)
                        .and(&mut m[0])
                        .and(&mut v[0])
                        .for_each(|w, &g, m, v| {
                            *m = b1 * *m + (1.0 - b1) * g;
                            *v = b2 * *v + (1.0 - b2) * g * g;
                            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                        });
                }
            }
        }
    }
}

//! Plain SGD and Adam with bias correction.

use crate::engine::GradientSet;
use crate::topology::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<OptimizerKind> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

/// Optimizer state: hyperparameters plus (for Adam) first/second moment
/// accumulators shaped like the parameters, and the step counter.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Option<GradientSet>,
    v: Option<GradientSet>,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Optimizer {
        Optimizer {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            step: 0,
            m: None,
            v: None,
        }
    }

    /// Adam with the conventional constants unless overridden.
    pub fn adam(lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Optimizer {
        Optimizer {
            kind: OptimizerKind::Adam,
            lr,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: None,
            v: None,
        }
    }

    pub fn new(kind: OptimizerKind, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Optimizer {
        match kind {
            OptimizerKind::Sgd => Optimizer::sgd(lr),
            OptimizerKind::Adam => Optimizer::adam(lr, beta1, beta2, epsilon),
        }
    }

    /// Applies one update in place.
    pub fn apply(&mut self, net: &mut Network, grads: &GradientSet) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (layer, (dw, db)) in net.layers.iter_mut().zip(grads.dw.iter().zip(&grads.db)) {
                    sgd_update(&mut layer.w, dw, self.lr);
                    sgd_update(&mut layer.b, db, self.lr);
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_none() {
                    self.m = Some(GradientSet::zeros_like(net));
                    self.v = Some(GradientSet::zeros_like(net));
                }
                self.step += 1;
                let m = self.m.as_mut().unwrap();
                let v = self.v.as_mut().unwrap();
                for (n, layer) in net.layers.iter_mut().enumerate() {
                    adam_update(
                        &mut layer.w,
                        &grads.dw[n],
                        &mut m.dw[n],
                        &mut v.dw[n],
                        self.step,
                        self.lr,
                        self.beta1,
                        self.beta2,
                        self.epsilon,
                    );
                    adam_update(
                        &mut layer.b,
                        &grads.db[n],
                        &mut m.db[n],
                        &mut v.db[n],
                        self.step,
                        self.lr,
                        self.beta1,
                        self.beta2,
                        self.epsilon,
                    );
                }
            }
        }
    }
}

/// `p <- p - lr * g` elementwise.
pub fn sgd_update(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}

/// One bias-corrected Adam step on a parameter block.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) {
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
    }
}

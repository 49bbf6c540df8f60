use serde::{Deserialize, Serialize};

use super::layers::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
    Rmsprop,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::Sgd, OptimizerKind::Adam, OptimizerKind::Rmsprop];
}

impl std::str::FromStr for OptimizerKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "rmsprop" => Ok(OptimizerKind::Rmsprop),
            other => Err(crate::error::Error::invalid(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub algorithm: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub activation: Activation,
    pub dropout_p: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            algorithm: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 10,
            activation: Activation::Relu,
            dropout_p: 0.25,
            epochs: 100,
            seed: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const RMSPROP_DECAY: f64 = 0.9;
pub const OPT_EPS: f64 = 1e-8;

/// Per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind) -> Self {
        OptimizerState { kind, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>], lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group count");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        for (gi, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.len(), g.len(), "parameter/gradient shape");
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, d) in p.iter_mut().zip(g) {
                        *w -= lr * d;
                    }
                }
                OptimizerKind::Adam => {
                    let bc1 = 1.0 - ADAM_BETA1.powi(t);
                    let bc2 = 1.0 - ADAM_BETA2.powi(t);
                    let (m, v) = (&mut self.first[gi], &mut self.second[gi]);
                    for i in 0..p.len() {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p[i] -= lr * mhat / (vhat.sqrt() + OPT_EPS);
                    }
                }
                OptimizerKind::Rmsprop => {
                    let s = &mut self.second[gi];
                    for i in 0..p.len() {
                        s[i] = RMSPROP_DECAY * s[i] + (1.0 - RMSPROP_DECAY) * g[i] * g[i];
                        p[i] -= lr * g[i] / (s[i].sqrt() + OPT_EPS);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(kind: OptimizerKind, p0: f64, g: f64, lr: f64) -> f64 {
        let mut p = vec![p0];
        let mut st = OptimizerState::new(kind);
        st.step(vec![&mut p[..]], &[vec![g]], lr);
        p[0]
    }

    #[test]
    fn sgd_single_step() {
        assert!((one_step(OptimizerKind::Sgd, 1.0, 1.0, 0.1) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // bias-corrected m̂ = g, v̂ = g², so the step is lr·g/(|g|+eps) ≈ lr·sign(g)
        for g in [1.0, 1e-3, 250.0] {
            let d = 1.0 - one_step(OptimizerKind::Adam, 1.0, g, 0.01);
            assert!((d - 0.01).abs() < 1e-6, "g={g} step {d}");
        }
    }

    #[test]
    fn rmsprop_first_step() {
        // s = 0.1·g², step = lr·g/sqrt(0.1 g²)
        let d = 1.0 - one_step(OptimizerKind::Rmsprop, 1.0, 2.0, 0.01);
        assert!((d - 0.01 / 0.1f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        for kind in OptimizerKind::ALL {
            assert_eq!(one_step(kind, 0.7, 0.0, 0.1), 0.7);
        }
    }
}

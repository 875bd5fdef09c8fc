//! Parameter updates: plain SGD with stepwise learning-rate decay, or
//! Adam. Gradients are clipped by global L2 norm before either update.

use std::collections::BTreeMap;

use crate::error::{OfnError, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::{Gradients, Parameters};

/// Global gradient-norm clipping threshold applied before every update.
pub const CLIP_NORM: f64 = 5.0;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimKind {
    SgdDecay,
    Adam,
}

impl OptimKind {
    pub fn parse(s: &str) -> Result<OptimKind> {
        match s {
            "sgd_decay" | "sgd" => Ok(OptimKind::SgdDecay),
            "adam" => Ok(OptimKind::Adam),
            other => Err(OfnError::config(format!(
                "unknown optimizer '{}' (expected sgd_decay or adam)",
                other
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimKind::SgdDecay => "sgd_decay",
            OptimKind::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimConfig {
    pub kind: OptimKind,
    pub learning_rate: f64,
    pub decay_factor: f64,
    pub decay_start_step: u64,
    pub decay_every: u64,
}

impl OptimConfig {
    /// Default schedule for a run of `steps` updates: SGD at lr 1.0,
    /// halving from the midpoint, ten times over the run.
    pub fn default_for_steps(steps: u64) -> OptimConfig {
        OptimConfig {
            kind: OptimKind::SgdDecay,
            learning_rate: 1.0,
            decay_factor: 0.5,
            decay_start_step: (steps / 2).max(1),
            decay_every: (steps / 10).max(1),
        }
    }

    pub fn adam(learning_rate: f64) -> OptimConfig {
        OptimConfig {
            kind: OptimKind::Adam,
            learning_rate,
            decay_factor: 1.0,
            decay_start_step: u64::MAX,
            decay_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(OfnError::config("learning_rate must be finite and > 0"));
        }
        if !(0.0..=1.0).contains(&self.decay_factor) {
            return Err(OfnError::config("decay_factor must be in [0, 1]"));
        }
        if self.decay_every == 0 {
            return Err(OfnError::config("decay_every must be >= 1"));
        }
        Ok(())
    }
}

/// Optimizer state. `step` counts completed updates; the n-th update
/// (1-based) uses the learning rate for step n.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimConfig,
    step: u64,
    moment1: BTreeMap<String, Matrix>,
    moment2: BTreeMap<String, Matrix>,
}

impl Optimizer {
    pub fn new(cfg: OptimConfig) -> Result<Optimizer> {
        cfg.validate()?;
        Ok(Optimizer {
            cfg,
            step: 0,
            moment1: BTreeMap::new(),
            moment2: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &OptimConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate in effect for update number `step` (1-based).
    /// Under sgd_decay the rate is multiplied by `decay_factor` at
    /// `decay_start_step` and every `decay_every` steps after it;
    /// Adam runs at a constant rate.
    pub fn lr_for_step(&self, step: u64) -> f64 {
        match self.cfg.kind {
            OptimKind::Adam => self.cfg.learning_rate,
            OptimKind::SgdDecay => {
                let decays = if step < self.cfg.decay_start_step {
                    0
                } else {
                    1 + (step - self.cfg.decay_start_step) / self.cfg.decay_every
                };
                self.cfg.learning_rate * self.cfg.decay_factor.powi(decays as i32)
            }
        }
    }

    /// Apply one update. Gradients are scaled so their global L2 norm
    /// does not exceed `CLIP_NORM`, then the chosen rule runs.
    pub fn apply(&mut self, params: &mut dyn Parameters, grads: &Gradients) -> Result<()> {
        self.step += 1;
        let n = self.step;
        let lr = self.lr_for_step(n);

        let norm = grads.global_norm();
        let clip = if norm > CLIP_NORM {
            CLIP_NORM / norm
        } else {
            1.0
        };

        let mut err: Option<OfnError> = None;
        match self.cfg.kind {
            OptimKind::SgdDecay => {
                params.visit_mut(&mut |name, p| {
                    if err.is_some() {
                        return;
                    }
                    let Some(g) = grads.get(name) else { return };
                    if g.shape() != p.shape() {
                        err = Some(OfnError::shape(format!(
                            "gradient for {} has shape {:?}, parameter is {:?}",
                            name,
                            g.shape(),
                            p.shape()
                        )));
                        return;
                    }
                    for (pi, gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *pi -= lr * clip * gi;
                    }
                });
            }
            OptimKind::Adam => {
                let bc1 = 1.0 - ADAM_BETA1.powi(n as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(n as i32);
                let moment1 = &mut self.moment1;
                let moment2 = &mut self.moment2;
                params.visit_mut(&mut |name, p| {
                    if err.is_some() {
                        return;
                    }
                    let Some(g) = grads.get(name) else { return };
                    if g.shape() != p.shape() {
                        err = Some(OfnError::shape(format!(
                            "gradient for {} has shape {:?}, parameter is {:?}",
                            name,
                            g.shape(),
                            p.shape()
                        )));
                        return;
                    }
                    let (r, c) = p.shape();
                    let m = moment1
                        .entry(name.to_string())
                        .or_insert_with(|| Matrix::zeros(r, c));
                    let v = moment2
                        .entry(name.to_string())
                        .or_insert_with(|| Matrix::zeros(r, c));
                    for i in 0..p.data().len() {
                        let gi = clip * g.data()[i];
                        let mi = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * gi;
                        let vi = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * gi * gi;
                        m.data_mut()[i] = mi;
                        v.data_mut()[i] = vi;
                        let mhat = mi / bc1;
                        let vhat = vi / bc2;
                        p.data_mut()[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                });
            }
        }
        if let Some(e) = err {
            return Err(e);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct OneParam {
        p: Matrix,
    }

    impl Parameters for OneParam {
        fn visit(&self, f: &mut dyn FnMut(&str, &Matrix)) {
            f("p", &self.p);
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Matrix)) {
            f("p", &mut self.p);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut m = OneParam {
            p: Matrix::from_vec(1, 2, vec![0.25, -0.5]).unwrap(),
        };
        let mut grads = Gradients::new();
        grads.entry("p", 1, 2);
        let mut opt = Optimizer::new(OptimConfig::default_for_steps(100)).unwrap();
        opt.apply(&mut m, &grads).unwrap();
        assert_eq!(m.p.data(), &[0.25, -0.5]);

        let mut opt = Optimizer::new(OptimConfig::adam(0.1)).unwrap();
        opt.apply(&mut m, &grads).unwrap();
        assert_eq!(m.p.data(), &[0.25, -0.5]);
    }

    #[test]
    fn sgd_step_arithmetic() {
        let mut m = OneParam {
            p: Matrix::zeros(1, 1),
        };
        let mut grads = Gradients::new();
        grads.entry("p", 1, 1).set(0, 0, 0.5);
        let mut opt = Optimizer::new(OptimConfig {
            kind: OptimKind::SgdDecay,
            learning_rate: 1.0,
            decay_factor: 0.5,
            decay_start_step: 1000,
            decay_every: 1000,
        })
        .unwrap();
        opt.apply(&mut m, &grads).unwrap();
        assert!((m.p.get(0, 0) - -0.5).abs() < 1e-15);
    }

    #[test]
    fn decay_schedule_arithmetic() {
        let opt = Optimizer::new(OptimConfig {
            kind: OptimKind::SgdDecay,
            learning_rate: 1.0,
            decay_factor: 0.5,
            decay_start_step: 10,
            decay_every: 10,
        })
        .unwrap();
        assert_eq!(opt.lr_for_step(9), 1.0);
        assert_eq!(opt.lr_for_step(10), 0.5);
        assert_eq!(opt.lr_for_step(19), 0.5);
        assert_eq!(opt.lr_for_step(20), 0.25);
        assert_eq!(opt.lr_for_step(25), 0.25);
    }

    #[test]
    fn schedule_is_non_increasing() {
        let opt = Optimizer::new(OptimConfig::default_for_steps(500)).unwrap();
        let mut prev = f64::INFINITY;
        for step in 1..=500 {
            let lr = opt.lr_for_step(step);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn clipping_bounds_update_norm() {
        let mut m = OneParam {
            p: Matrix::zeros(1, 2),
        };
        let mut grads = Gradients::new();
        let g = grads.entry("p", 1, 2);
        g.set(0, 0, 30.0);
        g.set(0, 1, 40.0); // norm 50 > 5
        let mut opt = Optimizer::new(OptimConfig {
            kind: OptimKind::SgdDecay,
            learning_rate: 1.0,
            decay_factor: 0.5,
            decay_start_step: 1000,
            decay_every: 1000,
        })
        .unwrap();
        opt.apply(&mut m, &grads).unwrap();
        // Effective gradient is scaled to norm 5: (3, 4).
        assert!((m.p.get(0, 0) - -3.0).abs() < 1e-12);
        assert!((m.p.get(0, 1) - -4.0).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut m = OneParam {
            p: Matrix::zeros(2, 2),
        };
        let mut grads = Gradients::new();
        grads.entry("p", 1, 2);
        let mut opt = Optimizer::new(OptimConfig::default_for_steps(10)).unwrap();
        assert!(opt.apply(&mut m, &grads).is_err());
    }
}

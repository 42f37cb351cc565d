//! Parameter updates: momentum SGD with weight decay, the adaptive-moment
//! rule, and the polynomial learning-rate schedule shared by all groups.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::{OptimizerKind, OptimizerSpec, ScheduleSpec};
use crate::graph::{Gradients, Param};
use crate::tensor::{Element, Tensor};

/// Numerical floor inside the adaptive-moment denominator.
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("iteration {t} is outside the schedule range 0..={t_max}")]
    IterationOutOfRange { t: u64, t_max: u64 },
}

/// Polynomial decay η₀·(1 − T/T_max)^p: strictly decreasing, exactly η₀ at
/// T=0 and exactly 0 at T=T_max.
pub fn lr_at(spec: &ScheduleSpec, t: u64) -> Result<f64, OptimError> {
    if t > spec.total_iterations {
        return Err(OptimError::IterationOutOfRange { t, t_max: spec.total_iterations });
    }
    let frac = 1.0 - t as f64 / spec.total_iterations as f64;
    Ok(spec.base_rate * frac.powf(spec.exponent))
}

/// Momentum SGD with coupled L2 weight decay:
/// g ← ∇ + wd·w; buf ← μ·buf + g; w ← w − η·buf.
pub struct Sgd<T> {
    momentum: f64,
    weight_decay: f64,
    velocity: BTreeMap<String, Tensor<T>>,
}

impl<T: Element> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self { momentum, weight_decay, velocity: BTreeMap::new() }
    }

    pub fn step(&mut self, params: &[Param<T>], grads: &Gradients<T>, lr: f64) {
        let mu = T::from_f64(self.momentum);
        let wd = T::from_f64(self.weight_decay);
        let eta = T::from_f64(lr);
        for p in params {
            let Some(grad) = grads.get(p) else { continue };
            let mut w = p.value();
            let buf = self
                .velocity
                .entry(p.name())
                .or_insert_with(|| Tensor::zeros(&w.shape().to_vec()));
            let (wv, bv, gv) = (w.data_mut(), buf.data_mut(), grad.data());
            for i in 0..gv.len() {
                let g = gv[i] + wd * wv[i];
                bv[i] = mu * bv[i] + g;
                wv[i] = wv[i] - eta * bv[i];
            }
            p.set_value(w);
        }
    }
}

/// Adaptive-moment estimation with bias correction and a per-parameter step
/// counter, so resumed state continues the exact update trajectory.
pub struct Adam<T> {
    beta1: f64,
    beta2: f64,
    weight_decay: f64,
    moments: BTreeMap<String, AdamSlot<T>>,
}

struct AdamSlot<T> {
    t: u64,
    m: Tensor<T>,
    v: Tensor<T>,
}

impl<T: Element> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        Self { beta1, beta2, weight_decay, moments: BTreeMap::new() }
    }

    pub fn step(&mut self, params: &[Param<T>], grads: &Gradients<T>, lr: f64) {
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let wd = T::from_f64(self.weight_decay);
        let eps = T::from_f64(ADAM_EPS);
        for p in params {
            let Some(grad) = grads.get(p) else { continue };
            let mut w = p.value();
            let slot = self.moments.entry(p.name()).or_insert_with(|| AdamSlot {
                t: 0,
                m: Tensor::zeros(&w.shape().to_vec()),
                v: Tensor::zeros(&w.shape().to_vec()),
            });
            slot.t += 1;
            let c1 = T::from_f64(1.0 - self.beta1.powi(slot.t as i32));
            let c2 = T::from_f64(1.0 - self.beta2.powi(slot.t as i32));
            let eta = T::from_f64(lr);
            let (wv, gv) = (w.data_mut(), grad.data());
            let (mv, vv) = (slot.m.data_mut(), slot.v.data_mut());
            for i in 0..gv.len() {
                let g = gv[i] + wd * wv[i];
                mv[i] = b1 * mv[i] + (T::ONE - b1) * g;
                vv[i] = b2 * vv[i] + (T::ONE - b2) * g * g;
                let m_hat = mv[i] / c1;
                let v_hat = vv[i] / c2;
                wv[i] = wv[i] - eta * m_hat / (v_hat.sqrt() + eps);
            }
            p.set_value(w);
        }
    }
}

/// One update rule of either kind, built from its config spec.
pub enum GroupOptimizer<T> {
    Sgd(Sgd<T>),
    Adam(Adam<T>),
}

impl<T: Element> GroupOptimizer<T> {
    pub fn from_spec(spec: &OptimizerSpec) -> Self {
        match spec.kind {
            OptimizerKind::Sgd => Self::Sgd(Sgd::new(spec.momentum, spec.weight_decay)),
            OptimizerKind::Adam => {
                Self::Adam(Adam::new(spec.momentum, spec.beta2, spec.weight_decay))
            }
        }
    }

    pub fn step(&mut self, params: &[Param<T>], grads: &Gradients<T>, lr: f64) {
        match self {
            Self::Sgd(o) => o.step(params, grads, lr),
            Self::Adam(o) => o.step(params, grads, lr),
        }
    }

    /// Flattens all state into named arrays for the checkpoint container.
    /// Step counters ride along as one-element tensors.
    pub fn export_state(&self) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::new();
        match self {
            Self::Sgd(o) => {
                for (name, buf) in &o.velocity {
                    out.push((format!("sgd.velocity.{name}"), buf.clone()));
                }
            }
            Self::Adam(o) => {
                for (name, slot) in &o.moments {
                    out.push((format!("adam.t.{name}"), Tensor::scalar_tensor(T::from_f64(slot.t as f64))));
                    out.push((format!("adam.m.{name}"), slot.m.clone()));
                    out.push((format!("adam.v.{name}"), slot.v.clone()));
                }
            }
        }
        out
    }

    /// Rebuilds state exported by `export_state`; entries for the other
    /// optimizer kind are rejected.
    pub fn import_state(&mut self, entries: &[(String, Tensor<T>)]) {
        match self {
            Self::Sgd(o) => {
                o.velocity.clear();
                for (name, t) in entries {
                    let key = name
                        .strip_prefix("sgd.velocity.")
                        .unwrap_or_else(|| panic!("unexpected SGD state entry {name:?}"));
                    o.velocity.insert(key.to_string(), t.clone());
                }
            }
            Self::Adam(o) => {
                o.moments.clear();
                for (name, t) in entries {
                    if let Some(key) = name.strip_prefix("adam.t.") {
                        o.slot_mut(key).t = t.scalar().to_f64() as u64;
                    } else if let Some(key) = name.strip_prefix("adam.m.") {
                        o.slot_mut(key).m = t.clone();
                    } else if let Some(key) = name.strip_prefix("adam.v.") {
                        o.slot_mut(key).v = t.clone();
                    } else {
                        panic!("unexpected adaptive-moment state entry {name:?}");
                    }
                }
            }
        }
    }
}

impl<T: Element> Adam<T> {
    fn slot_mut(&mut self, name: &str) -> &mut AdamSlot<T> {
        self.moments.entry(name.to_string()).or_insert_with(|| AdamSlot {
            t: 0,
            m: Tensor::zeros(&[1]),
            v: Tensor::zeros(&[1]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schedule(base: f64, total: u64) -> ScheduleSpec {
        ScheduleSpec { base_rate: base, total_iterations: total, exponent: 0.9 }
    }

    #[test]
    fn schedule_boundaries_and_midpoint() {
        let s = schedule(2.5e-4, 150_000);
        assert!((lr_at(&s, 0).unwrap() - 2.5e-4).abs() < 1e-15);
        assert_eq!(lr_at(&s, 150_000).unwrap(), 0.0);
        let mid = lr_at(&s, 75_000).unwrap();
        let expect = 2.5e-4 * 0.5f64.powf(0.9);
        assert!((mid - expect).abs() < 1e-9, "0.5^0.9 ≈ 0.535887");
        assert!(lr_at(&s, 150_001).is_err());
    }

    #[test]
    fn schedule_is_strictly_decreasing() {
        let s = schedule(1e-3, 1000);
        let mut prev = f64::INFINITY;
        for t in (0..=1000).step_by(50) {
            let r = lr_at(&s, t).unwrap();
            assert!(r < prev, "rate must fall at every probe, t={t}");
            prev = r;
        }
    }

    fn one_param(v: f64) -> Param<f64> {
        Param::new("w", Tensor::scalar_tensor(v))
    }

    fn grad_of(p: &Param<f64>, g: f64) -> Gradients<f64> {
        let mut grads = Gradients::default();
        grads.insert(p, Tensor::scalar_tensor(g));
        grads
    }

    #[test]
    fn sgd_momentum_matches_hand_arithmetic() {
        let p = one_param(1.0);
        let mut opt: Sgd<f64> = Sgd::new(0.9, 0.0);
        let g = grad_of(&p, 0.5);
        opt.step(&[p.clone()], &g, 0.1);
        assert!((p.value().scalar() - 0.95).abs() < 1e-15, "buf=0.5");
        opt.step(&[p.clone()], &g, 0.1);
        assert!((p.value().scalar() - 0.855).abs() < 1e-15, "buf=0.95");
    }

    #[test]
    fn sgd_weight_decay_pulls_toward_zero_without_gradient_signal() {
        let p = one_param(1.0);
        let mut opt: Sgd<f64> = Sgd::new(0.0, 0.1);
        let g = grad_of(&p, 0.0);
        opt.step(&[p.clone()], &g, 0.1);
        assert!((p.value().scalar() - 0.99).abs() < 1e-15, "w −= lr·wd·w");
    }

    #[test]
    fn adam_first_step_is_a_signed_unit_step() {
        let p = one_param(0.0);
        let mut opt: Adam<f64> = Adam::new(0.99, 0.999, 0.0);
        let g = grad_of(&p, 0.5);
        opt.step(&[p.clone()], &g, 0.01);
        // Bias correction makes m̂=g, v̂=g², so the move is lr·g/(|g|+ε).
        assert!((p.value().scalar() + 0.01).abs() < 1e-8);
    }

    #[test]
    fn adam_two_steps_match_the_reference_formula() {
        let p = one_param(0.3);
        let mut opt: Adam<f64> = Adam::new(0.9, 0.999, 0.0);
        let grads = [0.2, -0.4];
        for g in grads {
            let gr = grad_of(&p, g);
            opt.step(&[p.clone()], &gr, 0.05);
        }
        // Independent replication.
        let (mut w, mut m, mut v) = (0.3, 0.0, 0.0);
        for (i, g) in grads.iter().enumerate() {
            let t = (i + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.05 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((p.value().scalar() - w).abs() < 1e-15);
    }

    #[test]
    fn params_without_gradients_stay_untouched() {
        let p = one_param(0.7);
        let silent = Param::new("silent", Tensor::scalar_tensor(0.7_f64));
        let g = grad_of(&p, 1.0);
        let mut sgd: Sgd<f64> = Sgd::new(0.9, 5e-4);
        sgd.step(&[p.clone(), silent.clone()], &g, 0.1);
        assert_eq!(silent.value().scalar(), 0.7);
        let mut adam: Adam<f64> = Adam::new(0.99, 0.999, 0.0);
        adam.step(&[p.clone(), silent.clone()], &g, 0.1);
        assert_eq!(silent.value().scalar(), 0.7);
    }

    #[test]
    fn exported_state_resumes_the_exact_trajectory() {
        let run = |resume: bool| -> f64 {
            let p = one_param(1.0);
            let mut opt: GroupOptimizer<f64> =
                GroupOptimizer::Adam(Adam::new(0.9, 0.999, 0.0));
            for i in 0..3 {
                let g = grad_of(&p, 0.1 * (i as f64 + 1.0));
                opt.step(&[p.clone()], &g, 0.02);
            }
            if resume {
                let state = opt.export_state();
                let mut fresh: GroupOptimizer<f64> =
                    GroupOptimizer::Adam(Adam::new(0.9, 0.999, 0.0));
                fresh.import_state(&state);
                opt = fresh;
            }
            for i in 3..6 {
                let g = grad_of(&p, 0.1 * (i as f64 + 1.0));
                opt.step(&[p.clone()], &g, 0.02);
            }
            p.value().scalar()
        };
        assert_eq!(run(false).to_bits(), run(true).to_bits(), "bit-exact resume");
    }

    #[test]
    fn group_optimizer_builds_from_config_defaults() {
        use crate::config::OptimizerSet;
        let set = OptimizerSet::default();
        let b: GroupOptimizer<f32> = GroupOptimizer::from_spec(&set.backbone);
        assert!(matches!(b, GroupOptimizer::Sgd(_)));
        let d: GroupOptimizer<f32> = GroupOptimizer::from_spec(&set.discriminators);
        assert!(matches!(d, GroupOptimizer::Adam(_)));
    }
}

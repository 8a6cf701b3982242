//! Interchangeable instantiations of the abstract two-step algorithm: a
//! device-side map producing the uploaded payload and a master-side map
//! folding the first-n payloads into the next model. Variants register by
//! name and are selected at runtime from the configuration.

use super::problem::DeviceQuadratic;
use super::FlConfig;
use nalgebra::DVector;
use std::collections::BTreeMap;

pub trait Learner: Send + Sync {
    fn name(&self) -> &'static str;

    /// Device-side step on the broadcast model; the result is what the
    /// device uploads.
    fn local_update(&self, device: &DeviceQuadratic, w: &DVector<f64>) -> DVector<f64>;

    /// Master-side step over the first-n uploads.
    fn global_update(&self, w: &DVector<f64>, uploads: &[DVector<f64>]) -> DVector<f64>;
}

/// n-sync gradient descent: devices upload gradients, the master averages
/// them and takes one step.
pub struct GradientDescent {
    pub step: f64,
}

impl Learner for GradientDescent {
    fn name(&self) -> &'static str {
        "gradient"
    }

    fn local_update(&self, device: &DeviceQuadratic, w: &DVector<f64>) -> DVector<f64> {
        device.gradient(w)
    }

    fn global_update(&self, w: &DVector<f64>, uploads: &[DVector<f64>]) -> DVector<f64> {
        assert!(!uploads.is_empty());
        let mut sum = DVector::zeros(w.len());
        for c in uploads {
            sum += c;
        }
        w - sum * (self.step / uploads.len() as f64)
    }
}

/// Federated averaging: devices run local gradient passes and upload the
/// resulting model; the master averages the uploads.
pub struct FedAvg {
    pub step: f64,
    pub local_steps: u32,
}

impl Learner for FedAvg {
    fn name(&self) -> &'static str {
        "fedavg"
    }

    fn local_update(&self, device: &DeviceQuadratic, w: &DVector<f64>) -> DVector<f64> {
        let mut local = w.clone();
        for _ in 0..self.local_steps {
            local -= device.gradient(&local) * self.step;
        }
        local
    }

    fn global_update(&self, _w: &DVector<f64>, uploads: &[DVector<f64>]) -> DVector<f64> {
        assert!(!uploads.is_empty());
        let mut sum = DVector::zeros(uploads[0].len());
        for c in uploads {
            sum += c;
        }
        sum / uploads.len() as f64
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown learner '{0}', available: {1}")]
pub struct UnknownLearner(String, String);

type LearnerFactory = fn(&FlConfig) -> Box<dyn Learner>;

/// Name-keyed factory registry for learner strategies.
pub struct LearnerRegistry {
    entries: BTreeMap<&'static str, LearnerFactory>,
}

impl Default for LearnerRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl LearnerRegistry {
    pub fn builtin() -> Self {
        let mut r = LearnerRegistry {
            entries: BTreeMap::new(),
        };
        r.register("gradient", |cfg| {
            Box::new(GradientDescent {
                step: cfg.step_size,
            })
        });
        r.register("fedavg", |cfg| {
            Box::new(FedAvg {
                step: cfg.step_size,
                local_steps: cfg.local_steps,
            })
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: LearnerFactory) {
        self.entries.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn create(&self, name: &str, cfg: &FlConfig) -> Result<Box<dyn Learner>, UnknownLearner> {
        match self.entries.get(name) {
            Some(f) => Ok(f(cfg)),
            None => Err(UnknownLearner(name.to_owned(), self.names().join(", "))),
        }
    }
}

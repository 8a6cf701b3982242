//! Verifiable learner numerics: per-device quadratics f_i(w) = ½‖A_i w − b_i‖²
//! with closed-form global minimizer. The numeric dimension is decoupled from
//! the radio payload size; payload bytes model communication only.

use crate::engine::RngStream;
use nalgebra::{DMatrix, DVector};

/// One device's local objective.
#[derive(Debug, Clone)]
pub struct DeviceQuadratic {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl DeviceQuadratic {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len());
        DeviceQuadratic { a, b }
    }

    /// 1-d objective ½(scale·w − target)², handy in tests.
    pub fn scalar(scale: f64, target: f64) -> Self {
        DeviceQuadratic {
            a: DMatrix::from_element(1, 1, scale),
            b: DVector::from_element(1, target),
        }
    }

    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        self.a.transpose() * (&self.a * w - &self.b)
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        let r = &self.a * w - &self.b;
        0.5 * r.dot(&r)
    }

    fn normal_matrix(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.a
    }
}

/// The distributed objective (1/N) Σ f_i with its closed-form minimizer.
#[derive(Debug, Clone)]
pub struct LearnerProblem {
    devices: Vec<DeviceQuadratic>,
    dim: usize,
}

impl LearnerProblem {
    pub fn new(devices: Vec<DeviceQuadratic>) -> Self {
        assert!(!devices.is_empty());
        let dim = devices[0].a.ncols();
        assert!(devices.iter().all(|d| d.a.ncols() == dim));
        LearnerProblem { devices, dim }
    }

    /// Random well-conditioned instance: each A_iᵀA_i has eigenvalues drawn
    /// uniformly from [1, condition], so gradient descent with a step below
    /// 2/(1 + condition) contracts geometrically.
    pub fn generate(rng: &mut RngStream, n_devices: usize, dim: usize, condition: f64) -> Self {
        assert!(n_devices >= 1 && dim >= 1 && condition >= 1.0);
        let devices = (0..n_devices)
            .map(|_| {
                let gauss = DMatrix::from_fn(dim, dim, |_, _| rng.normal(0.0, 1.0));
                let q = gauss.qr().q();
                let scales = DVector::from_fn(dim, |_, _| rng.range(1.0, condition).sqrt());
                let a = DMatrix::from_diagonal(&scales) * q.transpose();
                let b = DVector::from_fn(dim, |_, _| rng.normal(0.0, 1.0));
                DeviceQuadratic::new(a, b)
            })
            .collect();
        LearnerProblem::new(devices)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn device(&self, i: usize) -> &DeviceQuadratic {
        &self.devices[i]
    }

    pub fn mean_gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for d in &self.devices {
            g += d.gradient(w);
        }
        g / self.devices.len() as f64
    }

    /// Closed-form minimizer of the average objective: solves
    /// (Σ A_iᵀA_i) w = Σ A_iᵀ b_i.
    pub fn minimizer(&self) -> DVector<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        let mut rhs = DVector::zeros(self.dim);
        for d in &self.devices {
            h += d.normal_matrix();
            rhs += d.a.transpose() * &d.b;
        }
        h.lu().solve(&rhs).expect("aggregate normal matrix invertible")
    }
}

/// Monte-Carlo variance of the subset-mean gradient over uniformly sampled
/// n-subsets: average squared distance from the full-population mean
/// gradient. Test-harness companion to the first-n protocol.
pub fn subset_gradient_variance(
    problem: &LearnerProblem,
    w: &DVector<f64>,
    n: usize,
    draws: usize,
    rng: &mut RngStream,
) -> f64 {
    let total = problem.len();
    assert!(n >= 1 && n <= total);
    let grads: Vec<DVector<f64>> = (0..total).map(|i| problem.device(i).gradient(w)).collect();
    let full_mean = problem.mean_gradient(w);
    let mut indices: Vec<usize> = (0..total).collect();
    let mut acc = 0.0;
    for _ in 0..draws {
        // Partial Fisher-Yates: the first n entries become a uniform subset.
        for k in 0..n {
            let j = k + rng.index(total - k);
            indices.swap(k, j);
        }
        let mut mean = DVector::zeros(problem.dim());
        for &i in &indices[..n] {
            mean += &grads[i];
        }
        mean /= n as f64;
        acc += (mean - &full_mean).norm_squared();
    }
    acc / draws as f64
}

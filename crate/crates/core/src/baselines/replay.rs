use alloc::collections::VecDeque;

use nalgebra::DVector;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::model::{log_softmax, LikelihoodFamily, Model};
use crate::{Error, Result};

/// One stored observation. `output = Some(k)` means only output `k` was
/// observed and `y` holds that single value.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub output: Option<usize>,
}

/// Fixed-capacity FIFO of examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Example>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidConfig("replay buffer capacity must be ≥ 1".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        })
    }

    pub fn push(&mut self, x: DVector<f64>, y: DVector<f64>) {
        self.push_example(Example { x, y, output: None });
    }

    pub fn push_example(&mut self, example: Example) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(example);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Example> {
        self.items.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Plugin negative log-likelihood of one observation (up to the Gaussian
/// normalizer for regression: `½ eᵀ R⁻¹ e`; `−Σ y log p` for classification).
pub fn negative_log_likelihood(model: &Model, theta: &DVector<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    match &model.family {
        LikelihoodFamily::GaussianRegression(_) => {
            let y_hat = model.forward(x, theta)?;
            let (_, a) = model.observation_moments(&y_hat)?;
            Ok(0.5 * (a * (y - y_hat)).norm_squared())
        }
        LikelihoodFamily::Categorical => {
            let logits = model.network.evaluate(x, theta)?;
            Ok(-y.dot(&log_softmax(&logits)))
        }
    }
}

/// Gradient of [`negative_log_likelihood`] with respect to `θ`.
pub fn nll_gradient(model: &Model, theta: &DVector<f64>, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (out, jac) = model.logits_with_jacobian(x, theta)?;
    match &model.family {
        LikelihoodFamily::GaussianRegression(_) => {
            let (_, a) = model.observation_moments(&out)?;
            Ok(-(jac.transpose() * (a.transpose() * (&a * (y - out)))))
        }
        LikelihoodFamily::Categorical => {
            let p = crate::model::softmax(&out);
            Ok(jac.transpose() * (p * y.sum() - y))
        }
    }
}

/// Gradient of the NLL of output `k` alone (regression only).
pub fn output_nll_gradient(model: &Model, theta: &DVector<f64>, x: &DVector<f64>, k: usize, y: f64) -> Result<DVector<f64>> {
    let (out, jac) = model.logits_with_jacobian(x, theta)?;
    let r = match &model.family {
        LikelihoodFamily::GaussianRegression(noise) => noise.matrix(out.len())[(k, k)],
        LikelihoodFamily::Categorical => {
            return Err(Error::InvalidConfig("single-output updates need a regression model".into()))
        }
    };
    if k >= out.len() {
        return Err(Error::DimensionMismatch {
            what: "selected output",
            expected: out.len(),
            found: k,
        });
    }
    Ok(jac.row(k).transpose() * (-(y - out[k]) / r))
}

/// SGD or Adam on the mean NLL of a FIFO replay buffer; online gradient
/// descent is the capacity-1 case.
#[derive(Debug, Clone)]
pub struct SgdReplay {
    pub params: DVector<f64>,
    pub buffer: ReplayBuffer,
    pub optimizer: Optimizer,
    pub inner_iters: usize,
    first_moment: DVector<f64>,
    second_moment: DVector<f64>,
    adam_steps: u32,
}

impl SgdReplay {
    pub fn new(params: DVector<f64>, capacity: usize, optimizer: Optimizer, inner_iters: usize) -> Result<Self> {
        if inner_iters == 0 {
            return Err(Error::InvalidConfig("inner_iters must be ≥ 1".into()));
        }
        let p = params.len();
        Ok(Self {
            params,
            buffer: ReplayBuffer::new(capacity)?,
            optimizer,
            inner_iters,
            first_moment: DVector::zeros(p),
            second_moment: DVector::zeros(p),
            adam_steps: 0,
        })
    }

    /// Appends `(x, y)` and takes `inner_iters` optimizer steps.
    pub fn step(&mut self, model: &Model, x: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        self.step_example(
            model,
            Example {
                x: x.clone(),
                y: y.clone(),
                output: None,
            },
        )
    }

    pub fn step_example(&mut self, model: &Model, example: Example) -> Result<()> {
        self.buffer.push_example(example);
        for _ in 0..self.inner_iters {
            let grad = self.buffer_gradient(model)?;
            self.apply(&grad);
        }
        Ok(())
    }

    fn buffer_gradient(&self, model: &Model) -> Result<DVector<f64>> {
        let mut grad = DVector::zeros(self.params.len());
        for ex in self.buffer.iter() {
            grad += match ex.output {
                None => nll_gradient(model, &self.params, &ex.x, &ex.y)?,
                Some(k) => output_nll_gradient(model, &self.params, &ex.x, k, ex.y[0])?,
            };
        }
        grad /= self.buffer.len() as f64;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged(alloc::format!("non-finite gradient at parameter {i} with buffer size {}", self.buffer.len())));
        }
        Ok(grad)
    }

    fn apply(&mut self, grad: &DVector<f64>) {
        match self.optimizer {
            Optimizer::Sgd { lr } => self.params.axpy(-lr, grad, 1.0),
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                self.adam_steps += 1;
                let t = self.adam_steps as i32;
                self.first_moment = &self.first_moment * beta1 + grad * (1.0 - beta1);
                self.second_moment = &self.second_moment * beta2 + grad.component_mul(grad) * (1.0 - beta2);
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for j in 0..self.params.len() {
                    let m_hat = self.first_moment[j] / c1;
                    let v_hat = self.second_moment[j] / c2;
                    self.params[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

//! Differentiable observation models `h(x, θ)` and their moment-matched
//! Gaussian linearization.
//!
//! MLP parameters are flattened layer by layer: the weight matrix of each
//! layer in row-major order (`W[out][in]`), then that layer's biases. Hidden
//! layers apply the activation; the last layer is linear and produces the
//! regression outputs or the classification logits.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::linalg::{cholesky_whitener, pseudo_inverse_whitener};
use crate::rng::{seeded, standard_normal};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` (then
/// renormalized) before forming the categorical moment-matched covariance.
pub const PROB_CLAMP: f64 = 1e-7;
/// Eigenvalues of a categorical `R` at or below this are treated as its kernel.
pub const PINV_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activation: Activation,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl MlpSpec {
    /// `widths = [D, hidden..., C]`.
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig("an MLP needs at least input and output widths".into()));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidConfig("MLP widths must be positive".into()));
        }
        Ok(Self { widths, activation })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// `Σ_l (w_{l−1} + 1) · w_l`.
    pub fn parameter_count(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    fan_in: w[0],
                    fan_out: w[1],
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                };
                offset += (w[0] + 1) * w[1];
                layer
            })
            .collect()
    }

    fn check_inputs(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "model input",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        if theta.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.parameter_count(),
                found: theta.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer plus the activations feeding each layer.
    fn trace(&self, x: &DVector<f64>, theta: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let layers = self.layers();
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(layers.len());
        for (li, layer) in layers.iter().enumerate() {
            let a = &inputs[li];
            let z = DVector::from_fn(layer.fan_out, |o, _| {
                let row = layer.weight_offset + o * layer.fan_in;
                let mut s = theta[layer.bias_offset + o];
                for i in 0..layer.fan_in {
                    s += theta[row + i] * a[i];
                }
                s
            });
            if li + 1 < layers.len() {
                inputs.push(z.map(|v| self.activation.apply(v)));
            }
            pre.push(z);
        }
        (pre, inputs)
    }

    /// Raw network outputs (logits for classification).
    pub fn evaluate(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_inputs(x, theta)?;
        let (mut pre, _) = self.trace(x, theta);
        Ok(pre.pop().unwrap())
    }

    /// Raw outputs and their C×P Jacobian, by layer-wise backward accumulation.
    pub fn evaluate_with_jacobian(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_inputs(x, theta)?;
        let layers = self.layers();
        let (pre, inputs) = self.trace(x, theta);
        let c = self.output_dim();
        let mut jac = DMatrix::zeros(c, self.parameter_count());
        // sensitivity of each output to the current layer's pre-activations
        let mut sens = DMatrix::<f64>::identity(c, c);
        for li in (0..layers.len()).rev() {
            let layer = layers[li];
            let a = &inputs[li];
            for o in 0..layer.fan_out {
                let row = layer.weight_offset + o * layer.fan_in;
                for k in 0..c {
                    let g = sens[(k, o)];
                    jac[(k, layer.bias_offset + o)] = g;
                    for i in 0..layer.fan_in {
                        jac[(k, row + i)] = g * a[i];
                    }
                }
            }
            if li > 0 {
                let z_prev = &pre[li - 1];
                let mut next = DMatrix::zeros(c, layer.fan_in);
                for k in 0..c {
                    for i in 0..layer.fan_in {
                        let mut s = 0.0;
                        for o in 0..layer.fan_out {
                            s += sens[(k, o)] * theta[layer.weight_offset + o * layer.fan_in + i];
                        }
                        next[(k, i)] = s * self.activation.derivative(z_prev[i]);
                    }
                }
                sens = next;
            }
        }
        Ok((pre.last().unwrap().clone(), jac))
    }

    /// LeCun-normal weights (`N(0, 1/fan_in)`), zero biases.
    pub fn lecun_normal(&self, seed: u64) -> DVector<f64> {
        let mut rng = seeded(seed);
        let mut theta = DVector::zeros(self.parameter_count());
        for layer in self.layers() {
            let sd = 1.0 / (layer.fan_in as f64).sqrt();
            for j in 0..layer.fan_in * layer.fan_out {
                theta[layer.weight_offset + j] = sd * standard_normal(&mut rng);
            }
        }
        theta
    }

    /// Indices of all bias parameters, in flattening order.
    pub fn bias_indices(&self) -> Vec<usize> {
        self.layers()
            .iter()
            .flat_map(|l| l.bias_offset..l.bias_offset + l.fan_out)
            .collect()
    }

    /// Pre-activations of the hidden layers (used to keep finite-difference
    /// checks away from ReLU kinks).
    pub fn hidden_preactivations(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<Vec<f64>> {
        self.check_inputs(x, theta)?;
        let (pre, _) = self.trace(x, theta);
        let n = pre.len();
        Ok(pre.into_iter().take(n - 1).flat_map(|z| z.iter().copied().collect::<Vec<_>>()).collect())
    }
}

pub type EvalFn = fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>;
pub type JacobianFn = fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64>;

/// A hand-written observation function with an analytic Jacobian; used for
/// toy problems (constant, cubic, linear-without-bias) in tests and oracles.
#[derive(Debug, Clone, Copy)]
pub struct CustomNet {
    pub input_dim: usize,
    pub output_dim: usize,
    pub parameter_count: usize,
    pub eval: EvalFn,
    pub jacobian: JacobianFn,
}

#[derive(Debug, Clone)]
pub enum Network {
    Mlp(MlpSpec),
    Custom(CustomNet),
}

impl Network {
    pub fn input_dim(&self) -> usize {
        match self {
            Network::Mlp(m) => m.input_dim(),
            Network::Custom(c) => c.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Network::Mlp(m) => m.output_dim(),
            Network::Custom(c) => c.output_dim,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Network::Mlp(m) => m.parameter_count(),
            Network::Custom(c) => c.parameter_count,
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Network::Mlp(m) => m.evaluate(x, theta),
            Network::Custom(c) => {
                check_custom(c, x, theta)?;
                Ok((c.eval)(x, theta))
            }
        }
    }

    pub fn evaluate_with_jacobian(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        match self {
            Network::Mlp(m) => m.evaluate_with_jacobian(x, theta),
            Network::Custom(c) => {
                check_custom(c, x, theta)?;
                Ok(((c.eval)(x, theta), (c.jacobian)(x, theta)))
            }
        }
    }
}

fn check_custom(c: &CustomNet, x: &DVector<f64>, theta: &DVector<f64>) -> Result<()> {
    if x.len() != c.input_dim {
        return Err(Error::DimensionMismatch {
            what: "model input",
            expected: c.input_dim,
            found: x.len(),
        });
    }
    if theta.len() != c.parameter_count {
        return Err(Error::DimensionMismatch {
            what: "parameter vector",
            expected: c.parameter_count,
            found: theta.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObsNoise {
    /// `R · I_C`.
    Scalar(f64),
    Full(DMatrix<f64>),
}

impl ObsNoise {
    pub fn matrix(&self, c: usize) -> DMatrix<f64> {
        match self {
            ObsNoise::Scalar(r) => DMatrix::identity(c, c) * *r,
            ObsNoise::Full(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodFamily {
    GaussianRegression(ObsNoise),
    /// Softmax over the network outputs, moment matched to a Gaussian.
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    LecunNormal,
}

/// Gaussian approximation of the likelihood around a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    /// `ŷ = h(x, μ)`: outputs or class probabilities.
    pub y_hat: DVector<f64>,
    /// `H`, C×P.
    pub jacobian: DMatrix<f64>,
    /// `R`, C×C.
    pub obs_cov: DMatrix<f64>,
    /// `A` with `AᵀA = R⁻¹` (or `R⁺` for categorical outputs).
    pub whitener: DMatrix<f64>,
}

impl Linearization {
    pub fn output_dim(&self) -> usize {
        self.y_hat.len()
    }

    /// `Hᵀ Aᵀ`, the P×C block appended to the low-rank factor.
    pub fn whitened_jacobian_t(&self) -> DMatrix<f64> {
        self.jacobian.transpose() * self.whitener.transpose()
    }

    /// `Hᵀ R⁻¹ e` for the innovation `e = y − ŷ`.
    pub fn information_gradient(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let e = self.innovation(y)?;
        Ok(self.jacobian.transpose() * (self.whitener.transpose() * (&self.whitener * e)))
    }

    pub fn innovation(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.y_hat.len() {
            return Err(Error::DimensionMismatch {
                what: "observation",
                expected: self.y_hat.len(),
                found: y.len(),
            });
        }
        let e = y - &self.y_hat;
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("innovation"));
        }
        Ok(e)
    }

    /// Keeps only output `row` (a masked single-head observation).
    pub fn select_output(&self, row: usize) -> Result<Linearization> {
        let c = self.output_dim();
        if row >= c {
            return Err(Error::DimensionMismatch {
                what: "selected output",
                expected: c,
                found: row,
            });
        }
        let r = self.obs_cov[(row, row)];
        if r.is_nan() || r <= 0.0 {
            return Err(Error::NotPositiveDefinite("selected output variance"));
        }
        Ok(Linearization {
            y_hat: DVector::from_element(1, self.y_hat[row]),
            jacobian: self.jacobian.rows(row, 1).into_owned(),
            obs_cov: DMatrix::from_element(1, 1, r),
            whitener: DMatrix::from_element(1, 1, 1.0 / r.sqrt()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub network: Network,
    pub family: LikelihoodFamily,
}

impl Model {
    pub fn new(network: Network, family: LikelihoodFamily) -> Result<Self> {
        if let LikelihoodFamily::GaussianRegression(noise) = &family {
            let c = network.output_dim();
            match noise {
                ObsNoise::Scalar(r) if !(r.is_finite() && *r > 0.0) => {
                    return Err(Error::InvalidConfig("regression variance must be positive".into()))
                }
                ObsNoise::Full(m) if m.shape() != (c, c) => {
                    return Err(Error::DimensionMismatch {
                        what: "observation covariance",
                        expected: c,
                        found: m.nrows(),
                    })
                }
                _ => {}
            }
        }
        Ok(Self { network, family })
    }

    pub fn mlp(spec: MlpSpec, family: LikelihoodFamily) -> Result<Self> {
        Self::new(Network::Mlp(spec), family)
    }

    pub fn parameter_count(&self) -> usize {
        self.network.parameter_count()
    }

    pub fn output_dim(&self) -> usize {
        self.network.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.network.input_dim()
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self.family, LikelihoodFamily::Categorical)
    }

    /// `h(x, θ)`: raw outputs for regression, softmax probabilities for classification.
    pub fn forward(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.network.evaluate(x, theta)?;
        Ok(match self.family {
            LikelihoodFamily::GaussianRegression(_) => out,
            LikelihoodFamily::Categorical => softmax(&out),
        })
    }

    /// Jacobian of [`Model::forward`] (of the probabilities, for classification).
    pub fn jacobian(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_with_jacobian(x, theta)?.1)
    }

    pub fn forward_with_jacobian(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (out, jac) = self.network.evaluate_with_jacobian(x, theta)?;
        Ok(match self.family {
            LikelihoodFamily::GaussianRegression(_) => (out, jac),
            LikelihoodFamily::Categorical => {
                let p = softmax(&out);
                let ds = DMatrix::from_diagonal(&p) - &p * p.transpose();
                let j = ds * jac;
                (p, j)
            }
        })
    }

    /// Logits and logit Jacobian `F` (identical to outputs/`H` for regression).
    pub fn logits_with_jacobian(&self, x: &DVector<f64>, theta: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.network.evaluate_with_jacobian(x, theta)
    }

    /// Observation covariance and whitener for predicted outputs `y_hat`.
    pub fn observation_moments(&self, y_hat: &DVector<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let c = y_hat.len();
        match &self.family {
            LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(r)) => {
                Ok((DMatrix::identity(c, c) * *r, DMatrix::identity(c, c) / r.sqrt()))
            }
            LikelihoodFamily::GaussianRegression(ObsNoise::Full(m)) => Ok((m.clone(), cholesky_whitener(m)?)),
            LikelihoodFamily::Categorical => {
                let p = clamp_probabilities(y_hat);
                let r = DMatrix::from_diagonal(&p) - &p * p.transpose();
                let a = pseudo_inverse_whitener(&r, PINV_TOL)?;
                Ok((r, a))
            }
        }
    }

    pub fn linearize(&self, x: &DVector<f64>, mu: &DVector<f64>) -> Result<Linearization> {
        let (y_hat, jacobian) = self.forward_with_jacobian(x, mu)?;
        if y_hat.iter().chain(jacobian.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model output or Jacobian"));
        }
        let (obs_cov, whitener) = self.observation_moments(&y_hat)?;
        Ok(Linearization {
            y_hat,
            jacobian,
            obs_cov,
            whitener,
        })
    }

    pub fn initialize_mean(&self, scheme: InitScheme, seed: u64) -> DVector<f64> {
        match (scheme, &self.network) {
            (InitScheme::LecunNormal, Network::Mlp(m)) => m.lecun_normal(seed),
            (InitScheme::LecunNormal, Network::Custom(c)) => {
                let mut rng = seeded(seed);
                DVector::from_fn(c.parameter_count, |_, _| standard_normal(&mut rng))
            }
        }
    }
}

pub fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let m = z.max();
    let e = z.map(|v| (v - m).exp());
    let s = e.sum();
    e / s
}

pub fn log_softmax(z: &DVector<f64>) -> DVector<f64> {
    let m = z.max();
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.map(|v| v - lse)
}

fn clamp_probabilities(p: &DVector<f64>) -> DVector<f64> {
    let c = p.map(|v| v.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP));
    let s = c.sum();
    c / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sorted_symmetric_eigen;
    use crate::rng::standard_normal_vector;

    fn regression(widths: Vec<usize>, act: Activation) -> Model {
        Model::mlp(MlpSpec::new(widths, act).unwrap(), LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(1.0))).unwrap()
    }

    #[test]
    fn parameter_count_formula() {
        let m = MlpSpec::new(vec![8, 50, 1], Activation::Relu).unwrap();
        assert_eq!(m.parameter_count(), (8 + 1) * 50 + 50 + 1);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let m = regression(vec![3, 4, 2], Activation::Tanh);
        let y = m.forward(&DVector::from_vec(vec![1.0, -2.0, 0.5]), &DVector::zeros(m.parameter_count())).unwrap();
        assert_eq!(y, DVector::zeros(2));
    }

    #[test]
    fn single_linear_layer_by_hand() {
        let m = regression(vec![2, 2], Activation::Relu);
        // W = [[1, 0], [0, 1]], b = [0.5, -1]
        let theta = DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 0.5, -1.0]);
        let y = m.forward(&DVector::from_vec(vec![1.0, 2.0]), &theta).unwrap();
        assert_eq!(y, DVector::from_vec(vec![1.5, 1.0]));
    }

    #[test]
    fn linear_model_jacobian_is_input() {
        let m = regression(vec![3, 1], Activation::Relu);
        let x = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let j = m.jacobian(&x, &standard_normal_vector(&mut seeded(1), 4)).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(1, 4, &[0.3, -1.2, 2.0, 1.0]));
    }

    #[test]
    fn constant_model_jacobian_is_zero() {
        fn eval(_: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, 3.0)
        }
        fn jac(_: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, t.len())
        }
        let net = CustomNet {
            input_dim: 1,
            output_dim: 1,
            parameter_count: 2,
            eval,
            jacobian: jac,
        };
        let m = Model::new(Network::Custom(net), LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(1.0))).unwrap();
        let j = m.jacobian(&DVector::zeros(1), &DVector::zeros(2)).unwrap();
        assert_eq!(j, DMatrix::zeros(1, 2));
    }

    #[test]
    fn forward_matches_independent_evaluation() {
        let m = regression(vec![2, 4, 1], Activation::Tanh);
        let theta = m.initialize_mean(InitScheme::LecunNormal, 3);
        let x = [0.5, -1.0];
        // layout: W₁ (4×2, row-major), b₁, W₂ (1×4), b₂
        let t = theta.as_slice();
        let mut out = t[12 + 4];
        for o in 0..4 {
            let z = t[o * 2] * x[0] + t[o * 2 + 1] * x[1] + t[8 + o];
            out += t[12 + o] * z.tanh();
        }
        let y = m.forward(&DVector::from_vec(x.to_vec()), &theta).unwrap();
        assert!((y[0] - out).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = regression(vec![2, 3, 2], Activation::Tanh);
        let theta = m.initialize_mean(InitScheme::LecunNormal, 9) + standard_normal_vector(&mut seeded(10), 17) * 0.1;
        let x = DVector::from_vec(vec![0.7, -0.4]);
        let jac = m.jacobian(&x, &theta).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fd = (m.forward(&x, &tp).unwrap() - m.forward(&x, &tm).unwrap()) / (2.0 * h);
            for c in 0..2 {
                let err = (fd[c] - jac[(c, k)]).abs() / jac[(c, k)].abs().max(1e-3);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn width_mismatch_errors() {
        let m = regression(vec![2, 3, 1], Activation::Tanh);
        let r = m.forward(&DVector::zeros(2), &DVector::zeros(3));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let r = m.forward(&DVector::zeros(5), &DVector::zeros(m.parameter_count()));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let m = Model::mlp(MlpSpec::new(vec![2, 5, 4], Activation::Tanh).unwrap(), LikelihoodFamily::Categorical).unwrap();
        let theta = m.initialize_mean(InitScheme::LecunNormal, 2);
        let p = m.forward(&DVector::from_vec(vec![0.3, 0.9]), &theta).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12);
        let z = DVector::from_vec(vec![0.1, 2.0, -1.0]);
        let shifted = z.add_scalar(37.5);
        assert!((softmax(&z) - softmax(&shifted)).amax() < 1e-12);
    }

    #[test]
    fn binary_moment_matching() {
        let m = Model::mlp(MlpSpec::new(vec![1, 2], Activation::Relu).unwrap(), LikelihoodFamily::Categorical).unwrap();
        let (r, _) = m.observation_moments(&DVector::from_vec(vec![0.5, 0.5])).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 2, &[0.25, -0.25, -0.25, 0.25]));
    }

    #[test]
    fn regression_whitener_scalar() {
        let m = Model::mlp(
            MlpSpec::new(vec![1, 1], Activation::Relu).unwrap(),
            LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(2.0)),
        )
        .unwrap();
        let (_, a) = m.observation_moments(&DVector::zeros(1)).unwrap();
        assert!((a[(0, 0)] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn three_class_moments_and_pseudo_inverse() {
        let m = Model::mlp(MlpSpec::new(vec![1, 3], Activation::Relu).unwrap(), LikelihoodFamily::Categorical).unwrap();
        let p = [0.2, 0.3, 0.5];
        let (r, a) = m.observation_moments(&DVector::from_vec(p.to_vec())).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { p[i] - p[i] * p[i] } else { -p[i] * p[j] };
                assert!((r[(i, j)] - expected).abs() < 1e-15);
            }
            assert!(r.row(i).sum().abs() < 1e-12);
        }
        let ata = a.transpose() * &a;
        assert!((&ata * &r * &ata - &ata).amax() < 1e-9);
        let (vals, _) = sorted_symmetric_eigen(r).unwrap();
        assert!(vals.min() >= -1e-12);
        assert!(vals[2].abs() < 1e-12);
    }

    #[test]
    fn saturated_probabilities_are_clamped() {
        let m = Model::mlp(MlpSpec::new(vec![1, 2], Activation::Relu).unwrap(), LikelihoodFamily::Categorical).unwrap();
        let (r, a) = m.observation_moments(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(r[(0, 0)] > 0.0);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn kernel_direction_does_not_change_information() {
        let m = Model::mlp(MlpSpec::new(vec![2, 3, 3], Activation::Tanh).unwrap(), LikelihoodFamily::Categorical).unwrap();
        let theta = m.initialize_mean(InitScheme::LecunNormal, 5);
        let lin = m.linearize(&DVector::from_vec(vec![0.4, -0.7]), &theta).unwrap();
        // Hᵀ 1 = 0 for the softmax Jacobian, so shifting y by a constant is invisible
        let ones = DVector::from_element(3, 1.0);
        assert!((lin.jacobian.transpose() * ones).amax() < 1e-14);
    }

    #[test]
    fn lecun_biases_zero_and_reproducible() {
        let spec = MlpSpec::new(vec![4, 6, 2], Activation::Relu).unwrap();
        let a = spec.lecun_normal(11);
        let b = spec.lecun_normal(11);
        assert_eq!(a, b);
        for i in spec.bias_indices() {
            assert_eq!(a[i], 0.0);
        }
    }

    #[test]
    fn lecun_variance_matches_fan_in() {
        let spec = MlpSpec::new(vec![4, 1], Activation::Relu).unwrap();
        let n = 10_000u64;
        let mut sum_sq = 0.0;
        let mut count = 0.0;
        for seed in 0..n {
            let t = spec.lecun_normal(seed);
            for i in 0..4 {
                sum_sq += t[i] * t[i];
                count += 1.0;
            }
        }
        let var = sum_sq / count;
        assert!((var - 0.25).abs() < 0.05 * 0.25, "variance {var}");
    }
}

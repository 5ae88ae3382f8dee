use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::belief::{DenseBelief, SphericalBelief};
use crate::linalg::{cholesky, symmetrize, thin_svd};
use crate::lofi::spherical::top_singular_pairs;
use crate::model::Model;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IteratedConfig {
    pub num_iters: usize,
    /// Candidates `k / grid` for `k = 1..=grid` when the full step is rejected.
    pub linesearch_grid: usize,
}

impl Default for IteratedConfig {
    fn default() -> Self {
        Self {
            num_iters: 1,
            linesearch_grid: 10,
        }
    }
}

impl IteratedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_iters == 0 || self.linesearch_grid == 0 {
            return Err(Error::InvalidConfig("iterated updates need num_iters ≥ 1 and linesearch_grid ≥ 1".into()));
        }
        Ok(())
    }
}

/// Result of an iterated update plus its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterated<B> {
    pub belief: B,
    /// Quadratic cost at the predicted mean, then after each iteration.
    pub costs: Vec<f64>,
    /// Accepted step size of each iteration (0 when nothing improved).
    pub step_sizes: Vec<f64>,
}

/// Accepts the full step when it does not increase the cost; otherwise the
/// best strictly improving grid point, or no move at all.
fn line_search<F>(cost: &F, mu: &DVector<f64>, delta: &DVector<f64>, current: f64, grid: usize) -> Result<(f64, f64)>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let full = cost(&(mu + delta))?;
    if full <= current {
        return Ok((1.0, full));
    }
    let mut best = (0.0, current);
    for k in 1..=grid {
        let alpha = k as f64 / grid as f64;
        let c = cost(&(mu + delta * alpha))?;
        if c.is_finite() && c < best.1 {
            best = (alpha, c);
        }
    }
    Ok(best)
}

/// `½ ‖A (y − h(x, μ))‖²` with `A` fixed at the predicted mean's linearization.
fn data_cost(model: &Model, x: &DVector<f64>, y: &DVector<f64>, a: &DMatrix<f64>, mu: &DVector<f64>) -> Result<f64> {
    let r = y - model.forward(x, mu)?;
    Ok(0.5 * (a * r).norm_squared())
}

/// Relinearizing EKF update with a line search on
/// `½‖A(y − h)‖² + ½ (μ − μ_pred)ᵀ Σ_pred⁻¹ (μ − μ_pred)`.
///
/// Iteration `i` linearizes at `μ_i`, forms the Gauss-Newton target
/// `μ_pred + K_i (y − h_i − H_i (μ_pred − μ_i))` and moves toward it. The
/// final precision uses the Jacobian of the last linearization.
pub fn iterated_ekf_update(
    b_pred: &DenseBelief,
    model: &Model,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &IteratedConfig,
) -> Result<Iterated<DenseBelief>> {
    cfg.validate()?;
    let mu_pred = &b_pred.mean;
    let first = model.linearize(x, mu_pred)?;
    let a = first.whitener.clone();
    let a_sq = a.transpose() * &a;
    let cost = |mu: &DVector<f64>| -> Result<f64> {
        let d = mu - mu_pred;
        Ok(data_cost(model, x, y, &a, mu)? + 0.5 * d.dot(&(&b_pred.precision * &d)))
    };

    let mut mu = mu_pred.clone();
    let mut current = cost(&mu)?;
    let mut costs = alloc::vec![current];
    let mut step_sizes = Vec::with_capacity(cfg.num_iters);
    let mut lin = first;
    let mut last_h = lin.jacobian.clone();
    for i in 0..cfg.num_iters {
        if i > 0 {
            lin = model.linearize(x, &mu)?;
        }
        let h = &lin.jacobian;
        let residual = lin.innovation(y)? - h * (mu_pred - &mu);
        let mut prec = &b_pred.precision + h.transpose() * &a_sq * h;
        symmetrize(&mut prec);
        let target = mu_pred + cholesky(prec, "iterated posterior precision")?.solve(&(h.transpose() * (&a_sq * residual)));
        let delta = target - &mu;
        let (alpha, c) = line_search(&cost, &mu, &delta, current, cfg.linesearch_grid)?;
        mu += delta * alpha;
        current = c;
        costs.push(c);
        step_sizes.push(alpha);
        last_h = h.clone();
    }
    let mut precision = &b_pred.precision + last_h.transpose() * &a_sq * &last_h;
    symmetrize(&mut precision);
    Ok(Iterated {
        belief: DenseBelief { mean: mu, precision },
        costs,
        step_sizes,
    })
}

/// Iterated spherical LO-FI update. Every iteration expands the *predicted*
/// factor `[U Λ | H_iᵀ Aᵀ]`, takes its full thin SVD `Ū Λ̄`, and uses the gain
/// `(η⁻¹ I − Ū D Ūᵀ) H_iᵀ R⁻¹` with `D = Λ̄² / (η (η + Λ̄²))`. The final basis is
/// the top-L part of the last SVD; `η` is not changed.
pub fn iterated_lofi_update(
    b_pred: &SphericalBelief,
    model: &Model,
    x: &DVector<f64>,
    y: &DVector<f64>,
    cfg: &IteratedConfig,
) -> Result<Iterated<SphericalBelief>> {
    cfg.validate()?;
    let mu_pred = &b_pred.mean;
    let eta = b_pred.eta;
    let prior_factor = b_pred.low_rank();
    let first = model.linearize(x, mu_pred)?;
    if first.jacobian.ncols() != b_pred.dim() {
        return Err(Error::DimensionMismatch {
            what: "Jacobian columns",
            expected: b_pred.dim(),
            found: first.jacobian.ncols(),
        });
    }
    let a = first.whitener.clone();
    let a_sq = a.transpose() * &a;
    let cost = |mu: &DVector<f64>| -> Result<f64> {
        let d = mu - mu_pred;
        let prior = eta * d.norm_squared() + (prior_factor.transpose() * &d).norm_squared();
        Ok(data_cost(model, x, y, &a, mu)? + 0.5 * prior)
    };

    let (p, l) = (b_pred.dim(), b_pred.rank());
    let mut mu = mu_pred.clone();
    let mut current = cost(&mu)?;
    let mut costs = alloc::vec![current];
    let mut step_sizes = Vec::with_capacity(cfg.num_iters);
    let mut lin = first;
    let mut expanded = DMatrix::zeros(p, 0);
    for i in 0..cfg.num_iters {
        if i > 0 {
            lin = model.linearize(x, &mu)?;
        }
        let h = &lin.jacobian;
        let g = h.transpose() * a.transpose();
        expanded = DMatrix::zeros(p, l + g.ncols());
        expanded.columns_mut(0, l).copy_from(&prior_factor);
        expanded.columns_mut(l, g.ncols()).copy_from(&g);
        let svd = thin_svd(&expanded)?;
        let d = svd.singular_values.map(|s| s * s / (eta * (eta + s * s)));

        let residual = lin.innovation(y)? - h * (mu_pred - &mu);
        let info = h.transpose() * (&a_sq * residual);
        let coeff = (svd.left.transpose() * &info).component_mul(&d);
        let target = mu_pred + &info / eta - &svd.left * coeff;
        let delta = target - &mu;
        let (alpha, c) = line_search(&cost, &mu, &delta, current, cfg.linesearch_grid)?;
        mu += delta * alpha;
        current = c;
        costs.push(c);
        step_sizes.push(alpha);
    }
    let (basis, singular_values) = top_singular_pairs(&expanded, l)?;
    Ok(Iterated {
        belief: SphericalBelief {
            mean: mu,
            eta,
            basis,
            singular_values,
        },
        costs,
        step_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use crate::baselines::fcekf_update;
    use crate::lofi::spherical::update_spherical_svd;
    use crate::model::{Activation, CustomNet, InitScheme, LikelihoodFamily, MlpSpec, Network, ObsNoise};
    use crate::rng::{seeded, standard_normal_vector};
    use crate::testutil::random_spherical;

    fn linear_model(d: usize) -> Model {
        Model::mlp(MlpSpec::new(vec![d, 1], Activation::Relu).unwrap(), LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(0.4))).unwrap()
    }

    fn cubic() -> Model {
        fn eval(_: &DVector<f64>, t: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, t[0].powi(3))
        }
        fn jac(_: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, 3.0 * t[0] * t[0])
        }
        let net = CustomNet {
            input_dim: 1,
            output_dim: 1,
            parameter_count: 1,
            eval,
            jacobian: jac,
        };
        Model::new(Network::Custom(net), LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(0.1))).unwrap()
    }

    #[test]
    fn linear_model_iterations_agree_with_ekf() {
        let m = linear_model(3);
        let b = DenseBelief::new(DVector::from_vec(vec![0.1, -0.3, 0.2, 0.0]), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.5, 1.5]))).unwrap();
        let x = DVector::from_vec(vec![0.4, 1.0, -2.0]);
        let y = DVector::from_element(1, 1.3);
        let ekf = fcekf_update(&b, &m.linearize(&x, &b.mean).unwrap(), &y).unwrap();
        for n in [1, 5] {
            let out = iterated_ekf_update(&b, &m, &x, &y, &IteratedConfig { num_iters: n, linesearch_grid: 10 }).unwrap();
            assert!((&out.belief.mean - &ekf.mean).amax() < 1e-10);
            assert!((&out.belief.precision - &ekf.precision).amax() < 1e-10);
        }
    }

    #[test]
    fn zero_step_is_accepted() {
        // y equals the prediction and the mean sits at the prior: δ = 0
        let m = linear_model(2);
        let b = DenseBelief::from_prior(DVector::zeros(3), 1.0).unwrap();
        let out = iterated_ekf_update(&b, &m, &DVector::from_vec(vec![1.0, 1.0]), &DVector::zeros(1), &IteratedConfig::default()).unwrap();
        assert_eq!(out.step_sizes, vec![1.0]);
        assert_eq!(out.costs[0], out.costs[1]);
    }

    #[test]
    fn cubic_costs_never_increase() {
        let m = cubic();
        let b = DenseBelief::from_prior(DVector::from_element(1, 0.8), 4.0).unwrap();
        let out = iterated_ekf_update(&b, &m, &DVector::zeros(1), &DVector::from_element(1, 0.6), &IteratedConfig { num_iters: 8, linesearch_grid: 10 }).unwrap();
        assert!(out.costs.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.costs.last().unwrap() < &out.costs[0]);
    }

    #[test]
    fn single_ilofi_iteration_matches_spherical_update() {
        let m = Model::mlp(MlpSpec::new(vec![2, 3, 1], Activation::Tanh).unwrap(), LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(0.5))).unwrap();
        let mut b = random_spherical(12, m.parameter_count(), 2);
        b.mean = m.initialize_mean(InitScheme::LecunNormal, 3);
        let x = DVector::from_vec(vec![0.2, -0.4]);
        let lin = m.linearize(&x, &b.mean).unwrap();
        let y = &lin.y_hat + DVector::from_element(1, 0.05);
        let reference = update_spherical_svd(&b, &lin, &y).unwrap();
        let out = iterated_lofi_update(&b, &m, &x, &y, &IteratedConfig::default()).unwrap();
        assert_eq!(out.step_sizes, vec![1.0]);
        assert!((&out.belief.mean - &reference.mean).amax() < 1e-9);
        assert!((&out.belief.singular_values - &reference.singular_values).amax() < 1e-9);
    }

    #[test]
    fn ilofi_zero_jacobian_keeps_mean() {
        fn eval(_: &DVector<f64>, _: &DVector<f64>) -> DVector<f64> {
            DVector::from_element(1, 1.0)
        }
        fn jac(_: &DVector<f64>, t: &DVector<f64>) -> DMatrix<f64> {
            DMatrix::zeros(1, t.len())
        }
        let net = CustomNet {
            input_dim: 1,
            output_dim: 1,
            parameter_count: 4,
            eval,
            jacobian: jac,
        };
        let m = Model::new(Network::Custom(net), LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(1.0))).unwrap();
        let b = random_spherical(1, 4, 2);
        let out = iterated_lofi_update(&b, &m, &DVector::zeros(1), &DVector::from_element(1, 3.0), &IteratedConfig { num_iters: 4, linesearch_grid: 10 }).unwrap();
        assert_eq!(out.belief.mean, b.mean);
    }

    #[test]
    fn ilofi_linear_model_is_iteration_invariant() {
        let m = linear_model(3);
        let b = random_spherical(5, 4, 2);
        let x = standard_normal_vector(&mut seeded(6), 3);
        let y = DVector::from_element(1, 0.9);
        let one = iterated_lofi_update(&b, &m, &x, &y, &IteratedConfig { num_iters: 1, linesearch_grid: 10 }).unwrap();
        let three = iterated_lofi_update(&b, &m, &x, &y, &IteratedConfig { num_iters: 3, linesearch_grid: 10 }).unwrap();
        assert!((&one.belief.mean - &three.belief.mean).amax() < 1e-10);
        assert!((&one.belief.singular_values - &three.belief.singular_values).amax() < 1e-10);
    }
}

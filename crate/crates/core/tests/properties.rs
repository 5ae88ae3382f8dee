//! Invariants checked over randomly generated models and streams.

use lofi_core::baselines::{fcekf_step, iterated_ekf_update, vdekf_step, IteratedConfig};
use lofi_core::belief::{DenseBelief, DlrBelief, SphericalBelief};
use lofi_core::linalg::{cholesky, frobenius_relative_error};
use lofi_core::lofi::spherical::{predict_spherical, step_spherical, BasisUpdate};
use lofi_core::lofi::{diagonal, DynamicsConfig};
use lofi_core::model::{Activation, InitScheme, LikelihoodFamily, MlpSpec, Model, ObsNoise};
use lofi_core::rng::{seeded, standard_normal_vector};
use lofi_core::{DMatrix, DVector};
use proptest::prelude::*;

fn regression(widths: Vec<usize>, act: Activation, r: f64) -> Model {
    Model::mlp(MlpSpec::new(widths, act).unwrap(), LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(r))).unwrap()
}

fn classifier(widths: Vec<usize>) -> Model {
    Model::mlp(MlpSpec::new(widths, Activation::Tanh).unwrap(), LikelihoodFamily::Categorical).unwrap()
}

/// Inputs and targets from a random teacher of the same architecture.
fn teacher_stream(model: &Model, n: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let teacher = model.initialize_mean(InitScheme::LecunNormal, seed ^ 0xABCD);
    let mut rng = seeded(seed);
    (0..n)
        .map(|_| {
            let x = standard_normal_vector(&mut rng, model.input_dim());
            let out = model.forward(&x, &teacher).unwrap();
            let y = if model.is_classifier() {
                let k = out.argmax().0;
                DVector::from_fn(out.len(), |i, _| if i == k { 1.0 } else { 0.0 })
            } else {
                out + standard_normal_vector(&mut rng, model.output_dim()) * 0.1
            };
            (x, y)
        })
        .collect()
}

fn dynamics() -> impl Strategy<Value = DynamicsConfig> {
    (0.9f64..=1.0, prop_oneof![Just(0.0), 1e-5f64..1e-2], 0.1f64..10.0)
        .prop_map(|(g, q, eta)| DynamicsConfig::new(g, q, eta).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lofi_precision_stays_positive_definite(seed in 0u64..1000, rank in 0usize..4, dynamics in dynamics(), classify in any::<bool>()) {
        let model = if classify { classifier(vec![3, 4, 3]) } else { regression(vec![3, 4, 2], Activation::Relu, 0.2) };
        let mut b = DlrBelief::from_prior(model.initialize_mean(InitScheme::LecunNormal, seed), dynamics.initial_precision, rank).unwrap();
        for (x, y) in teacher_stream(&model, 40, seed) {
            b = diagonal::step(&b, &x, &y, &model, &dynamics, rank).unwrap().0;
            prop_assert!(b.diag_precision.iter().all(|&v| v > 0.0 && v.is_finite()));
            prop_assert!(cholesky(b.to_dense().unwrap().precision, "test").is_ok());
        }
    }

    #[test]
    fn truncation_keeps_diagonal_exact(seed in 0u64..1000, rank in 0usize..4, dynamics in dynamics()) {
        let model = regression(vec![2, 5, 2], Activation::Tanh, 0.5);
        let mut b = DlrBelief::from_prior(model.initialize_mean(InitScheme::LecunNormal, seed), dynamics.initial_precision, rank).unwrap();
        for (x, y) in teacher_stream(&model, 30, seed) {
            let pred = diagonal::predict(&b, &dynamics).unwrap();
            let lin = model.linearize(&x, &pred.mean).unwrap();
            let full = diagonal::expanded_factor(&pred, &lin).unwrap();
            let untruncated: DVector<f64> = DVector::from_fn(full.nrows(), |i, _| pred.diag_precision[i] + full.row(i).norm_squared());
            b = diagonal::update(&pred, &lin, &y, rank).unwrap();
            let kept: DVector<f64> = DVector::from_fn(full.nrows(), |i, _| b.diag_precision[i] + b.low_rank.row(i).norm_squared());
            prop_assert!((&kept - &untruncated).amax() <= 1e-10 * untruncated.amax());
        }
    }

    #[test]
    fn zero_rank_is_vdekf(seed in 0u64..1000, dynamics in dynamics()) {
        let model = regression(vec![2, 4, 1], Activation::Tanh, 0.3);
        let mu0 = model.initialize_mean(InitScheme::LecunNormal, seed);
        let mut a = DlrBelief::from_prior(mu0.clone(), dynamics.initial_precision, 0).unwrap();
        let mut b = a.clone();
        for (x, y) in teacher_stream(&model, 50, seed) {
            a = diagonal::step(&a, &x, &y, &model, &dynamics, 0).unwrap().0;
            b = vdekf_step(&b, &model, &x, &y, &dynamics).unwrap().0;
            prop_assert!((&a.mean - &b.mean).amax() <= 1e-10 * (1.0 + b.mean.amax()));
            prop_assert!((&a.diag_precision - &b.diag_precision).amax() <= 1e-10 * b.diag_precision.amax());
        }
    }

    #[test]
    fn full_rank_is_fcekf(seed in 0u64..1000, dynamics in dynamics()) {
        let model = regression(vec![2, 3, 1], Activation::Tanh, 0.3);
        let p = model.parameter_count();
        let mu0 = model.initialize_mean(InitScheme::LecunNormal, seed);
        let mut a = DlrBelief::from_prior(mu0.clone(), dynamics.initial_precision, p).unwrap();
        let mut b = DenseBelief::from_prior(mu0, dynamics.initial_precision).unwrap();
        for (x, y) in teacher_stream(&model, 30, seed) {
            a = diagonal::step(&a, &x, &y, &model, &dynamics, p).unwrap().0;
            b = fcekf_step(&b, &model, &x, &y, &dynamics).unwrap().0;
        }
        prop_assert!((&a.mean - &b.mean).norm() <= 1e-8 * b.mean.norm().max(1.0));
        prop_assert!(frobenius_relative_error(&a.to_dense().unwrap().precision, &b.precision) < 1e-8);
    }

    #[test]
    fn conjugate_models_give_analytic_posterior(seed in 0u64..1000, eta in 0.1f64..5.0, r in 0.05f64..2.0, iters in 1usize..5) {
        let model = regression(vec![3, 2], Activation::Relu, r);
        let p = model.parameter_count();
        let dynamics = DynamicsConfig::stationary(eta).unwrap();
        let mu0 = standard_normal_vector(&mut seeded(seed), p);
        let data = teacher_stream(&model, 25, seed);
        // natural-parameter accumulation
        let mut lambda = DMatrix::identity(p, p) * eta;
        let mut nu = &mu0 * eta;
        for (x, y) in &data {
            let j = model.jacobian(x, &mu0).unwrap();
            let offset = model.forward(x, &mu0).unwrap() - &j * &mu0;
            lambda += j.transpose() * &j / r;
            nu += j.transpose() * (y - offset) / r;
        }
        let mean = cholesky(lambda.clone(), "oracle").unwrap().solve(&nu);
        let mut fc = DenseBelief::from_prior(mu0.clone(), eta).unwrap();
        let mut lo = DlrBelief::from_prior(mu0.clone(), eta, p).unwrap();
        let mut ie = DenseBelief::from_prior(mu0, eta).unwrap();
        let cfg = IteratedConfig { num_iters: iters, linesearch_grid: 10 };
        for (x, y) in &data {
            fc = fcekf_step(&fc, &model, x, y, &dynamics).unwrap().0;
            lo = diagonal::step(&lo, x, y, &model, &dynamics, p).unwrap().0;
            ie = iterated_ekf_update(&ie, &model, x, y, &cfg).unwrap().belief;
        }
        for (m, prec) in [(&fc.mean, fc.precision.clone()), (&lo.mean, lo.to_dense().unwrap().precision), (&ie.mean, ie.precision.clone())] {
            prop_assert!((m - &mean).norm() <= 1e-8 * mean.norm().max(1.0));
            prop_assert!(frobenius_relative_error(&prec, &lambda) < 1e-8);
        }
    }

    #[test]
    fn jacobians_match_finite_differences(seed in 0u64..1000, which in 0usize..4) {
        let model = match which {
            0 => regression(vec![2, 3, 2], Activation::Tanh, 1.0),
            1 => regression(vec![3, 5, 4, 1], Activation::Relu, 1.0),
            2 => regression(vec![1, 50, 1], Activation::Tanh, 1.0),
            _ => classifier(vec![4, 6, 3]),
        };
        let theta = model.initialize_mean(InitScheme::LecunNormal, seed) + standard_normal_vector(&mut seeded(seed + 1), model.parameter_count()) * 0.1;
        let x = standard_normal_vector(&mut seeded(seed + 2), model.input_dim());
        // skip inputs within a step of a ReLU kink
        let pre = match &model.network {
            lofi_core::model::Network::Mlp(m) => m.hidden_preactivations(&x, &theta).unwrap(),
            _ => vec![],
        };
        prop_assume!(pre.iter().all(|z| z.abs() > 1e-4));
        let (_, jac) = model.forward_with_jacobian(&x, &theta).unwrap();
        let h = 1e-6;
        let mut fd = DMatrix::zeros(jac.nrows(), jac.ncols());
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let col = (model.forward(&x, &tp).unwrap() - model.forward(&x, &tm).unwrap()) / (2.0 * h);
            fd.set_column(k, &col);
        }
        prop_assert!(frobenius_relative_error(&jac, &fd) < 1e-4);
    }
}

#[test]
fn spherical_basis_stays_orthonormal() {
    let model = regression(vec![2, 6, 2], Activation::Tanh, 0.2);
    let dynamics = DynamicsConfig::steady_state(1e-4, 1.0).unwrap();
    for basis in [BasisUpdate::FullSvd, BasisUpdate::Orth] {
        let mut b = SphericalBelief::from_prior(model.initialize_mean(InitScheme::LecunNormal, 1), 1.0, 4).unwrap();
        for (t, (x, y)) in teacher_stream(&model, 1000, 3).into_iter().enumerate() {
            b = step_spherical(&b, &x, &y, &model, &dynamics, basis, t as u64).unwrap().0;
        }
        assert!(b.orthonormality_error() < 1e-8, "{basis:?}: {}", b.orthonormality_error());
    }
}

#[test]
fn steady_state_precision_does_not_drift() {
    let dynamics = DynamicsConfig::steady_state(1e-3, 2.0).unwrap();
    let mut rng = seeded(5);
    let basis = lofi_core::linalg::thin_svd(&lofi_core::rng::standard_normal_matrix(&mut rng, 8, 3)).unwrap().left;
    let mut b = SphericalBelief::new(DVector::zeros(8), 2.0, basis, DVector::from_vec(vec![3.0, 2.0, 1.0])).unwrap();
    for _ in 0..10_000 {
        b = predict_spherical(&b, &dynamics).unwrap();
    }
    assert!((b.eta - 2.0).abs() <= 1e-12);
}

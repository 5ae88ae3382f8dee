//! Contextual bandits built from classification data: each class is an arm
//! and the reward is 1 for the correct label, 0 otherwise. The reward model
//! is a regression network with one output per arm; only the chosen arm's
//! output is updated.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;

use crate::learner::OnlineLearner;
use crate::model::{Model, Activation, MlpSpec};
use crate::predictive::Posterior;
use crate::rng::{derive_seed, seeded, standard_normal_matrix, standard_normal_vector};
use crate::streams::StreamEvent;
use crate::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 0.1;
/// Variance of a fair Bernoulli reward, the default observation noise.
pub const DEFAULT_REWARD_NOISE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct BanditEnv {
    contexts: Vec<DVector<f64>>,
    labels: Vec<usize>,
    num_actions: usize,
}

impl BanditEnv {
    pub fn new(contexts: Vec<DVector<f64>>, labels: Vec<usize>, num_actions: usize) -> Result<Self> {
        if contexts.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "bandit labels",
                expected: contexts.len(),
                found: labels.len(),
            });
        }
        if num_actions == 0 || contexts.is_empty() {
            return Err(Error::InvalidConfig("a bandit needs at least one action and one context".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_actions) {
            return Err(Error::InvalidConfig(alloc::format!("label {bad} out of range for {num_actions} actions")));
        }
        Ok(Self {
            contexts,
            labels,
            num_actions,
        })
    }

    /// Uses the argmax of each one-hot target as the hidden label.
    pub fn from_stream(events: &[StreamEvent]) -> Result<Self> {
        let num_actions = events.first().map(|e| e.observation().y.len()).unwrap_or(0);
        let contexts = events.iter().map(|e| e.observation().x.clone()).collect();
        let labels = events.iter().map(|e| argmax(&e.observation().y)).collect();
        Self::new(contexts, labels, num_actions)
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// Context at step `t`; the data are cycled when `t` exceeds their length.
    pub fn context(&self, t: usize) -> &DVector<f64> {
        &self.contexts[t % self.len()]
    }

    pub fn reward(&self, t: usize, action: usize) -> f64 {
        if self.labels[t % self.len()] == action {
            1.0
        } else {
            0.0
        }
    }

    fn label(&self, t: usize) -> usize {
        self.labels[t % self.len()]
    }
}

/// A synthetic classification bandit: Gaussian contexts labelled by the
/// argmax of a random one-hidden-layer tanh teacher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticBanditSpec {
    pub steps: usize,
    pub input_dim: usize,
    pub num_actions: usize,
    pub teacher_hidden: usize,
}

impl Default for SyntheticBanditSpec {
    fn default() -> Self {
        Self {
            steps: 2000,
            input_dim: 4,
            num_actions: 5,
            teacher_hidden: 16,
        }
    }
}

pub fn gen_synthetic_bandit(spec: &SyntheticBanditSpec, seed: u64) -> Result<BanditEnv> {
    let teacher = MlpSpec::new(
        alloc::vec![spec.input_dim, spec.teacher_hidden, spec.num_actions],
        Activation::Tanh,
    )?;
    let mut rng = seeded(seed);
    let theta = standard_normal_vector(&mut rng, teacher.parameter_count());
    let xs = standard_normal_matrix(&mut rng, spec.steps, spec.input_dim);
    let mut contexts = Vec::with_capacity(spec.steps);
    let mut labels = Vec::with_capacity(spec.steps);
    for t in 0..spec.steps {
        let x = xs.row(t).transpose();
        labels.push(argmax(&teacher.evaluate(&x, &theta)?));
        contexts.push(x);
    }
    BanditEnv::new(contexts, labels, spec.num_actions)
}

/// Index of the largest entry; ties go to the lowest index, NaN never wins.
pub fn argmax(v: &DVector<f64>) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] || (v[best].is_nan() && !v[i].is_nan()) {
            best = i;
        }
    }
    best
}

pub fn greedy_action(model: &Model, theta: &DVector<f64>, x: &DVector<f64>) -> Result<usize> {
    Ok(argmax(&model.forward(x, theta)?))
}

pub fn thompson_act<B: Posterior>(belief: &B, model: &Model, x: &DVector<f64>, seed: u64) -> Result<usize> {
    let theta = belief.sample(1, seed)?.row(0).transpose();
    greedy_action(model, &theta, x)
}

pub fn epsilon_greedy_act(theta: &DVector<f64>, model: &Model, x: &DVector<f64>, epsilon: f64, seed: u64) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidConfig(alloc::format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let mut rng = seeded(seed);
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(rng.random_range(0..model.output_dim()))
    } else {
        greedy_action(model, theta, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    Thompson,
    EpsilonGreedy { epsilon: f64 },
    Greedy,
    /// Reads the hidden label; an upper bound for sanity checks.
    Oracle,
    Random,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Thompson => "thompson",
            Policy::EpsilonGreedy { .. } => "epsilon-greedy",
            Policy::Greedy => "greedy",
            Policy::Oracle => "oracle",
            Policy::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditTrace {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl BanditTrace {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Runs `steps` rounds. The learner is only told the chosen arm and its
/// reward, as a scalar regression target on that arm's output.
pub fn run_bandit(env: &BanditEnv, learner: &mut dyn OnlineLearner, policy: Policy, steps: usize, seed: u64) -> Result<BanditTrace> {
    let model = learner.model();
    if model.is_classifier() || model.output_dim() != env.num_actions() {
        return Err(Error::InvalidConfig(alloc::format!(
            "reward model needs {} regression outputs",
            env.num_actions()
        )));
    }
    let mut trace = BanditTrace {
        actions: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        cumulative: Vec::with_capacity(steps),
    };
    let mut total = 0.0;
    for t in 0..steps {
        let x = env.context(t);
        let step_seed = derive_seed(seed, t as u64);
        let action = match policy {
            Policy::Thompson => {
                let theta = learner.sample_parameters(1, step_seed)?.row(0).transpose();
                greedy_action(learner.model(), &theta, x)?
            }
            Policy::EpsilonGreedy { epsilon } => {
                let theta = learner.mean()?;
                epsilon_greedy_act(&theta, learner.model(), x, epsilon, step_seed)?
            }
            Policy::Greedy => {
                let theta = learner.mean()?;
                greedy_action(learner.model(), &theta, x)?
            }
            Policy::Oracle => env.label(t),
            Policy::Random => seeded(step_seed).random_range(0..env.num_actions()),
        };
        let r = env.reward(t, action);
        learner.update_output(x, action, r)?;
        total += r;
        trace.actions.push(action);
        trace.rewards.push(r);
        trace.cumulative.push(total);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::Optimizer;
    use crate::belief::DenseBelief;
    use crate::inflation::InflationConfig;
    use crate::learner::{Learner, LearnerConfig, Method};
    use crate::lofi::DynamicsConfig;
    use crate::model::{CustomNet, InitScheme, LikelihoodFamily, Network, ObsNoise};
    use alloc::vec;
    use nalgebra::DMatrix;

    fn reward_model(input_dim: usize, actions: usize) -> Model {
        Model::mlp(
            MlpSpec::new(vec![input_dim, 8, actions], Activation::Relu).unwrap(),
            LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(DEFAULT_REWARD_NOISE)),
        )
        .unwrap()
    }

    fn learner(model: Model, method: Method) -> Learner {
        let mu0 = model.initialize_mean(InitScheme::LecunNormal, 0);
        let cfg = LearnerConfig {
            method,
            dynamics: DynamicsConfig::stationary(1.0).unwrap(),
            inflation: InflationConfig::default(),
            seed: 0,
            noise_alpha_min: None,
        };
        Learner::new(model, cfg, mu0).unwrap()
    }

    fn env() -> BanditEnv {
        gen_synthetic_bandit(
            &SyntheticBanditSpec {
                steps: 300,
                ..Default::default()
            },
            1,
        )
        .unwrap()
    }

    fn sgd() -> Method {
        Method::SgdReplay {
            capacity: 4,
            optimizer: Optimizer::Sgd { lr: 0.05 },
            inner_iters: 1,
        }
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&DVector::from_vec(vec![1.0, 3.0, 3.0])), 1);
        assert_eq!(argmax(&DVector::from_vec(vec![f64::NAN, 0.0])), 1);
    }

    #[test]
    fn oracle_collects_every_reward() {
        let e = env();
        let mut l = learner(reward_model(4, 5), Method::Lofi { rank: 2 });
        let trace = run_bandit(&e, &mut l, Policy::Oracle, 300, 3).unwrap();
        assert_eq!(trace.total(), 300.0);
        assert!(trace.rewards.iter().all(|&r| r == 0.0 || r == 1.0));
    }

    #[test]
    fn random_policy_hits_one_in_a() {
        let e = gen_synthetic_bandit(
            &SyntheticBanditSpec {
                steps: 4000,
                ..Default::default()
            },
            2,
        )
        .unwrap();
        let mut l = learner(reward_model(4, 5), Method::Vdekf);
        let n = 4000.0;
        let total = run_bandit(&e, &mut l, Policy::Random, 4000, 5).unwrap().total();
        let sd = (n * 0.2 * 0.8f64).sqrt();
        assert!((total - n / 5.0).abs() < 3.0 * sd, "{total}");
    }

    #[test]
    fn single_action_always_zero() {
        let m = reward_model(2, 1);
        let b = DenseBelief::from_prior(DVector::zeros(m.parameter_count()), 1.0).unwrap();
        for s in 0..10 {
            assert_eq!(thompson_act(&b, &m, &DVector::from_vec(vec![0.3, -1.0]), s).unwrap(), 0);
            assert_eq!(epsilon_greedy_act(&b.mean, &m, &DVector::from_vec(vec![0.3, -1.0]), 1.0, s).unwrap(), 0);
        }
    }

    #[test]
    fn near_zero_covariance_thompson_is_greedy() {
        let m = reward_model(4, 5);
        let mean = m.initialize_mean(InitScheme::LecunNormal, 4);
        let b = DenseBelief::from_prior(mean.clone(), 1e24).unwrap();
        let e = env();
        for t in 0..50 {
            let x = e.context(t);
            assert_eq!(thompson_act(&b, &m, x, t as u64).unwrap(), greedy_action(&m, &mean, x).unwrap());
        }
    }

    fn linear_two_arm(x: &DVector<f64>, th: &DVector<f64>) -> DVector<f64> {
        // φ(x, 0) = x, φ(x, 1) = (x₁, −x₀)
        DVector::from_vec(vec![th[0] * x[0] + th[1] * x[1], th[0] * x[1] - th[1] * x[0]])
    }

    fn linear_two_arm_jac(x: &DVector<f64>, _: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[x[0], x[1], x[1], -x[0]])
    }

    #[test]
    fn thompson_matches_hand_argmax() {
        let m = Model::new(
            Network::Custom(CustomNet {
                input_dim: 2,
                output_dim: 2,
                parameter_count: 2,
                eval: linear_two_arm,
                jacobian: linear_two_arm_jac,
            }),
            LikelihoodFamily::GaussianRegression(ObsNoise::Scalar(0.25)),
        )
        .unwrap();
        let b = DenseBelief::from_prior(DVector::from_vec(vec![0.2, -0.1]), 2.0).unwrap();
        let x = DVector::from_vec(vec![1.0, 0.5]);
        for seed in 0..20 {
            let th = b.sample(1, seed).unwrap();
            let r0 = th[(0, 0)] * 1.0 + th[(0, 1)] * 0.5;
            let r1 = th[(0, 0)] * 0.5 - th[(0, 1)] * 1.0;
            let expected = if r1 > r0 { 1 } else { 0 };
            assert_eq!(thompson_act(&b, &m, &x, seed).unwrap(), expected);
        }
    }

    #[test]
    fn epsilon_zero_is_greedy_and_one_is_uniform() {
        let m = reward_model(4, 5);
        let theta = m.initialize_mean(InitScheme::LecunNormal, 2);
        let x = DVector::from_vec(vec![0.1, 0.2, -0.3, 1.0]);
        let g = greedy_action(&m, &theta, &x).unwrap();
        let mut counts = [0usize; 5];
        for s in 0..10_000u64 {
            assert_eq!(epsilon_greedy_act(&theta, &m, &x, 0.0, s).unwrap(), g);
            counts[epsilon_greedy_act(&theta, &m, &x, 1.0, s).unwrap()] += 1;
        }
        let sd = (10_000.0 * 0.2 * 0.8f64).sqrt();
        for c in counts {
            assert!((c as f64 - 2000.0).abs() < 3.0 * sd, "{counts:?}");
        }
        assert!(epsilon_greedy_act(&theta, &m, &x, 1.5, 0).is_err());
    }

    #[test]
    fn point_mass_thompson_equals_greedy() {
        let e = env();
        let mut a = learner(reward_model(4, 5), sgd());
        let mut b = learner(reward_model(4, 5), sgd());
        let ta = run_bandit(&e, &mut a, Policy::Thompson, 200, 7).unwrap();
        let tb = run_bandit(&e, &mut b, Policy::Greedy, 200, 7).unwrap();
        assert_eq!(ta, tb);
    }

    #[test]
    fn only_chosen_head_moves() {
        let m = reward_model(4, 5);
        let mut l = learner(m.clone(), Method::Fcekf);
        let x = DVector::from_vec(vec![0.5, -0.2, 0.1, 0.9]);
        let before = m.forward(&x, &l.mean().unwrap()).unwrap();
        l.update_output(&x, 2, 1.0).unwrap();
        let after = m.forward(&x, &l.mean().unwrap()).unwrap();
        assert!((after[2] - before[2]).abs() > 1e-6);
        // output-layer weights of other heads are untouched in mean
        let d = &after - &before;
        assert!(d[2].abs() > d.iter().enumerate().filter(|(i, _)| *i != 2).map(|(_, v)| v.abs()).fold(0.0, f64::max));
    }

    #[test]
    fn env_validation() {
        assert!(BanditEnv::new(vec![DVector::zeros(1)], vec![3], 2).is_err());
        assert!(BanditEnv::new(vec![], vec![], 2).is_err());
    }
}

//! Tabular episodic MDPs: the generative model, reward distributions, and
//! deterministic nonstationary policies.
//!
//! Conventions used throughout the crate:
//! - stages are 0-indexed, `h in 0..H`; value tables have `H + 1` rows so the
//!   terminal boundary `V[H] = 0` is explicit,
//! - transition tensors are `(S, A, S')`, per-stage tables `(H, S, A)`,
//! - all probabilities are exact `f64` constants, validated on construction.

use ndarray::{Array1, Array2, Array3, ArrayView1};
use rand::Rng;
use thiserror::Error;

/// Tolerance for probability-vector normalization checks.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("initial distribution must sum to 1 (got {0})")]
    BadInitialDistribution(f64),
    #[error("transition row ({x},{a}) must sum to 1 (got {sum})")]
    BadTransitionRow { x: usize, a: usize, sum: f64 },
    #[error("probability entry out of [0,1]: {0}")]
    BadProbability(f64),
    #[error("reward support must lie in [0,1]: {0}")]
    BadRewardSupport(f64),
    #[error("horizon must be at least 1")]
    BadHorizon,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("policy action {action} out of range at (h={h}, x={x})")]
    BadPolicyAction { h: usize, x: usize, action: usize },
    #[error("instance too large for exhaustive enumeration: {policies:.3e} policies exceeds {limit:.1e}")]
    InstanceTooLarge { policies: f64, limit: f64 },
}

/// Reward distribution at a state-action pair. Support is contained in [0,1];
/// mean and variance are closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RewardModel {
    Deterministic(f64),
    Bernoulli(f64),
    TwoPoint { lo: f64, hi: f64, p_hi: f64 },
}

impl RewardModel {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardModel::Deterministic(v) => v,
            RewardModel::Bernoulli(p) => p,
            RewardModel::TwoPoint { lo, hi, p_hi } => lo + (hi - lo) * p_hi,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            RewardModel::Deterministic(_) => 0.0,
            RewardModel::Bernoulli(p) => p * (1.0 - p),
            RewardModel::TwoPoint { lo, hi, p_hi } => (hi - lo) * (hi - lo) * p_hi * (1.0 - p_hi),
        }
    }

    /// Largest value the reward can take with positive probability.
    pub fn support_max(&self) -> f64 {
        match *self {
            RewardModel::Deterministic(v) => v,
            RewardModel::Bernoulli(p) => {
                if p > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::TwoPoint { lo, hi, p_hi } => {
                if p_hi > 0.0 {
                    hi
                } else {
                    lo
                }
            }
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let check = |v: f64| {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                Err(ModelError::BadRewardSupport(v))
            } else {
                Ok(())
            }
        };
        match *self {
            RewardModel::Deterministic(v) => check(v),
            RewardModel::Bernoulli(p) => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ModelError::BadProbability(p));
                }
                Ok(())
            }
            RewardModel::TwoPoint { lo, hi, p_hi } => {
                check(lo)?;
                check(hi)?;
                if !(0.0..=1.0).contains(&p_hi) {
                    return Err(ModelError::BadProbability(p_hi));
                }
                Ok(())
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardModel::Deterministic(v) => v,
            RewardModel::Bernoulli(p) => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            RewardModel::TwoPoint { lo, hi, p_hi } => {
                if rng.random::<f64>() < p_hi {
                    hi
                } else {
                    lo
                }
            }
        }
    }
}

/// A stationary episodic MDP: states, actions, horizon, initial distribution,
/// transition tensor, and per-pair reward models. Immutable after
/// construction; safe to share read-only across threads.
#[derive(Clone, Debug)]
pub struct TabularMDP {
    horizon: usize,
    p0: Array1<f64>,
    trans: Array3<f64>,
    rewards: Array2<RewardModel>,
    r_mean: Array2<f64>,
    r_var: Array2<f64>,
}

impl TabularMDP {
    pub fn new(
        horizon: usize,
        p0: Array1<f64>,
        trans: Array3<f64>,
        rewards: Array2<RewardModel>,
    ) -> Result<Self, ModelError> {
        if horizon < 1 {
            return Err(ModelError::BadHorizon);
        }
        let s = p0.len();
        if trans.shape() != [s, rewards.shape()[1], s] || rewards.shape()[0] != s {
            return Err(ModelError::DimensionMismatch(format!(
                "p0 len {s}, trans {:?}, rewards {:?}",
                trans.shape(),
                rewards.shape()
            )));
        }
        check_simplex(p0.view()).map_err(|e| match e {
            SimplexError::Sum(sum) => ModelError::BadInitialDistribution(sum),
            SimplexError::Entry(v) => ModelError::BadProbability(v),
        })?;
        for x in 0..s {
            for a in 0..rewards.shape()[1] {
                check_simplex(trans.index_axis(ndarray::Axis(0), x).row(a)).map_err(
                    |e| match e {
                        SimplexError::Sum(sum) => ModelError::BadTransitionRow { x, a, sum },
                        SimplexError::Entry(v) => ModelError::BadProbability(v),
                    },
                )?;
                rewards[[x, a]].validate()?;
            }
        }
        let r_mean = rewards.map(|r| r.mean());
        let r_var = rewards.map(|r| r.variance());
        Ok(Self { horizon, p0, trans, rewards, r_mean, r_var })
    }

    pub fn num_states(&self) -> usize {
        self.p0.len()
    }

    pub fn num_actions(&self) -> usize {
        self.rewards.shape()[1]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn p0(&self) -> &Array1<f64> {
        &self.p0
    }

    pub fn trans(&self) -> &Array3<f64> {
        &self.trans
    }

    /// Next-state distribution p(.|x,a) as a view.
    pub fn trans_row(&self, x: usize, a: usize) -> ArrayView1<'_, f64> {
        self.trans.slice(ndarray::s![x, a, ..])
    }

    pub fn reward(&self, x: usize, a: usize) -> &RewardModel {
        &self.rewards[[x, a]]
    }

    /// Mean rewards r(x,a) as an (S, A) table.
    pub fn reward_mean(&self) -> &Array2<f64> {
        &self.r_mean
    }

    /// Reward variances Var[R(x,a)] as an (S, A) table.
    pub fn reward_var(&self) -> &Array2<f64> {
        &self.r_var
    }
}

enum SimplexError {
    Sum(f64),
    Entry(f64),
}

fn check_simplex(v: ArrayView1<'_, f64>) -> Result<(), SimplexError> {
    let mut sum = 0.0;
    for &p in v.iter() {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(SimplexError::Entry(p));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(SimplexError::Sum(sum));
    }
    Ok(())
}

/// Deterministic nonstationary policy: one action per (stage, state).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    action: Array2<usize>,
}

impl Policy {
    pub fn new(action: Array2<usize>, num_actions: usize) -> Result<Self, ModelError> {
        for ((h, x), &a) in action.indexed_iter() {
            if a >= num_actions {
                return Err(ModelError::BadPolicyAction { h, x, action: a });
            }
        }
        Ok(Self { action })
    }

    /// Constant policy playing `a` at every (h, x).
    pub fn constant(horizon: usize, num_states: usize, a: usize) -> Self {
        Self { action: Array2::from_elem((horizon, num_states), a) }
    }

    pub fn act(&self, h: usize, x: usize) -> usize {
        self.action[[h, x]]
    }

    pub fn horizon(&self) -> usize {
        self.action.shape()[0]
    }

    pub fn num_states(&self) -> usize {
        self.action.shape()[1]
    }

    pub fn table(&self) -> &Array2<usize> {
        &self.action
    }
}

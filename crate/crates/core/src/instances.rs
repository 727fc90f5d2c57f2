//! Constructors for the MDP families under study: the two hard-instance
//! constructions, contextual bandits, and seeded random MDPs.

use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{ModelError, RewardModel, TabularMDP};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("parameter out of range: {0}")]
    BadParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Serializable description of an instance; the unit the CLI config carries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    /// Two absorbing reward states fed by stage-1 transition gaps. `delta`
    /// has one row per start state and one column per non-anchor action
    /// (actions `1..A`); action 0 is the optimal anchor.
    InfoLb { states: usize, actions: usize, horizon: usize, delta: Vec<Vec<f64>> },
    /// Signed-state two-stage game with a single minimal gap at the center.
    MingapLb { states: usize, eps: f64 },
    /// Next-state distribution independent of state and action.
    ContextualBandit { horizon: usize, means: Vec<Vec<f64>>, next_dist: Vec<f64> },
    /// Dirichlet transitions, Bernoulli rewards with uniform means.
    Random { states: usize, actions: usize, horizon: usize, seed: u64, concentration: f64 },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<TabularMDP, InstanceError> {
        match self {
            InstanceSpec::InfoLb { states, actions, horizon, delta } => {
                let rows = delta.len();
                let cols = delta.first().map_or(0, |r| r.len());
                if rows != *states || delta.iter().any(|r| r.len() != cols) {
                    return Err(InstanceError::BadParameter(format!(
                        "delta must be a {states} x (A-1) matrix"
                    )));
                }
                let mut d = Array2::zeros((rows, cols));
                for (x, row) in delta.iter().enumerate() {
                    for (j, &v) in row.iter().enumerate() {
                        d[[x, j]] = v;
                    }
                }
                make_info_lb(*states, *actions, *horizon, &d)
            }
            InstanceSpec::MingapLb { states, eps } => make_mingap_lb(*states, *eps),
            InstanceSpec::ContextualBandit { horizon, means, next_dist } => {
                let s = means.len();
                let a = means.first().map_or(0, |r| r.len());
                if means.iter().any(|r| r.len() != a) {
                    return Err(InstanceError::BadParameter("ragged means matrix".into()));
                }
                let m = Array2::from_shape_fn((s, a), |(x, aa)| means[x][aa]);
                let nd = Array1::from_vec(next_dist.clone());
                make_contextual_bandit(&m, &nd, *horizon)
            }
            InstanceSpec::Random { states, actions, horizon, seed, concentration } => {
                make_random(*states, *actions, *horizon, *seed, *concentration)
            }
        }
    }
}

/// Hard instance with prescribed stage-1 gaps. States `0..S` start uniformly
/// and transition into one of two absorbing states: index `S` pays 1 on the
/// anchor action, index `S+1` pays 1/2. The anchor (action 0) reaches the
/// good state with probability 3/4; action `j+1` with probability
/// `3/4 - 2 delta[x][j] / (H-1)`, which makes `gap_1(x, j+1) = delta[x][j]`.
///
/// `delta` entries must lie in (0, H/8). For `H = 1` the chain degenerates:
/// states are `0..S` with Bernoulli(3/4 - delta) rewards and no transitions
/// that matter.
pub fn make_info_lb(
    s: usize,
    a: usize,
    h: usize,
    delta: &Array2<f64>,
) -> Result<TabularMDP, InstanceError> {
    if s < 1 || a < 1 || h < 1 {
        return Err(InstanceError::BadParameter("need S, A, H >= 1".into()));
    }
    if delta.shape() != [s, a - 1] {
        return Err(InstanceError::BadParameter(format!(
            "delta shape {:?}, expected ({s}, {})",
            delta.shape(),
            a - 1
        )));
    }
    let hi = h as f64 / 8.0;
    for &v in delta.iter() {
        if !(v > 0.0 && v < hi) {
            return Err(InstanceError::BadParameter(format!(
                "delta entry {v} outside (0, H/8) = (0, {hi})"
            )));
        }
    }

    if h == 1 {
        let p0 = Array1::from_elem(s, 1.0 / s as f64);
        let trans = Array3::from_elem((s, a, s), 1.0 / s as f64);
        let rewards = Array2::from_shape_fn((s, a), |(x, aa)| {
            if aa == 0 {
                RewardModel::Bernoulli(0.75)
            } else {
                RewardModel::Bernoulli(0.75 - delta[[x, aa - 1]])
            }
        });
        return Ok(TabularMDP::new(1, p0, trans, rewards)?);
    }

    let n = s + 2;
    let good = s; // pays 1 on the anchor
    let half = s + 1; // pays 1/2 on the anchor
    let mut p0 = Array1::zeros(n);
    for x in 0..s {
        p0[x] = 1.0 / s as f64;
    }
    let mut trans = Array3::zeros((n, a, n));
    for x in 0..s {
        for aa in 0..a {
            let p_good = if aa == 0 {
                0.75
            } else {
                0.75 - 2.0 * delta[[x, aa - 1]] / (h as f64 - 1.0)
            };
            trans[[x, aa, good]] = p_good;
            trans[[x, aa, half]] = 1.0 - p_good;
        }
    }
    for aa in 0..a {
        trans[[good, aa, good]] = 1.0;
        trans[[half, aa, half]] = 1.0;
    }
    let rewards = Array2::from_shape_fn((n, a), |(x, aa)| {
        if x == good && aa == 0 {
            RewardModel::Deterministic(1.0)
        } else if x == half && aa == 0 {
            RewardModel::Deterministic(0.5)
        } else {
            RewardModel::Deterministic(0.0)
        }
    });
    Ok(TabularMDP::new(h, p0, trans, rewards)?)
}

/// Two-stage signed-state game: `2S + 1` states laid out as
/// `[-S..-1] [0] [1..S]` at indices `0..S-1`, `S`, `S+1..2S`. Play starts at
/// the center; action 1 ("+1") moves uniformly into the positive block,
/// action 0 ("-1") uniformly into the negative block. Rewards are zero at
/// the center and on action 0 everywhere; the positive block pays
/// `1/2 + eps + D/4` on action 1 and the negative block `1/2 + D/4`, with
/// `D` a Rademacher sign, giving two-point supports `{1/4+eps, 3/4+eps}` and
/// `{1/4, 3/4}`. The unique minimal gap is `eps` at (center, action 0, h=1).
pub fn make_mingap_lb(s: usize, eps: f64) -> Result<TabularMDP, InstanceError> {
    if s < 1 {
        return Err(InstanceError::BadParameter("need S >= 1".into()));
    }
    if !(eps > 0.0 && eps < 0.125) {
        return Err(InstanceError::BadParameter(format!("eps {eps} outside (0, 1/8)")));
    }
    let n = 2 * s + 1;
    let center = s;
    let mut p0 = Array1::zeros(n);
    p0[center] = 1.0;
    let mut trans = Array3::zeros((n, 2, n));
    for x in 0..n {
        if x == center {
            for j in 0..s {
                trans[[center, 0, j]] = 1.0 / s as f64; // negative block
                trans[[center, 1, s + 1 + j]] = 1.0 / s as f64; // positive block
            }
        } else {
            trans[[x, 0, x]] = 1.0;
            trans[[x, 1, x]] = 1.0;
        }
    }
    let rewards = Array2::from_shape_fn((n, 2), |(x, a)| {
        if x == center || a == 0 {
            RewardModel::Deterministic(0.0)
        } else if x > center {
            RewardModel::TwoPoint { lo: 0.25 + eps, hi: 0.75 + eps, p_hi: 0.5 }
        } else {
            RewardModel::TwoPoint { lo: 0.25, hi: 0.75, p_hi: 0.5 }
        }
    });
    Ok(TabularMDP::new(2, p0, trans, rewards)?)
}

/// Contextual bandit: every (x,a) shares the same next-state distribution.
/// Rewards are Bernoulli with the given means.
pub fn make_contextual_bandit(
    means: &Array2<f64>,
    next_dist: &Array1<f64>,
    h: usize,
) -> Result<TabularMDP, InstanceError> {
    let (s, a) = means.dim();
    if s < 1 || a < 1 || h < 1 {
        return Err(InstanceError::BadParameter("need S, A, H >= 1".into()));
    }
    if next_dist.len() != s {
        return Err(InstanceError::BadParameter("next_dist length must equal S".into()));
    }
    let mut trans = Array3::zeros((s, a, s));
    for x in 0..s {
        for aa in 0..a {
            for x2 in 0..s {
                trans[[x, aa, x2]] = next_dist[x2];
            }
        }
    }
    let rewards = Array2::from_shape_fn((s, a), |(x, aa)| RewardModel::Bernoulli(means[[x, aa]]));
    let p0 = next_dist.clone();
    Ok(TabularMDP::new(h, p0, trans, rewards)?)
}

/// Seeded random MDP: transition rows drawn from a symmetric Dirichlet with
/// the given concentration, Bernoulli rewards with uniform means, uniform
/// initial distribution. Bit-identical tables for a given seed.
///
/// Draw order (ChaCha8 stream seeded by `seed`): transition rows in
/// (x, a)-major order, each as S gamma draws normalized; then reward means
/// in (x, a)-major order.
pub fn make_random(
    s: usize,
    a: usize,
    h: usize,
    seed: u64,
    concentration: f64,
) -> Result<TabularMDP, InstanceError> {
    if s < 1 || a < 1 || h < 1 {
        return Err(InstanceError::BadParameter("need S, A, H >= 1".into()));
    }
    if !(concentration > 0.0 && concentration.is_finite()) {
        return Err(InstanceError::BadParameter(format!("concentration {concentration} must be positive")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| InstanceError::BadParameter(format!("gamma: {e}")))?;
    let mut trans = Array3::zeros((s, a, s));
    for x in 0..s {
        for aa in 0..a {
            loop {
                let draws: Vec<f64> = (0..s).map(|_| gamma.sample(&mut rng)).collect();
                let sum: f64 = draws.iter().sum();
                if sum > 0.0 && sum.is_finite() {
                    for (x2, d) in draws.iter().enumerate() {
                        trans[[x, aa, x2]] = d / sum;
                    }
                    // Renormalize the float dust onto the largest entry so the
                    // row sums to 1 within PROB_TOL.
                    let row_sum: f64 = (0..s).map(|x2| trans[[x, aa, x2]]).sum();
                    let imax = (0..s)
                        .max_by(|&i, &j| {
                            trans[[x, aa, i]].partial_cmp(&trans[[x, aa, j]]).unwrap()
                        })
                        .unwrap();
                    trans[[x, aa, imax]] += 1.0 - row_sum;
                    break;
                }
            }
        }
    }
    let rewards = Array2::from_shape_fn((s, a), |_| RewardModel::Bernoulli(rng.random::<f64>()));
    let p0 = Array1::from_elem(s, 1.0 / s as f64);
    Ok(TabularMDP::new(h, p0, trans, rewards)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{value_iteration, variance_table, OracleTables};

    #[test]
    fn info_two_outcome_transitions() {
        let delta = Array2::from_elem((3, 1), 0.2);
        let mdp = make_info_lb(3, 2, 3, &delta).unwrap();
        for x in 0..3 {
            for a in 0..2 {
                let p_good = mdp.trans_row(x, a)[3];
                let p_half = mdp.trans_row(x, a)[4];
                assert!((p_good + p_half - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn info_h1_variant_bernoulli() {
        let delta = Array2::from_elem((3, 1), 0.1);
        let mdp = make_info_lb(3, 2, 1, &delta).unwrap();
        assert_eq!(mdp.num_states(), 3);
        assert_eq!(*mdp.reward(0, 0), RewardModel::Bernoulli(0.75));
        assert_eq!(*mdp.reward(0, 1), RewardModel::Bernoulli(0.65));
        let sol = value_iteration(&mdp);
        let gaps = crate::oracle::compute_gaps(&sol);
        for x in 0..3 {
            assert!((gaps.gap_h[[0, x, 1]] - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn info_rejects_out_of_range() {
        let delta = Array2::from_elem((2, 1), 0.5);
        assert!(make_info_lb(2, 2, 3, &delta).is_err()); // 0.5 >= 3/8
        let delta = Array2::from_elem((2, 1), 0.0);
        assert!(make_info_lb(2, 2, 3, &delta).is_err());
    }

    #[test]
    fn mingap_reward_structure() {
        let (s, eps) = (4, 0.05);
        let mdp = make_mingap_lb(s, eps).unwrap();
        let center = s;
        for a in 0..2 {
            assert_eq!(*mdp.reward(center, a), RewardModel::Deterministic(0.0));
        }
        for x in 0..mdp.num_states() {
            assert_eq!(*mdp.reward(x, 0), RewardModel::Deterministic(0.0));
        }
        for x in s + 1..=2 * s {
            assert!((mdp.reward_mean()[[x, 1]] - (0.5 + eps)).abs() < 1e-15);
        }
        for x in 0..s {
            assert!((mdp.reward_mean()[[x, 1]] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn mingap_rejects_out_of_range() {
        assert!(make_mingap_lb(4, 0.125).is_err());
        assert!(make_mingap_lb(4, 0.0).is_err());
        assert!(make_mingap_lb(0, 0.05).is_err());
    }

    #[test]
    fn contextual_bandit_rejects_bad_simplex() {
        let means = Array2::from_elem((2, 2), 0.5);
        let bad = Array1::from_vec(vec![0.6, 0.6]);
        assert!(make_contextual_bandit(&means, &bad, 2).is_err());
    }

    #[test]
    fn contextual_single_state_gaps_stationary() {
        // S = 1: a plain multi-armed bandit played H times.
        let means = Array2::from_shape_vec((1, 3), vec![0.2, 0.9, 0.5]).unwrap();
        let next = Array1::from_vec(vec![1.0]);
        let mdp = make_contextual_bandit(&means, &next, 4).unwrap();
        let sol = value_iteration(&mdp);
        let gaps = crate::oracle::compute_gaps(&sol);
        for a in 0..3 {
            for h in 1..4 {
                assert!((gaps.gap_h[[h, 0, a]] - gaps.gap_h[[0, 0, a]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contextual_variance_bound() {
        let means = Array2::from_shape_vec((3, 2), vec![0.2, 0.9, 0.7, 0.1, 0.4, 0.6]).unwrap();
        let next = Array1::from_vec(vec![0.3, 0.3, 0.4]);
        let mdp = make_contextual_bandit(&means, &next, 5).unwrap();
        let sol = value_iteration(&mdp);
        let var = variance_table(&mdp, &sol.v_star);
        assert!(var.iter().all(|&v| v <= 2.0 + 1e-9));
        let oracle = OracleTables::solve(&mdp);
        assert!(oracle.var_bar <= 2.0 + 1e-9);
    }

    #[test]
    fn random_deterministic_given_seed() {
        let a = make_random(4, 3, 2, 99, 0.7).unwrap();
        let b = make_random(4, 3, 2, 99, 0.7).unwrap();
        assert_eq!(a.p0(), b.p0());
        assert_eq!(a.trans(), b.trans());
        assert_eq!(a.reward_mean(), b.reward_mean());
        let c = make_random(4, 3, 2, 100, 0.7).unwrap();
        assert_ne!(a.trans(), c.trans());
    }

    #[test]
    fn random_high_concentration_near_uniform() {
        let mdp = make_random(5, 2, 2, 1, 1e6).unwrap();
        for x in 0..5 {
            for a in 0..2 {
                for x2 in 0..5 {
                    assert!((mdp.trans_row(x, a)[x2] - 0.2).abs() < 0.01);
                }
            }
        }
    }

    #[test]
    fn spec_roundtrip_builds() {
        let spec = InstanceSpec::Random { states: 3, actions: 2, horizon: 3, seed: 7, concentration: 1.0 };
        let mdp = spec.build().unwrap();
        let sol = value_iteration(&mdp);
        let (bf, _) = crate::oracle::brute_force_optimal(&mdp).unwrap();
        assert!((sol.initial_value(&mdp) - bf).abs() < 1e-10);
    }
}

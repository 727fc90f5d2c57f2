//! Optimistic learners operating on observed data only: sufficient
//! statistics, the Bernstein-style exploration bonuses, backward-induction
//! planning with value caps, and the rollout/update step.
//!
//! Planning functions receive nothing but a [`LearnerState`] and the
//! dimensions; the true model is visible only to the environment step in
//! [`rollout_and_update`].

use ndarray::{s, Array2, Array3, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{Policy, TabularMDP};

/// Which logarithmic-factor form to use inside the bonuses: the visit count
/// inside the log enters either linearly or squared. Linear is the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LFactorVariant {
    #[default]
    LinearCount,
    SquaredCount,
}

/// L(u) = sqrt(2 log(10 M^2 max(u,1) / delta)) with M = SAH; the squared
/// variant replaces max(u,1) with max(u,1)^2.
pub fn log_factor(
    u: u64,
    s: usize,
    a: usize,
    h: usize,
    delta: f64,
    variant: LFactorVariant,
) -> f64 {
    let m = (s * a * h) as f64;
    let mut base = (u.max(1)) as f64;
    if variant == LFactorVariant::SquaredCount {
        base *= base;
    }
    (2.0 * (10.0 * m * m * base / delta).ln()).sqrt()
}

/// Everything an optimistic learner keeps: visit counts, transition counts,
/// reward sums and squares, and the empirical tables derived from them.
#[derive(Clone, Debug)]
pub struct LearnerState {
    /// Completed episodes.
    pub episode: usize,
    pub delta: f64,
    /// (S, A) visit counts.
    pub n: Array2<u64>,
    /// (S, A, S') transition counts.
    pub n_next: Array3<u64>,
    pub rsum: Array2<f64>,
    pub rsumsq: Array2<f64>,
    /// (S, A, S'): zero rows until the pair is visited.
    pub p_hat: Array3<f64>,
    pub r_hat: Array2<f64>,
    /// Biased empirical reward variance rsumsq/n - r_hat^2, clamped at 0.
    pub var_hat: Array2<f64>,
}

impl LearnerState {
    pub fn new(num_states: usize, num_actions: usize, delta: f64) -> Self {
        Self {
            episode: 0,
            delta,
            n: Array2::zeros((num_states, num_actions)),
            n_next: Array3::zeros((num_states, num_actions, num_states)),
            rsum: Array2::zeros((num_states, num_actions)),
            rsumsq: Array2::zeros((num_states, num_actions)),
            p_hat: Array3::zeros((num_states, num_actions, num_states)),
            r_hat: Array2::zeros((num_states, num_actions)),
            var_hat: Array2::zeros((num_states, num_actions)),
        }
    }

    pub fn num_states(&self) -> usize {
        self.n.shape()[0]
    }

    pub fn num_actions(&self) -> usize {
        self.n.shape()[1]
    }

    /// Record one observed transition and refresh the empirical row.
    pub fn record(&mut self, x: usize, a: usize, reward: f64, x_next: usize) {
        self.n[[x, a]] += 1;
        self.n_next[[x, a, x_next]] += 1;
        self.rsum[[x, a]] += reward;
        self.rsumsq[[x, a]] += reward * reward;
        let n = self.n[[x, a]] as f64;
        self.r_hat[[x, a]] = self.rsum[[x, a]] / n;
        self.var_hat[[x, a]] =
            (self.rsumsq[[x, a]] / n - self.r_hat[[x, a]] * self.r_hat[[x, a]]).max(0.0);
        for x2 in 0..self.num_states() {
            self.p_hat[[x, a, x2]] = self.n_next[[x, a, x2]] as f64 / n;
        }
    }
}

/// The three exploration bonuses for one (x, a) at one stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BonusTriple {
    pub rew: f64,
    pub prob: f64,
    pub strong: f64,
}

fn dot(p: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for (pi, vi) in p.iter().zip(v.iter()) {
        acc += pi * vi;
    }
    acc
}

fn weighted_sq_norm(p: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for (pi, vi) in p.iter().zip(v.iter()) {
        acc += pi * vi * vi;
    }
    acc
}

fn weighted_variance(p: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let mean = dot(p, v);
    (weighted_sq_norm(p, v) - mean * mean).max(0.0)
}

/// Bernstein bonuses for (x, a) given the value interval at the next stage.
/// With no data the pair is maximally optimistic: the reward bonus caps at
/// 1, the transition bonus at H, and the interval bonus is an infinite
/// sentinel so the planner's stage cap binds.
pub fn construct_bonuses(
    state: &LearnerState,
    x: usize,
    a: usize,
    v_up_next: ArrayView1<'_, f64>,
    v_low_next: ArrayView1<'_, f64>,
    horizon: usize,
    variant: LFactorVariant,
) -> BonusTriple {
    let n_u = state.n[[x, a]];
    let s_count = state.num_states();
    let h_f = horizon as f64;
    let l = log_factor(n_u, s_count, state.num_actions(), horizon, state.delta, variant);
    if n_u == 0 {
        return BonusTriple { rew: 1.0, prob: h_f, strong: f64::INFINITY };
    }
    let n = n_u as f64;
    let p_hat = state.p_hat.slice(s![x, a, ..]);
    let mut diff_sq = 0.0; // ||v_low_next - v_up_next||^2_{2,p_hat}
    for ((pi, lo), up) in p_hat.iter().zip(v_low_next.iter()).zip(v_up_next.iter()) {
        diff_sq += pi * (lo - up) * (lo - up);
    }
    let strong = diff_sq.sqrt() * (s_count as f64 * l / n).sqrt()
        + (8.0 / 3.0) * s_count as f64 * h_f * l / n;
    if n_u == 1 {
        return BonusTriple { rew: 1.0, prob: h_f, strong };
    }
    let rew = 1f64.min(
        (2.0 * state.var_hat[[x, a]] * l / n).sqrt() + 8.0 * l / (3.0 * (n - 1.0)),
    );
    let prob = h_f.min(
        (2.0 * weighted_variance(p_hat, v_up_next) * l / n).sqrt()
            + 8.0 * h_f * l / (3.0 * (n - 1.0))
            + (2.0 * l * diff_sq / n).sqrt(),
    );
    BonusTriple { rew, prob, strong }
}

/// One episode's optimistic planning output.
#[derive(Clone, Debug)]
pub struct OptimisticPlan {
    /// (H, S, A), capped at H - h + 1.
    pub q_up: Array3<f64>,
    /// (H+1, S).
    pub v_up: Array2<f64>,
    /// (H+1, S), floored at 0.
    pub v_low: Array2<f64>,
    pub policy: Policy,
    pub b_rew: Array3<f64>,
    pub b_prob: Array3<f64>,
    pub b_str: Array3<f64>,
}

impl OptimisticPlan {
    /// p0-weighted optimistic value of the initial stage.
    pub fn initial_value(&self, p0: &ndarray::Array1<f64>) -> f64 {
        dot(p0.view(), self.v_up.row(0))
    }
}

/// Optimistic value iteration with the three Bernstein bonuses:
/// Q(h,x,a) = min(H-h+1, r_hat + p_hat'V(h+1) + b_prob + b_rew + b_str),
/// greedy policy with first-index tie break, and the pessimistic companion
/// V_low(h,x) = max(0, r_hat - b_rew + p_hat'V_low(h+1) - b_prob - b_str).
pub fn plan_strong_euler(
    state: &LearnerState,
    horizon: usize,
    variant: LFactorVariant,
) -> OptimisticPlan {
    let (s_n, a_n) = (state.num_states(), state.num_actions());
    let mut q_up = Array3::zeros((horizon, s_n, a_n));
    let mut v_up = Array2::zeros((horizon + 1, s_n));
    let mut v_low = Array2::zeros((horizon + 1, s_n));
    let mut b_rew = Array3::zeros((horizon, s_n, a_n));
    let mut b_prob = Array3::zeros((horizon, s_n, a_n));
    let mut b_str = Array3::zeros((horizon, s_n, a_n));
    let mut action = Array2::zeros((horizon, s_n));
    for h in (0..horizon).rev() {
        let cap = (horizon - h) as f64;
        for x in 0..s_n {
            for a in 0..a_n {
                let b = construct_bonuses(
                    state,
                    x,
                    a,
                    v_up.row(h + 1),
                    v_low.row(h + 1),
                    horizon,
                    variant,
                );
                b_rew[[h, x, a]] = b.rew;
                b_prob[[h, x, a]] = b.prob;
                b_str[[h, x, a]] = b.strong;
                let raw = state.r_hat[[x, a]]
                    + dot(state.p_hat.slice(s![x, a, ..]), v_up.row(h + 1))
                    + b.prob
                    + b.rew
                    + b.strong;
                q_up[[h, x, a]] = cap.min(raw);
            }
            let mut best = 0usize;
            for a in 1..a_n {
                if q_up[[h, x, a]] > q_up[[h, x, best]] {
                    best = a;
                }
            }
            action[[h, x]] = best;
            v_up[[h, x]] = q_up[[h, x, best]];
            let low = state.r_hat[[x, best]] - b_rew[[h, x, best]]
                + dot(state.p_hat.slice(s![x, best, ..]), v_low.row(h + 1))
                - b_prob[[h, x, best]]
                - b_str[[h, x, best]];
            v_low[[h, x]] = low.max(0.0);
        }
    }
    let policy = Policy::new(action, a_n).expect("argmax in range");
    OptimisticPlan { q_up, v_up, v_low, policy, b_rew, b_prob, b_str }
}

/// Hoeffding-bonus baseline: b(x,a) = sqrt(H log(SAHK/delta) / n), the same
/// backward induction and cap, and a zero pessimistic value. The single
/// bonus is stored in the `b_rew` slot.
pub fn plan_ucbvi_ch(state: &LearnerState, horizon: usize, total_episodes: usize) -> OptimisticPlan {
    let (s_n, a_n) = (state.num_states(), state.num_actions());
    let h_f = horizon as f64;
    let log_term =
        ((s_n * a_n * horizon * total_episodes.max(1)) as f64 / state.delta).ln();
    let mut q_up = Array3::zeros((horizon, s_n, a_n));
    let mut v_up = Array2::zeros((horizon + 1, s_n));
    let v_low = Array2::zeros((horizon + 1, s_n));
    let mut b_rew = Array3::zeros((horizon, s_n, a_n));
    let mut action = Array2::zeros((horizon, s_n));
    for h in (0..horizon).rev() {
        let cap = (horizon - h) as f64;
        for x in 0..s_n {
            for a in 0..a_n {
                let n_u = state.n[[x, a]];
                let bonus = if n_u == 0 {
                    f64::INFINITY
                } else {
                    (h_f * log_term / n_u as f64).sqrt()
                };
                b_rew[[h, x, a]] = bonus;
                let raw = state.r_hat[[x, a]]
                    + dot(state.p_hat.slice(s![x, a, ..]), v_up.row(h + 1))
                    + bonus;
                q_up[[h, x, a]] = cap.min(raw);
            }
            let mut best = 0usize;
            for a in 1..a_n {
                if q_up[[h, x, a]] > q_up[[h, x, best]] {
                    best = a;
                }
            }
            action[[h, x]] = best;
            v_up[[h, x]] = q_up[[h, x, best]];
        }
    }
    let policy = Policy::new(action, a_n).expect("argmax in range");
    OptimisticPlan {
        q_up,
        v_up,
        v_low,
        policy,
        b_rew,
        b_prob: Array3::zeros((horizon, s_n, a_n)),
        b_str: Array3::zeros((horizon, s_n, a_n)),
    }
}

/// One observed step of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub x: usize,
    pub a: usize,
    pub reward: f64,
}

pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: ArrayView1<'_, f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Execute one episode under the plan's policy and fold the observations
/// into the learner state. Counts increase by exactly H across pairs.
pub fn rollout_and_update<R: Rng + ?Sized>(
    state: &mut LearnerState,
    mdp: &TabularMDP,
    plan: &OptimisticPlan,
    rng: &mut R,
) -> Vec<Step> {
    let horizon = mdp.horizon();
    let mut x = sample_categorical(rng, mdp.p0().view());
    let mut traj = Vec::with_capacity(horizon);
    for h in 0..horizon {
        let a = plan.policy.act(h, x);
        let reward = mdp.reward(x, a).sample(rng);
        let x_next = sample_categorical(rng, mdp.trans_row(x, a));
        state.record(x, a, reward, x_next);
        traj.push(Step { x, a, reward });
        x = x_next;
    }
    state.episode += 1;
    traj
}

//! Exact dynamic-programming oracle: optimal values, gaps, variances,
//! transition-suboptimality coefficients, occupancy measures, and the
//! clipping thresholds derived from them.
//!
//! Everything here sees the true model. The learner never does.

use ndarray::{s, Array1, Array2, Array3, ArrayView1, Axis};

use crate::mdp::{ModelError, Policy, TabularMDP};

/// Relative tie tolerance for membership in the optimal-action set.
pub const TIE_TOL: f64 = 1e-9;

/// Policy-enumeration guard for [`brute_force_optimal`].
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Clipping operator: `x` if `x >= eps`, else 0. Idempotent and monotone in
/// `x` for fixed `eps`.
pub fn clip(eps: f64, x: f64) -> f64 {
    if x >= eps {
        x
    } else {
        0.0
    }
}

fn expected_value(p: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let mut acc = 0.0;
    for (pi, vi) in p.iter().zip(v.iter()) {
        acc += pi * vi;
    }
    acc
}

/// Optimal value and Q tables plus the tie-tolerant optimal-action sets.
#[derive(Clone, Debug)]
pub struct ValueSolution {
    /// (H+1, S); row H is the zero boundary.
    pub v_star: Array2<f64>,
    /// (H, S, A).
    pub q_star: Array3<f64>,
    /// (H, S, A): membership in the optimal-action set at (h, x).
    pub opt_actions: Array3<bool>,
}

impl ValueSolution {
    /// Value of the optimal policy at the initial distribution.
    pub fn initial_value(&self, mdp: &TabularMDP) -> f64 {
        expected_value(mdp.p0().view(), self.v_star.row(0))
    }

    /// Greedy policy (first-index tie break on the exact Q table).
    pub fn greedy_policy(&self) -> Policy {
        let (h, s, _) = self.q_star.dim();
        let mut action = Array2::zeros((h, s));
        for hh in 0..h {
            for x in 0..s {
                action[[hh, x]] = argmax(self.q_star.slice(s![hh, x, ..]));
            }
        }
        Policy::new(action, self.q_star.dim().2).expect("argmax in range")
    }
}

fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_v = row[0];
    for (a, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = a;
        }
    }
    best
}

/// Backward induction: Q*(h,x,a) = r(x,a) + p(x,a)'V*(h+1), V* = max_a Q*.
pub fn value_iteration(mdp: &TabularMDP) -> ValueSolution {
    let (s, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut v_star = Array2::zeros((h_n + 1, s));
    let mut q_star = Array3::zeros((h_n, s, a_n));
    let mut opt_actions = Array3::from_elem((h_n, s, a_n), false);
    for h in (0..h_n).rev() {
        for x in 0..s {
            for a in 0..a_n {
                q_star[[h, x, a]] = mdp.reward_mean()[[x, a]]
                    + expected_value(mdp.trans_row(x, a), v_star.row(h + 1));
            }
            let row = q_star.slice(s![h, x, ..]);
            let v = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            v_star[[h, x]] = v;
            let tol = TIE_TOL * v.abs().max(1.0);
            for a in 0..a_n {
                opt_actions[[h, x, a]] = q_star[[h, x, a]] >= v - tol;
            }
        }
    }
    ValueSolution { v_star, q_star, opt_actions }
}

/// Value table of a fixed policy and its initial-distribution value.
#[derive(Clone, Debug)]
pub struct PolicyValue {
    /// (H+1, S); row H is the zero boundary.
    pub v: Array2<f64>,
    /// p0' V(0, .)
    pub v0: f64,
}

pub fn evaluate_policy(mdp: &TabularMDP, policy: &Policy) -> PolicyValue {
    let (s, h_n) = (mdp.num_states(), mdp.horizon());
    let mut v = Array2::zeros((h_n + 1, s));
    for h in (0..h_n).rev() {
        for x in 0..s {
            let a = policy.act(h, x);
            v[[h, x]] = mdp.reward_mean()[[x, a]]
                + expected_value(mdp.trans_row(x, a), v.row(h + 1));
        }
    }
    let v0 = expected_value(mdp.p0().view(), v.row(0));
    PolicyValue { v, v0 }
}

/// Occupancy measure of a policy: w(h,x,a) = Pr[(x_h, a_h) = (x, a)].
#[derive(Clone, Debug)]
pub struct Occupancy {
    /// (H, S, A).
    pub w: Array3<f64>,
}

impl Occupancy {
    /// Stage-summed expected visits w(x,a) = sum_h w(h,x,a).
    pub fn per_pair(&self) -> Array2<f64> {
        self.w.sum_axis(Axis(0))
    }
}

pub fn occupancy(mdp: &TabularMDP, policy: &Policy) -> Occupancy {
    let (s, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut w = Array3::zeros((h_n, s, a_n));
    let mut d = mdp.p0().clone();
    for h in 0..h_n {
        let mut d_next = Array1::zeros(s);
        for x in 0..s {
            let a = policy.act(h, x);
            w[[h, x, a]] = d[x];
            if d[x] > 0.0 {
                for (x2, &p) in mdp.trans_row(x, a).iter().enumerate() {
                    d_next[x2] += d[x] * p;
                }
            }
        }
        d = d_next;
    }
    Occupancy { w }
}

/// Suboptimality gaps and the Z_opt / Z_sub partition.
#[derive(Clone, Debug)]
pub struct GapTables {
    /// (H, S, A): gap_h(x,a) = V*(h,x) - Q*(h,x,a).
    pub gap_h: Array3<f64>,
    /// (S, A): min over h.
    pub gap: Array2<f64>,
    /// Smallest gap over non-optimal triples; +inf when every triple is
    /// optimal (see `degenerate`).
    pub gap_min: f64,
    /// True when no positive gap exists (every action optimal everywhere).
    pub degenerate: bool,
    /// (S, A): pairs (x,a) with a optimal at x for some stage.
    pub z_opt: Array2<bool>,
    /// gap_min / (2H); +inf in the degenerate case.
    pub eps_clip: f64,
}

impl GapTables {
    pub fn z_opt_count(&self) -> usize {
        self.z_opt.iter().filter(|&&b| b).count()
    }

    pub fn z_sub_count(&self) -> usize {
        self.z_opt.len() - self.z_opt_count()
    }
}

/// Gaps from a solved value table. Positivity of a gap is decided by the
/// tie-tolerant optimal-action set, so the partition and gap_min agree.
pub fn compute_gaps(sol: &ValueSolution) -> GapTables {
    let (h_n, s, a_n) = sol.q_star.dim();
    let mut gap_h = Array3::zeros((h_n, s, a_n));
    let mut gap_min = f64::INFINITY;
    let mut z_opt = Array2::from_elem((s, a_n), false);
    for h in 0..h_n {
        for x in 0..s {
            for a in 0..a_n {
                let g = sol.v_star[[h, x]] - sol.q_star[[h, x, a]];
                gap_h[[h, x, a]] = g;
                if sol.opt_actions[[h, x, a]] {
                    z_opt[[x, a]] = true;
                } else if g < gap_min {
                    gap_min = g;
                }
            }
        }
    }
    let mut gap = Array2::zeros((s, a_n));
    for x in 0..s {
        for a in 0..a_n {
            gap[[x, a]] =
                (0..h_n).map(|h| gap_h[[h, x, a]]).fold(f64::INFINITY, f64::min);
        }
    }
    let degenerate = !gap_min.is_finite();
    let eps_clip = if degenerate {
        f64::INFINITY
    } else {
        gap_min / (2.0 * h_n as f64)
    };
    GapTables { gap_h, gap, gap_min, degenerate, z_opt, eps_clip }
}

/// Variance table for an arbitrary value function:
/// Var[R(x,a)] + Var_{x' ~ p(x,a)}[v(h+1, x')].
pub fn variance_table(mdp: &TabularMDP, v: &Array2<f64>) -> Array3<f64> {
    let (s, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut out = Array3::zeros((h_n, s, a_n));
    for h in 0..h_n {
        for x in 0..s {
            for a in 0..a_n {
                let p = mdp.trans_row(x, a);
                let vn = v.row(h + 1);
                let mean = expected_value(p, vn);
                let mut second = 0.0;
                for (pi, vi) in p.iter().zip(vn.iter()) {
                    second += pi * vi * vi;
                }
                let var_next = (second - mean * mean).max(0.0);
                out[[h, x, a]] = mdp.reward_var()[[x, a]] + var_next;
            }
        }
    }
    out
}

/// Elementwise min of two variance tables (Var^(k) = min(Var*, Var^pi)).
pub fn variance_min(a: &Array3<f64>, b: &Array3<f64>) -> Array3<f64> {
    let mut out = a.clone();
    out.zip_mut_with(b, |x, &y| *x = x.min(y));
    out
}

/// Transition-suboptimality coefficients: the smallest alpha in [0,1] with
/// p(x'|x,a) - p(x'|x,a*) <= alpha * p(x'|x,a) for all x', minimized over
/// optimal actions a*. Entries with p(x'|x,a) = 0 impose no constraint.
pub fn compute_alpha(mdp: &TabularMDP, opt_actions: &Array3<bool>) -> Array3<f64> {
    let (s, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut alpha = Array3::zeros((h_n, s, a_n));
    for h in 0..h_n {
        for x in 0..s {
            for a in 0..a_n {
                let p = mdp.trans_row(x, a);
                let mut best = f64::INFINITY;
                for a_star in 0..a_n {
                    if !opt_actions[[h, x, a_star]] {
                        continue;
                    }
                    let p_star = mdp.trans_row(x, a_star);
                    let mut need = 0.0f64;
                    for (pi, psi) in p.iter().zip(p_star.iter()) {
                        if *pi > 0.0 {
                            need = need.max(1.0 - psi / pi);
                        }
                    }
                    best = best.min(need);
                }
                alpha[[h, x, a]] = best.clamp(0.0, 1.0);
            }
        }
    }
    alpha
}

/// Largest cumulative reward attainable along any positive-probability
/// trajectory (the reward bound G of the benign-instance analysis).
pub fn max_cumulative_reward(mdp: &TabularMDP) -> f64 {
    let (s, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut g = Array1::zeros(s);
    for _ in (0..h_n).rev() {
        let mut g_prev = Array1::from_elem(s, f64::NEG_INFINITY);
        for x in 0..s {
            for a in 0..a_n {
                let mut future = 0.0f64;
                let mut reachable = false;
                for (x2, &p) in mdp.trans_row(x, a).iter().enumerate() {
                    if p > 0.0 {
                        future = if reachable { future.max(g[x2]) } else { g[x2] };
                        reachable = true;
                    }
                }
                let total = mdp.reward(x, a).support_max() + if reachable { future } else { 0.0 };
                g_prev[x] = g_prev[x].max(total);
            }
        }
        g = g_prev;
    }
    let mut out = f64::NEG_INFINITY;
    for (x, &p) in mdp.p0().iter().enumerate() {
        if p > 0.0 {
            out = out.max(g[x]);
        }
    }
    out
}

/// Exhaustive enumeration of all A^(S*H) deterministic nonstationary
/// policies. This is the independent test oracle for [`value_iteration`].
pub fn brute_force_optimal(mdp: &TabularMDP) -> Result<(f64, Policy), ModelError> {
    let (s, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let cells = s * h_n;
    let count = (a_n as f64).powi(cells as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(ModelError::InstanceTooLarge { policies: count, limit: BRUTE_FORCE_LIMIT });
    }
    let mut assignment = vec![0usize; cells];
    let mut best_v = f64::NEG_INFINITY;
    let mut best: Option<Policy> = None;
    loop {
        let action = Array2::from_shape_fn((h_n, s), |(h, x)| assignment[h * s + x]);
        let policy = Policy::new(action, a_n)?;
        let v0 = evaluate_policy(mdp, &policy).v0;
        if v0 > best_v {
            best_v = v0;
            best = Some(policy);
        }
        // Mixed-radix increment over the (h, x) cells.
        let mut i = 0;
        loop {
            if i == cells {
                return Ok((best_v, best.expect("at least one policy")));
            }
            assignment[i] += 1;
            if assignment[i] < a_n {
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
    }
}

/// Every oracle quantity the per-episode diagnostics consume, solved once
/// per instance.
#[derive(Clone, Debug)]
pub struct OracleTables {
    pub sol: ValueSolution,
    pub gaps: GapTables,
    /// (H, S, A): Var*_{h,x,a}.
    pub var_star: Array3<f64>,
    /// (S, A): max over h.
    pub var_star_max: Array2<f64>,
    /// max over (h,x,a).
    pub var_bar: f64,
    /// (H, S, A): transition-suboptimality coefficients.
    pub alpha: Array3<f64>,
    /// (H, S, A): clipping thresholds gap_min/(2H) v gap_h/(4 max(H a, 1)).
    /// In the degenerate all-optimal case only the second branch is used.
    pub gap_clipped: Array3<f64>,
    /// Reward bound G.
    pub g_bound: f64,
    /// V*_0 at the initial distribution.
    pub v_star_0: f64,
}

impl OracleTables {
    pub fn solve(mdp: &TabularMDP) -> Self {
        let sol = value_iteration(mdp);
        let gaps = compute_gaps(&sol);
        let var_star = variance_table(mdp, &sol.v_star);
        let var_star_max = var_star.fold_axis(Axis(0), f64::NEG_INFINITY, |acc, &v| acc.max(v));
        let var_bar = var_star.iter().cloned().fold(0.0, f64::max);
        let alpha = compute_alpha(mdp, &sol.opt_actions);
        let h_f = mdp.horizon() as f64;
        let mut gap_clipped = Array3::zeros(gaps.gap_h.dim());
        for ((idx, g), &al) in gaps.gap_h.indexed_iter().zip(alpha.iter()) {
            let branch = g / (4.0 * (h_f * al).max(1.0));
            gap_clipped[idx] = if gaps.degenerate { branch } else { branch.max(gaps.eps_clip) };
        }
        let g_bound = max_cumulative_reward(mdp);
        let v_star_0 = sol.initial_value(mdp);
        Self {
            sol,
            gaps,
            var_star,
            var_star_max,
            var_bar,
            alpha,
            gap_clipped,
            g_bound,
            v_star_0,
        }
    }

    /// Effective horizon at total round count `t`: min(Var-bar, G^2 log(t)/H).
    pub fn eff_horizon(&self, t: f64) -> f64 {
        let h = self.gaps.gap_h.dim().0 as f64;
        self.var_bar.min(self.g_bound * self.g_bound * t.ln() / h)
    }
}

//! The `solve` oracle report and the `verify` theorem-check gate.

use regretlab_core::diagnostics::{bound_terms, BoundRegime, BoundTerms};
use regretlab_core::simulator::{run, RunConfig, SimError};
use regretlab_core::{InstanceSpec, OracleTables};
use serde::Serialize;

use crate::config::ConfigError;

/// Oracle summary for an instance, evaluated at a given (K, delta).
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub v_star_0: f64,
    pub degenerate_gaps: bool,
    pub gap_min: Option<f64>,
    pub eps_clip: Option<f64>,
    pub z_opt: usize,
    pub z_sub: usize,
    pub var_bar: f64,
    pub alpha_max: f64,
    pub alpha_zero_fraction: f64,
    pub g_bound: f64,
    pub episodes: usize,
    pub delta: f64,
    pub eff_horizon: f64,
    /// Up to an unknown universal constant.
    pub bound_terms: Option<BoundTerms>,
    /// gap(x,a) = min_h gap_h(x,a), one row per state.
    pub gap_table: Vec<Vec<f64>>,
}

pub fn solve_report(
    spec: &InstanceSpec,
    episodes: usize,
    delta: f64,
) -> Result<SolveReport, ConfigError> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(ConfigError::Invalid(format!("delta {delta} outside (0, 1/2)")));
    }
    let mdp = spec.build().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let oracle = OracleTables::solve(&mdp);
    let (s, a, h) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let alpha_max = oracle.alpha.iter().cloned().fold(0.0, f64::max);
    let alpha_zero = oracle.alpha.iter().filter(|&&v| v == 0.0).count();
    let terms = bound_terms(&oracle, s, a, h, episodes, delta, BoundRegime::General).ok();
    let gap_table = (0..s)
        .map(|x| (0..a).map(|aa| oracle.gaps.gap[[x, aa]]).collect())
        .collect();
    Ok(SolveReport {
        states: s,
        actions: a,
        horizon: h,
        v_star_0: oracle.v_star_0,
        degenerate_gaps: oracle.gaps.degenerate,
        gap_min: (!oracle.gaps.degenerate).then_some(oracle.gaps.gap_min),
        eps_clip: (!oracle.gaps.degenerate).then_some(oracle.gaps.eps_clip),
        z_opt: oracle.gaps.z_opt_count(),
        z_sub: oracle.gaps.z_sub_count(),
        var_bar: oracle.var_bar,
        alpha_max,
        alpha_zero_fraction: alpha_zero as f64 / oracle.alpha.len() as f64,
        g_bound: oracle.g_bound,
        episodes,
        delta,
        eff_horizon: oracle.eff_horizon((episodes * h) as f64),
        bound_terms: terms,
        gap_table,
    })
}

impl SolveReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let p = &mut out;
        use std::fmt::Write as _;
        writeln!(p, "instance: S={} A={} H={}", self.states, self.actions, self.horizon).unwrap();
        writeln!(p, "V*_0 = {:.12}", self.v_star_0).unwrap();
        if self.degenerate_gaps {
            writeln!(p, "gaps: DEGENERATE (every action optimal; gap_min undefined)").unwrap();
        } else {
            writeln!(p, "gap_min = {:.12}", self.gap_min.unwrap()).unwrap();
            writeln!(p, "eps_clip = gap_min/(2H) = {:.12}", self.eps_clip.unwrap()).unwrap();
        }
        writeln!(p, "|Z_opt| = {}  |Z_sub| = {}", self.z_opt, self.z_sub).unwrap();
        writeln!(p, "var_bar = {:.12}", self.var_bar).unwrap();
        writeln!(
            p,
            "alpha: max = {:.12}, zero fraction = {:.4}",
            self.alpha_max, self.alpha_zero_fraction
        )
        .unwrap();
        writeln!(p, "G (reward bound) = {:.12}", self.g_bound).unwrap();
        writeln!(
            p,
            "effective horizon at T = K*H (K={}): {:.12}",
            self.episodes, self.eff_horizon
        )
        .unwrap();
        match &self.bound_terms {
            Some(t) => {
                writeln!(p, "bound terms at K={}, delta={} (up to universal constant):", self.episodes, self.delta)
                    .unwrap();
                writeln!(p, "  gap sum term  = {:.6e}", t.gap_sum).unwrap();
                writeln!(p, "  opt-set term  = {:.6e}", t.opt).unwrap();
                writeln!(p, "  burn-in term  = {:.6e}", t.burnin).unwrap();
            }
            None => writeln!(p, "bound terms: undefined (degenerate gaps)").unwrap(),
        }
        writeln!(p, "gap(x,a) = min_h gap_h(x,a):").unwrap();
        for (x, row) in self.gap_table.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|g| format!("{g:.6}")).collect();
            writeln!(p, "  x={x}: [{}]", cells.join(", ")).unwrap();
        }
        out
    }
}

/// Outcome of the verify gate: the first failing (episode, check) pair, if
/// any, plus context for the report line.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyOutcome {
    pub episodes: usize,
    pub passed: bool,
    pub first_failure: Option<FailedCheck>,
    pub optimism_violations: usize,
    pub strong_optimism_violations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FailedCheck {
    pub episode: usize,
    pub check: String,
    pub optimism_ok: bool,
    pub strong_optimism_ok: bool,
}

/// Run the config with every diagnostic forced on and check, per episode:
/// the exact identities (occupancy normalization, gap-form regret, surplus
/// decomposition) unconditionally, and the theorem instances conditioned on
/// their optimism preconditions. Optimism failing by itself is expected
/// data, not a failure; an identity or conditional-instance violation is.
pub fn verify(config: &RunConfig) -> Result<VerifyOutcome, SimError> {
    let mut cfg = config.clone();
    cfg.diagnostics.clipped = true;
    cfg.diagnostics.half_clip = true;
    cfg.diagnostics.sampling = true;
    cfg.diagnostics.every = 1;
    let ledger = run(&cfg)?;
    let tol = regretlab_core::diagnostics::CHECK_TOL;
    let mut first_failure = None;
    'scan: for r in &ledger.records {
        let checks: [(bool, &str); 7] = [
            (r.occupancy_err <= tol, "occupancy-normalization"),
            (r.gap_identity_err <= tol, "gap-regret-identity"),
            (r.decomposition_err <= tol, "surplus-decomposition"),
            (
                !r.optimism_ok || r.v_up_0 >= ledger.summary.v_star_0 - tol,
                "optimism-value-dominance",
            ),
            (!r.optimism_ok || r.clip_ok_general, "clip-general"),
            (!r.strong_optimism_ok || r.clip_ok_alpha, "clip-alpha"),
            (!r.optimism_ok || r.half_clip_ok, "half-clip"),
        ];
        for (ok, name) in checks {
            if !ok {
                first_failure = Some(FailedCheck {
                    episode: r.episode,
                    check: name.to_string(),
                    optimism_ok: r.optimism_ok,
                    strong_optimism_ok: r.strong_optimism_ok,
                });
                break 'scan;
            }
        }
    }
    Ok(VerifyOutcome {
        episodes: ledger.records.len(),
        passed: first_failure.is_none(),
        first_failure,
        optimism_violations: ledger.summary.optimism_violations,
        strong_optimism_violations: ledger.summary.strong_optimism_violations,
    })
}

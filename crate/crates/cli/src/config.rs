//! TOML configuration: schema, defaults, validation, and `--set` overrides.
//!
//! A config document has an `[instance]` table, an optional `[run]` table,
//! an optional `[diagnostics]` table, and an optional `[sweep]` table:
//!
//! ```toml
//! [instance]
//! kind = "random"        # info_lb | mingap_lb | contextual_bandit | random
//! states = 5
//! actions = 3
//! horizon = 4
//! seed = 7
//! concentration = 1.0    # random only, default 1.0
//! # info_lb:            delta = [[0.2], [0.2]]   (S rows, A-1 columns)
//! # mingap_lb:          eps = 0.05               (block size in `states`)
//! # contextual_bandit:  means = [[0.2, 0.9]], next_dist = [1.0]
//!
//! [run]
//! algo = "strong_euler"  # or "ucbvi_ch"
//! episodes = 1000
//! delta = 0.1            # confidence parameter, in (0, 1/2)
//! seed = 0
//! lfactor = "linear_count" # or "squared_count"
//! probe = [8, 0]         # optional (state, action) visit-count probe
//! fault_qup_offset = 0.0 # verifier fault-injection hook
//!
//! [diagnostics]
//! clipped = true
//! half_clip = true
//! sampling = true
//! surplus_ratio = false
//! every = 1
//!
//! [sweep]
//! seeds = [0, 1, 2]      # replicates the run config across seeds
//! ```
//!
//! Unknown keys are rejected with the offending key name; parse errors carry
//! line/column positions.

use regretlab_core::instances::InstanceSpec;
use regretlab_core::learner::LFactorVariant;
use regretlab_core::simulator::{Algo, DiagnosticConfig, RunConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config error: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub instance: InstanceSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub diagnostics: DiagnosticConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceSection {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub states: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concentration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub means: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub next_dist: Option<Vec<f64>>,
}

impl InstanceSection {
    pub fn to_spec(&self) -> Result<InstanceSpec, ConfigError> {
        fn need<T: Clone>(opt: &Option<T>, key: &str, kind: &str) -> Result<T, ConfigError> {
            opt.clone().ok_or_else(|| {
                ConfigError::Invalid(format!("instance.{key} is required for kind \"{kind}\""))
            })
        }
        match self.kind.as_str() {
            "info_lb" => Ok(InstanceSpec::InfoLb {
                states: need(&self.states, "states", "info_lb")?,
                actions: need(&self.actions, "actions", "info_lb")?,
                horizon: need(&self.horizon, "horizon", "info_lb")?,
                delta: need(&self.delta, "delta", "info_lb")?,
            }),
            "mingap_lb" => Ok(InstanceSpec::MingapLb {
                states: need(&self.states, "states", "mingap_lb")?,
                eps: need(&self.eps, "eps", "mingap_lb")?,
            }),
            "contextual_bandit" => Ok(InstanceSpec::ContextualBandit {
                horizon: need(&self.horizon, "horizon", "contextual_bandit")?,
                means: need(&self.means, "means", "contextual_bandit")?,
                next_dist: need(&self.next_dist, "next_dist", "contextual_bandit")?,
            }),
            "random" => Ok(InstanceSpec::Random {
                states: need(&self.states, "states", "random")?,
                actions: need(&self.actions, "actions", "random")?,
                horizon: need(&self.horizon, "horizon", "random")?,
                seed: need(&self.seed, "seed", "random")?,
                concentration: self.concentration.unwrap_or(1.0),
            }),
            other => Err(ConfigError::Invalid(format!(
                "unknown instance kind \"{other}\" (expected info_lb, mingap_lb, contextual_bandit, or random)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub algo: Algo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    pub delta: f64,
    pub seed: u64,
    pub lfactor: LFactorVariant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<[usize; 2]>,
    pub fault_qup_offset: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            algo: Algo::StrongEuler,
            episodes: None,
            delta: 0.1,
            seed: 0,
            lfactor: LFactorVariant::LinearCount,
            probe: None,
            fault_qup_offset: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
}

/// Parse a config document and apply `key.path=value` overrides.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ConfigFile, ConfigError> {
    if overrides.is_empty() {
        return toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()));
    }
    let mut value: toml::Value =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    for (key, raw) in overrides {
        apply_override(&mut value, key, raw)?;
    }
    let rendered = toml::to_string(&value)
        .map_err(|e| ConfigError::Invalid(format!("override produced invalid config: {e}")))?;
    toml::from_str(&rendered).map_err(|e| ConfigError::Parse(e.to_string()))
}

fn apply_override(value: &mut toml::Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Invalid(format!("bad override key \"{key}\"")));
    }
    let mut node = value;
    for part in &parts[..parts.len() - 1] {
        let table = node.as_table_mut().ok_or_else(|| {
            ConfigError::Invalid(format!("override \"{key}\": \"{part}\" is not a table"))
        })?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(|| {
        ConfigError::Invalid(format!("override \"{key}\" does not address a table entry"))
    })?;
    table.insert(parts[parts.len() - 1].to_string(), parse_toml_literal(raw));
    Ok(())
}

/// Interpret an override value as a TOML literal, falling back to a string.
fn parse_toml_literal(raw: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    match toml::from_str::<Probe>(&format!("v = {raw}")) {
        Ok(p) => p.v,
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Materialize the single-run configuration (episodes required).
pub fn base_run_config(cfg: &ConfigFile) -> Result<RunConfig, ConfigError> {
    let instance = cfg.instance.to_spec()?;
    let episodes = cfg
        .run
        .episodes
        .ok_or_else(|| ConfigError::Invalid("run.episodes is required".into()))?;
    let rc = RunConfig {
        instance,
        algo: cfg.run.algo,
        episodes,
        delta: cfg.run.delta,
        seed: cfg.run.seed,
        lfactor: cfg.run.lfactor,
        diagnostics: cfg.diagnostics,
        probe: cfg.run.probe.map(|[x, a]| (x, a)),
        fault_qup_offset: cfg.run.fault_qup_offset,
    };
    rc.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(rc)
}

/// Expand the `[sweep]` section into one run config per seed.
pub fn sweep_run_configs(cfg: &ConfigFile) -> Result<Vec<RunConfig>, ConfigError> {
    let base = base_run_config(cfg)?;
    let seeds = cfg
        .sweep
        .as_ref()
        .filter(|s| !s.seeds.is_empty())
        .ok_or_else(|| ConfigError::Invalid("sweep.seeds must be a nonempty list".into()))?
        .seeds
        .clone();
    Ok(seeds
        .into_iter()
        .map(|seed| {
            let mut c = base.clone();
            c.seed = seed;
            c
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[instance]
kind = "random"
states = 3
actions = 2
horizon = 3
seed = 1

[run]
episodes = 100
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL, &[]).unwrap();
        let rc = base_run_config(&cfg).unwrap();
        assert_eq!(rc.episodes, 100);
        assert_eq!(rc.delta, 0.1);
        assert_eq!(rc.algo, Algo::StrongEuler);
        assert_eq!(rc.lfactor, LFactorVariant::LinearCount);
        assert_eq!(rc.seed, 0);
        assert!(rc.diagnostics.clipped && rc.diagnostics.half_clip);
        assert_eq!(rc.diagnostics.every, 1);
    }

    #[test]
    fn unknown_key_named_in_error() {
        let text = format!("{MINIMAL}gamma = 0.9\n");
        let err = parse_config(&text, &[]).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
    }

    #[test]
    fn unknown_nested_key_named() {
        let text = MINIMAL.replace("episodes = 100", "episodes = 100\nwarmup = 5");
        let err = parse_config(&text, &[]).unwrap_err();
        assert!(err.to_string().contains("warmup"), "{err}");
    }

    #[test]
    fn delta_outside_half_rejected() {
        let text = MINIMAL.replace("episodes = 100", "episodes = 100\ndelta = 0.6");
        let cfg = parse_config(&text, &[]).unwrap();
        let err = base_run_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
    }

    #[test]
    fn parse_error_reports_position() {
        let err = parse_config("[instance\nkind = \"random\"", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn overrides_apply_and_revalidate() {
        let cfg = parse_config(
            MINIMAL,
            &[
                ("run.episodes".into(), "7".into()),
                ("run.algo".into(), "\"ucbvi_ch\"".into()),
                ("diagnostics.every".into(), "5".into()),
            ],
        )
        .unwrap();
        let rc = base_run_config(&cfg).unwrap();
        assert_eq!(rc.episodes, 7);
        assert_eq!(rc.algo, Algo::UcbviCh);
        assert_eq!(rc.diagnostics.every, 5);
        // Bare strings work without quotes too.
        let cfg = parse_config(MINIMAL, &[("run.algo".into(), "ucbvi_ch".into())]).unwrap();
        assert_eq!(base_run_config(&cfg).unwrap().algo, Algo::UcbviCh);
        // Overrides hit the same unknown-key validation.
        let err = parse_config(MINIMAL, &[("run.gamma".into(), "1".into())]).unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    #[test]
    fn missing_kind_field_reported() {
        let text = "[instance]\nkind = \"mingap_lb\"\nstates = 4\n\n[run]\nepisodes = 5\n";
        let cfg = parse_config(text, &[]).unwrap();
        let err = base_run_config(&cfg).unwrap_err();
        assert!(err.to_string().contains("instance.eps"), "{err}");
    }

    #[test]
    fn sweep_expansion_sets_seeds() {
        let text = format!("{MINIMAL}\n[sweep]\nseeds = [3, 9]\n");
        let cfg = parse_config(&text, &[]).unwrap();
        let runs = sweep_run_configs(&cfg).unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].seed, 3);
        assert_eq!(runs[1].seed, 9);
        assert_eq!(runs[0].instance, runs[1].instance);
    }
}

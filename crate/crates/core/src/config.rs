//! TOML experiment configuration.
//!
//! ```toml
//! seed = 42
//! window = 5
//! meta_events = 1000
//! replicas = 150
//!
//! [initial]
//! low = 0.0
//! high = 0.25
//!
//! [resource_a]
//! capacity = 1.0
//! alpha = [0.01, 0.08, 0.61, 0.045]
//! beta = [0.95, 0.9, 0.85, 0.75]
//!
//! [resource_b]
//! alpha = [0.07, 0.08, 0.025, 0.02]
//! beta = [0.65, 0.7, 0.8, 0.85]
//!
//! [policy]
//! kind = "window_mean"
//! floor = 0.01
//! ```
//!
//! Every semantic error names the offending field, e.g. `resource_b.beta[2]`.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aimd::{ResourceParams, ShareVector};
use crate::engine::{first_capacity_state, CoupledModel};
use crate::error::{Error, Result};
use crate::policy::{DropPolicy, PolicySpec};

/// Additive and multiplicative parameters of one resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceConfig {
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

fn default_capacity() -> f64 {
    1.0
}

impl ResourceConfig {
    pub fn build(&self, field: &str) -> Result<ResourceParams> {
        if self.alpha.len() != self.beta.len() {
            return Err(Error::invalid(
                format!("{field}.beta"),
                format!("has {} entries, alpha has {}", self.beta.len(), self.alpha.len()),
            ));
        }
        ResourceParams::from_slices(&self.alpha, &self.beta, self.capacity).map_err(|e| match e {
            // `agents[i].beta` reads as `beta[i]` in the file layout
            Error::InvalidParameter { field: f, reason } => {
                let f = match f.strip_prefix("agents[").and_then(|r| r.split_once("].")) {
                    Some((i, key)) => format!("{key}[{i}]"),
                    None => f,
                };
                Error::invalid(format!("{field}.{f}"), reason)
            }
            other => other,
        })
    }
}

/// Initial demands, drawn independently and uniformly per agent before the
/// system is grown (or scaled) to its first capacity event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub low: f64,
    pub high: f64,
}

impl InitialConfig {
    fn validate(&self) -> Result<()> {
        if !(self.low.is_finite() && self.low >= 0.0) {
            return Err(Error::invalid("initial.low", format!("must be >= 0, got {}", self.low)));
        }
        if !(self.high.is_finite() && self.high >= self.low) {
            return Err(Error::invalid(
                "initial.high",
                format!("must be finite and >= initial.low, got {}", self.high),
            ));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                if self.high > self.low {
                    rng.random_range(self.low..self.high)
                } else {
                    self.low
                }
            })
            .collect()
    }
}

/// Sample counts for the `verify` subcommand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_gammas")]
    pub gammas: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

fn default_gammas() -> usize {
    100
}
fn default_samples() -> usize {
    100
}
fn default_pairs() -> usize {
    1000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            gammas: default_gammas(),
            samples: default_samples(),
            pairs: default_pairs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Averaging window `N`, which is also the number of events per meta window.
    pub window: usize,
    /// Number of meta events `L` per run.
    pub meta_events: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Extra decrease at every meta event; off by default.
    #[serde(default)]
    pub global_md: bool,
    /// Capacity events simulated by the `oracle` subcommand.
    #[serde(default = "default_oracle_events")]
    pub oracle_events: u64,
    pub initial: InitialConfig,
    pub resource_a: ResourceConfig,
    pub resource_b: ResourceConfig,
    pub policy: PolicySpec,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_replicas() -> usize {
    1
}
fn default_oracle_events() -> u64 {
    100_000
}

/// A validated configuration with its parameters resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub params_a: ResourceParams,
    pub params_b: ResourceParams,
    pub policy: DropPolicy,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every field and resolves parameters and policy.
    pub fn validate(&self) -> Result<Resolved> {
        if self.window == 0 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        if self.meta_events == 0 {
            return Err(Error::invalid("meta_events", "must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("replicas", "must be at least 1"));
        }
        self.initial.validate()?;
        let params_a = self.resource_a.build("resource_a")?;
        let params_b = self.resource_b.build("resource_b")?;
        if params_a.n() != params_b.n() {
            return Err(Error::invalid(
                "resource_b.alpha",
                format!("has {} agents, resource_a has {}", params_b.n(), params_a.n()),
            ));
        }
        let policy = self.policy.build(params_a.n(), self.window)?;
        Ok(Resolved {
            params_a,
            params_b,
            policy,
        })
    }

    pub fn model(&self) -> Result<CoupledModel> {
        let r = self.validate()?;
        let mut model = CoupledModel::new(r.params_a, r.params_b, self.window, r.policy)?;
        model.global_md = self.global_md;
        Ok(model)
    }

    /// Draws initial demands for both resources and moves each to its first
    /// capacity event.
    pub fn initial_states<R: Rng + ?Sized>(&self, model: &CoupledModel, rng: &mut R) -> Result<(ShareVector, ShareVector)> {
        let n = model.n();
        let xa = first_capacity_state(&model.params_a, &self.initial.sample(rng, n))?;
        let xb = first_capacity_state(&model.params_b, &self.initial.sample(rng, n))?;
        Ok((xa, xb))
    }

    /// The setup of the four-agent simulation study: window 5, 150 replicas,
    /// initial demands uniform on `[0, 0.25]`, window-mean policy.
    pub fn table1() -> Self {
        Self {
            seed: 42,
            window: 5,
            meta_events: 1000,
            replicas: 150,
            output_dir: None,
            global_md: false,
            oracle_events: default_oracle_events(),
            initial: InitialConfig { low: 0.0, high: 0.25 },
            resource_a: ResourceConfig {
                capacity: 1.0,
                alpha: vec![0.01, 0.08, 0.61, 0.045],
                beta: vec![0.95, 0.9, 0.85, 0.75],
            },
            resource_b: ResourceConfig {
                capacity: 1.0,
                alpha: vec![0.07, 0.08, 0.025, 0.02],
                beta: vec![0.65, 0.7, 0.8, 0.85],
            },
            policy: PolicySpec::window_mean(),
            verify: VerifyConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    #[test]
    fn table1_round_trips() {
        let cfg = ExperimentConfig::table1();
        let text = cfg.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.to_toml().unwrap(), text);
        cfg.validate().unwrap();
    }

    #[test]
    fn doc_example_parses() {
        let text = r#"
seed = 42
window = 5
meta_events = 1000
replicas = 150

[initial]
low = 0.0
high = 0.25

[resource_a]
capacity = 1.0
alpha = [0.01, 0.08, 0.61, 0.045]
beta = [0.95, 0.9, 0.85, 0.75]

[resource_b]
alpha = [0.07, 0.08, 0.025, 0.02]
beta = [0.65, 0.7, 0.8, 0.85]

[policy]
kind = "window_mean"
floor = 0.01
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg, ExperimentConfig::table1());
    }

    #[test]
    fn utility_policy_round_trips() {
        let mut cfg = ExperimentConfig::table1();
        cfg.policy = PolicySpec {
            kind: PolicyKind::UtilityGradient {
                utilities: vec![
                    crate::policy::UtilitySpec::Quadratic {
                        weight_a: 1.0,
                        weight_b: 2.0
                    };
                    4
                ],
                xi: Some(0.3),
            },
            floor: 0.02,
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, back);
        back.validate().unwrap();
    }

    fn field_of(e: Error) -> String {
        match e {
            Error::InvalidParameter { field, .. } => field,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_name_fields() {
        let mut cfg = ExperimentConfig::table1();
        cfg.resource_b.beta[2] = 1.5;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "resource_b.beta[2]");

        let mut cfg = ExperimentConfig::table1();
        cfg.resource_b.alpha.pop();
        cfg.resource_b.beta.pop();
        assert_eq!(field_of(cfg.validate().unwrap_err()), "resource_b.alpha");

        let mut cfg = ExperimentConfig::table1();
        cfg.window = 0;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "window");

        let mut cfg = ExperimentConfig::table1();
        cfg.replicas = 0;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "replicas");

        let mut cfg = ExperimentConfig::table1();
        cfg.initial.high = -1.0;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "initial.high");

        let mut cfg = ExperimentConfig::table1();
        cfg.policy = PolicySpec::constant(vec![0.5; 3], vec![0.5; 4]);
        assert_eq!(field_of(cfg.validate().unwrap_err()), "policy.probabilities_a");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = ExperimentConfig::table1().to_toml().unwrap() + "\nbogus = 1\n";
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn initial_states_reach_capacity() {
        use rand::SeedableRng;
        let cfg = ExperimentConfig::table1();
        let model = cfg.model().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (xa, xb) = cfg.initial_states(&model, &mut rng).unwrap();
        for x in [xa, xb] {
            assert!((x.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

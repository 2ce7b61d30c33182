use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blockchain::{PriorityClass, SmartEnergyContract};
use crate::dataset::GeneratorParams;
use crate::regressors::{ModelKind, RegressorSpec};

#[derive(Debug, Error, PartialEq)]
#[error("{field}: {reason}")]
pub struct ConfigError {
    /// Dotted path of the offending field, e.g. `links.default.loss_prob`.
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub base_delay_ms: f64,
    pub jitter_sigma_ms: f64,
    pub loss_prob: f64,
    pub capacity_mbps: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            base_delay_ms: 30.0,
            jitter_sigma_ms: 6.0,
            loss_prob: 0.0,
            capacity_mbps: 10.0,
        }
    }
}

impl LinkParams {
    pub fn validate(&self, path: &str) -> Result<(), ConfigError> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(ConfigError::new(format!("{path}.{name}"), format!("{v} must be finite and >= 0")))
            }
        };
        nonneg("base_delay_ms", self.base_delay_ms)?;
        nonneg("jitter_sigma_ms", self.jitter_sigma_ms)?;
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(ConfigError::new(
                format!("{path}.loss_prob"),
                format!("{} outside [0, 1]", self.loss_prob),
            ));
        }
        if !(self.capacity_mbps.is_finite() && self.capacity_mbps > 0.0) {
            return Err(ConfigError::new(format!("{path}.capacity_mbps"), "must be > 0"));
        }
        Ok(())
    }

    /// Expected one-way delay: base plus the mean of a half-normal.
    pub fn mean_delay_ms(&self) -> f64 {
        self.base_delay_ms + self.jitter_sigma_ms * (2.0 / std::f64::consts::PI).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    pub a: u32,
    pub b: u32,
    pub params: LinkParams,
}

/// Symmetric per-pair link parameters with a shared default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinksConfig {
    #[serde(default)]
    pub default: LinkParams,
    #[serde(default)]
    pub pairs: Vec<LinkOverride>,
}

impl LinksConfig {
    pub fn uniform(params: LinkParams) -> Self {
        Self {
            default: params,
            pairs: Vec::new(),
        }
    }

    pub fn get(&self, a: u32, b: u32) -> &LinkParams {
        self.pairs
            .iter()
            .find(|o| (o.a, o.b) == (a, b) || (o.a, o.b) == (b, a))
            .map_or(&self.default, |o| &o.params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quorum {
    /// Strict majority of the nodes that are up.
    Majority,
    Count(u32),
}

impl Serialize for Quorum {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Quorum::Majority => s.serialize_str("majority"),
            Quorum::Count(n) => s.serialize_u32(*n),
        }
    }
}

impl<'de> Deserialize<'de> for Quorum {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u32),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Quorum::Count(n)),
            Raw::Word(w) if w == "majority" => Ok(Quorum::Majority),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "expected \"majority\" or a count, got \"{w}\""
            ))),
        }
    }
}

impl Quorum {
    pub fn needed(&self, live_nodes: usize) -> usize {
        match self {
            Quorum::Majority => live_nodes / 2 + 1,
            Quorum::Count(n) => *n as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FailureKind {
    MasterDown,
    MasterUp,
    /// The listed nodes become reachable only among themselves.
    Partition { nodes: Vec<u32> },
    Heal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: FailureKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicatePolicy {
    /// Duplicates are traced but the block is still proposed.
    #[default]
    Advisory,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadParams {
    /// Trading requests submitted at every round tick.
    pub txs_per_round: u32,
    pub max_txs_per_block: usize,
    pub energy_kwh_min: f64,
    pub energy_kwh_max: f64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        Self {
            txs_per_round: 2,
            max_txs_per_block: 16,
            energy_kwh_min: 0.5,
            energy_kwh_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_nodes: u32,
    #[serde(default)]
    pub master_id: u32,
    #[serde(default = "default_quorum")]
    pub quorum: Quorum,
    #[serde(default)]
    pub links: LinksConfig,
    #[serde(default)]
    pub failure_schedule: Vec<FailureEvent>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_model_spec")]
    pub model_spec: RegressorSpec,
    pub max_rounds: u64,
    #[serde(default = "default_round_interval")]
    pub round_interval_ms: u64,
    /// Synthetic data the nonce model is trained on.
    #[serde(default = "default_training")]
    pub training: GeneratorParams,
    #[serde(default)]
    pub whitening: bool,
    #[serde(default)]
    pub duplicate_policy: DuplicatePolicy,
    #[serde(default = "default_window")]
    pub nonce_window: usize,
    #[serde(default = "default_timeout_factor")]
    pub vote_timeout_rtt_factor: f64,
    #[serde(default)]
    pub workload: WorkloadParams,
    #[serde(default = "default_contracts")]
    pub contracts: Vec<SmartEnergyContract>,
    /// Round numbers whose proposals are corrupted in flight to every peer.
    #[serde(default)]
    pub tamper_rounds: Vec<u64>,
}

fn default_quorum() -> Quorum {
    Quorum::Majority
}

fn default_model_spec() -> RegressorSpec {
    RegressorSpec::default_for(ModelKind::RandomForest, 0)
}

fn default_round_interval() -> u64 {
    1000
}

fn default_training() -> GeneratorParams {
    GeneratorParams {
        n: 2000,
        ..Default::default()
    }
}

fn default_window() -> usize {
    crate::nonce::DEFAULT_WINDOW
}

fn default_timeout_factor() -> f64 {
    5.0
}

/// Six prosumers trading around a ring; the first pair serves a critical site.
pub fn default_contracts() -> Vec<SmartEnergyContract> {
    (0..6u32)
        .map(|p| SmartEnergyContract {
            contract_id: p as u64 + 1,
            producer_id: p,
            consumer_id: (p + 1) % 6,
            unit_price: 0.20 + 0.01 * p as f64,
            disaster_mode: true,
            priority_class: if p == 0 {
                PriorityClass::Critical
            } else {
                PriorityClass::Normal
            },
        })
        .collect()
}

impl SimConfig {
    /// Minimal valid configuration with default links and model.
    pub fn new(n_nodes: u32, max_rounds: u64, seed: u64) -> Self {
        Self {
            n_nodes,
            master_id: 0,
            quorum: Quorum::Majority,
            links: LinksConfig::default(),
            failure_schedule: Vec::new(),
            seed,
            model_spec: default_model_spec(),
            max_rounds,
            round_interval_ms: default_round_interval(),
            training: default_training(),
            whitening: false,
            duplicate_policy: DuplicatePolicy::Advisory,
            nonce_window: default_window(),
            vote_timeout_rtt_factor: default_timeout_factor(),
            workload: WorkloadParams::default(),
            contracts: default_contracts(),
            tamper_rounds: Vec::new(),
        }
    }

    /// Parses and validates a JSON document; errors name the field path.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(if path == "." { "(document)".to_string() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_nodes == 0 {
            return Err(ConfigError::new("n_nodes", "must be >= 1"));
        }
        let known = |id: u32| id < self.n_nodes;
        if !known(self.master_id) {
            return Err(ConfigError::new("master_id", format!("{} is not a node id", self.master_id)));
        }
        if let Quorum::Count(q) = self.quorum {
            if q == 0 || q > self.n_nodes {
                return Err(ConfigError::new(
                    "quorum",
                    format!("{q} must be between 1 and n_nodes ({})", self.n_nodes),
                ));
            }
        }
        self.links.default.validate("links.default")?;
        for (i, o) in self.links.pairs.iter().enumerate() {
            if !known(o.a) || !known(o.b) || o.a == o.b {
                return Err(ConfigError::new(format!("links.pairs[{i}]"), "endpoints must be two distinct node ids"));
            }
            o.params.validate(&format!("links.pairs[{i}].params"))?;
        }
        let mut last = 0;
        for (i, ev) in self.failure_schedule.iter().enumerate() {
            if ev.at_ms < last {
                return Err(ConfigError::new(
                    format!("failure_schedule[{i}].at_ms"),
                    "event times must be non-decreasing",
                ));
            }
            last = ev.at_ms;
            if let FailureKind::Partition { nodes } = &ev.kind {
                let set: BTreeSet<u32> = nodes.iter().copied().collect();
                if set.is_empty() || set.len() != nodes.len() || !set.iter().all(|&n| known(n)) {
                    return Err(ConfigError::new(
                        format!("failure_schedule[{i}].nodes"),
                        "partition must list distinct, known node ids",
                    ));
                }
            }
        }
        self.model_spec
            .model
            .validate()
            .map_err(|e| ConfigError::new("model_spec", e.to_string()))?;
        self.training
            .validate()
            .map_err(|e| ConfigError::new("training", e.to_string()))?;
        if self.training.n < 2 {
            return Err(ConfigError::new("training.n", "need at least 2 samples"));
        }
        if self.round_interval_ms == 0 {
            return Err(ConfigError::new("round_interval_ms", "must be > 0"));
        }
        if !(self.vote_timeout_rtt_factor.is_finite() && self.vote_timeout_rtt_factor > 0.0) {
            return Err(ConfigError::new("vote_timeout_rtt_factor", "must be > 0"));
        }
        let w = &self.workload;
        if w.max_txs_per_block == 0 {
            return Err(ConfigError::new("workload.max_txs_per_block", "must be >= 1"));
        }
        if !(w.energy_kwh_min > 0.0 && w.energy_kwh_min <= w.energy_kwh_max && w.energy_kwh_max.is_finite()) {
            return Err(ConfigError::new("workload.energy_kwh_min", "need 0 < min <= max"));
        }
        if w.txs_per_round > 0 && self.contracts.is_empty() {
            return Err(ConfigError::new("contracts", "workload needs at least one contract"));
        }
        let mut ids = BTreeSet::new();
        for (i, c) in self.contracts.iter().enumerate() {
            c.validate().map_err(|r| ConfigError::new(format!("contracts[{i}]"), r))?;
            if !ids.insert(c.contract_id) {
                return Err(ConfigError::new(format!("contracts[{i}].contract_id"), "duplicate id"));
            }
        }
        Ok(())
    }
}

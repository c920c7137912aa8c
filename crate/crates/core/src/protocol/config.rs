use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gcn::OptimizerKind;
use crate::heterogeneity::DEFAULT_PAIR_BUDGET;
use crate::perturb::PerturbSpec;

/// Configuration problem tied to a (dotted) field name.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DfedSst,
    Gossip,
    Ring,
    Full,
    RandomK,
    Local,
    Dpsgd,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::DfedSst,
        Method::Gossip,
        Method::Ring,
        Method::Full,
        Method::RandomK,
        Method::Local,
        Method::Dpsgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DfedSst => "dfed_sst",
            Method::Gossip => "gossip",
            Method::Ring => "ring",
            Method::Full => "full",
            Method::RandomK => "random_k",
            Method::Local => "local",
            Method::Dpsgd => "dpsgd",
        }
    }

    /// Baselines whose topology is redrawn every round.
    pub fn is_dynamic_baseline(self) -> bool {
        matches!(self, Method::Gossip | Method::RandomK)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ConfigError::new("method", format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset directory (binary layout) or `sbm:<spec>` for a generated graph.
    pub dataset: String,
    pub n_clients: usize,
    pub method: Method,
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub k_topo: usize,
    pub pair_sample: usize,
    pub include_self: bool,
    pub optimizer: OptimizerKind,
    pub precision: Precision,
    pub seed: u64,
    pub perturb: PerturbSpec,
    /// Snapshot cadence in rounds; `None` means every `k_topo` rounds.
    pub snapshot_every: Option<usize>,
    /// In-neighbors per client for `random_k`; `None` means `⌊N/2⌋`.
    pub random_k: Option<usize>,
    /// Draw a separate initialization per client instead of a shared one.
    pub independent_init: bool,
    /// Optional partition file (JSON array of client ids).
    pub partition: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: String::new(),
            n_clients: 10,
            method: Method::DfedSst,
            rounds: 100,
            local_epochs: 3,
            lr: 1e-2,
            hidden: 64,
            k_topo: 5,
            pair_sample: DEFAULT_PAIR_BUDGET,
            include_self: true,
            optimizer: OptimizerKind::Adam,
            precision: Precision::F32,
            seed: 0,
            perturb: PerturbSpec::default(),
            snapshot_every: None,
            random_k: None,
            independent_init: false,
            partition: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rounds == 0 {
            return Err(ConfigError::new("rounds", "must be at least 1"));
        }
        if self.local_epochs == 0 {
            return Err(ConfigError::new("local_epochs", "must be at least 1"));
        }
        if self.n_clients == 0 {
            return Err(ConfigError::new("n_clients", "must be at least 1"));
        }
        if self.n_clients < 2 && self.method != Method::Local {
            return Err(ConfigError::new("n_clients", format!("{} needs at least 2 clients", self.method)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ConfigError::new("lr", "must be positive and finite"));
        }
        if self.hidden == 0 {
            return Err(ConfigError::new("hidden", "must be at least 1"));
        }
        if self.k_topo == 0 {
            return Err(ConfigError::new("k_topo", "must be at least 1"));
        }
        if self.pair_sample == 0 {
            return Err(ConfigError::new("pair_sample", "must be at least 1"));
        }
        if self.snapshot_every == Some(0) {
            return Err(ConfigError::new("snapshot_every", "must be at least 1"));
        }
        if let Some(k) = self.random_k {
            if k == 0 || k >= self.n_clients {
                return Err(ConfigError::new("random_k", "must lie in [1, n_clients - 1]"));
            }
        }
        if let Err(crate::perturb::PerturbError::Probability { name, value }) = self.perturb.validate() {
            return Err(ConfigError::new(format!("perturb.{name}"), format!("must lie in [0, 1], got {value}")));
        }
        Ok(())
    }

    pub fn snapshot_cadence(&self) -> usize {
        self.snapshot_every.unwrap_or(self.k_topo)
    }

    pub fn random_k_degree(&self) -> usize {
        self.random_k.unwrap_or(self.n_clients / 2)
    }

    /// Parses JSON text, reporting unknown or mistyped fields by path.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::new("config", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner().to_string();
            let field = if path == "." {
                unknown_field(&inner).unwrap_or_else(|| "config".to_string())
            } else {
                path
            };
            ConfigError::new(field, inner)
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest.split('`').next()?.to_string())
}

/// Applies `key=value` to a JSON object; `key` may be dotted
/// (`perturb.edge_drop_p=0.3`). Values are parsed as JSON when possible and
/// kept as strings otherwise.
pub fn apply_override(target: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::new(assignment, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::new("set", "empty override key"));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = target;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            if node.is_null() {
                *node = Value::Object(Default::default());
            } else {
                return Err(ConfigError::new(parts[..i].join("."), "not an object"));
            }
        }
        let map = node.as_object_mut().expect("object checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split yields at least one part")
}

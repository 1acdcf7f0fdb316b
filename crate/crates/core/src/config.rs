//! Scenario configuration: the versioned TOML schema and its validation.
//!
//! Every field is listed in `docs/config.md`. Unknown fields are rejected.

use crate::error::{Error, Result};
use crate::types::{AdversaryMode, NodeId, ProtocolKind, Slot, Window};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

pub const CONFIG_VERSION: u32 = 1;
/// Upper bound on the horizon accepted by validation.
pub const MAX_HORIZON: u64 = 1 << 20;

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Window::Finite(w) => s.serialize_u64(*w),
            Window::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(w) => Ok(Window::Finite(w)),
            Raw::Str(s) if s == "inf" || s == "infinite" => Ok(Window::Infinite),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a slot count or \"inf\", got {s:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Consistent,
    Increasing,
    Decaying,
    FullyFluctuating,
    /// Awake intervals listed per node.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub pattern: Pattern,
    /// Number of corrupt nodes for generated patterns.
    #[serde(default)]
    pub corrupt: usize,
    /// Explicit corrupt node indices (explicit pattern).
    #[serde(default)]
    pub corrupt_nodes: Vec<u32>,
    /// Explicit pattern: per node, half-open `[start, end)` awake intervals.
    #[serde(default)]
    pub sessions: Vec<Vec<[u64; 2]>>,
    /// Shortest honest awake session in generated fluctuating patterns.
    #[serde(default)]
    pub min_session: Option<u64>,
    /// Repair generated schedules until they satisfy the corrupt-window bound.
    #[serde(default = "yes")]
    pub admissible: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    /// Corrupt nodes run the honest code.
    Passive,
    /// Corrupt nodes never send.
    Silent,
    Equivocate,
    KeyTransfer,
    ForwardSim,
    BackwardSim,
}

impl StrategyName {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "passive" => StrategyName::Passive,
            "silent" => StrategyName::Silent,
            "equivocate" => StrategyName::Equivocate,
            "key_transfer" => StrategyName::KeyTransfer,
            "forward_sim" => StrategyName::ForwardSim,
            "backward_sim" => StrategyName::BackwardSim,
            other => return Err(Error::UnknownAttack(other.to_string())),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarySpec {
    pub strategy: StrategyName,
    /// Delay used for corrupt "fast" sends (equivocation splits use 1 and Δ).
    #[serde(default)]
    pub fast_delay: Option<u64>,
    /// Delay the adversary assigns to honest messages. Defaults to Δ.
    #[serde(default)]
    pub honest_delay: Option<u64>,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            strategy: StrategyName::Passive,
            fast_delay: None,
            honest_delay: None,
        }
    }
}

/// How a node picks the VDF values it extends each slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionPolicy {
    OwnTipOnly,
    Sampling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    /// View length in units of Δ.
    #[serde(default = "d_c_view")]
    pub c_view: u64,
    /// Default epoch length is `2 * view_len * lambda_views`.
    #[serde(default = "d_lambda_views")]
    pub lambda_views: u64,
    /// VDF sample size is `ceil(c_sample * ln(n (t + 2))^2)`.
    #[serde(default = "d_c_sample")]
    pub c_sample: f64,
    /// Oracle queries per node per slot. Defaults to `64 n`.
    #[serde(default)]
    pub query_budget: Option<u32>,
    #[serde(default = "d_extension")]
    pub extension: ExtensionPolicy,
    /// Decide messages are re-broadcast every `rebroadcast` slots (default α).
    #[serde(default)]
    pub rebroadcast: Option<u64>,
}

fn d_c_view() -> u64 {
    4
}
fn d_lambda_views() -> u64 {
    16
}
fn d_c_sample() -> f64 {
    1.0
}
fn d_extension() -> ExtensionPolicy {
    ExtensionPolicy::Sampling
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            c_view: d_c_view(),
            lambda_views: d_lambda_views(),
            c_sample: d_c_sample(),
            query_budget: None,
            extension: d_extension(),
            rebroadcast: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvInputSpec {
    pub slot: Slot,
    pub node: u32,
    pub payload: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub n: usize,
    pub delta: u64,
    pub t_forward: Window,
    pub t_backward: Window,
    pub rho: f64,
    pub horizon: u64,
    pub protocol: ProtocolKind,
    pub adversary_mode: AdversaryMode,
    pub lambda: u32,
    pub seed: u64,
    /// Epoch length. Defaults to `2 * view_len * lambda_views`.
    #[serde(default)]
    pub alpha: Option<u64>,
    /// Generated inputs: one every `input_every` slots to a random awake honest node.
    #[serde(default)]
    pub input_every: Option<u64>,
    #[serde(default)]
    pub adversary: AdversarySpec,
    #[serde(default)]
    pub params: ProtocolParams,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub env_inputs: Vec<EnvInputSpec>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|r| text.get(r))
                .unwrap_or("<document>")
                .lines()
                .next()
                .unwrap_or("")
                .to_string();
            Error::invalid(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn view_len(&self) -> u64 {
        self.params.c_view * self.delta
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
            .unwrap_or(2 * self.view_len() * self.params.lambda_views)
    }

    /// Statelessness window of the base protocol: two views.
    pub fn stateless_window(&self) -> u64 {
        2 * self.view_len()
    }

    pub fn query_budget(&self) -> u32 {
        self.params.query_budget.unwrap_or(64 * self.n as u32)
    }

    pub fn rebroadcast(&self) -> u64 {
        self.params.rebroadcast.unwrap_or_else(|| self.alpha())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str, r: String| Err(Error::invalid(f, r));
        if self.version != CONFIG_VERSION {
            return bad("version", format!("expected {CONFIG_VERSION}, got {}", self.version));
        }
        if self.n == 0 {
            return bad("n", "must be at least 1".into());
        }
        if self.delta == 0 {
            return bad("delta", "must be at least 1".into());
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return bad("seed", format!("must be at most {}", i64::MAX));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho", format!("must lie in (0, 1), got {}", self.rho));
        }
        if self.horizon > MAX_HORIZON {
            return bad("horizon", format!("must be at most {MAX_HORIZON}"));
        }
        if !(1..=128).contains(&self.lambda) {
            return bad("lambda", "must lie in [1, 128]".into());
        }
        if self.params.c_view < 4 {
            return bad("params.c_view", "views need at least 4 phases of Δ".into());
        }
        if self.params.lambda_views == 0 {
            return bad("params.lambda_views", "must be at least 1".into());
        }
        if !(self.params.c_sample > 0.0) {
            return bad("params.c_sample", "must be positive".into());
        }
        if self.alpha() == 0 {
            return bad("alpha", "must be at least 1".into());
        }
        if self.query_budget() == 0 {
            return bad("params.query_budget", "must be at least 1".into());
        }
        if self.input_every == Some(0) {
            return bad("input_every", "must be at least 1".into());
        }
        if self.rebroadcast() == 0 {
            return bad("params.rebroadcast", "must be at least 1".into());
        }
        match self.protocol {
            ProtocolKind::DecayingCompiled if self.alpha() < self.view_len() => {
                return bad(
                    "alpha",
                    format!("epoch length {} is shorter than a view ({})", self.alpha(), self.view_len()),
                );
            }
            ProtocolKind::FluctuatingCompiled => match self.t_backward {
                Window::Finite(tb) if tb >= self.view_len() => {}
                _ => {
                    return bad(
                        "t_backward",
                        format!("must be finite and at least one view ({} slots)", self.view_len()),
                    )
                }
            },
            _ => {}
        }
        for (k, x) in self.env_inputs.iter().enumerate() {
            if x.node as usize >= self.n {
                return bad(&format!("env_inputs[{k}].node"), format!("{} >= n", x.node));
            }
            if x.slot >= self.horizon.max(1) {
                return bad(&format!("env_inputs[{k}].slot"), "beyond horizon".into());
            }
        }
        let s = &self.schedule;
        if s.pattern == Pattern::Explicit {
            if s.sessions.len() != self.n {
                return bad(
                    "schedule.sessions",
                    format!("need one entry per node ({}), got {}", self.n, s.sessions.len()),
                );
            }
            for (i, row) in s.sessions.iter().enumerate() {
                for [a, b] in row {
                    if a > b || *b > self.horizon {
                        return bad(
                            &format!("schedule.sessions[{i}]"),
                            format!("interval [{a}, {b}) outside [0, {}]", self.horizon),
                        );
                    }
                }
            }
            if let Some(c) = s.corrupt_nodes.iter().find(|&&c| c as usize >= self.n) {
                return bad("schedule.corrupt_nodes", format!("{c} >= n"));
            }
        } else {
            if s.corrupt >= self.n {
                return bad("schedule.corrupt", format!("{} corrupt of {} nodes", s.corrupt, self.n));
            }
            if s.min_session == Some(0) {
                return bad("schedule.min_session", "must be at least 1".into());
            }
        }
        Ok(())
    }

    pub fn corrupt_flags(&self) -> Vec<bool> {
        let mut c = vec![false; self.n];
        if self.schedule.pattern == Pattern::Explicit {
            for &i in &self.schedule.corrupt_nodes {
                c[i as usize] = true;
            }
        } else {
            // highest indices are corrupt
            for f in c.iter_mut().rev().take(self.schedule.corrupt) {
                *f = true;
            }
        }
        c
    }

    pub fn explicit_input_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.env_inputs.iter().map(|x| NodeId(x.node))
    }
}

//! Identifiers and small value types shared across the simulator.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Index of a node in the fixed participant set `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Global discrete clock.
pub type Slot = u64;

/// A bounded or unbounded simulation window (`T_f` / `T_b`). Serialized as a slot
/// count or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Finite(u64),
    Infinite,
}

impl Window {
    /// Lower end of `[t - w, ...]`, clipped at zero.
    pub fn back_from(self, t: Slot) -> Slot {
        match self {
            Window::Finite(w) => t.saturating_sub(w),
            Window::Infinite => 0,
        }
    }

    /// Upper end of `[..., t + w]`, clipped to the last slot of the horizon.
    pub fn forward_from(self, t: Slot, last: Slot) -> Slot {
        match self {
            Window::Finite(w) => t.saturating_add(w).min(last),
            Window::Infinite => last,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Window::Infinite)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Finite(w) => write!(f, "{w}"),
            Window::Infinite => f.write_str("inf"),
        }
    }
}

/// A λ-bit string produced by one of the idealized oracles. `λ ≤ 128`; unused high
/// bits are always zero.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
pub struct Digest(pub u128);

impl Digest {
    pub fn to_bytes(self) -> [u8; 16] {
        self.0.to_le_bytes()
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08x}", (self.0 & 0xffff_ffff) as u32)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// Which secret keys a corrupt node may exercise through the oracles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryMode {
    /// Every node queries oracles only under its own identity.
    External,
    /// Any corrupt node may query under any corrupt identity, awake or not.
    Standard,
}

impl fmt::Display for AdversaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdversaryMode::External => "external",
            AdversaryMode::Standard => "standard",
        })
    }
}

/// The protocol stack honest nodes run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    /// The view-based protocol on its own.
    Base,
    /// Base protocol wrapped by the epoch-recovery compiler.
    DecayingCompiled,
    /// Base protocol wrapped by the VDF wakeness-vector compiler.
    FluctuatingCompiled,
    /// Base protocol plus a naive "adopt the longest announced chain" rule.
    Strawman,
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProtocolKind::Base => "base",
            ProtocolKind::DecayingCompiled => "decaying_compiled",
            ProtocolKind::FluctuatingCompiled => "fluctuating_compiled",
            ProtocolKind::Strawman => "strawman",
        })
    }
}

/// Environment input payload.
pub type Payload = Vec<u8>;

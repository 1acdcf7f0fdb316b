use crate::types::{Digest, NodeId, Slot};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{caller} may not use the key of {key_owner}")]
    PolicyViolation { caller: NodeId, key_owner: NodeId },
    #[error("{caller} is asleep at slot {slot}")]
    AsleepCaller { caller: NodeId, slot: Slot },
    #[error("{caller} exceeded its query budget of {budget} at slot {slot}")]
    BudgetExceeded { caller: NodeId, slot: Slot, budget: u32 },
    #[error("{caller} already queried the delay oracle at slot {slot}")]
    RateLimited { caller: NodeId, slot: Slot },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("{sender} is asleep at slot {slot}")]
    AsleepSender { sender: NodeId, slot: Slot },
    #[error("{recipient} is asleep at slot {slot}")]
    AsleepRecipient { recipient: NodeId, slot: Slot },
    #[error("delay {delay} outside [1, {delta}]")]
    DelayOutOfRange { delay: u64, delta: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("parent {0:?} cannot be resolved")]
    UnresolvableParent(Digest),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("no node is awake at slot {slot}")]
    ScheduleEmpty { slot: Slot },
    #[error("schedule unsatisfiable: {0}")]
    Unsatisfiable(String),
    #[error("unknown attack `{0}`")]
    UnknownAttack(String),
    #[error("corrupt trace: {0}")]
    CorruptTrace(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

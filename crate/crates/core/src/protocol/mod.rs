pub mod messages;
pub mod pi;

pub use messages::{Inner, InnerBody, Link, MsgKind, Packet, ProtoMsg};
pub use pi::{AdmitAll, GpeOutcome, MsgFilter, Pi, PiParams, PiStep, SenderSet};

//! Demand-response message types carried over delay channels.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsgKind {
    /// Metered consumption report, client to server.
    Consumption,
    /// Available shed potential report, client to server.
    DrPotential,
    /// Server-issued load-shed command.
    ShedLoadRequest,
    /// Client accept/decline answer to a shed request.
    ShedReply,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MsgPayload {
    /// Requested shed as a fraction of current load (0 releases the shed).
    ShedFraction(f64),
    /// Requested shed in absolute kW.
    ShedKw(f64),
    Accept(bool),
    Scalar(f64),
}

/// A typed message between DR nodes. Delay bookkeeping is filled in by the
/// channel at injection time and never changes afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetMessage {
    pub kind: MsgKind,
    pub from: String,
    pub to: String,
    pub payload: MsgPayload,
}

impl NetMessage {
    pub fn shed_request(from: &str, to: &str, fraction: f64) -> Self {
        NetMessage {
            kind: MsgKind::ShedLoadRequest,
            from: from.to_string(),
            to: to.to_string(),
            payload: MsgPayload::ShedFraction(fraction),
        }
    }

    pub fn shed_reply(from: &str, to: &str, accept: bool) -> Self {
        NetMessage {
            kind: MsgKind::ShedReply,
            from: from.to_string(),
            to: to.to_string(),
            payload: MsgPayload::Accept(accept),
        }
    }
}

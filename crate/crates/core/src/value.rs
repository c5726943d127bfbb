//! Port values exchanged between modules.

use serde::{Deserialize, Serialize};

use crate::msg::NetMessage;
use crate::poly::PolySegment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Real,
    Integer,
    Boolean,
    Message,
}

/// A value on a port. Real signals carry a polynomial segment so that
/// first-order input models (e.g. linearly interpolated profiles) reach
/// quantized-state solvers without spurious sampling events.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Real(PolySegment),
    Integer(i64),
    Boolean(bool),
    Message(NetMessage),
}

impl Value {
    pub fn real(v: f64) -> Self {
        Value::Real(PolySegment::constant(v))
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Real(_) => ValueKind::Real,
            Value::Integer(_) => ValueKind::Integer,
            Value::Boolean(_) => ValueKind::Boolean,
            Value::Message(_) => ValueKind::Message,
        }
    }

    /// Scalar sample of the value at time `t` (real/integer/boolean only).
    pub fn sample(&self, t: f64) -> Option<f64> {
        match self {
            Value::Real(seg) => Some(seg.eval(t)),
            Value::Integer(v) => Some(*v as f64),
            Value::Boolean(v) => Some(if *v { 1.0 } else { 0.0 }),
            Value::Message(_) => None,
        }
    }

    pub fn as_segment(&self) -> Option<&PolySegment> {
        match self {
            Value::Real(seg) => Some(seg),
            _ => None,
        }
    }

    pub fn as_message(&self) -> Option<&NetMessage> {
        match self {
            Value::Message(m) => Some(m),
            _ => None,
        }
    }
}

//! Discrete-event co-simulation engine for distribution-grid demand response
//! studies.
//!
//! The engine couples four kinds of modules under one master algorithm:
//!
//! * model-exchange modules (ODE systems integrated by quantized-state
//!   solvers, e.g. reduced-order building thermal models),
//! * co-simulation modules (algebraic, stepped on input changes, e.g. the
//!   radial feeder load flow),
//! * discrete-time modules (controllers with a fixed period and a
//!   one-period computational delay),
//! * delay channels (message transport with congestion and loss-induced
//!   retransmission latency).
//!
//! Scenarios wire modules together, bind CSV time series to inputs, and run
//! the kernel to a final time, producing per-signal traces, a structured
//! event log, and a summary.

// Parameter validation is written `!(x > 0.0)` so NaN fails alongside
// non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod building;
pub mod comms;
pub mod control;
pub mod error;
pub mod kernel;
pub mod msg;
pub mod ode;
pub mod poly;
pub mod powerflow;
pub mod qss;
pub mod series;
pub mod scenario;
pub mod time;
pub mod value;

pub use error::{ConfigError, SimError};
pub use time::SimTime;

//! Communication network module: parameterized delay/loss channels carrying
//! DR message flows between a server node (VTN) and a client node (VEN).
//!
//! A message injected at `t` is delivered at `t + δ` with
//! `δ = base + (backlog + size)/bandwidth + k·RTO`, where `k` is a
//! geometric draw from the seeded generator modeling lost transmissions.
//! Once computed, `δ` never changes, so later congestion cannot affect
//! messages already in flight, and messages are never dropped — loss only
//! shows up as added latency. Because retransmission delays differ per
//! message, deliveries on one channel may arrive out of order. Requests
//! from the server wait in a mailbox until the client's next poll, then
//! cross the downlink channel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::kernel::{Ctx, Module, ModuleDescriptor, ModuleKind, PortSpec};
use crate::msg::{MsgKind, MsgPayload, NetMessage};
use crate::value::{Value, ValueKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelParams {
    #[serde(default)]
    pub base_latency_s: f64,
    /// Transmission speed; `None` means infinite (no serialization delay).
    #[serde(default)]
    pub bandwidth_bytes_per_s: Option<f64>,
    #[serde(default)]
    pub loss_probability: f64,
    #[serde(default = "default_rto")]
    pub rto_s: f64,
}

fn default_rto() -> f64 {
    1.0
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            base_latency_s: 0.0,
            bandwidth_bytes_per_s: None,
            loss_probability: 0.0,
            rto_s: default_rto(),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.base_latency_s < 0.0 {
            return Err(ConfigError::Invalid("base latency must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.loss_probability) {
            return Err(ConfigError::Invalid("loss probability must be within [0, 1)".into()));
        }
        if let Some(bw) = self.bandwidth_bytes_per_s {
            if !(bw > 0.0) {
                return Err(ConfigError::Invalid("bandwidth must be > 0".into()));
            }
        }
        if self.rto_s < 0.0 {
            return Err(ConfigError::Invalid("RTO must be >= 0".into()));
        }
        Ok(())
    }
}

/// One direction of the cloud: queueing state plus the loss process.
#[derive(Clone, Debug)]
pub struct ChannelState {
    pub params: ChannelParams,
    /// Time at which the last queued byte finishes transmitting.
    busy_until: f64,
    rng: ChaCha8Rng,
}

#[derive(Clone, Copy, Debug)]
pub struct Transmission {
    pub delay_s: f64,
    pub retransmissions: u64,
}

impl ChannelState {
    pub fn new(params: ChannelParams, seed: u64) -> Self {
        ChannelState { params, busy_until: 0.0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Bytes queued ahead of a message injected at `t`.
    pub fn backlog_bytes(&self, t: f64) -> f64 {
        match self.params.bandwidth_bytes_per_s {
            Some(bw) => (self.busy_until - t).max(0.0) * bw,
            None => 0.0,
        }
    }

    /// Compute the (immutable) delay for a message of `size_bytes` injected
    /// at `t` and occupy the queue for its transmission time.
    pub fn inject(&mut self, size_bytes: f64, t: f64) -> Transmission {
        let ser = match self.params.bandwidth_bytes_per_s {
            Some(bw) => size_bytes / bw,
            None => 0.0,
        };
        let queue_wait = (self.busy_until - t).max(0.0);
        let p = self.params.loss_probability;
        let retransmissions = if p > 0.0 {
            let u: f64 = self.rng.random_range(0.0..1.0);
            // Geometric: P(k) = p^k (1 - p).
            if u <= 0.0 {
                0
            } else {
                (u.ln() / p.ln()).floor().max(0.0) as u64
            }
        } else {
            0
        };
        self.busy_until = self.busy_until.max(t) + ser;
        Transmission {
            delay_s: self.params.base_latency_s
                + queue_wait
                + ser
                + retransmissions as f64 * self.params.rto_s,
            retransmissions,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CommsConfig {
    pub id: String,
    /// Server-to-client direction (shed requests).
    #[serde(default)]
    pub downlink: ChannelParams,
    /// Client-to-server direction (replies and reports).
    #[serde(default)]
    pub uplink: ChannelParams,
    /// DR client polling period; `None` forwards requests immediately
    /// (the configuration used for delay-free comparisons).
    #[serde(default)]
    pub polling_period_s: Option<f64>,
    #[serde(default = "default_request_bytes")]
    pub request_bytes: f64,
    #[serde(default = "default_report_bytes")]
    pub report_bytes: f64,
    #[serde(default = "default_reply_bytes")]
    pub reply_bytes: f64,
    #[serde(default)]
    pub seed: u64,
    /// Names recorded on generated messages.
    #[serde(default = "default_vtn")]
    pub vtn_node: String,
    #[serde(default = "default_ven")]
    pub ven_node: String,
}

fn default_request_bytes() -> f64 {
    2048.0
}
fn default_report_bytes() -> f64 {
    1024.0
}
fn default_reply_bytes() -> f64 {
    512.0
}
fn default_vtn() -> String {
    "vtn".into()
}
fn default_ven() -> String {
    "ven".into()
}

pub const PORT_VTN_IN: usize = 0;
pub const PORT_VEN_REPLY_IN: usize = 1;
pub const PORT_VEN_REPORT_IN: usize = 2;
pub const PORT_VEN_OUT: usize = 3;
pub const PORT_VTN_REPLY_OUT: usize = 4;
pub const PORT_VTN_REPORT_OUT: usize = 5;

const TAG_POLL: u64 = 1;

pub struct CommsModule {
    cfg: CommsConfig,
    down: ChannelState,
    up: ChannelState,
    /// Most recent request awaiting the client's next poll.
    mailbox: Option<NetMessage>,
    requests_forwarded: u64,
}

impl CommsModule {
    pub fn new(cfg: CommsConfig) -> Result<Self, ConfigError> {
        cfg.downlink.validate()?;
        cfg.uplink.validate()?;
        if let Some(p) = cfg.polling_period_s {
            if !(p > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "comms `{}`: polling period must be > 0 (omit it for immediate forwarding)",
                    cfg.id
                )));
            }
        }
        // Independent per-direction loss processes from one scenario seed.
        let down = ChannelState::new(cfg.downlink.clone(), cfg.seed.wrapping_mul(2).wrapping_add(1));
        let up = ChannelState::new(cfg.uplink.clone(), cfg.seed.wrapping_mul(2).wrapping_add(2));
        Ok(CommsModule { cfg, down, up, mailbox: None, requests_forwarded: 0 })
    }

    fn forward(
        &mut self,
        ctx: &mut Ctx<'_>,
        port: usize,
        mut msg: NetMessage,
        direction_down: bool,
        size: f64,
    ) {
        let t = ctx.t();
        let chan = if direction_down { &mut self.down } else { &mut self.up };
        let tx = chan.inject(size, t);
        msg.from = if direction_down { self.cfg.vtn_node.clone() } else { self.cfg.ven_node.clone() };
        msg.to = if direction_down { self.cfg.ven_node.clone() } else { self.cfg.vtn_node.clone() };
        ctx.log(
            "inject",
            serde_json::json!({
                "kind": format!("{:?}", msg.kind),
                "from": msg.from,
                "to": msg.to,
                "inject_s": t,
                "delay_s": tx.delay_s,
                "deliver_s": t + tx.delay_s,
                "retx": tx.retransmissions,
            }),
        );
        ctx.emit_delayed(port, Value::Message(msg), tx.delay_s);
    }
}

impl Module for CommsModule {
    fn descriptor(&self) -> ModuleDescriptor {
        ModuleDescriptor::new(&self.cfg.id, ModuleKind::DelayChannel).with_ports(vec![
            PortSpec::input("vtn_in", ValueKind::Message),
            PortSpec::input("ven_reply_in", ValueKind::Message),
            PortSpec::input("ven_report_in", ValueKind::Real),
            PortSpec::output("ven_out", ValueKind::Message),
            PortSpec::output("vtn_reply_out", ValueKind::Message),
            PortSpec::output("vtn_report_out", ValueKind::Message),
        ])
    }

    fn init(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if let Some(period) = self.cfg.polling_period_s {
            ctx.schedule_self(TAG_POLL, period);
        }
        Ok(())
    }

    fn on_inputs(&mut self, changed: &[usize], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        for &port in changed {
            match port {
                PORT_VTN_IN => {
                    let msg = match ctx.port(PORT_VTN_IN).as_message() {
                        Some(m) => m.clone(),
                        None => continue,
                    };
                    if self.cfg.polling_period_s.is_some() {
                        // Held until the client polls; a newer request
                        // supersedes an unfetched one.
                        self.mailbox = Some(msg);
                    } else {
                        let size = self.cfg.request_bytes;
                        self.requests_forwarded += 1;
                        self.forward(ctx, PORT_VEN_OUT, msg, true, size);
                    }
                }
                PORT_VEN_REPLY_IN => {
                    let msg = match ctx.port(PORT_VEN_REPLY_IN).as_message() {
                        Some(m) => m.clone(),
                        None => continue,
                    };
                    if msg.kind == MsgKind::ShedReply && self.requests_forwarded == 0 {
                        return Err(SimError::Module {
                            module: self.cfg.id.clone(),
                            msg: "shed reply received without a prior request".into(),
                        });
                    }
                    let size = self.cfg.reply_bytes;
                    self.forward(ctx, PORT_VTN_REPLY_OUT, msg, false, size);
                }
                PORT_VEN_REPORT_IN => {
                    let value = ctx.port_f64(PORT_VEN_REPORT_IN);
                    let msg = NetMessage {
                        kind: MsgKind::Consumption,
                        from: self.cfg.ven_node.clone(),
                        to: self.cfg.vtn_node.clone(),
                        payload: MsgPayload::Scalar(value),
                    };
                    let size = self.cfg.report_bytes;
                    self.forward(ctx, PORT_VTN_REPORT_OUT, msg, false, size);
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn on_self_event(&mut self, tag: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if tag != TAG_POLL {
            return Ok(());
        }
        if let Some(msg) = self.mailbox.take() {
            let size = self.cfg.request_bytes;
            self.requests_forwarded += 1;
            self.forward(ctx, PORT_VEN_OUT, msg, true, size);
        }
        let period = self.cfg.polling_period_s.expect("poll event only scheduled with polling");
        if ctx.t() + period <= ctx.t_end() {
            ctx.schedule_self(TAG_POLL, period);
        }
        Ok(())
    }
}

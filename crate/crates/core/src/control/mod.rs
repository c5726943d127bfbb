//! Discrete-time grid controllers: line-capacity shed, volt-var tracking,
//! and slope limiting.
//!
//! The module ticks with a fixed period and one-period computational delay:
//! outputs computed from the snapshot at `i·δ` become visible at `(i+1)·δ`.
//! Decisions are emitted on change only, so the event log shows the
//! shed/release alternations directly.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::kernel::{Ctx, Module, ModuleDescriptor, ModuleKind, PortSpec};
use crate::msg::{MsgPayload, NetMessage};
use crate::powerflow::{solve_q_for_target, volt_drop_forward, VoltVarError};
use crate::value::{Value, ValueKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LineCapacityCfg {
    #[serde(default = "default_threshold")]
    pub threshold_pct: f64,
    #[serde(default = "default_shed")]
    pub shed_fraction: f64,
    /// Optional deadband below the threshold before releasing; zero
    /// reproduces the marginal shed/release oscillation.
    #[serde(default)]
    pub hysteresis_pct: f64,
}

fn default_threshold() -> f64 {
    55.0
}
fn default_shed() -> f64 {
    0.20
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VoltVarCfg {
    /// Series impedance of the path between the tracked bus and the
    /// controlled bus.
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub kv_base: f64,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
    /// Fixed voltage target; when absent the tracked bus voltage is the
    /// target.
    #[serde(default)]
    pub target_v_pu: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlopeMonitor {
    /// Controller input port carrying the monitored signal.
    pub input: String,
    /// Maximum |d/dt| in signal units per second.
    pub max_per_s: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SlopeCfg {
    #[serde(default)]
    pub monitors: Vec<SlopeMonitor>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub id: String,
    #[serde(default = "default_period")]
    pub period_s: f64,
    #[serde(default)]
    pub line_capacity: Option<LineCapacityCfg>,
    #[serde(default)]
    pub volt_var: Option<VoltVarCfg>,
    #[serde(default)]
    pub slope: Option<SlopeCfg>,
    /// DR client node addressed by shed requests.
    #[serde(default = "default_ven")]
    pub ven_node: String,
}

fn default_period() -> f64 {
    60.0
}
fn default_ven() -> String {
    "ven".into()
}

/// Sampled grid state at a controller tick.
#[derive(Clone, Debug, Default)]
pub struct GridSnapshot {
    pub t: f64,
    pub loading_max_pct: f64,
    pub v_track_pu: f64,
    pub v_ctl_pu: f64,
    pub p_site_kw: f64,
    pub q_site_kvar: f64,
    pub p_gen_kw: f64,
    pub q_gen_kvar: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ShedDecision {
    Shed(f64),
    Release,
}

/// Strictly-greater threshold comparison; at the boundary no shed is
/// requested.
pub fn line_capacity_decision(snap: &GridSnapshot, cfg: &LineCapacityCfg, active: bool) -> ShedDecision {
    if snap.loading_max_pct > cfg.threshold_pct {
        ShedDecision::Shed(cfg.shed_fraction)
    } else if active && snap.loading_max_pct > cfg.threshold_pct - cfg.hysteresis_pct {
        // Inside the (optional) deadband the previous shed stays in force.
        ShedDecision::Shed(cfg.shed_fraction)
    } else {
        ShedDecision::Release
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VoltVarDecision {
    pub q_bat_kvar: f64,
    pub delta_q_kvar: f64,
    pub saturated: bool,
}

/// Reactive setpoint steering the controlled bus toward the target using
/// the voltage-drop relation along the configured path.
pub fn volt_var_decision(
    snap: &GridSnapshot,
    cfg: &VoltVarCfg,
    prev_q_bat_kvar: f64,
) -> VoltVarDecision {
    let target = cfg.target_v_pu.unwrap_or(snap.v_track_pu);
    // Net active flow toward the site; battery active power is zero here.
    let p_path = snap.p_site_kw - snap.p_gen_kw;
    let q_fixed = snap.q_site_kvar - snap.q_gen_kvar;
    let solved = solve_q_for_target(snap.v_track_pu, target, p_path, cfg.r_ohm, cfg.x_ohm, cfg.kv_base);
    let (q_bat, saturated) = match solved {
        Ok(q_path_needed) => {
            let q = q_fixed - q_path_needed;
            if q < cfg.q_min_kvar {
                (cfg.q_min_kvar, true)
            } else if q > cfg.q_max_kvar {
                (cfg.q_max_kvar, true)
            } else {
                (q, false)
            }
        }
        Err(VoltVarError::Unreachable) | Err(VoltVarError::Invalid(_)) => {
            // Saturate at whichever limit lands closer to the target.
            let eval = |q_bat: f64| {
                volt_drop_forward(
                    snap.v_track_pu.max(1e-6),
                    p_path,
                    q_fixed - q_bat,
                    cfg.r_ohm,
                    cfg.x_ohm,
                    cfg.kv_base,
                )
                .map(|u2| (u2 - target).abs())
                .unwrap_or(f64::INFINITY)
            };
            if eval(cfg.q_max_kvar) <= eval(cfg.q_min_kvar) {
                (cfg.q_max_kvar, true)
            } else {
                (cfg.q_min_kvar, true)
            }
        }
    };
    VoltVarDecision { q_bat_kvar: q_bat, delta_q_kvar: q_bat - prev_q_bat_kvar, saturated }
}

/// Corrective magnitude (signal units) that brings an over-limit ramp back
/// to its limit over one period: proportional rule.
pub fn slope_correction(prev: f64, now: f64, period_s: f64, max_per_s: f64) -> Option<f64> {
    if !max_per_s.is_finite() {
        return None;
    }
    let slope = (now - prev) / period_s;
    let excess = slope.abs() - max_per_s;
    if excess > 0.0 {
        Some(excess * period_s)
    } else {
        None
    }
}

// Port layout (fixed regardless of which controllers are enabled).
pub const PORT_LOADING_MAX: usize = 0;
pub const PORT_V_TRACK: usize = 1;
pub const PORT_V_CTL: usize = 2;
pub const PORT_P_SITE: usize = 3;
pub const PORT_Q_SITE: usize = 4;
pub const PORT_P_GEN: usize = 5;
pub const PORT_Q_GEN: usize = 6;
pub const PORT_REPLY_IN: usize = 7;
pub const PORT_SHED_OUT: usize = 8;
pub const PORT_Q_BAT: usize = 9;
pub const PORT_SLOPE_OUT: usize = 10;

pub struct ControlModule {
    cfg: ControllerConfig,
    active_shed: bool,
    last_decision: Option<ShedDecision>,
    q_bat_kvar: f64,
    prev_snapshot: Option<GridSnapshot>,
}

impl ControlModule {
    pub fn new(cfg: ControllerConfig) -> Result<Self, SimError> {
        if !(cfg.period_s > 0.0) {
            return Err(SimError::Module {
                module: cfg.id.clone(),
                msg: "controller period must be > 0".into(),
            });
        }
        if let Some(lc) = &cfg.line_capacity {
            if !(lc.threshold_pct > 0.0 && lc.threshold_pct <= 100.0) {
                return Err(SimError::Module {
                    module: cfg.id.clone(),
                    msg: "loading threshold must be within (0, 100]".into(),
                });
            }
            if !(lc.shed_fraction > 0.0 && lc.shed_fraction <= 1.0) {
                return Err(SimError::Module {
                    module: cfg.id.clone(),
                    msg: "shed fraction must be within (0, 1]".into(),
                });
            }
        }
        Ok(ControlModule {
            cfg,
            active_shed: false,
            last_decision: None,
            q_bat_kvar: 0.0,
            prev_snapshot: None,
        })
    }

    fn snapshot(&self, ctx: &Ctx<'_>) -> GridSnapshot {
        GridSnapshot {
            t: ctx.t(),
            loading_max_pct: ctx.port_f64(PORT_LOADING_MAX),
            v_track_pu: ctx.port_f64(PORT_V_TRACK),
            v_ctl_pu: ctx.port_f64(PORT_V_CTL),
            p_site_kw: ctx.port_f64(PORT_P_SITE),
            q_site_kvar: ctx.port_f64(PORT_Q_SITE),
            p_gen_kw: ctx.port_f64(PORT_P_GEN),
            q_gen_kvar: ctx.port_f64(PORT_Q_GEN),
        }
    }
}

impl Module for ControlModule {
    fn descriptor(&self) -> ModuleDescriptor {
        ModuleDescriptor::new(&self.cfg.id, ModuleKind::DiscreteTime)
            .with_ports(vec![
                PortSpec::input("loading_max", ValueKind::Real),
                PortSpec::input("v_track", ValueKind::Real),
                PortSpec::input("v_ctl", ValueKind::Real),
                PortSpec::input("p_site", ValueKind::Real),
                PortSpec::input("q_site", ValueKind::Real),
                PortSpec::input("p_gen", ValueKind::Real),
                PortSpec::input("q_gen", ValueKind::Real),
                PortSpec::input("reply_in", ValueKind::Message),
                PortSpec::output("shed_out", ValueKind::Message),
                PortSpec::output("q_bat_kvar", ValueKind::Real),
                PortSpec::output("slope_out", ValueKind::Message),
            ])
            .with_period(self.cfg.period_s)
    }

    fn on_tick(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let snap = self.snapshot(ctx);
        let period = self.cfg.period_s;

        if let Some(lc) = &self.cfg.line_capacity {
            let decision = line_capacity_decision(&snap, lc, self.active_shed);
            if self.last_decision != Some(decision) {
                self.last_decision = Some(decision);
                let fraction = match decision {
                    ShedDecision::Shed(f) => f,
                    ShedDecision::Release => 0.0,
                };
                self.active_shed = fraction > 0.0;
                ctx.log(
                    "decision",
                    serde_json::json!({
                        "controller": "line_capacity",
                        "loading_max_pct": snap.loading_max_pct,
                        "action": if self.active_shed { "shed" } else { "release" },
                        "fraction": fraction,
                        "snapshot_s": snap.t,
                    }),
                );
                let msg = NetMessage::shed_request(ctx.module_id(), &self.cfg.ven_node, fraction);
                ctx.emit_delayed(PORT_SHED_OUT, Value::Message(msg), period);
            }
            ctx.record("loading_max", snap.loading_max_pct);
        }

        if let Some(vv) = &self.cfg.volt_var {
            let d = volt_var_decision(&snap, vv, self.q_bat_kvar);
            self.q_bat_kvar = d.q_bat_kvar;
            if d.saturated {
                ctx.log(
                    "decision",
                    serde_json::json!({
                        "controller": "volt_var",
                        "action": "saturated",
                        "q_bat_kvar": d.q_bat_kvar,
                        "snapshot_s": snap.t,
                    }),
                );
            }
            ctx.emit_delayed(PORT_Q_BAT, Value::real(d.q_bat_kvar), period);
            ctx.record("total_q", d.q_bat_kvar);
            ctx.record("delta_q", d.delta_q_kvar);
            let target = vv.target_v_pu.unwrap_or(snap.v_track_pu);
            ctx.record("v_err", (snap.v_ctl_pu - target).abs());
            ctx.record("v_saturated", if d.saturated { 1.0 } else { 0.0 });
        }

        if let Some(sl) = &self.cfg.slope {
            if let Some(prev) = &self.prev_snapshot {
                for mon in &sl.monitors {
                    let (was, is) = match mon.input.as_str() {
                        "p_site" => (prev.p_site_kw, snap.p_site_kw),
                        "v_ctl" => (prev.v_ctl_pu, snap.v_ctl_pu),
                        "loading_max" => (prev.loading_max_pct, snap.loading_max_pct),
                        other => {
                            return Err(SimError::Module {
                                module: self.cfg.id.clone(),
                                msg: format!("slope monitor on unknown signal `{other}`"),
                            })
                        }
                    };
                    if let Some(correction) = slope_correction(was, is, period, mon.max_per_s) {
                        ctx.log(
                            "decision",
                            serde_json::json!({
                                "controller": "slope",
                                "signal": mon.input,
                                "correction": correction,
                                "snapshot_s": snap.t,
                            }),
                        );
                        let msg = NetMessage {
                            kind: crate::msg::MsgKind::ShedLoadRequest,
                            from: ctx.module_id().to_string(),
                            to: self.cfg.ven_node.clone(),
                            payload: MsgPayload::ShedKw(correction),
                        };
                        ctx.emit_delayed(PORT_SLOPE_OUT, Value::Message(msg), period);
                    }
                }
            }
        }

        self.prev_snapshot = Some(snap);
        Ok(())
    }

    fn on_inputs(&mut self, changed: &[usize], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        // Replies are logged as they arrive; everything else is read at ticks.
        if changed.contains(&PORT_REPLY_IN) {
            if let Some(msg) = ctx.port(PORT_REPLY_IN).as_message() {
                let accepted = matches!(msg.payload, MsgPayload::Accept(true));
                let value = serde_json::json!({
                    "controller": "line_capacity",
                    "action": if accepted { "participation" } else { "decline" },
                    "from": msg.from,
                });
                ctx.log("decision", value);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(loading: f64) -> GridSnapshot {
        GridSnapshot { loading_max_pct: loading, ..Default::default() }
    }

    fn lc() -> LineCapacityCfg {
        LineCapacityCfg { threshold_pct: 55.0, shed_fraction: 0.20, hysteresis_pct: 0.0 }
    }

    #[test]
    fn threshold_crossing_issues_shed() {
        assert_eq!(line_capacity_decision(&snap(56.0), &lc(), false), ShedDecision::Shed(0.20));
        assert_eq!(line_capacity_decision(&snap(54.9), &lc(), false), ShedDecision::Release);
        // Exactly at the threshold: strict comparison, no request.
        assert_eq!(line_capacity_decision(&snap(55.0), &lc(), false), ShedDecision::Release);
    }

    #[test]
    fn hysteresis_band_keeps_shed_in_force() {
        let cfg = LineCapacityCfg { hysteresis_pct: 2.0, ..lc() };
        assert_eq!(line_capacity_decision(&snap(54.0), &cfg, true), ShedDecision::Shed(0.20));
        assert_eq!(line_capacity_decision(&snap(54.0), &cfg, false), ShedDecision::Release);
        assert_eq!(line_capacity_decision(&snap(52.9), &cfg, true), ShedDecision::Release);
    }

    #[test]
    fn volt_var_fixed_point_and_clamp() {
        let cfg = VoltVarCfg {
            r_ohm: 0.75,
            x_ohm: 2.8,
            kv_base: 12.47,
            q_min_kvar: -500.0,
            q_max_kvar: 500.0,
            target_v_pu: None,
        };
        // Already at the target with zero battery Q: no flow means no drop.
        let s = GridSnapshot {
            v_track_pu: 1.0,
            p_site_kw: 0.0,
            q_site_kvar: 0.0,
            ..Default::default()
        };
        let d = volt_var_decision(&s, &cfg, 0.0);
        assert!(d.delta_q_kvar.abs() < 1e-9);
        assert!(!d.saturated);

        // A target far above the feeder saturates at the injection limit.
        let cfg_hi = VoltVarCfg { target_v_pu: Some(1.5), ..cfg };
        let s = GridSnapshot { v_track_pu: 1.0, p_site_kw: 300.0, ..Default::default() };
        let d = volt_var_decision(&s, &cfg_hi, 0.0);
        assert!(d.saturated);
        assert_eq!(d.q_bat_kvar, 500.0);
    }

    #[test]
    fn slope_rule_proportional() {
        // Constant signal: no request.
        assert_eq!(slope_correction(100.0, 100.0, 60.0, 1.0), None);
        // Ramp at twice the limit: the correction removes half the change.
        let c = slope_correction(100.0, 220.0, 60.0, 1.0).unwrap();
        assert!((c - 60.0).abs() < 1e-12);
        // Infinite limit: inert.
        assert_eq!(slope_correction(0.0, 1e9, 60.0, f64::INFINITY), None);
    }
}

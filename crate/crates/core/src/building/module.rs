//! Kernel module: reduced thermal model + PI integral + HVAC actuation lag
//! as one ODE system, with shed requests arriving as messages.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SimError};
use crate::kernel::{Ctx, Module, ModuleDescriptor, ModuleKind, PortSpec};
use crate::msg::{MsgKind, MsgPayload, NetMessage};
use crate::ode::OdeModel;
use crate::qss::{QssMethod, QssOptions, QuantumMode};
use crate::series::TimeSeries;
use crate::value::{Value, ValueKind};

use super::hvac::{HvacParams, HvacState};
use super::rc::{assemble_rc, strip_hvac_inputs, ZoneSpec, N_DISTURBANCES};
use super::reduce::balanced_truncation;

/// Building description as loaded from a spec file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildingSpecFile {
    pub hvac: HvacParams,
    #[serde(default)]
    pub building: BuildingGlobals,
    #[serde(rename = "zone")]
    pub zones: Vec<ZoneSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildingGlobals {
    #[serde(default = "default_gain_split")]
    pub gain_split_air: f64,
    #[serde(default = "default_initial_temp")]
    pub initial_temp_k: f64,
}

impl Default for BuildingGlobals {
    fn default() -> Self {
        BuildingGlobals { gain_split_air: 0.5, initial_temp_k: 293.0 }
    }
}

fn default_gain_split() -> f64 {
    0.5
}
fn default_initial_temp() -> f64 {
    293.0
}

pub fn parse_building_spec(text: &str, path: &str) -> Result<BuildingSpecFile, ConfigError> {
    let spec: BuildingSpecFile = toml::from_str(text)
        .map_err(|e| ConfigError::File { path: path.to_string(), msg: e.to_string() })?;
    spec.hvac.validate()?;
    Ok(spec)
}

#[derive(Clone, Debug)]
pub struct BuildingConfig {
    pub id: String,
    pub zones: Vec<ZoneSpec>,
    pub hvac: HvacParams,
    pub gain_split_air: f64,
    pub initial_temp_k: f64,
    pub reduced_order: usize,
    /// Plug, lighting, and equipment electric load (kW) on an internal
    /// schedule; not a port, so the module has no direct feedthrough.
    pub base_load_kw: TimeSeries,
    /// Return-temperature resolution that sets the thermal quanta.
    pub t_ret_tol_k: f64,
    /// HVAC supply-setpoint resolution that sets the controller quanta.
    pub t_hvac_tol_k: f64,
    pub method: QssMethod,
    pub quantum_mode: QuantumMode,
    pub grouped: bool,
    /// Answer shed requests with an accepting reply.
    pub reply_on_shed: bool,
}

impl BuildingConfig {
    pub fn new(id: &str, spec: &BuildingSpecFile, reduced_order: usize, base_load_kw: TimeSeries) -> Self {
        BuildingConfig {
            id: id.to_string(),
            zones: spec.zones.clone(),
            hvac: spec.hvac.clone(),
            gain_split_air: spec.building.gain_split_air,
            initial_temp_k: spec.building.initial_temp_k,
            reduced_order,
            base_load_kw,
            t_ret_tol_k: 0.01,
            t_hvac_tol_k: 0.02,
            method: QssMethod::Qss2,
            quantum_mode: QuantumMode::Max,
            grouped: true,
            reply_on_shed: true,
        }
    }
}

/// Port layout: seven disturbance inputs, one shed message input, then
/// return temperature and electric P/Q outputs and the DR reply.
pub const PORT_SHED_IN: usize = 7;
pub const PORT_T_RET: usize = 8;
pub const PORT_P_KW: usize = 9;
pub const PORT_Q_KVAR: usize = 10;
pub const PORT_REPLY_OUT: usize = 11;

pub struct BuildingModule {
    cfg: BuildingConfig,
    /// Reduced thermal dynamics in deviation coordinates around `t_ref`:
    /// a building at uniform `t_ref` with matching boundary temperatures is
    /// exactly the zero state, so no initial projection error occurs.
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DVector<f64>,
    t_ref: f64,
    shed_fraction: f64,
    /// Thermal state count; the PI integral and delivered cooling follow.
    r: usize,
}

impl BuildingModule {
    pub fn new(cfg: BuildingConfig) -> Result<Self, SimError> {
        cfg.hvac.validate()?;
        let full = assemble_rc(&cfg.zones, cfg.gain_split_air)?;
        let thermal = strip_hvac_inputs(&full);
        let red = balanced_truncation(&thermal.a, &thermal.b_v, &thermal.c, cfg.reduced_order)
            .map_err(|e| attribute(e, &cfg.id))?;
        let r = cfg.reduced_order;
        Ok(BuildingModule {
            a: red.a.clone(),
            b: red.b.clone(),
            c: red.c.row(0).transpose().clone_owned(),
            t_ref: cfg.initial_temp_k,
            shed_fraction: 0.0,
            r,
            cfg,
        })
    }

    pub fn reduced_order(&self) -> usize {
        self.r
    }

    /// Volume-weighted return temperature at a (quantized) state.
    pub fn t_ret(&self, q: &[f64]) -> f64 {
        self.t_ref + self.c.iter().zip(q).map(|(c, x)| c * x).sum::<f64>()
    }

    /// Shed-request semantics: new setpoint from the lookup table, PI and
    /// plant state re-evaluated at the current quantized state.
    pub fn apply_shed(&mut self, fraction: f64, q: &[f64]) -> Result<HvacState, SimError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(SimError::Module {
                module: self.cfg.id.clone(),
                msg: format!("shed fraction {fraction} outside [0, 1]"),
            });
        }
        self.shed_fraction = fraction;
        Ok(self.hvac_state(q, 0.0))
    }

    pub fn hvac_state(&self, q: &[f64], base_kw: f64) -> HvacState {
        let t_ret = self.t_ret(q);
        let t_set = self.cfg.hvac.setpoint_k(self.shed_fraction);
        let point = self.cfg.hvac.control(t_ret, t_set, q[self.r]);
        let cool = q[self.r + 1].max(0.0);
        let p_kw = self.cfg.hvac.electric_kw(base_kw, cool);
        HvacState {
            shed_fraction: self.shed_fraction,
            t_set_k: t_set,
            t_hvac_k: point.t_hvac_k,
            cool_cmd_w: point.cool_cmd_w,
            cool_w: cool,
            p_kw,
            q_kvar: self.cfg.hvac.reactive_kvar(p_kw),
        }
    }
}

impl OdeModel for BuildingModule {
    fn dim(&self) -> usize {
        self.r + 2
    }

    fn num_inputs(&self) -> usize {
        N_DISTURBANCES
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut x0 = vec![0.0; self.r]; // uniform t_ref in deviation form
        x0.push(0.0); // PI integral
        x0.push(0.0); // delivered cooling, W
        x0
    }

    fn derivative(&self, j: usize, q: &[f64], u: &[f64], _t: f64) -> f64 {
        let t_ret = self.t_ret(q);
        let t_set = self.cfg.hvac.setpoint_k(self.shed_fraction);
        let point = self.cfg.hvac.control(t_ret, t_set, q[self.r]);
        let cool = q[self.r + 1];
        if j < self.r {
            let mut acc = 0.0;
            for (k, qk) in q.iter().enumerate().take(self.r) {
                acc += self.a[(j, k)] * qk;
            }
            // Delivered cooling enters as negative internal heat gain; the
            // boundary temperatures shift into deviation coordinates.
            acc += self.b[(j, 0)] * (u[0] - cool);
            acc += self.b[(j, 1)] * (u[1] - self.t_ref);
            acc += self.b[(j, 2)] * (u[2] - self.t_ref);
            for (k, uk) in u.iter().enumerate().take(N_DISTURBANCES).skip(3) {
                acc += self.b[(j, k)] * uk;
            }
            acc
        } else if j == self.r {
            self.cfg.hvac.integral_rate(&point)
        } else {
            (point.cool_cmd_w - cool) / self.cfg.hvac.lag_s
        }
    }
}

impl Module for BuildingModule {
    fn descriptor(&self) -> ModuleDescriptor {
        ModuleDescriptor::new(&self.cfg.id, ModuleKind::ModelExchange).with_ports(vec![
            PortSpec::input("q_ihg", ValueKind::Real),
            PortSpec::input("t_amb", ValueKind::Real),
            PortSpec::input("t_gnd", ValueKind::Real),
            PortSpec::input("s_e", ValueKind::Real),
            PortSpec::input("s_w", ValueKind::Real),
            PortSpec::input("s_n", ValueKind::Real),
            PortSpec::input("s_s", ValueKind::Real),
            PortSpec::input("shed_in", ValueKind::Message),
            PortSpec::output("t_ret", ValueKind::Real),
            PortSpec::output("p_kw", ValueKind::Real),
            PortSpec::output("q_kvar", ValueKind::Real),
            PortSpec::output("reply_out", ValueKind::Message),
        ])
    }

    fn init(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        // Refresh electric output at base-load breakpoints.
        let mut t = -1.0;
        while let Some(bp) = self.cfg.base_load_kw.next_breakpoint(t) {
            if bp > ctx.t_end() {
                break;
            }
            if bp > 0.0 {
                ctx.schedule_self(0, bp);
            }
            t = bp;
        }
        Ok(())
    }

    fn ode(&self) -> Option<&dyn OdeModel> {
        Some(self)
    }

    fn qss_options(&self) -> Option<QssOptions> {
        // Output-weighted thermal quanta: sum_j |c_j| dq_j ~ t_ret_tol.
        let cmax = self.c.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        let mut per_state: Vec<f64> = (0..self.r)
            .map(|j| self.cfg.t_ret_tol_k / (self.r as f64 * self.c[j].abs().max(0.05 * cmax)))
            .collect();
        per_state.push(self.cfg.t_hvac_tol_k / self.cfg.hvac.pid.ki);
        per_state.push(self.cfg.hvac.gain_w_per_k * self.cfg.t_hvac_tol_k);
        Some(QssOptions {
            method: self.cfg.method,
            mode: self.cfg.quantum_mode,
            abs_tol: self.cfg.t_ret_tol_k,
            rel_tol: 0.0,
            per_state_abs: Some(per_state),
            grouped: self.cfg.grouped,
        })
    }

    fn ode_input_slot(&self, port: usize) -> Option<usize> {
        (port < N_DISTURBANCES).then_some(port)
    }

    fn ode_outputs(&mut self, q: &[f64], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let base = self.cfg.base_load_kw.value_at(ctx.t());
        let s = self.hvac_state(q, base);
        ctx.emit(PORT_T_RET, Value::real(self.t_ret(q)));
        ctx.emit(PORT_P_KW, Value::real(s.p_kw));
        ctx.emit(PORT_Q_KVAR, Value::real(s.q_kvar));
        ctx.record("t_set", s.t_set_k);
        ctx.record("t_hvac", s.t_hvac_k);
        ctx.record("cool_cmd_kw", s.cool_cmd_w / 1e3);
        ctx.record("cool_kw", s.cool_w / 1e3);
        ctx.record("shed", s.shed_fraction);
        Ok(())
    }

    fn on_inputs(&mut self, changed: &[usize], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        if !changed.contains(&PORT_SHED_IN) {
            return Ok(());
        }
        let msg = match ctx.port(PORT_SHED_IN).as_message() {
            Some(m) => m.clone(),
            None => return Ok(()),
        };
        if msg.kind != MsgKind::ShedLoadRequest {
            return Ok(());
        }
        let fraction = match msg.payload {
            MsgPayload::ShedFraction(f) => f,
            MsgPayload::ShedKw(kw) => {
                // Convert an absolute request against the current load.
                let p_now = ctx.port_f64(PORT_P_KW).max(1e-9);
                (kw / p_now).clamp(0.0, 1.0)
            }
            _ => return Ok(()),
        };
        if !(0.0..=1.0).contains(&fraction) {
            return Err(SimError::Module {
                module: self.cfg.id.clone(),
                msg: format!("shed fraction {fraction} outside [0, 1]"),
            });
        }
        self.shed_fraction = fraction;
        ctx.mark_ode_dirty();
        ctx.log("apply", serde_json::json!({ "shed_fraction": fraction }));
        if self.cfg.reply_on_shed {
            let reply = NetMessage::shed_reply(ctx.module_id(), &msg.from, true);
            ctx.emit(PORT_REPLY_OUT, Value::Message(reply));
        }
        Ok(())
    }
}

fn attribute(e: SimError, module: &str) -> SimError {
    match e {
        SimError::Module { module: m, msg } if m.is_empty() => {
            SimError::Module { module: module.to_string(), msg }
        }
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::building::rc::synthetic_office;

    fn test_config() -> BuildingConfig {
        let spec = BuildingSpecFile {
            hvac: HvacParams {
                nominal_setpoint_k: 293.0,
                capacity_w: 4.0e5,
                gain_w_per_k: 1.0e5,
                lag_s: 30.0,
                cop: 3.0,
                power_factor: 0.96,
                pid: Default::default(),
                shed_table: Default::default(),
                hvac_span_k: 20.0,
            },
            building: Default::default(),
            zones: synthetic_office(3),
        };
        BuildingConfig::new("bldg", &spec, 6, TimeSeries::constant(80.0))
    }

    #[test]
    fn shed_zero_keeps_nominal_setpoint() {
        let mut b = BuildingModule::new(test_config()).unwrap();
        let q = b.initial_state();
        let s = b.apply_shed(0.0, &q).unwrap();
        assert_eq!(s.t_set_k, 293.0);
    }

    #[test]
    fn shed_twenty_percent_raises_by_table() {
        let mut b = BuildingModule::new(test_config()).unwrap();
        let q = b.initial_state();
        let s = b.apply_shed(0.20, &q).unwrap();
        assert_eq!(s.t_set_k, 295.0);
    }

    #[test]
    fn cool_building_with_shed_draws_base_load_only() {
        let mut b = BuildingModule::new(test_config()).unwrap();
        let q = b.initial_state();
        // T_RET starts at 293 = nominal; with the setpoint raised the
        // command clamps at zero and P is the base electric load.
        b.apply_shed(0.20, &q).unwrap();
        let s = b.hvac_state(&q, 80.0);
        assert_eq!(s.cool_cmd_w, 0.0);
        assert!((s.p_kw - 80.0).abs() < 1e-12);
    }

    #[test]
    fn shed_out_of_range_rejected() {
        let mut b = BuildingModule::new(test_config()).unwrap();
        let q = b.initial_state();
        assert!(b.apply_shed(1.2, &q).is_err());
    }

    #[test]
    fn initial_state_is_uniform_temperature() {
        let b = BuildingModule::new(test_config()).unwrap();
        let x0 = b.initial_state();
        assert_eq!(b.t_ret(&x0), 293.0);
        // At matching boundary temperatures the deviation dynamics rest.
        let u = [0.0, 293.0, 293.0, 0.0, 0.0, 0.0, 0.0];
        for j in 0..b.dim() {
            assert!(b.derivative(j, &x0, &u, 0.0).abs() < 1e-9);
        }
    }
}

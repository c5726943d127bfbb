//! Kernel module wrapping the load-flow solver.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::kernel::{Ctx, Module, ModuleDescriptor, ModuleKind, PortSpec};
use crate::value::{Value, ValueKind};

use super::{solve_load_flow, FeederNetwork};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionSign {
    /// Port value adds to the bus load.
    #[default]
    Consumption,
    /// Port value is generation/injection (subtracts from the bus load).
    Injection,
}

/// Binds one real input port to a bus quantity. Port values add on top of
/// the network file's static injections.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InjectionBinding {
    pub port: String,
    pub bus: String,
    /// `"p_kw"` or `"q_kvar"`.
    pub quantity: String,
    #[serde(default)]
    pub sign: InjectionSign,
}

#[derive(Clone, Debug)]
pub struct PowerflowConfig {
    pub id: String,
    pub network: FeederNetwork,
    pub inputs: Vec<InjectionBinding>,
}

/// Direct-feedthrough co-simulation module: every input change re-runs the
/// load flow and republishes bus voltages, branch loadings, and the slack
/// injection.
pub struct PowerflowModule {
    cfg: PowerflowConfig,
    /// (bus index, is_reactive, sign) per input port.
    bindings: Vec<(usize, bool, f64)>,
}

impl PowerflowModule {
    pub fn new(cfg: PowerflowConfig) -> Result<Self, SimError> {
        let mut bindings = Vec::new();
        for b in &cfg.inputs {
            let bus = cfg.network.bus_index(&b.bus).ok_or_else(|| SimError::Module {
                module: cfg.id.clone(),
                msg: format!("injection input `{}` references unknown bus `{}`", b.port, b.bus),
            })?;
            let is_reactive = match b.quantity.as_str() {
                "p_kw" => false,
                "q_kvar" => true,
                other => {
                    return Err(SimError::Module {
                        module: cfg.id.clone(),
                        msg: format!("injection quantity must be p_kw or q_kvar, got `{other}`"),
                    })
                }
            };
            let sign = match b.sign {
                InjectionSign::Consumption => 1.0,
                InjectionSign::Injection => -1.0,
            };
            bindings.push((bus, is_reactive, sign));
        }
        Ok(PowerflowModule { cfg, bindings })
    }

    fn solve_and_emit(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let net = &self.cfg.network;
        let mut inj = net.base_injections.clone();
        for (port, &(bus, is_reactive, sign)) in self.bindings.iter().enumerate() {
            let v = ctx.port_f64(port) * sign;
            if is_reactive {
                inj[bus].1 += v;
            } else {
                inj[bus].0 += v;
            }
        }
        let result = solve_load_flow(net, &inj)?;
        let n_in = self.bindings.len();
        let n_bus = net.buses.len();
        let n_br = net.branches.len();
        for (i, &v) in result.v_pu.iter().enumerate() {
            ctx.emit(n_in + i, Value::real(v));
        }
        for (i, &l) in result.loading_pct.iter().enumerate() {
            ctx.emit(n_in + n_bus + i, Value::real(l));
        }
        ctx.emit(n_in + n_bus + n_br, Value::real(result.max_loading_pct()));
        ctx.emit(n_in + n_bus + n_br + 1, Value::real(result.slack_p_kw));
        ctx.emit(n_in + n_bus + n_br + 2, Value::real(result.slack_q_kvar));
        Ok(())
    }
}

impl Module for PowerflowModule {
    fn descriptor(&self) -> ModuleDescriptor {
        let mut ports: Vec<PortSpec> =
            self.cfg.inputs.iter().map(|b| PortSpec::input(&b.port, ValueKind::Real)).collect();
        for b in &self.cfg.network.buses {
            ports.push(PortSpec::output(&format!("v_{}", b.id), ValueKind::Real));
        }
        for br in &self.cfg.network.branches {
            ports.push(PortSpec::output(&format!("loading_{}", br.id), ValueKind::Real));
        }
        ports.push(PortSpec::output("loading_max", ValueKind::Real));
        ports.push(PortSpec::output("slack_p_kw", ValueKind::Real));
        ports.push(PortSpec::output("slack_q_kvar", ValueKind::Real));
        ModuleDescriptor::new(&self.cfg.id, ModuleKind::CoSimulation)
            .with_ports(ports)
            .with_full_feedthrough()
    }

    fn init(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.solve_and_emit(ctx)
    }

    fn on_inputs(&mut self, _changed: &[usize], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.solve_and_emit(ctx)
    }
}

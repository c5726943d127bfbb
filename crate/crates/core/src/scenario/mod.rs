//! Scenario runner: parse configuration, ingest CSV time series, wire
//! modules, execute the kernel, and emit traces, event log, summary, and a
//! plot script.

mod ode_box;
mod plot;
mod source;
mod summary;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use ode_box::{LinearOdeDecl, LinearOdeModule};
pub use plot::render_plot_script;
pub use source::SourceModule;
pub use summary::{compute_summary, shed_windows, Summary};

use crate::building::{parse_building_spec, BuildingConfig, BuildingModule, BuildingSpecFile};
use crate::comms::{CommsConfig, CommsModule};
use crate::control::{ControlModule, ControllerConfig, LineCapacityCfg, SlopeCfg, VoltVarCfg};
use crate::error::{ConfigError, SimError};
use crate::kernel::{Kernel, RunOutput};
use crate::powerflow::{parse_network, FeederNetwork, InjectionBinding, PowerflowConfig, PowerflowModule};
use crate::qss::{QssMethod, QssOptions, QuantumMode};
use crate::series::{Interpolation, TimeSeries};
use crate::value::Value;

/// Source of scenario resources (profiles, network and building specs), so
/// scenarios run from the filesystem or from embedded assets alike.
pub trait ResourceLoader {
    fn load(&self, path: &str) -> Result<String, ConfigError>;
}

pub struct FsLoader {
    pub base: PathBuf,
}

impl ResourceLoader for FsLoader {
    fn load(&self, path: &str) -> Result<String, ConfigError> {
        let full = self.base.join(path);
        std::fs::read_to_string(&full).map_err(|e| ConfigError::DanglingReference {
            reference: full.display().to_string(),
            context: format!("resource ({e})"),
        })
    }
}

#[derive(Default)]
pub struct MemLoader {
    pub files: BTreeMap<String, String>,
}

impl MemLoader {
    pub fn insert(&mut self, path: &str, content: &str) {
        self.files.insert(path.to_string(), content.to_string());
    }
}

impl ResourceLoader for MemLoader {
    fn load(&self, path: &str) -> Result<String, ConfigError> {
        self.files.get(path).cloned().ok_or_else(|| ConfigError::DanglingReference {
            reference: path.to_string(),
            context: "embedded resource".into(),
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub t_end_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Run a second pass with shed/slope control disabled and keep its
    /// traces as the baseline for DR comparisons.
    #[serde(default)]
    pub emit_baseline: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverDecl {
    #[serde(default = "default_method")]
    pub method: QssMethod,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_mode")]
    pub quantum_mode: QuantumMode,
    #[serde(default)]
    pub grouped: bool,
}

fn default_method() -> QssMethod {
    QssMethod::Qss2
}
fn default_abs_tol() -> f64 {
    1e-3
}
fn default_rel_tol() -> f64 {
    1e-3
}
fn default_mode() -> QuantumMode {
    QuantumMode::Max
}

impl Default for SolverDecl {
    fn default() -> Self {
        SolverDecl {
            method: default_method(),
            abs_tol: default_abs_tol(),
            rel_tol: default_rel_tol(),
            quantum_mode: default_mode(),
            grouped: false,
        }
    }
}

impl SolverDecl {
    pub fn to_options(&self) -> QssOptions {
        QssOptions {
            method: self.method,
            mode: self.quantum_mode,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            per_state_abs: None,
            grouped: self.grouped,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SourceDecl {
    pub id: String,
    pub profile: String,
    #[serde(default = "default_interp")]
    pub interpolation: Interpolation,
}

fn default_interp() -> Interpolation {
    Interpolation::Linear
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildingDecl {
    pub id: String,
    pub spec: String,
    #[serde(default = "default_reduced_order")]
    pub reduced_order: usize,
    pub base_load: String,
    #[serde(default = "default_interp")]
    pub base_load_interpolation: Interpolation,
    #[serde(default)]
    pub t_ret_tol_k: Option<f64>,
    #[serde(default)]
    pub t_hvac_tol_k: Option<f64>,
    #[serde(default = "default_true")]
    pub reply_on_shed: bool,
}

fn default_reduced_order() -> usize {
    8
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeederDecl {
    pub id: String,
    pub network: String,
    #[serde(default, rename = "injection_input")]
    pub inputs: Vec<InjectionBinding>,
}

/// Volt-var controller declaration; the path impedance is resolved from the
/// named feeder's tree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VoltVarDecl {
    pub feeder: String,
    pub from_bus: String,
    pub to_bus: String,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
    #[serde(default)]
    pub target_v_pu: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControllerDecl {
    pub id: String,
    #[serde(default = "default_period")]
    pub period_s: f64,
    #[serde(default)]
    pub line_capacity: Option<LineCapacityCfg>,
    #[serde(default)]
    pub volt_var: Option<VoltVarDecl>,
    #[serde(default)]
    pub slope: Option<SlopeCfg>,
    #[serde(default = "default_ven")]
    pub ven_node: String,
}

fn default_period() -> f64 {
    60.0
}
fn default_ven() -> String {
    "ven".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectDecl {
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleDecl {
    pub port: String,
    pub period_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub scenario: ScenarioMeta,
    #[serde(default)]
    pub solver: SolverDecl,
    #[serde(default, rename = "source")]
    pub sources: Vec<SourceDecl>,
    #[serde(default, rename = "linear_ode")]
    pub linear_odes: Vec<LinearOdeDecl>,
    #[serde(default, rename = "building")]
    pub buildings: Vec<BuildingDecl>,
    #[serde(default, rename = "feeder")]
    pub feeders: Vec<FeederDecl>,
    #[serde(default, rename = "comms")]
    pub comms: Vec<CommsConfig>,
    #[serde(default, rename = "controller")]
    pub controllers: Vec<ControllerDecl>,
    #[serde(default, rename = "connect")]
    pub connects: Vec<ConnectDecl>,
    #[serde(default, rename = "sample")]
    pub samples: Vec<SampleDecl>,
    #[serde(default)]
    pub input_defaults: BTreeMap<String, f64>,
}

/// A loaded, resource-resolved scenario, ready to build kernels.
#[derive(Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    profiles: BTreeMap<String, TimeSeries>,
    building_specs: BTreeMap<String, BuildingSpecFile>,
    networks: BTreeMap<String, FeederNetwork>,
}

/// CLI-level overrides applied on top of the scenario file.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub t_end_s: Option<f64>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::File {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    load_scenario_str(&text, &FsLoader { base }, &path.display().to_string())
}

pub fn load_scenario_str(
    text: &str,
    loader: &dyn ResourceLoader,
    origin: &str,
) -> Result<Scenario, ConfigError> {
    let file: ScenarioFile = toml::from_str(text)
        .map_err(|e| ConfigError::File { path: origin.to_string(), msg: e.to_string() })?;
    if !(file.scenario.t_end_s > 0.0) {
        return Err(ConfigError::Invalid("t_end_s must be > 0".into()));
    }

    let mut profiles = BTreeMap::new();
    for s in &file.sources {
        let csv = loader.load(&s.profile)?;
        profiles.insert(s.profile.clone(), TimeSeries::parse_csv(&csv, &s.profile, s.interpolation)?);
    }
    for b in &file.buildings {
        let csv = loader.load(&b.base_load)?;
        profiles
            .insert(b.base_load.clone(), TimeSeries::parse_csv(&csv, &b.base_load, b.base_load_interpolation)?);
    }
    let mut building_specs = BTreeMap::new();
    for b in &file.buildings {
        let spec = parse_building_spec(&loader.load(&b.spec)?, &b.spec)?;
        building_specs.insert(b.spec.clone(), spec);
    }
    let mut networks = BTreeMap::new();
    for f in &file.feeders {
        let net = parse_network(&loader.load(&f.network)?, &f.network)?;
        networks.insert(f.id.clone(), net);
    }

    let scenario = Scenario { file, profiles, building_specs, networks };
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    fn validate(&self) -> Result<(), ConfigError> {
        for c in &self.file.controllers {
            if let Some(vv) = &c.volt_var {
                let net = self.networks.get(&vv.feeder).ok_or_else(|| {
                    ConfigError::DanglingReference {
                        reference: vv.feeder.clone(),
                        context: format!("controller `{}` volt_var feeder", c.id),
                    }
                })?;
                net.path_impedance_ohm(&vv.from_bus, &vv.to_bus)?;
            }
        }
        // A sampled port feeding a discrete-time module must align with its
        // period.
        for s in &self.file.samples {
            for conn in &self.file.connects {
                if conn.from != s.port {
                    continue;
                }
                let target_module = conn.to.split('.').next().unwrap_or_default();
                if let Some(c) = self.file.controllers.iter().find(|c| c.id == target_module) {
                    let ratio = c.period_s / s.period_s;
                    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
                        return Err(ConfigError::Invalid(format!(
                            "sample period {} on `{}` does not divide controller `{}` period {}",
                            s.period_s, s.port, c.id, c.period_s
                        )));
                    }
                }
            }
        }
        // Wiring is validated for real by a throwaway build.
        self.build_kernel(&RunOverrides::default(), false).map(|_| ()).map_err(|e| match e {
            SimError::Config(c) => c,
            other => ConfigError::Invalid(other.to_string()),
        })
    }

    fn volt_var_cfg(&self, decl: &VoltVarDecl) -> Result<VoltVarCfg, ConfigError> {
        let net = self.networks.get(&decl.feeder).ok_or_else(|| ConfigError::DanglingReference {
            reference: decl.feeder.clone(),
            context: "volt_var feeder".into(),
        })?;
        let (r_ohm, x_ohm) = net.path_impedance_ohm(&decl.from_bus, &decl.to_bus)?;
        let kv_base = net.buses[net
            .bus_index(&decl.to_bus)
            .expect("validated by path_impedance_ohm")]
        .kv;
        Ok(VoltVarCfg {
            r_ohm,
            x_ohm,
            kv_base,
            q_min_kvar: decl.q_min_kvar,
            q_max_kvar: decl.q_max_kvar,
            target_v_pu: decl.target_v_pu,
        })
    }

    /// Build a kernel for one run. With `baseline` set, shed and slope
    /// control are disabled (the modules stay registered so the wiring and
    /// trace names are unchanged).
    pub fn build_kernel(&self, ov: &RunOverrides, baseline: bool) -> Result<Kernel, SimError> {
        let seed = ov.seed.unwrap_or(self.file.scenario.seed);
        let mut k = Kernel::new();
        for s in &self.file.sources {
            let series = self.profiles[&s.profile].clone();
            k.register_module(Box::new(SourceModule { id: s.id.clone(), series }))?;
        }
        for decl in &self.file.linear_odes {
            let module = LinearOdeModule::new(decl, self.file.solver.to_options())?;
            k.register_module(Box::new(module))?;
        }
        for b in &self.file.buildings {
            let spec = &self.building_specs[&b.spec];
            let base_load = self.profiles[&b.base_load].clone();
            let mut cfg = BuildingConfig::new(&b.id, spec, b.reduced_order, base_load);
            cfg.method = self.file.solver.method;
            cfg.quantum_mode = self.file.solver.quantum_mode;
            cfg.reply_on_shed = b.reply_on_shed;
            if let Some(t) = b.t_ret_tol_k {
                cfg.t_ret_tol_k = t;
            }
            if let Some(t) = b.t_hvac_tol_k {
                cfg.t_hvac_tol_k = t;
            }
            k.register_module(Box::new(BuildingModule::new(cfg)?))?;
        }
        for f in &self.file.feeders {
            let cfg = PowerflowConfig {
                id: f.id.clone(),
                network: self.networks[&f.id].clone(),
                inputs: f.inputs.clone(),
            };
            k.register_module(Box::new(PowerflowModule::new(cfg)?))?;
        }
        for (i, c) in self.file.comms.iter().enumerate() {
            let mut cfg = c.clone();
            cfg.seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(i as u64 + 1));
            k.register_module(Box::new(CommsModule::new(cfg)?))?;
        }
        for c in &self.file.controllers {
            let cfg = ControllerConfig {
                id: c.id.clone(),
                period_s: c.period_s,
                line_capacity: if baseline { None } else { c.line_capacity.clone() },
                volt_var: match &c.volt_var {
                    Some(decl) => Some(self.volt_var_cfg(decl)?),
                    None => None,
                },
                slope: if baseline { None } else { c.slope.clone() },
                ven_node: c.ven_node.clone(),
            };
            k.register_module(Box::new(ControlModule::new(cfg)?))?;
        }
        for conn in &self.file.connects {
            k.connect(&conn.from, &conn.to)?;
        }
        for s in &self.file.samples {
            k.sample_and_forward(&s.port, s.period_s)?;
        }
        for (port, value) in &self.file.input_defaults {
            k.set_input_default(port, Value::real(*value))?;
        }
        Ok(k)
    }

    /// Run the scenario (and its baseline pass when configured).
    pub fn run(&self, ov: &RunOverrides) -> Result<ScenarioOutput, SimError> {
        let t_end = ov.t_end_s.unwrap_or(self.file.scenario.t_end_s);
        let main = self.build_kernel(ov, false)?.run(t_end)?;
        let baseline = if self.file.scenario.emit_baseline {
            Some(self.build_kernel(ov, true)?.run(t_end)?)
        } else {
            None
        };
        let summary = compute_summary(self, &main, baseline.as_ref());
        let plot_script = render_plot_script(self, baseline.is_some());
        Ok(ScenarioOutput { main, baseline, summary, plot_script })
    }
}

pub struct ScenarioOutput {
    pub main: RunOutput,
    pub baseline: Option<RunOutput>,
    pub summary: Summary,
    pub plot_script: String,
}

impl ScenarioOutput {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        self.main.write_traces(dir)?;
        self.main.write_events(&dir.join("events.jsonl"))?;
        if let Some(base) = &self.baseline {
            let bdir = dir.join("baseline");
            base.write_traces(&bdir)?;
            base.write_events(&bdir.join("events.jsonl"))?;
        }
        std::fs::write(dir.join("summary.txt"), self.summary.to_text())?;
        std::fs::write(dir.join("plots.gp"), &self.plot_script)?;
        Ok(())
    }
}

//! Browser demo bindings: three interactive views over the engine, each
//! returning plot-ready JSON. The shipped scenarios and profiles are
//! embedded so the module is self-contained.
//!
//! Build with the `wasm32-unknown-unknown` target (see the workspace README
//! for the `wasm-pack` invocation); the crate also compiles natively so the
//! bindings stay under test.

use wasm_bindgen::prelude::wasm_bindgen;

use cosim_core::ode::LinearOde;
use cosim_core::qss::{integrate, QssMethod, QssOptions, QuantumMode};
use cosim_core::scenario::{load_scenario_str, MemLoader, RunOverrides, Scenario};

fn embedded_loader() -> MemLoader {
    let mut m = MemLoader::default();
    m.insert("building.toml", include_str!("../../../scenarios/dr_overload/building.toml"));
    m.insert("feeder.toml", include_str!("../../../scenarios/dr_overload/feeder.toml"));
    m.insert(
        "../dr_overload/building.toml",
        include_str!("../../../scenarios/dr_overload/building.toml"),
    );
    m.insert(
        "../dr_overload/feeder.toml",
        include_str!("../../../scenarios/dr_overload/feeder.toml"),
    );
    for (name, text) in [
        ("t_amb.csv", include_str!("../../../scenarios/profiles/t_amb.csv")),
        ("solar_e.csv", include_str!("../../../scenarios/profiles/solar_e.csv")),
        ("solar_w.csv", include_str!("../../../scenarios/profiles/solar_w.csv")),
        ("solar_n.csv", include_str!("../../../scenarios/profiles/solar_n.csv")),
        ("solar_s.csv", include_str!("../../../scenarios/profiles/solar_s.csv")),
        ("q_ihg.csv", include_str!("../../../scenarios/profiles/q_ihg.csv")),
        ("base_load.csv", include_str!("../../../scenarios/profiles/base_load.csv")),
        ("agg_a1_p.csv", include_str!("../../../scenarios/profiles/agg_a1_p.csv")),
        ("agg_a1_q.csv", include_str!("../../../scenarios/profiles/agg_a1_q.csv")),
        ("agg_a6_p.csv", include_str!("../../../scenarios/profiles/agg_a6_p.csv")),
        ("agg_a6_q.csv", include_str!("../../../scenarios/profiles/agg_a6_q.csv")),
        ("pv_p.csv", include_str!("../../../scenarios/profiles/pv_p.csv")),
    ] {
        m.insert(&format!("../profiles/{name}"), text);
    }
    m
}

const DR_SCENARIO: &str = include_str!("../../../scenarios/dr_overload/scenario.toml");
const VOLTVAR_SCENARIO: &str = include_str!("../../../scenarios/voltvar/scenario.toml");

fn parse_method(s: &str) -> QssMethod {
    match s {
        "qss1" => QssMethod::Qss1,
        "liqss1" => QssMethod::Liqss1,
        _ => QssMethod::Qss2,
    }
}

/// Keep at most `cap` points per series so the canvas stays responsive.
fn decimate(series: &[(f64, f64)], cap: usize) -> (Vec<f64>, Vec<f64>) {
    let step = (series.len() / cap).max(1);
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (i, &(ti, vi)) in series.iter().enumerate() {
        if i % step == 0 || i + 1 == series.len() {
            t.push(ti);
            v.push(vi);
        }
    }
    (t, v)
}

fn err_json(e: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": e.to_string() }).to_string()
}

/// Integrate `dx/dt = -x`, `x(0) = 1` and report the event-wise solution
/// next to the analytic one.
#[wasm_bindgen]
pub fn qss_exponential(
    method: &str,
    abs_tol: f64,
    rel_tol: f64,
    quantum_mode: &str,
    t_end: f64,
) -> String {
    let opts = QssOptions {
        method: parse_method(method),
        mode: if quantum_mode == "min" { QuantumMode::Min } else { QuantumMode::Max },
        abs_tol,
        rel_tol,
        per_state_abs: None,
        grouped: false,
    };
    let model = LinearOde::exponential_decay();
    let trace = match integrate(&model, opts, t_end) {
        Ok(t) => t,
        Err(e) => return err_json(e),
    };
    let xs: Vec<f64> = trace.states.iter().map(|s| s[0]).collect();
    let exact: Vec<f64> = trace.times.iter().map(|&t| (-t).exp()).collect();
    let err_end = (xs.last().unwrap() - exact.last().unwrap()).abs();
    serde_json::json!({
        "t": trace.times,
        "x": xs,
        "exact": exact,
        "events": trace.event_count,
        "error_at_end": err_end,
    })
    .to_string()
}

fn run_scenario(
    mut scenario: Scenario,
    seed: u64,
    hours: f64,
) -> Result<cosim_core::scenario::ScenarioOutput, String> {
    scenario.file.scenario.seed = seed;
    scenario
        .run(&RunOverrides { seed: None, t_end_s: Some(hours * 3600.0) })
        .map_err(|e| e.to_string())
}

/// Run the demand-response scenario with adjustable threshold, shed
/// fraction, polling period, and channel latency/loss.
#[wasm_bindgen]
pub fn dr_scenario(
    threshold_pct: f64,
    shed_fraction: f64,
    polling_s: f64,
    base_latency_ms: f64,
    loss_pct: f64,
    seed: u32,
    hours: f64,
) -> String {
    let loader = embedded_loader();
    let mut scenario = match load_scenario_str(DR_SCENARIO, &loader, "dr_overload") {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    if let Some(lc) = scenario.file.controllers[0].line_capacity.as_mut() {
        lc.threshold_pct = threshold_pct;
        lc.shed_fraction = shed_fraction;
    }
    {
        let comms = &mut scenario.file.comms[0];
        comms.polling_period_s = if polling_s > 0.0 { Some(polling_s) } else { None };
        comms.downlink.base_latency_s = base_latency_ms / 1e3;
        comms.downlink.loss_probability = (loss_pct / 100.0).clamp(0.0, 0.95);
        comms.uplink.base_latency_s = base_latency_ms / 2e3;
    }
    let out = match run_scenario(scenario, seed as u64, hours) {
        Ok(o) => o,
        Err(e) => return err_json(e),
    };
    let main = &out.main;
    let base = out.baseline.as_ref().expect("dr scenario keeps a baseline");
    let series = |run: &cosim_core::kernel::RunOutput, name: &str| {
        let (t, v) = decimate(run.traces.get(name).unwrap_or(&[]), 1600);
        serde_json::json!({ "t": t, "v": v })
    };
    let windows = cosim_core::scenario::shed_windows(main, "bldg");
    serde_json::json!({
        "threshold": threshold_pct,
        "loading": series(main, "grid.loading_max"),
        "loading_base": series(base, "grid.loading_max"),
        "p": series(main, "bldg.p_kw"),
        "p_base": series(base, "bldg.p_kw"),
        "t_set": series(main, "bldg.t_set"),
        "t_ret": series(main, "bldg.t_ret"),
        "t_amb": series(main, "wx_tamb.out"),
        "shed_windows": windows,
        "summary": {
            "max_loading_pct": out.summary.max_loading_pct,
            "shed_events": out.summary.shed_events,
            "shed_energy_kwh": out.summary.shed_energy_kwh,
        },
    })
    .to_string()
}

/// Run the volt-var tracking scenario with adjustable battery limits and
/// controller period.
#[wasm_bindgen]
pub fn volt_var(q_limit_kvar: f64, period_s: f64, hours: f64) -> String {
    let loader = embedded_loader();
    let mut scenario = match load_scenario_str(VOLTVAR_SCENARIO, &loader, "voltvar") {
        Ok(s) => s,
        Err(e) => return err_json(e),
    };
    {
        let ctrl = &mut scenario.file.controllers[0];
        ctrl.period_s = period_s.max(10.0);
        if let Some(vv) = ctrl.volt_var.as_mut() {
            vv.q_min_kvar = -q_limit_kvar.abs();
            vv.q_max_kvar = q_limit_kvar.abs();
        }
    }
    let out = match run_scenario(scenario, 7, hours) {
        Ok(o) => o,
        Err(e) => return err_json(e),
    };
    let main = &out.main;
    let series = |name: &str| {
        let (t, v) = decimate(main.traces.get(name).unwrap_or(&[]), 1600);
        serde_json::json!({ "t": t, "v": v })
    };
    let v_err = main.traces.get("ctrl.v_err").unwrap_or(&[]);
    let worst = v_err.iter().skip(5).map(|&(_, e)| e).fold(0.0, f64::max);
    serde_json::json!({
        "v_site": series("grid.v_site"),
        "v_track": series("grid.v_sub_b"),
        "total_q": series("ctrl.total_q"),
        "delta_q": series("ctrl.delta_q"),
        "worst_tracking_error_pu": worst,
    })
    .to_string()
}

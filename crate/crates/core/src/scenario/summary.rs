//! Run summary with fixed keys.

use super::Scenario;
use crate::kernel::RunOutput;

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub max_loading_pct: f64,
    pub shed_events: u64,
    pub shed_energy_kwh: f64,
    pub voltage_rmse_pu: f64,
}

impl Summary {
    pub fn to_text(&self) -> String {
        format!(
            "max_loading_pct = {:.4}\nshed_events = {}\nshed_energy_kwh = {:.4}\nvoltage_rmse_pu = {:.8}\n",
            self.max_loading_pct, self.shed_events, self.shed_energy_kwh, self.voltage_rmse_pu
        )
    }
}

/// Shed-in-force windows from the building's `apply` records: a window opens
/// on a positive fraction and closes on a zero fraction (or run end).
pub fn shed_windows(run: &RunOutput, building_id: &str) -> Vec<(f64, f64)> {
    let mut windows = Vec::new();
    let mut open: Option<f64> = None;
    for r in &run.events.records {
        if r.kind != "apply" || r.source != building_id {
            continue;
        }
        let fraction = r.value.get("shed_fraction").and_then(|v| v.as_f64()).unwrap_or(0.0);
        match (fraction > 0.0, open) {
            (true, None) => open = Some(r.t_s),
            (false, Some(t0)) => {
                windows.push((t0, r.t_s));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(t0) = open {
        windows.push((t0, run.t_end));
    }
    windows
}

/// Step-function integral of `base - main` over the given windows, in kWh.
fn shed_energy(main: &RunOutput, base: &RunOutput, signal: &str, windows: &[(f64, f64)]) -> f64 {
    let (Some(m), Some(b)) = (main.traces.get(signal), base.traces.get(signal)) else {
        return 0.0;
    };
    let mut grid: Vec<f64> = m.iter().chain(b.iter()).map(|&(t, _)| t).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut kwh = 0.0;
    for &(w0, w1) in windows {
        let mut points: Vec<f64> = vec![w0];
        points.extend(grid.iter().copied().filter(|&t| t > w0 && t < w1));
        points.push(w1);
        for pair in points.windows(2) {
            let (t0, t1) = (pair[0], pair[1]);
            let p_main = main.traces.value_at(signal, t0).unwrap_or(0.0);
            let p_base = base.traces.value_at(signal, t0).unwrap_or(0.0);
            kwh += (p_base - p_main).max(0.0) * (t1 - t0) / 3600.0;
        }
    }
    kwh
}

pub fn compute_summary(scenario: &Scenario, main: &RunOutput, baseline: Option<&RunOutput>) -> Summary {
    let max_loading_pct = scenario
        .file
        .feeders
        .iter()
        .filter_map(|f| main.traces.get(&format!("{}.loading_max", f.id)))
        .flat_map(|s| s.iter().map(|&(_, v)| v))
        .fold(0.0, f64::max);

    let mut shed_events = 0;
    let mut shed_energy_kwh = 0.0;
    for b in &scenario.file.buildings {
        let windows = shed_windows(main, &b.id);
        shed_events += windows.len() as u64;
        if let Some(base) = baseline {
            shed_energy_kwh += shed_energy(main, base, &format!("{}.p_kw", b.id), &windows);
        }
    }

    // RMS voltage tracking error over controller ticks, skipping the two
    // startup ticks before the loop closes.
    let mut sq = 0.0;
    let mut n = 0usize;
    for c in &scenario.file.controllers {
        if let Some(series) = main.traces.get(&format!("{}.v_err", c.id)) {
            for &(_, e) in series.iter().skip(2) {
                sq += e * e;
                n += 1;
            }
        }
    }
    let voltage_rmse_pu = if n > 0 { (sq / n as f64).sqrt() } else { 0.0 };

    Summary { max_loading_pct, shed_events, shed_energy_kwh, voltage_rmse_pu }
}

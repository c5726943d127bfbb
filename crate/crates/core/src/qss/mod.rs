//! Quantized State System solvers (QSS1, QSS2, LIQSS1).
//!
//! QSS methods discretize state *values* instead of time. Each component `j`
//! carries two polynomial models anchored at event times:
//!
//! * a state model `x̂_j` of order `M` (the integrated trajectory), and
//! * a quantized model `q̂_j` of order `M - 1` (the value other components
//!   and downstream modules see).
//!
//! A component requantizes when `|x̂_j - q̂_j|` reaches its quantum. The
//! solver always advances to the minimum predicted quantization time among
//! all components, renews that component's quantized model from the state
//! model's value and derivatives, and re-forms the state models of every
//! component whose derivative depends on it (or of the whole group in
//! grouped mode). Changed inputs induce the same state-model renewal.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::ode::OdeModel;
use crate::poly::{first_band_crossing, PolySegment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QssMethod {
    Qss1,
    Qss2,
    Liqss1,
}

impl QssMethod {
    /// Order `M` of the state model.
    pub fn order(self) -> usize {
        match self {
            QssMethod::Qss1 | QssMethod::Liqss1 => 1,
            QssMethod::Qss2 => 2,
        }
    }
}

/// How the quantum is derived from the tolerances and the current quantized
/// value. `Min` takes `min(abs, rel·|q0|)` (the rule used by the exponential
/// benchmark); `Max` takes `max(abs, rel·|q0|)`, the usual choice when the
/// relative term should dominate for large states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantumMode {
    Min,
    Max,
}

/// `Δq` for a component whose quantized value is `q0`. Floored at
/// `abs_tol · 1e-6` so the quantum never collapses to zero.
pub fn compute_quantum(q0: f64, abs_tol: f64, rel_tol: f64, mode: QuantumMode) -> Result<f64, SimError> {
    if !(abs_tol > 0.0) {
        return Err(SimError::Solver {
            module: String::new(),
            msg: format!("abs_tol must be > 0 (got {abs_tol})"),
        });
    }
    if rel_tol < 0.0 {
        return Err(SimError::Solver {
            module: String::new(),
            msg: format!("rel_tol must be >= 0 (got {rel_tol})"),
        });
    }
    let rel = rel_tol * q0.abs();
    let dq = match mode {
        QuantumMode::Min => abs_tol.min(rel),
        QuantumMode::Max => abs_tol.max(rel),
    };
    Ok(dq.max(abs_tol * 1e-6))
}

#[derive(Clone, Debug)]
pub struct QssOptions {
    pub method: QssMethod,
    pub mode: QuantumMode,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Per-component absolute tolerance override.
    pub per_state_abs: Option<Vec<f64>>,
    /// Grouped propagation: a quantization event re-forms the state models
    /// of every component in the system, mirroring equation grouping by
    /// module. Ungrouped mode re-forms dependents only.
    pub grouped: bool,
}

impl Default for QssOptions {
    fn default() -> Self {
        QssOptions {
            method: QssMethod::Qss2,
            mode: QuantumMode::Max,
            abs_tol: 1e-3,
            rel_tol: 1e-3,
            per_state_abs: None,
            grouped: false,
        }
    }
}

/// Per-component solver state.
#[derive(Clone, Debug)]
pub struct QssComponent {
    pub state: PolySegment,
    pub quantized: PolySegment,
    pub quantum: f64,
    pub next_time: f64,
    // Diagonal Jacobian estimate from successive derivative evaluations
    // (LIQSS) and the sample it was formed from.
    a_diag: f64,
    last_q: f64,
    last_f: f64,
    has_sample: bool,
}

pub struct QssSolver {
    opts: QssOptions,
    comps: Vec<QssComponent>,
    inputs: Vec<PolySegment>,
    events: u64,
    // Scratch buffers to keep derivative evaluation allocation-free.
    qbuf: Vec<f64>,
    ubuf: Vec<f64>,
}

impl QssSolver {
    /// Build and initialize the solver at `t0`. `initial_inputs` supplies
    /// one model per model input (constants are fine).
    pub fn new(
        model: &dyn OdeModel,
        opts: QssOptions,
        t0: f64,
        initial_inputs: Vec<PolySegment>,
    ) -> Result<Self, SimError> {
        let n = model.dim();
        if n == 0 {
            return Err(solver_err("system dimension must be >= 1"));
        }
        if initial_inputs.len() != model.num_inputs() {
            return Err(solver_err(&format!(
                "expected {} input models, got {}",
                model.num_inputs(),
                initial_inputs.len()
            )));
        }
        if let Some(pa) = &opts.per_state_abs {
            if pa.len() != n {
                return Err(solver_err("per_state_abs length must match dimension"));
            }
        }
        let order = opts.method.order();
        let x0 = model.initial_state();
        let seed_coeffs = |x: f64, len: usize| {
            let mut c = vec![0.0; len];
            c[0] = x;
            c
        };
        let comps = x0
            .iter()
            .map(|&x| QssComponent {
                state: PolySegment::new(t0, seed_coeffs(x, order + 1)),
                quantized: PolySegment::new(t0, seed_coeffs(x, order)),
                quantum: 1.0,
                next_time: f64::INFINITY,
                a_diag: 0.0,
                last_q: 0.0,
                last_f: 0.0,
                has_sample: false,
            })
            .collect();
        let mut solver = QssSolver {
            opts,
            comps,
            inputs: initial_inputs,
            events: 0,
            qbuf: vec![0.0; n],
            ubuf: vec![0.0; model.num_inputs()],
        };
        solver.init(model, t0)?;
        Ok(solver)
    }

    fn init(&mut self, model: &dyn OdeModel, t0: f64) -> Result<(), SimError> {
        let n = self.comps.len();
        // First derivative pass with constant quantized models.
        for j in 0..n {
            self.form_state_model(model, j, t0)?;
        }
        // Seed the quantized slopes before the curvature pass so QSS2's
        // perturbation sees consistent first-order trajectories.
        if self.opts.method.order() >= 2 {
            for j in 0..n {
                let c1 = self.comps[j].state.coeffs[1];
                self.comps[j].quantized.coeffs[1] = c1;
            }
            for j in 0..n {
                self.form_state_model(model, j, t0)?;
            }
        }
        // Initial quantization event for every component.
        for j in 0..n {
            self.requantize(model, j, t0)?;
        }
        for j in 0..n {
            self.form_state_model(model, j, t0)?;
        }
        for j in 0..n {
            self.predict(j, t0);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn component(&self, j: usize) -> &QssComponent {
        &self.comps[j]
    }

    /// Quantization events processed so far (including the initial ones).
    pub fn event_count(&self) -> u64 {
        self.events
    }

    /// Minimum predicted quantization time over all components.
    pub fn next_event_time(&self) -> f64 {
        self.comps.iter().map(|c| c.next_time).fold(f64::INFINITY, f64::min)
    }

    /// Evaluate all quantized models at `t`.
    pub fn quantized_state(&self, t: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.quantized.eval(t);
        }
    }

    /// Evaluate all state models at `t`.
    pub fn continuous_state(&self, t: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.state.eval(t);
        }
    }

    /// Process the due quantization event at `t` (the component with the
    /// minimum predicted time). Returns the component index.
    pub fn fire(&mut self, model: &dyn OdeModel, t: f64) -> Result<usize, SimError> {
        let j = self
            .comps
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.next_time.total_cmp(&b.1.next_time))
            .map(|(i, _)| i)
            .expect("non-empty system");
        self.requantize(model, j, t)?;
        self.propagate(model, j, t)?;
        Ok(j)
    }

    /// Replace input model `k` at time `t`, inducing state events in the
    /// components that read it.
    pub fn set_input(&mut self, model: &dyn OdeModel, k: usize, seg: PolySegment, t: f64) -> Result<(), SimError> {
        self.inputs[k] = seg;
        let affected: Vec<usize> = if self.opts.grouped {
            (0..self.comps.len()).collect()
        } else {
            model.dependents_of_input(k)
        };
        for &i in &affected {
            self.form_state_model(model, i, t)?;
            self.predict(i, t);
        }
        Ok(())
    }

    /// Re-form every state model (used when the derivative function itself
    /// changed, e.g. a discrete parameter inside the model).
    pub fn refresh_all(&mut self, model: &dyn OdeModel, t: f64) -> Result<(), SimError> {
        for i in 0..self.comps.len() {
            self.form_state_model(model, i, t)?;
            self.predict(i, t);
        }
        Ok(())
    }

    fn propagate(&mut self, model: &dyn OdeModel, j: usize, t: f64) -> Result<(), SimError> {
        if self.opts.grouped {
            for i in 0..self.comps.len() {
                self.form_state_model(model, i, t)?;
                self.predict(i, t);
            }
        } else {
            let deps = model.dependents_of_state(j);
            for &i in &deps {
                self.form_state_model(model, i, t)?;
                self.predict(i, t);
            }
            // The fired component's own prediction must renew even when its
            // derivative does not read x_j.
            if !deps.contains(&j) {
                self.predict(j, t);
            }
        }
        Ok(())
    }

    /// New state model for component `i` anchored at `t`: continuous in
    /// value, slope from the derivative function, curvature (QSS2) from a
    /// forward difference of the derivative along the quantized trajectories.
    fn form_state_model(&mut self, model: &dyn OdeModel, i: usize, t: f64) -> Result<(), SimError> {
        let c0 = self.comps[i].state.eval(t);
        self.fill_q(t);
        self.fill_u(t);
        let c1 = model.derivative(i, &self.qbuf, &self.ubuf, t);
        if !c1.is_finite() {
            return Err(solver_err(&format!("derivative of component {i} is not finite at t={t}")));
        }
        let coeffs = if self.opts.method.order() == 2 {
            let h = 1e-8_f64.max(1e-8 * t.abs());
            self.fill_q(t + h);
            self.fill_u(t + h);
            let f2 = model.derivative(i, &self.qbuf, &self.ubuf, t + h);
            if !f2.is_finite() {
                return Err(solver_err(&format!("derivative of component {i} is not finite at t={}", t + h)));
            }
            vec![c0, c1, (f2 - c1) / (2.0 * h)]
        } else {
            vec![c0, c1]
        };
        // Diagonal Jacobian estimate for the linearly-implicit variant.
        let qi = self.comps[i].quantized.eval(t);
        let comp = &mut self.comps[i];
        if comp.has_sample && (qi - comp.last_q).abs() > 1e-300 {
            comp.a_diag = (c1 - comp.last_f) / (qi - comp.last_q);
        }
        comp.last_q = qi;
        comp.last_f = c1;
        comp.has_sample = true;
        comp.state = PolySegment::new(t, coeffs);
        Ok(())
    }

    /// Quantization event: renew `q̂_j` from the state model's value and
    /// derivatives, recompute the quantum from the new magnitude, and (for
    /// LIQSS1) offset the value by up to `Δq` toward the side the trajectory
    /// approaches.
    fn requantize(&mut self, model: &dyn OdeModel, j: usize, t: f64) -> Result<(), SimError> {
        let order = self.opts.method.order();
        let v = self.comps[j].state.eval(t);
        let mut coeffs = vec![0.0; order];
        coeffs[0] = v;
        if order >= 2 {
            coeffs[1] = self.comps[j].state.eval_deriv(t);
        }
        // The quantum for the new segment follows the magnitude at the
        // quantization instant; LIQSS reuses it as the offset bound.
        let quantum = self.quantum_for(j, v)?;
        if self.opts.method == QssMethod::Liqss1 {
            coeffs[0] = self.liqss_value(model, j, t, v, quantum)?;
        }
        let comp = &mut self.comps[j];
        comp.quantized = PolySegment::new(t, coeffs);
        comp.quantum = quantum;
        self.events += 1;
        Ok(())
    }

    /// LIQSS1 value selection: try the band edge the trajectory moves
    /// toward; if the derivative crosses zero inside the band, place the
    /// quantized value at the estimated equilibrium.
    fn liqss_value(&mut self, model: &dyn OdeModel, j: usize, t: f64, v: f64, dq: f64) -> Result<f64, SimError> {
        // Slightly inside the band so the first crossing is never at tau = 0.
        let off = dq * (1.0 - 1e-12);
        self.fill_u(t);
        self.fill_q(t);
        let up = v + off;
        self.qbuf[j] = up;
        let f_up = model.derivative(j, &self.qbuf, &self.ubuf, t);
        if f_up >= 0.0 {
            return Ok(up);
        }
        let down = v - off;
        self.qbuf[j] = down;
        let f_dn = model.derivative(j, &self.qbuf, &self.ubuf, t);
        if f_dn <= 0.0 {
            return Ok(down);
        }
        // f_up < 0 < f_dn: an equilibrium sits inside the band.
        let a = self.comps[j].a_diag;
        let a = if a.abs() > 1e-300 { a } else { (f_up - f_dn) / (up - down) };
        let q = if a.abs() > 1e-300 { down - f_dn / a } else { v };
        Ok(q.clamp(down, up))
    }

    fn quantum_for(&self, j: usize, q0: f64) -> Result<f64, SimError> {
        let abs = self
            .opts
            .per_state_abs
            .as_ref()
            .map(|pa| pa[j])
            .unwrap_or(self.opts.abs_tol);
        compute_quantum(q0, abs, self.opts.rel_tol, self.opts.mode)
    }

    /// Predicted quantization time: smallest `t' > t` with
    /// `|x̂_j(t') - q̂_j(t')| = Δq_j`, or infinity when no crossing exists.
    fn predict(&mut self, j: usize, t: f64) {
        let comp = &self.comps[j];
        let diff = comp.state.diff_at(&comp.quantized, t);
        let tau = first_band_crossing(&diff, comp.quantum);
        self.comps[j].next_time = if tau.is_finite() { t + tau } else { f64::INFINITY };
    }

    fn fill_q(&mut self, t: f64) {
        for (o, c) in self.qbuf.iter_mut().zip(&self.comps) {
            *o = c.quantized.eval(t);
        }
    }

    fn fill_u(&mut self, t: f64) {
        for (o, seg) in self.ubuf.iter_mut().zip(&self.inputs) {
            *o = seg.eval(t);
        }
    }
}

fn solver_err(msg: &str) -> SimError {
    SimError::Solver { module: String::new(), msg: msg.to_string() }
}

/// Trace of a standalone integration: state samples at every quantization
/// event plus the final time.
#[derive(Clone, Debug)]
pub struct QssTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub event_count: u64,
}

impl QssTrace {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trace is never empty")
    }
}

/// Integrate `model` from `t0 = 0` to `t_end`, advancing event by event.
pub fn integrate(model: &dyn OdeModel, opts: QssOptions, t_end: f64) -> Result<QssTrace, SimError> {
    integrate_with_inputs(model, opts, t_end, vec![PolySegment::constant(0.0); model.num_inputs()])
}

pub fn integrate_with_inputs(
    model: &dyn OdeModel,
    opts: QssOptions,
    t_end: f64,
    inputs: Vec<PolySegment>,
) -> Result<QssTrace, SimError> {
    if t_end < 0.0 {
        return Err(solver_err("t_end must be >= 0"));
    }
    let mut solver = QssSolver::new(model, opts, 0.0, inputs)?;
    let n = solver.dim();
    let mut times = vec![0.0];
    let mut x = vec![0.0; n];
    solver.continuous_state(0.0, &mut x);
    let mut states = vec![x.clone()];

    let budget = 100_000_000u64;
    while solver.next_event_time() <= t_end {
        let t = solver.next_event_time();
        solver.fire(model, t)?;
        solver.continuous_state(t, &mut x);
        times.push(t);
        states.push(x.clone());
        if solver.event_count() > budget {
            return Err(SimError::EventBudget(budget));
        }
    }
    solver.continuous_state(t_end, &mut x);
    times.push(t_end);
    states.push(x.clone());
    Ok(QssTrace { times, states, event_count: solver.event_count() })
}

#[cfg(test)]
mod tests;

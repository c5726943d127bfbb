//! Discrete-event master algorithm.
//!
//! The kernel owns the global clock, the event queue, module registration,
//! port wiring, and the propagation rules that distinguish direct-feedthrough
//! outputs (recomputed in the same instant an input changes) from
//! state-driven outputs (emitted only at quantization events).
//!
//! Module callbacks run serially on a single logical timeline. Simultaneous
//! events are ordered by superdense time `(seconds, microstep)` and, within
//! one instant, by ascending module registration index, then port name, then
//! insertion order, which makes runs with identical inputs and seeds
//! byte-identical.

mod output;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

pub use output::{EventLog, LogRecord, RunOutput, TraceStore};

use crate::error::{ConfigError, SimError};
use crate::ode::OdeModel;
use crate::poly::PolySegment;
use crate::qss::{QssOptions, QssSolver};
use crate::time::SimTime;
use crate::value::{Value, ValueKind};

pub type ModuleId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModuleKind {
    /// Exposes an ODE; integrated by a quantized-state solver. Outputs are
    /// state-driven and emitted at quantization events.
    ModelExchange,
    /// Algebraic step function; outputs recomputed whenever a declared
    /// feedthrough input changes.
    CoSimulation,
    /// Fixed period; inputs sampled at `i·δ`, outputs visible at `(i+1)·δ`.
    DiscreteTime,
    /// Messages in, delayed deliveries out.
    DelayChannel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Input,
    Output,
}

#[derive(Clone, Debug)]
pub struct PortSpec {
    pub name: String,
    pub direction: Direction,
    pub kind: ValueKind,
}

impl PortSpec {
    pub fn input(name: &str, kind: ValueKind) -> Self {
        PortSpec { name: name.to_string(), direction: Direction::Input, kind }
    }

    pub fn output(name: &str, kind: ValueKind) -> Self {
        PortSpec { name: name.to_string(), direction: Direction::Output, kind }
    }
}

#[derive(Clone, Debug)]
pub struct ModuleDescriptor {
    pub id: String,
    pub kind: ModuleKind,
    pub ports: Vec<PortSpec>,
    /// Input port -> output ports that directly depend on it.
    pub feedthrough: BTreeMap<String, BTreeSet<String>>,
    /// Tick period for discrete-time modules.
    pub period_s: Option<f64>,
}

impl ModuleDescriptor {
    pub fn new(id: &str, kind: ModuleKind) -> Self {
        ModuleDescriptor {
            id: id.to_string(),
            kind,
            ports: Vec::new(),
            feedthrough: BTreeMap::new(),
            period_s: None,
        }
    }

    pub fn with_ports(mut self, ports: Vec<PortSpec>) -> Self {
        self.ports = ports;
        self
    }

    pub fn with_period(mut self, period_s: f64) -> Self {
        self.period_s = Some(period_s);
        self
    }

    /// Declare that every output directly depends on every input.
    pub fn with_full_feedthrough(mut self) -> Self {
        let outputs: BTreeSet<String> = self
            .ports
            .iter()
            .filter(|p| p.direction == Direction::Output)
            .map(|p| p.name.clone())
            .collect();
        for p in self.ports.iter().filter(|p| p.direction == Direction::Input) {
            self.feedthrough.insert(p.name.clone(), outputs.clone());
        }
        self
    }

    pub fn with_feedthrough(mut self, input: &str, outputs: &[&str]) -> Self {
        self.feedthrough
            .insert(input.to_string(), outputs.iter().map(|s| s.to_string()).collect());
        self
    }

    fn port_index(&self, name: &str, direction: Direction) -> Option<usize> {
        self.ports.iter().position(|p| p.name == name && p.direction == direction)
    }
}

/// Behavior of a registered module. Callbacks run serially on the kernel
/// timeline and use the context to read inputs, emit outputs, schedule self
/// events, and record trace signals.
pub trait Module {
    fn descriptor(&self) -> ModuleDescriptor;

    /// Called once when the run starts, before any event is processed.
    fn init(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let _ = ctx;
        Ok(())
    }

    /// One or more inputs changed at the current instant. Message inputs are
    /// delivered one at a time; scalar inputs are batched per instant.
    fn on_inputs(&mut self, changed: &[usize], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let _ = (changed, ctx);
        Ok(())
    }

    /// Periodic tick (discrete-time modules only).
    fn on_tick(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let _ = ctx;
        Ok(())
    }

    /// A self-scheduled event came due.
    fn on_self_event(&mut self, tag: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let _ = (tag, ctx);
        Ok(())
    }

    /// Called once at `t_end` so modules can bring their outputs current.
    fn finalize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let _ = ctx;
        Ok(())
    }

    /// Model-exchange modules expose their ODE here.
    fn ode(&self) -> Option<&dyn OdeModel> {
        None
    }

    /// Solver settings for the exposed ODE.
    fn qss_options(&self) -> Option<QssOptions> {
        None
    }

    /// Map a real input port to an ODE input slot, if it feeds the
    /// derivative function.
    fn ode_input_slot(&self, port: usize) -> Option<usize> {
        let _ = port;
        None
    }

    /// Recompute state-driven outputs from the quantized state. Called after
    /// every quantization event, at initialization, and at `t_end`.
    fn ode_outputs(&mut self, q: &[f64], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let _ = (q, ctx);
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct EventKey {
    time: SimTime,
    module: ModuleId,
    port: String,
    seq: u64,
}

#[derive(Clone, Debug)]
enum Payload {
    EmitOutput { port: usize, value: Value },
    Deliver { port: usize, value: Value },
    Requantize { gen: u64 },
    Tick,
    Sample { sampler: usize },
    SelfEvent { tag: u64 },
    Finalize,
}

struct QueuedEvent {
    key: EventKey,
    payload: Payload,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; reverse for earliest-first.
        other.key.cmp(&self.key)
    }
}

struct Sampler {
    module: ModuleId,
    port: usize,
    period: f64,
    last_forwarded: Option<f64>,
}

/// Kernel state shared with module callbacks (everything except the module
/// behaviors themselves, so a callback can run while the kernel holds its
/// behavior mutably).
struct Shared {
    descriptors: Vec<ModuleDescriptor>,
    /// Current value per port, `[module][port]`.
    port_values: Vec<Vec<Value>>,
    /// Fan-out per output port.
    connections: BTreeMap<(ModuleId, usize), Vec<(ModuleId, usize)>>,
    /// Input ports already driven by a connection.
    driven: BTreeSet<(ModuleId, usize)>,
    /// Output ports gated by a sampler (index into samplers).
    sampled: BTreeMap<(ModuleId, usize), usize>,
    queue: BinaryHeap<QueuedEvent>,
    now: SimTime,
    seq: u64,
    t_end: SimTime,
    log: EventLog,
    traces: TraceStore,
    initializing: bool,
    ode_dirty: bool,
    events_processed: u64,
    event_budget: u64,
}

impl Shared {
    fn schedule(&mut self, time: SimTime, module: ModuleId, port_name: &str, payload: Payload) {
        let time = if self.initializing {
            time
        } else if time <= self.now {
            self.now.next_microstep()
        } else {
            time
        };
        self.seq += 1;
        self.queue.push(QueuedEvent {
            key: EventKey { time, module, port: port_name.to_string(), seq: self.seq },
            payload,
        });
    }

    fn log(&mut self, source: String, kind: &str, value: serde_json::Value) {
        self.log.push(LogRecord {
            t_s: self.now.as_secs_f64(),
            microstep: self.now.microstep(),
            source,
            kind: kind.to_string(),
            value,
        });
    }

    fn port_name(&self, module: ModuleId, port: usize) -> String {
        format!("{}.{}", self.descriptors[module].id, self.descriptors[module].ports[port].name)
    }
}

/// Context passed to module callbacks.
pub struct Ctx<'a> {
    shared: &'a mut Shared,
    module: ModuleId,
}

impl Ctx<'_> {
    pub fn now(&self) -> SimTime {
        self.shared.now
    }

    /// Current time in seconds.
    pub fn t(&self) -> f64 {
        self.shared.now.as_secs_f64()
    }

    pub fn t_end(&self) -> f64 {
        self.shared.t_end.as_secs_f64()
    }

    pub fn module_id(&self) -> &str {
        &self.shared.descriptors[self.module].id
    }

    /// Current value of one of this module's ports.
    pub fn port(&self, port: usize) -> &Value {
        &self.shared.port_values[self.module][port]
    }

    /// Scalar sample of a real/integer/boolean port at the current time.
    pub fn port_f64(&self, port: usize) -> f64 {
        self.port(port).sample(self.t()).unwrap_or(0.0)
    }

    /// Emit on an output port at the next microstep. Scalar emissions are
    /// suppressed when the value is unchanged; messages always go out.
    pub fn emit(&mut self, port: usize, value: Value) {
        self.emit_delayed(port, value, 0.0);
    }

    /// Emit on an output port after `delay_s` seconds (zero means the next
    /// microstep of the current instant).
    pub fn emit_delayed(&mut self, port: usize, value: Value, delay_s: f64) {
        debug_assert!(
            self.shared.descriptors[self.module].ports[port].direction == Direction::Output
        );
        if value.kind() != ValueKind::Message
            && !self.shared.initializing
            && delay_s == 0.0
            && self.shared.port_values[self.module][port] == value
        {
            return;
        }
        let target = if delay_s > 0.0 { self.shared.now.add_secs_f64(delay_s) } else { self.shared.now };
        let name = self.shared.descriptors[self.module].ports[port].name.clone();
        self.shared.schedule(target, self.module, &name, Payload::EmitOutput { port, value });
    }

    /// Schedule `on_self_event(tag)` after `delay_s`.
    pub fn schedule_self(&mut self, tag: u64, delay_s: f64) {
        let target = self.shared.now.add_secs_f64(delay_s.max(0.0));
        self.shared.schedule(target, self.module, "", Payload::SelfEvent { tag });
    }

    /// Record a module-internal trace signal as `<module>.<name>`.
    pub fn record(&mut self, name: &str, v: f64) {
        let full = format!("{}.{}", self.module_id(), name);
        let t = self.t();
        self.shared.traces.record(&full, t, v);
    }

    /// Append a structured record to the event log, attributed to this module.
    pub fn log(&mut self, kind: &str, value: serde_json::Value) {
        let src = self.module_id().to_string();
        self.shared.log(src, kind, value);
    }

    /// Signal that the derivative function itself changed (e.g. a discrete
    /// parameter): the kernel re-forms all state models of this module.
    pub fn mark_ode_dirty(&mut self) {
        self.shared.ode_dirty = true;
    }
}

struct ModuleSlot {
    behavior: Box<dyn Module>,
    solver: Option<QssSolver>,
    solver_gen: u64,
}

/// The co-simulation kernel. Build one per run: register modules, wire
/// ports, then call [`Kernel::run`].
pub struct Kernel {
    slots: Vec<ModuleSlot>,
    samplers: Vec<Sampler>,
    shared: Shared,
    by_name: BTreeMap<String, ModuleId>,
}

impl Default for Kernel {
    fn default() -> Self {
        Self::new()
    }
}

impl Kernel {
    pub fn new() -> Self {
        Kernel {
            slots: Vec::new(),
            samplers: Vec::new(),
            shared: Shared {
                descriptors: Vec::new(),
                port_values: Vec::new(),
                connections: BTreeMap::new(),
                driven: BTreeSet::new(),
                sampled: BTreeMap::new(),
                queue: BinaryHeap::new(),
                now: SimTime::ZERO,
                seq: 0,
                t_end: SimTime::ZERO,
                log: EventLog::default(),
                traces: TraceStore::default(),
                initializing: true,
                ode_dirty: false,
                events_processed: 0,
                event_budget: 200_000_000,
            },
            by_name: BTreeMap::new(),
        }
    }

    pub fn set_event_budget(&mut self, budget: u64) {
        self.shared.event_budget = budget;
    }

    /// Register a module; its descriptor is validated against the type
    /// invariants (unique id, known feedthrough ports, positive period).
    pub fn register_module(&mut self, behavior: Box<dyn Module>) -> Result<ModuleId, ConfigError> {
        let desc = behavior.descriptor();
        if desc.id.is_empty() || desc.id.contains('.') {
            return Err(ConfigError::Invalid(format!(
                "module id `{}` must be non-empty and must not contain '.'",
                desc.id
            )));
        }
        if self.by_name.contains_key(&desc.id) {
            return Err(ConfigError::DuplicateModule(desc.id));
        }
        let mut seen = BTreeSet::new();
        for p in &desc.ports {
            if !seen.insert(&p.name) {
                return Err(ConfigError::Invalid(format!(
                    "module `{}` declares port `{}` twice",
                    desc.id, p.name
                )));
            }
        }
        for (input, outputs) in &desc.feedthrough {
            if desc.port_index(input, Direction::Input).is_none() {
                return Err(ConfigError::InvalidFeedthrough {
                    module: desc.id.clone(),
                    port: input.clone(),
                });
            }
            for out in outputs {
                if desc.port_index(out, Direction::Output).is_none() {
                    return Err(ConfigError::InvalidFeedthrough {
                        module: desc.id.clone(),
                        port: out.clone(),
                    });
                }
            }
        }
        if desc.kind == ModuleKind::DiscreteTime && !desc.period_s.map(|p| p > 0.0).unwrap_or(false)
        {
            return Err(ConfigError::InvalidPeriod(desc.id));
        }
        if behavior.ode().map(|m| m.dim() == 0).unwrap_or(false) {
            return Err(ConfigError::Invalid(format!(
                "model-exchange module `{}` must expose at least one state variable",
                desc.id
            )));
        }
        let id = self.slots.len();
        self.by_name.insert(desc.id.clone(), id);
        let values = desc
            .ports
            .iter()
            .map(|p| match p.kind {
                ValueKind::Real => Value::real(0.0),
                ValueKind::Integer => Value::Integer(0),
                ValueKind::Boolean => Value::Boolean(false),
                // Placeholder until a message arrives; message ports are
                // edge-triggered so the resting value is never read.
                ValueKind::Message => Value::Integer(0),
            })
            .collect();
        self.shared.port_values.push(values);
        self.shared.descriptors.push(desc);
        self.slots.push(ModuleSlot { behavior, solver: None, solver_gen: 0 });
        Ok(id)
    }

    fn resolve(&self, spec: &str, direction: Direction) -> Result<(ModuleId, usize), ConfigError> {
        let (module, port) = spec.split_once('.').ok_or_else(|| {
            ConfigError::Invalid(format!("port reference `{spec}` must have the form module.port"))
        })?;
        let &mid = self
            .by_name
            .get(module)
            .ok_or_else(|| ConfigError::UnknownModule(module.to_string()))?;
        let desc = &self.shared.descriptors[mid];
        match desc.port_index(port, direction) {
            Some(p) => Ok((mid, p)),
            None if desc.ports.iter().any(|p| p.name == port) => Err(ConfigError::WrongDirection {
                module: module.to_string(),
                port: port.to_string(),
                expected: match direction {
                    Direction::Input => "input",
                    Direction::Output => "output",
                },
            }),
            None => Err(ConfigError::UnknownPort { module: module.to_string(), port: port.to_string() }),
        }
    }

    /// Wire an output to an input (`"module.port"` form). Value kinds must
    /// match, each input accepts one driver, and a connection is rejected
    /// when it would close a cycle running entirely through direct
    /// feedthrough, because the kernel performs no algebraic-loop solving.
    pub fn connect(&mut self, from: &str, to: &str) -> Result<(), ConfigError> {
        let (fm, fp) = self.resolve(from, Direction::Output)?;
        let (tm, tp) = self.resolve(to, Direction::Input)?;
        let from_kind = self.shared.descriptors[fm].ports[fp].kind;
        let to_kind = self.shared.descriptors[tm].ports[tp].kind;
        if from_kind != to_kind {
            return Err(ConfigError::KindMismatch {
                from: from.to_string(),
                to: to.to_string(),
                from_kind,
                to_kind,
            });
        }
        if !self.shared.driven.insert((tm, tp)) {
            return Err(ConfigError::AlreadyConnected(to.to_string()));
        }
        if self.feedthrough_path_exists((tm, tp), (fm, fp)) {
            self.shared.driven.remove(&(tm, tp));
            return Err(ConfigError::AlgebraicLoop { from: from.to_string(), to: to.to_string() });
        }
        self.shared.connections.entry((fm, fp)).or_default().push((tm, tp));
        Ok(())
    }

    /// Is there a path from input `start` to output `goal` through declared
    /// feedthrough and existing connections?
    fn feedthrough_path_exists(&self, start: (ModuleId, usize), goal: (ModuleId, usize)) -> bool {
        let mut stack = vec![(start.0, start.1, true)];
        let mut seen = BTreeSet::new();
        while let Some((m, p, is_input)) = stack.pop() {
            if !seen.insert((m, p, is_input)) {
                continue;
            }
            if is_input {
                let desc = &self.shared.descriptors[m];
                let in_name = desc.ports[p].name.clone();
                if let Some(outs) = desc.feedthrough.get(&in_name) {
                    for out in outs {
                        let op = desc.port_index(out, Direction::Output).expect("validated");
                        if (m, op) == goal {
                            return true;
                        }
                        stack.push((m, op, false));
                    }
                }
            } else if let Some(targets) = self.shared.connections.get(&(m, p)) {
                for &(tm, tp) in targets {
                    stack.push((tm, tp, true));
                }
            }
        }
        false
    }

    /// Forward a port's value only at `t = k·period` instead of at every
    /// change, suppressing intermediate updates to downstream modules.
    pub fn sample_and_forward(&mut self, port: &str, period_s: f64) -> Result<(), ConfigError> {
        if !(period_s > 0.0) {
            return Err(ConfigError::InvalidSamplePeriod(period_s));
        }
        let (m, p) = self.resolve(port, Direction::Output)?;
        if self.shared.sampled.contains_key(&(m, p)) {
            return Err(ConfigError::Invalid(format!("port `{port}` is already sampled")));
        }
        let idx = self.samplers.len();
        self.samplers.push(Sampler { module: m, port: p, period: period_s, last_forwarded: None });
        self.shared.sampled.insert((m, p), idx);
        Ok(())
    }

    /// Default value for an unwired input.
    pub fn set_input_default(&mut self, port: &str, value: Value) -> Result<(), ConfigError> {
        let (m, p) = self.resolve(port, Direction::Input)?;
        if self.shared.descriptors[m].ports[p].kind != value.kind() {
            return Err(ConfigError::KindMismatch {
                from: "default".to_string(),
                to: port.to_string(),
                from_kind: value.kind(),
                to_kind: self.shared.descriptors[m].ports[p].kind,
            });
        }
        self.shared.port_values[m][p] = value;
        Ok(())
    }

    pub fn module_id(&self, name: &str) -> Option<ModuleId> {
        self.by_name.get(name).copied()
    }

    /// Execute the event loop until `t_end` seconds.
    pub fn run(mut self, t_end_s: f64) -> Result<RunOutput, SimError> {
        self.shared.t_end = SimTime::from_secs_f64(t_end_s);
        self.init_modules()?;
        for m in 0..self.slots.len() {
            self.shared.schedule(self.shared.t_end, m, "", Payload::Finalize);
        }
        self.shared.initializing = false;
        self.event_loop()?;
        // Backstop sample at t_end for step-valued signals.
        let t_end = self.shared.t_end.as_secs_f64();
        for series in self.shared.traces.series.values_mut() {
            if let Some(&(t_last, v_last)) = series.last() {
                if t_last < t_end {
                    series.push((t_end, v_last));
                }
            }
        }
        Ok(RunOutput { t_end, traces: self.shared.traces, events: self.shared.log })
    }

    fn init_modules(&mut self) -> Result<(), SimError> {
        for m in 0..self.slots.len() {
            // Model-exchange modules get their solver before init so the
            // initial outputs can be computed from the quantized state.
            let has_ode = self.slots[m].behavior.ode().is_some();
            if has_ode {
                let opts = self.slots[m].behavior.qss_options().unwrap_or_default();
                let inputs = self.initial_ode_inputs(m);
                let module_name = self.shared.descriptors[m].id.clone();
                let slot = &mut self.slots[m];
                let model = slot.behavior.ode().expect("checked above");
                let solver =
                    QssSolver::new(model, opts, 0.0, inputs).map_err(|e| attribute(e, &module_name))?;
                slot.solver = Some(solver);
            }
            self.with_ctx(m, |beh, ctx| beh.init(ctx))?;
            if has_ode {
                self.emit_ode_outputs(m)?;
                self.reschedule_requantize(m);
            }
            if self.shared.descriptors[m].kind == ModuleKind::DiscreteTime {
                self.shared.schedule(SimTime::ZERO, m, "", Payload::Tick);
            }
        }
        for s in 0..self.samplers.len() {
            let (m, p) = (self.samplers[s].module, self.samplers[s].port);
            let name = self.shared.port_name(m, p);
            self.shared.schedule(SimTime::ZERO, m, &name, Payload::Sample { sampler: s });
        }
        Ok(())
    }

    fn initial_ode_inputs(&self, m: usize) -> Vec<PolySegment> {
        let n = self.slots[m].behavior.ode().map(|o| o.num_inputs()).unwrap_or(0);
        let mut segs = vec![PolySegment::constant(0.0); n];
        for (p, v) in self.shared.port_values[m].iter().enumerate() {
            if let Some(slot) = self.slots[m].behavior.ode_input_slot(p) {
                if let Some(seg) = v.as_segment() {
                    segs[slot] = seg.clone();
                }
            }
        }
        segs
    }

    /// Run a behavior callback with a context over the shared state.
    fn with_ctx<F>(&mut self, m: ModuleId, f: F) -> Result<(), SimError>
    where
        F: FnOnce(&mut Box<dyn Module>, &mut Ctx<'_>) -> Result<(), SimError>,
    {
        let shared = &mut self.shared;
        let slot = &mut self.slots[m];
        let mut ctx = Ctx { shared, module: m };
        f(&mut slot.behavior, &mut ctx).map_err(|e| attribute(e, &self.shared.descriptors[m].id))
    }

    fn event_loop(&mut self) -> Result<(), SimError> {
        while let Some(head) = self.shared.queue.peek() {
            let t = head.key.time;
            if t.nanos() > self.shared.t_end.nanos() {
                break;
            }
            if t.microstep() > 10_000 {
                return Err(SimError::MicrostepOverflow(t.as_secs_f64()));
            }
            self.shared.now = t;
            // Drain every event scheduled at exactly this instant, then
            // settle the modules whose scalar inputs changed.
            let mut dirty: BTreeMap<ModuleId, BTreeSet<usize>> = BTreeMap::new();
            while self.shared.queue.peek().map(|e| e.key.time == t).unwrap_or(false) {
                let ev = self.shared.queue.pop().expect("peeked");
                self.shared.events_processed += 1;
                if self.shared.events_processed > self.shared.event_budget {
                    return Err(SimError::EventBudget(self.shared.event_budget));
                }
                self.dispatch(ev, &mut dirty)?;
            }
            self.settle_dirty(dirty)?;
        }
        Ok(())
    }

    fn dispatch(
        &mut self,
        ev: QueuedEvent,
        dirty: &mut BTreeMap<ModuleId, BTreeSet<usize>>,
    ) -> Result<(), SimError> {
        let m = ev.key.module;
        match ev.payload {
            Payload::EmitOutput { port, value } => {
                let t = self.shared.now.as_secs_f64();
                let name = self.shared.port_name(m, port);
                if let Some(v) = value.sample(t) {
                    self.shared.traces.record(&name, t, v);
                }
                self.shared.log(name, "output", summarize_value(&value, t));
                self.shared.port_values[m][port] = value.clone();
                if self.shared.sampled.contains_key(&(m, port)) {
                    return Ok(()); // forwarded by the sampler only
                }
                self.fan_out(m, port, value);
            }
            Payload::Deliver { port, value } => {
                let is_message = value.kind() == ValueKind::Message;
                if is_message {
                    let name = self.shared.port_name(m, port);
                    let t = self.shared.now.as_secs_f64();
                    self.shared.log(name, "deliver", summarize_value(&value, t));
                }
                self.shared.port_values[m][port] = value;
                if is_message {
                    // Messages are edge-triggered: handle each delivery
                    // immediately so back-to-back messages never coalesce.
                    self.notify_inputs(m, &[port])?;
                } else {
                    dirty.entry(m).or_default().insert(port);
                }
            }
            Payload::Requantize { gen } => {
                if gen != self.slots[m].solver_gen {
                    return Ok(()); // superseded by a newer prediction
                }
                let t = self.shared.now.as_secs_f64();
                let module_name = self.shared.descriptors[m].id.clone();
                let j = {
                    let slot = &mut self.slots[m];
                    let model = slot.behavior.ode().expect("requantize on non-ode module");
                    let solver = slot.solver.as_mut().expect("solver present");
                    solver.fire(model, t).map_err(|e| attribute(e, &module_name))?
                };
                let q0 = self.slots[m].solver.as_ref().unwrap().component(j).quantized.coeffs[0];
                self.shared
                    .log(format!("{module_name}.state[{j}]"), "requantize", serde_json::json!({ "q0": q0 }));
                self.emit_ode_outputs(m)?;
                self.reschedule_requantize(m);
            }
            Payload::Tick => {
                self.with_ctx(m, |beh, ctx| beh.on_tick(ctx))?;
                let period = self.shared.descriptors[m].period_s.expect("validated");
                let next = self.shared.now.add_secs_f64(period);
                if next.nanos() <= self.shared.t_end.nanos() {
                    self.shared.schedule(next, m, "", Payload::Tick);
                }
            }
            Payload::Sample { sampler } => {
                let (sm, sp, period) = {
                    let s = &self.samplers[sampler];
                    (s.module, s.port, s.period)
                };
                let t = self.shared.now.as_secs_f64();
                let v = self.shared.port_values[sm][sp].sample(t).unwrap_or(0.0);
                if self.samplers[sampler].last_forwarded != Some(v) {
                    self.samplers[sampler].last_forwarded = Some(v);
                    let name = self.shared.port_name(sm, sp);
                    self.shared.log(name, "sample", serde_json::json!(v));
                    self.fan_out(sm, sp, Value::real(v));
                }
                let next = self.shared.now.add_secs_f64(period);
                if next.nanos() <= self.shared.t_end.nanos() {
                    let name = self.shared.port_name(sm, sp);
                    self.shared.schedule(next, sm, &name, Payload::Sample { sampler });
                }
            }
            Payload::SelfEvent { tag } => {
                self.with_ctx(m, |beh, ctx| beh.on_self_event(tag, ctx))?;
            }
            Payload::Finalize => {
                if self.slots[m].solver.is_some() {
                    self.emit_ode_outputs(m)?;
                }
                self.with_ctx(m, |beh, ctx| beh.finalize(ctx))?;
            }
        }
        Ok(())
    }

    fn fan_out(&mut self, m: ModuleId, port: usize, value: Value) {
        if let Some(targets) = self.shared.connections.get(&(m, port)).cloned() {
            for (tm, tp) in targets {
                let pname = self.shared.descriptors[tm].ports[tp].name.clone();
                self.shared.schedule(
                    self.shared.now,
                    tm,
                    &pname,
                    Payload::Deliver { port: tp, value: value.clone() },
                );
            }
        }
    }

    /// Apply input changes: state events for quantized solvers, same-instant
    /// steps for feedthrough modules, and behavior notification.
    fn settle_dirty(&mut self, dirty: BTreeMap<ModuleId, BTreeSet<usize>>) -> Result<(), SimError> {
        for (m, ports) in dirty {
            let changed: Vec<usize> = ports.into_iter().collect();
            self.apply_ode_input_changes(m, &changed)?;
            let feeds_through = {
                let desc = &self.shared.descriptors[m];
                changed.iter().any(|&p| {
                    desc.feedthrough
                        .get(&desc.ports[p].name)
                        .map(|outs| !outs.is_empty())
                        .unwrap_or(false)
                })
            };
            let notify = match self.shared.descriptors[m].kind {
                ModuleKind::CoSimulation => feeds_through,
                ModuleKind::ModelExchange | ModuleKind::DelayChannel => true,
                ModuleKind::DiscreteTime => false, // inputs are read at ticks
            };
            if notify {
                self.notify_inputs(m, &changed)?;
            } else if self.slots[m].solver.is_some() {
                self.reschedule_requantize(m);
            }
        }
        Ok(())
    }

    fn apply_ode_input_changes(&mut self, m: ModuleId, changed: &[usize]) -> Result<(), SimError> {
        if self.slots[m].solver.is_none() {
            return Ok(());
        }
        let t = self.shared.now.as_secs_f64();
        let module_name = self.shared.descriptors[m].id.clone();
        for &p in changed {
            let slot = &mut self.slots[m];
            if let Some(input_slot) = slot.behavior.ode_input_slot(p) {
                if let Some(seg) = self.shared.port_values[m][p].as_segment().cloned() {
                    let model = slot.behavior.ode().expect("ode present");
                    slot.solver
                        .as_mut()
                        .expect("solver")
                        .set_input(model, input_slot, seg, t)
                        .map_err(|e| attribute(e, &module_name))?;
                }
            }
        }
        Ok(())
    }

    fn notify_inputs(&mut self, m: ModuleId, changed: &[usize]) -> Result<(), SimError> {
        self.shared.ode_dirty = false;
        self.with_ctx(m, |beh, ctx| beh.on_inputs(changed, ctx))?;
        if self.slots[m].solver.is_some() {
            if self.shared.ode_dirty {
                let t = self.shared.now.as_secs_f64();
                let module_name = self.shared.descriptors[m].id.clone();
                let slot = &mut self.slots[m];
                let model = slot.behavior.ode().expect("ode present");
                slot.solver
                    .as_mut()
                    .expect("solver")
                    .refresh_all(model, t)
                    .map_err(|e| attribute(e, &module_name))?;
            }
            self.reschedule_requantize(m);
        }
        Ok(())
    }

    fn emit_ode_outputs(&mut self, m: ModuleId) -> Result<(), SimError> {
        let t = self.shared.now.as_secs_f64();
        let q = {
            let solver = self.slots[m].solver.as_ref().expect("solver");
            let mut q = vec![0.0; solver.dim()];
            solver.quantized_state(t, &mut q);
            q
        };
        let shared = &mut self.shared;
        let slot = &mut self.slots[m];
        let mut ctx = Ctx { shared, module: m };
        slot.behavior
            .ode_outputs(&q, &mut ctx)
            .map_err(|e| attribute(e, &self.shared.descriptors[m].id))
    }

    fn reschedule_requantize(&mut self, m: ModuleId) {
        let next = self.slots[m].solver.as_ref().expect("solver").next_event_time();
        self.slots[m].solver_gen += 1;
        if next.is_finite() {
            let time = SimTime::from_secs_f64(next);
            if time.nanos() > self.shared.t_end.nanos() {
                return;
            }
            let gen = self.slots[m].solver_gen;
            self.shared.schedule(time, m, "", Payload::Requantize { gen });
        }
    }
}

fn attribute(e: SimError, module: &str) -> SimError {
    match e {
        SimError::Solver { module: m, msg } if m.is_empty() => {
            SimError::Solver { module: module.to_string(), msg }
        }
        SimError::Module { module: m, msg } if m.is_empty() => {
            SimError::Module { module: module.to_string(), msg }
        }
        other => other,
    }
}

fn summarize_value(v: &Value, t: f64) -> serde_json::Value {
    match v {
        Value::Real(seg) => serde_json::json!(seg.eval(t)),
        Value::Integer(i) => serde_json::json!(i),
        Value::Boolean(b) => serde_json::json!(b),
        Value::Message(m) => serde_json::to_value(m).expect("message serializes"),
    }
}

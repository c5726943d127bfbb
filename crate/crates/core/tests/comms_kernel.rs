//! Delay-channel semantics through the kernel: poll-grid delivery timing and
//! the reply-without-request error path.

use std::cell::RefCell;
use std::rc::Rc;

use cosim_core::comms::{ChannelParams, CommsConfig, CommsModule};
use cosim_core::error::SimError;
use cosim_core::kernel::{Ctx, Kernel, Module, ModuleDescriptor, ModuleKind, PortSpec};
use cosim_core::msg::NetMessage;
use cosim_core::value::{Value, ValueKind};

/// Posts one message on its output at a fixed time.
struct PostAt {
    id: String,
    t: f64,
    msg: NetMessage,
}

impl Module for PostAt {
    fn descriptor(&self) -> ModuleDescriptor {
        ModuleDescriptor::new(&self.id, ModuleKind::CoSimulation)
            .with_ports(vec![PortSpec::output("out", ValueKind::Message)])
    }
    fn init(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        ctx.schedule_self(0, self.t);
        Ok(())
    }
    fn on_self_event(&mut self, _tag: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        ctx.emit(0, Value::Message(self.msg.clone()));
        Ok(())
    }
}

/// Records message arrival times.
struct MsgSink {
    id: String,
    arrivals: Rc<RefCell<Vec<f64>>>,
}

impl Module for MsgSink {
    fn descriptor(&self) -> ModuleDescriptor {
        ModuleDescriptor::new(&self.id, ModuleKind::CoSimulation)
            .with_ports(vec![PortSpec::input("in", ValueKind::Message)])
    }
    fn on_inputs(&mut self, _changed: &[usize], ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        self.arrivals.borrow_mut().push(ctx.t());
        Ok(())
    }
}

fn comms(polling: Option<f64>) -> CommsConfig {
    CommsConfig {
        id: "net".into(),
        downlink: ChannelParams {
            base_latency_s: 0.1,
            bandwidth_bytes_per_s: Some(5120.0),
            loss_probability: 0.0,
            rto_s: 1.0,
        },
        uplink: ChannelParams::default(),
        polling_period_s: polling,
        request_bytes: 2048.0,
        report_bytes: 1024.0,
        reply_bytes: 512.0,
        seed: 1,
        vtn_node: "vtn".into(),
        ven_node: "ven".into(),
    }
}

/// Request posted at t = 10 s with 30 s polling and a 0.5 s channel delay is
/// delivered at 30.5 s: next grid point plus delay.
#[test]
fn poll_grid_plus_delay() {
    let arrivals = Rc::new(RefCell::new(Vec::new()));
    let mut k = Kernel::new();
    k.register_module(Box::new(PostAt {
        id: "vtn_side".into(),
        t: 10.0,
        msg: NetMessage::shed_request("ctrl", "ven", 0.2),
    }))
    .unwrap();
    k.register_module(Box::new(CommsModule::new(comms(Some(30.0))).unwrap())).unwrap();
    k.register_module(Box::new(MsgSink { id: "bldg_side".into(), arrivals: arrivals.clone() }))
        .unwrap();
    k.connect("vtn_side.out", "net.vtn_in").unwrap();
    k.connect("net.ven_out", "bldg_side.in").unwrap();
    k.run(100.0).unwrap();
    // base 0.1 + 2048/5120 = 0.5 s after the 30 s poll.
    assert_eq!(*arrivals.borrow(), vec![30.5]);
}

/// Without polling the channel forwards immediately: delivery at 10.5 s.
#[test]
fn immediate_forwarding_without_polling() {
    let arrivals = Rc::new(RefCell::new(Vec::new()));
    let mut k = Kernel::new();
    k.register_module(Box::new(PostAt {
        id: "vtn_side".into(),
        t: 10.0,
        msg: NetMessage::shed_request("ctrl", "ven", 0.2),
    }))
    .unwrap();
    k.register_module(Box::new(CommsModule::new(comms(None)).unwrap())).unwrap();
    k.register_module(Box::new(MsgSink { id: "bldg_side".into(), arrivals: arrivals.clone() }))
        .unwrap();
    k.connect("vtn_side.out", "net.vtn_in").unwrap();
    k.connect("net.ven_out", "bldg_side.in").unwrap();
    k.run(100.0).unwrap();
    assert_eq!(*arrivals.borrow(), vec![10.5]);
}

/// A shed reply with no prior forwarded request is a module error.
#[test]
fn reply_without_request_is_an_error() {
    let mut k = Kernel::new();
    k.register_module(Box::new(PostAt {
        id: "rogue".into(),
        t: 5.0,
        msg: NetMessage::shed_reply("ven", "vtn", true),
    }))
    .unwrap();
    k.register_module(Box::new(CommsModule::new(comms(Some(30.0))).unwrap())).unwrap();
    k.connect("rogue.out", "net.ven_reply_in").unwrap();
    let err = k.run(100.0).unwrap_err();
    assert!(err.to_string().contains("without a prior request"), "{err}");
}

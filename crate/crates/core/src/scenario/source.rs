//! Time-series source module: replays a profile as polynomial segments.
//!
//! Linear interpolation feeds downstream quantized-state solvers first-order
//! input models, so a slowly ramping profile does not cause quantization
//! events at every sample; hold mode emits plain steps.

use crate::error::SimError;
use crate::kernel::{Ctx, Module, ModuleDescriptor, ModuleKind, PortSpec};
use crate::series::TimeSeries;
use crate::value::{Value, ValueKind};

pub struct SourceModule {
    pub id: String,
    pub series: TimeSeries,
}

impl Module for SourceModule {
    fn descriptor(&self) -> ModuleDescriptor {
        ModuleDescriptor::new(&self.id, ModuleKind::CoSimulation)
            .with_ports(vec![PortSpec::output("out", ValueKind::Real)])
    }

    fn init(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        ctx.emit(0, Value::Real(self.series.segment_at(0.0)));
        let mut t = 0.0;
        while let Some(bp) = self.series.next_breakpoint(t) {
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

    fn on_self_event(&mut self, _tag: u64, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        let t = ctx.t();
        ctx.emit(0, Value::Real(self.series.segment_at(t)));
        Ok(())
    }

    fn finalize(&mut self, ctx: &mut Ctx<'_>) -> Result<(), SimError> {
        // Pin the trace's final sample to the interpolated value.
        let t = ctx.t();
        let v = self.series.value_at(t);
        ctx.record("out", v);
        Ok(())
    }
}

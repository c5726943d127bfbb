//! Reduced-order building thermal model with HVAC, PI control, and
//! demand-response setpoint logic, exposed as a model-exchange module.
//!
//! The RC network assembles to `dx = A x + B_u u + B_v v`; dropping the HVAC
//! inputs and weighting zone temperatures by volume gives the
//! disturbance-driven form that balanced truncation reduces to a handful of
//! states. Delivered cooling then re-enters the reduced model as negative
//! internal heat gain, which keeps the reduction exact for the channels it
//! was computed on.

pub mod hvac;
mod lyapunov;
mod module;
mod rc;
mod reduce;

pub use hvac::{HvacParams, HvacState, PidConfig, ShedTable};
pub use lyapunov::solve_lyapunov;
pub use module::{parse_building_spec, BuildingConfig, BuildingModule, BuildingSpecFile};
pub use rc::{
    assemble_rc, strip_hvac_inputs, synthetic_office, Facade, StateSpaceModel, WallBoundary,
    WallLayer, WallSpec, ZoneSpec, DISTURBANCE_LABELS, N_DISTURBANCES,
};
pub use reduce::{balanced_truncation, dc_gain, is_hurwitz, Reduction};

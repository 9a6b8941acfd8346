//! Dynamic-inversion control laboratory.
//!
//! Implements nonlinear dynamic inversion carried through the actuator
//! dynamics (one extra output differentiation so the actuator command
//! appears explicitly), the incremental NDI family it generalizes, and a
//! deterministic closed-loop simulation harness that cross-validates the
//! laws against analytic error-dynamics solutions on a roll-rate example.
//!
//! The crate is organized along the signal path:
//!
//! * [`model`] — plant and actuator dynamics with their derivative maps,
//! * [`error_spec`] — cascaded error-dynamics gain synthesis and analytic
//!   initial-value solutions used as test oracles,
//! * [`allocation`] — min-norm linear control allocation,
//! * [`refmodel`] — filter-based, physical, and roll-example reference models,
//! * [`controllers`] — the control laws as interchangeable command generators,
//! * [`sim`] — fixed-step closed-loop integration and the comparison studies,
//! * [`cli`] — scenario files in, traces and reports out.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` rejects NaN along with the out-of-range values

pub mod allocation;
pub mod cli;
pub mod controllers;
pub mod error_spec;
pub mod model;
pub mod refmodel;
pub mod sim;

pub use controllers::ControllerKind;
pub use model::{FirstOrderActuatorBank, GeneralizedActuator, PlantModel, RollPlant};
pub use sim::{run_closed_loop, SimConfig, SimTrace};

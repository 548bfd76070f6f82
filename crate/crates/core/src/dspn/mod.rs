//! Dynamic sum-product networks: a bottom network for the first slice, a
//! template repeated once per further slice, and a top network capping the
//! stack.
//!
//! Interface values between consecutive slices are indexed by input slot:
//! slot `i` of the upper network receives the value of the lower template's
//! root `f_map[i]`, or of the bottom network's root `i`.

mod invariance;
mod model;
mod rolling;
mod sample;
mod unroll;

pub use invariance::{
    check_invariance, verify_stacking, InvarianceReport, InvarianceViolation, ScopeAssignment,
    StackingReport,
};
pub use model::{derive_bottom, BottomNetwork, DspnModel, Part, TemplateNetwork, TopNetwork};
pub use rolling::{sequence_loglik, RollingEvaluator};
pub use sample::sample;
pub use unroll::{stack_templates, unroll, unroll_with_map, UnrollMap};

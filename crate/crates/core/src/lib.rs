//! Divergence-free velocity fields on the torus whose backward flow realises
//! an explicit two-to-one map on binary digits, together with the numerical
//! machinery to build, advect and check them.
//!
//! * [`dyadic`]: digit addresses and the digit dynamics.
//! * [`streamfn`]: the cellular stream function and its travel-time
//!   normalisation.
//! * [`field`]: cell layout, time modulation and the assembled field.
//! * [`flow`]: particle advection and the statistical checks.

pub mod dyadic;
pub mod error;
pub mod field;
pub mod flow;
pub mod quad;
pub mod render;
pub mod streamfn;
pub mod verify;

pub use dyadic::{DigitAddress, TorusPoint};
pub use error::{Error, Result};
pub use field::{Field, FieldParams, Mode};
pub use flow::{Direction, StepPolicy, Trajectory, VelocityField};
pub use streamfn::{StreamContext, UnitSquarePoint};

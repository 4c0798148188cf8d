//! Free-boundary solver for a finite-fuel stopping problem with a quadratic
//! terminal cost and a quadratic running cost.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod error;
pub mod model;
pub mod oracle;
pub mod roots;
pub mod sim;
pub mod value;
pub mod verify;

pub use error::{Error, Result};
pub use model::{derive_constants, DerivedConstants, Model, ModelParams, Regime, TangentLine};

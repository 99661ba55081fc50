//! Proximal message passing for multi-period, contingency-constrained DC optimal
//! power flow on the device–node model.

pub mod cases;
pub mod devices;
pub mod error;
pub mod io;
pub mod network;
pub mod oracle;
pub mod qp;
pub mod sensitivity;
pub mod solver;
pub mod tensor;

pub use error::{Error, Result};

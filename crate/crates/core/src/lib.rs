//! Joint power allocation and interference suppression for cooperative
//! multi-hop amplify-and-forward DS-CDMA.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive_gpc;
pub mod adaptive_ipc;
pub mod channel;
pub mod diagnostics;
pub mod error;
pub mod feedback;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod mmse;
pub mod sigmodel;

pub use error::{Error, Result};

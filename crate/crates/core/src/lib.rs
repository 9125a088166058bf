#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Joint power allocation and sensing-threshold selection for a
//! spectrum-sharing secondary user.

pub mod cli;
pub mod error;
pub mod fading;
pub mod oracle;
pub mod power;
pub mod sensing;
pub mod solver;
pub mod special;
pub mod throughput;

pub use error::{Error, Result};

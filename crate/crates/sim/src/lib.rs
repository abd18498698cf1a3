//! Configuration, netlist parsing, transient driver and output for the
//! memristor device/circuit simulator.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod device;
pub mod netlist;
pub mod output;
pub mod simulate;

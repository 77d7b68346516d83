//! Symbolic verification of quantum circuits.
//!
//! A program model (qubits, gates, measurements, initial valuations) is
//! lowered to real arithmetic over per-qubit amplitude blocks, conjoined
//! with a negated specification and handed to a δ-complete solver. An
//! `unsat` answer proves the specification for every admissible input.

pub mod bench;
pub mod dsl;
pub mod encoder;
pub mod expr;
pub mod gates;
pub mod qpm;
pub mod sim;
pub mod solver;
pub mod spec;

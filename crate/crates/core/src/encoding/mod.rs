//! Position encodings: absolute tables and relative attention biases.

pub mod absolute;
pub mod relative;

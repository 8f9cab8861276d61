//! Memory-experiment workbench for CSS/LDPC codes under circuit-level,
//! state-dependent noise.

pub mod analytics;
pub mod circuit;
pub mod code;
pub mod decoder;
pub mod faultmodel;
pub mod gf2;
pub mod harness;
pub mod sim;

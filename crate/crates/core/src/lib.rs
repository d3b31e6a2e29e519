// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod cli;
pub mod config;
pub mod error;
pub mod fusion;
pub mod halluc;
pub mod io;
pub mod kernel;
pub mod moments;
pub mod odf;
pub mod pn;
pub mod rng;
pub mod sdf;
pub mod sketch;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};

#![no_std]

extern crate alloc;

pub mod datasets;
pub mod error;
pub mod explain;
pub mod game;
pub mod gcn;
pub mod graph;
pub mod matrix;
pub mod robustness;
pub mod semivalues;

pub use error::{Error, Result};

pub mod channel;
pub mod cli;
pub mod detectors;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod rng;

//! Open-system simulator for a two-frequency Jahn–Teller coupled-cavity
//! circuit: effective single-mode Hamiltonians, Lindblad dynamics, two-time
//! correlations, photon statistics at the output ports, and spike-train
//! analysis of the transmitted field.

pub mod cli;
pub mod correlations;
pub mod error;
pub mod fockspace;
pub mod jt_model;
pub mod linalg;
pub mod liouville;
pub mod spikes;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

//! Multi-cell massive MIMO uplink simulation with clustered devices and
//! interference-graph pilot assignment.
//!
//! The pipeline for one drop of devices:
//!
//! 1. [`netgeom`] places devices in a 7-cell wrap-around layout and
//!    computes large-scale gains.
//! 2. [`channel`] turns each gain into a spatial correlation matrix,
//!    draws channels and forms MMSE estimates from despread pilots.
//! 3. [`clustering`] groups each cell's devices by correlation similarity.
//! 4. [`pilotopt`] builds the inter-cluster interference graph and
//!    colors it with as few pilots as possible.
//! 5. [`receiver`] evaluates M-MMSE combining and spectral efficiency.
//! 6. [`scheduler`] packs heterogeneous devices into clusters by duty
//!    cycle to find the pilot overhead.
//!
//! [`harness`] drives the sweeps and writes CSV / plot data.

pub mod channel;
pub mod clustering;
pub mod config;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod netgeom;
pub mod pilotopt;
pub mod receiver;
pub mod rng;
pub mod scheduler;
pub mod sim;

pub use config::SimConfig;
pub use error::{Error, Result};
pub use rng::RandomStream;

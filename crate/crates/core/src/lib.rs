//! Joint digital and wave-domain beamforming for cell-free massive MIMO
//! whose access points carry stacked intelligent metasurfaces (SIMs) and
//! are connected to the CPU by capacity-limited fronthaul links.
//!
//! The crate is organised bottom-up:
//!
//! - [`sim`]: SIM geometry, diffraction and cascaded transfer matrices.
//! - [`channel`]: deployment, correlated fading and effective channels.
//! - [`metrics`]: exact rates, fronthaul loads and power usage.
//! - [`fp`]: fractional-programming and Fenchel surrogates, MMSE, gradients.
//! - [`solver`]: a log-barrier solver for the concave subproblems.
//! - [`program`]: packing of the digital and per-layer subproblems.
//! - [`optimizers`]: the uplink and downlink alternating optimisers.
//! - [`baselines`]: benchmark schemes sharing the optimiser machinery.
//! - [`experiment`]: plan files, sweeps and CSV output.
//!
//! Runnable walkthroughs live in the `examples/` directory:
//!
//! ```text
//! cargo run --release --example sim_stack
//! cargo run --release --example channels
//! cargo run --release --example surrogates
//! cargo run --release --example convex_solver
//! cargo run --release --example uplink_ao
//! cargo run --release --example downlink_ao
//! cargo run --release --example schemes
//! cargo run --release --example compression
//! cargo run --release --example sweep
//! ```

pub mod baselines;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fp;
pub mod linalg;
pub mod metrics;
pub mod optimizers;
pub mod program;
pub mod sim;
pub mod solver;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use sim::Direction;

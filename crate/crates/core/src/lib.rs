//! Human-motion annotation toolkit.
//!
//! The crate covers the whole offline labelling loop for multi-sensor
//! human-motion captures:
//!
//! * [`body`]: a procedural 24-joint skinned body with shape scaling and
//!   capsule proxies.
//! * [`sync`]: jump-peak clock alignment, resampling and event framing.
//! * [`geometry`]: Chamfer distance, hidden point removal, convex hulls,
//!   penetration depth, capsule overlap and Procrustes alignment.
//! * [`optim`]: sensor-based initialization and the consolidated
//!   contact/smoothness/geometry refinement.
//! * [`metrics`]: MPJPE, PA-MPJPE, PCK0.3, PVE, ACCEL, GMPJPE and T-Error.
//! * [`fusion`]: forward pass of the multimodal cross-attention unit and its
//!   two-step tri-modal composition.
//! * [`synth`]: a ground-truth-known synthetic capture generator.
//! * [`io`]: file formats (JSON motion/body files, PLY, CSV).

pub mod body;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod sync;
pub mod synth;

pub use error::{Error, Result};

//! Balanced truncation for bilinear control systems
//!
//! ```text
//! dx/dt = A x + B u + Σᵢ Nᵢ x uᵢ,    y = C x
//! ```
//!
//! The crate computes type I Gramians (generalized Lyapunov equations), type
//! II Gramians (a Riccati-type inequality with `A` shifted by `k²/2`, where
//! `k` bounds the control pointwise), balances and truncates, and checks the
//! resulting output-error and energy bounds on simulated trajectories.
//!
//! Module map:
//!
//! - [`system`]: realizations, validation, stability spectra, transformations
//! - [`equations`]: generalized Lyapunov and Riccati-inequality solvers
//! - [`gramians`]: the Gramian families with provenance
//! - [`balancing`]: square-root balancing, truncation, order selection
//! - [`simulation`]: RK4 trajectories, bounded control families, L² norms
//! - [`verification`]: trajectory-level bound checks
//! - [`campaign`]: seeded benchmark campaigns over system families

pub mod balancing;
pub mod campaign;
pub mod equations;
pub mod error;
pub mod gramians;
pub mod linalg;
mod max_trace;
pub mod options;
pub mod simulation;
pub mod system;
pub mod verification;

pub use error::{Error, Result};
pub use options::Options;
pub use system::BilinearSystem;

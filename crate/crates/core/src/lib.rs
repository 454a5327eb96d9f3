//! Koopman operator learning for coupled polynomial dynamical systems.
//!
//! Local Koopman matrices are derived from each subsystem's governing
//! equations ([`generator`]), embedded into a full-system seed ([`assembly`]),
//! and refined from trajectory data with recursive EDMD ([`edmd`]). The
//! [`spectral`] module turns any Koopman matrix into eigen-triples for one-
//! and multi-step prediction, and [`dynamics`] simulates the coupled systems
//! used to generate data.

pub mod assembly;
pub mod dict;
pub mod dynamics;
pub mod edmd;
pub mod error;
pub mod expm;
pub mod field;
pub mod generator;
pub mod model;
pub mod spectral;

pub use assembly::{GlobalSeed, assemble_global};
pub use dict::{Dictionary, MultiIndex, VariableLayout, embed_indices};
pub use dynamics::{CoupledSystem, Coupling, Trajectory};
pub use edmd::{BatchDiagnostics, OnlineState, SnapshotPair, batch_edmd};
pub use error::{KoopmanError, Result};
pub use field::{PolynomialVectorField, Term};
pub use generator::{GeneratorMatrix, build_generator, local_koopman};
pub use model::KoopmanModel;
pub use spectral::{SpectralDecomposition, relative_l2};

//! Coalitional control with online topology switching for networked linear
//! systems: structured controller and ellipsoidal observer synthesis by
//! semidefinite programming, closed-loop certification, and a simulation
//! harness with a cost-driven topology supervisor.

// Links the system OpenBLAS used by the conic solver's PSD cone.
extern crate openblas_src;

pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod runtime;
pub mod sdp;
pub mod serde_mat;
pub mod supervisor;
pub mod synthesis;

pub use error::{Error, Result};
pub use model::{Link, Partition, PlantModel, StructMask, Topology};
pub use supervisor::SwitchDecision;
pub use synthesis::{ControllerGains, ObserverGains, SynthesisSettings, TopologyCertificate};

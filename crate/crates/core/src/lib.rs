//! Allen-Cahn message passing: attractive/repulsive particle dynamics on
//! graphs, ODE integration and energy diagnostics.

pub mod coupling;
pub mod diagnostics;
pub mod dynamics;
pub mod experiment;
pub mod graph;
pub mod ode;
pub mod state;

pub use coupling::{CouplingModel, EdgeTable};
pub use dynamics::{AcmpParams, AcmpSystem, PotentialVariant};
pub use graph::{Graph, GraphError};
pub use ode::{integrate, Method, SolverSpec, Trajectory};
pub use state::{FeatureState, StateError};

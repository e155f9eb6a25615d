//! Training of smooth feedforward networks by an augmented Lagrangian method
//! on the lifted (layer-state) formulation, with Gauss-Newton inner solves
//! whose directions come from an exact forward dynamic programming recursion.

pub mod activation;
pub mod alm;
pub mod baseline;
pub mod data;
pub mod error;
pub mod fdp;
pub mod gn;
pub mod io;
pub mod linalg;
pub mod net;
pub mod problem;
pub mod verify;

pub use activation::Activation;
pub use alm::{AlmConfig, AlmOutcome, AlmStatus, TraceRow};
pub use error::{Error, Result};
pub use gn::{GnOptions, GnOutcome, GnStatus, Stage, StageSystem};
pub use net::{Dataset, NetworkProblem, NetworkSpec, States, Weights};
pub use problem::{AffineProblem, Layout, PrimalPoint, StagewiseProblem};

//! Lattice-based motion planning with learned models of normal primitive
//! execution.
//!
//! The crate covers the whole pipeline: generating motion primitives on a 3D
//! state lattice, simulating closed-loop executions, learning per-primitive
//! execution models with Gaussian processes, using those models as
//! probabilistic safety margins during A* search, and monitoring executions
//! for abnormal behavior with a Beta-Binomial failure-rate test.

pub mod error;
pub mod gp;
pub mod io;
pub mod lattice;
pub mod model;
pub mod monitor;
pub mod optim;
pub mod pipeline;
pub mod planner;
pub mod plot;
pub mod seed;
pub mod sim;
pub mod special;

pub use error::{Error, Result};

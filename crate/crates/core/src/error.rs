use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The primitive violates velocity or control limits somewhere along its reference.
    #[error("primitive infeasible: {0}")]
    InfeasiblePrimitive(String),

    #[error("degenerate primitive: initial and final state coincide at rest")]
    DegeneratePrimitive,

    #[error("invalid primitive boundary: {0}")]
    InvalidBoundary(String),

    #[error("incompatible plan: {0}")]
    IncompatiblePlan(String),

    #[error("no plan found: search space exhausted")]
    NoPlan,

    #[error("start state is not a valid lattice state inside the world: {0}")]
    InvalidStart(String),

    #[error("goal state is not a valid lattice state inside the world: {0}")]
    InvalidGoal(String),

    /// Kernel matrix could not be factorized even with the maximum jitter.
    #[error("kernel matrix ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate execution model: {0}")]
    DegenerateModel(String),

    #[error("primitive {primitive_id} has {available} valid triplets, {requested} requested")]
    NotEnoughTriplets {
        primitive_id: usize,
        available: usize,
        requested: usize,
    },

    #[error("simulation diverged at t = {time:.3} s (tracking error {error:.3} m)")]
    Diverged { time: f64, error: f64 },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifacts(PathBuf),

    #[error("unknown primitive id {0}")]
    UnknownPrimitive(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

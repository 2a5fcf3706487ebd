//! Symbolic dynamics and boundary distortion for expanding coverings of the circle.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: circle points, arcs, Möbius maps, orthogonal disks.
//! * [`circle_maps`]: covering maps of S¹ and planar rational maps.
//! * [`markov`]: Markov partitions, refinements, words, primitivity, the elevator.
//! * [`classify`]: hyperbolic / parabolic fits at partition points.
//! * [`conjugacy`]: symbolic conjugacies, distortion profiles, Beurling–Ahlfors.
//! * [`model_builder`]: piecewise-Möbius models with prescribed point types.
//! * [`viz`]: map-spec documents, PPM output and Julia-set rendering.

pub mod circle_maps;
pub mod classify;
pub mod conjugacy;
pub mod geometry;
pub mod markov;
pub mod model_builder;
mod poly;
pub mod viz;

pub use circle_maps::{CoveringMap, Derivative, Orientation, RationalMap};
pub use geometry::{Arc, CirclePoint, MoebiusTransform};
pub use markov::{MarkovPartition, Word};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("antipodal points: the orthogonal circle is a line")]
    Antipodal,
    #[error("infeasible constraints: {0}")]
    Infeasible(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid Markov partition: {0}")]
    Partition(#[from] markov::PartitionViolation),
    #[error("refinement budget exceeded: {requested} arcs requested, budget {budget}")]
    Budget { requested: u64, budget: u64 },
    #[error("word {0:?} is not admissible")]
    Inadmissible(Vec<usize>),
    #[error("descent exceeded {0} letters; map may not be expansive")]
    ExpansivitySuspect(usize),
    #[error("tolerance {tol} not reached within {depth} letters")]
    Tolerance { tol: f64, depth: usize },
    #[error("internal consistency failure: {0}")]
    Inconsistent(String),
    #[error("conjugacy mismatch: {0}")]
    Conjugacy(String),
    #[error("seed is not in an attracting petal: {0}")]
    NotInPetal(String),
    #[error("model hypotheses violated: {0}")]
    Hypothesis(String),
    #[error("map specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Budget { .. } => 4,
            Error::Numeric(_)
            | Error::Tolerance { .. }
            | Error::ExpansivitySuspect(_)
            | Error::NotInPetal(_)
            | Error::Inconsistent(_) => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

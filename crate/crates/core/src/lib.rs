//! Request-level simulator for content-centric urban edge networks.
//!
//! The pipeline mirrors how a deployment is planned and evaluated:
//!
//! 1. [`geo`]: cloudlet locations, the minimum spanning tree backhaul and hop counts.
//! 2. [`population`]: per-node densities and request probabilities.
//! 3. [`placement`]: hierarchical CDC placement and the elbow of its cost curve.
//! 4. [`workload`]: Zipf content interests per community and the skew estimator.
//! 5. [`policy`]: cache state, baseline replacement, pLFU and score-based caching.
//! 6. [`sim`]: the request loop and its metrics.
//! 7. [`config`] and [`harness`]: scenario files and the subcommands behind the CLI.
//!
//! Numeric modules are generic over [`Real`]; the aliases below fix the scalar
//! for the common cases.

pub mod config;
pub mod error;
pub mod geo;
pub mod harness;
mod io_util;
pub mod placement;
pub mod policy;
pub mod population;
pub mod scalar;
pub mod sim;
pub mod svg;
pub mod workload;

pub use error::{Error, Result};
pub use scalar::Real;

pub type NodeSet64 = geo::NodeSet<f64>;
pub type NodeSet32 = geo::NodeSet<f32>;
pub type Topology64 = geo::Topology<f64>;
pub type Topology32 = geo::Topology<f32>;
pub type PopulationMap64 = population::PopulationMap<f64>;
pub type PopulationMap32 = population::PopulationMap<f32>;
pub type RequestVector64 = population::RequestVector<f64>;
pub type RequestVector32 = population::RequestVector<f32>;
pub type Community64 = placement::Community<f64>;
pub type PlacementResult64 = placement::PlacementResult<f64>;
pub type PlacementResult32 = placement::PlacementResult<f32>;
pub type PopularityTracker64 = policy::PopularityTracker<f64>;
pub type PopularityTracker32 = policy::PopularityTracker<f32>;
pub type ScoreInputs64 = policy::ScoreInputs<f64>;

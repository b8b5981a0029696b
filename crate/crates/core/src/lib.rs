//! Decentralized coded caching under nonuniform file popularity and size.
//!
//! The crate covers the whole pipeline around the modified decentralized
//! coded caching scheme: problem instances ([`model`]), scenario enumeration
//! and counting ([`combinatorics`]), exact average delivery rates and the
//! decentralized lower bound ([`rate`]), placement optimization by successive
//! geometric programming ([`gp`]), closed-form two-group placements
//! ([`strategies`]), and a bit-level Monte Carlo simulator ([`simulate`]).

pub mod combinatorics;
pub mod gp;
pub mod model;
pub mod rate;
pub mod simulate;
pub mod strategies;

pub use model::{build_catalog, zipf_popularity, DemandScenario, FileCatalog, Placement, UserPopulation};
pub use rate::{average_rate, RateReport, Scheme};

//! Compute-and-forward toolkit: effective-noise computations, integer
//! coefficient search, rate regions, multiple-access rate assignments, nested
//! lattice codes and an end-to-end Monte-Carlo simulator.

pub mod channel;
pub mod error;
pub(crate) mod exact;
pub mod intsearch;
pub mod lattice;
pub mod mac_opt;
pub mod regions;
pub mod simulator;

pub use channel::{int_matrix, ChannelInstance, ChannelSpec, IntMatrix, Rate};
pub use error::{Error, Result};
pub use lattice::{EnsembleSpec, LatticeId, LatticePoint, NestedLatticeEnsemble};
pub use nalgebra::{DMatrix, DVector};
pub use regions::{Pair, RateRegionSpec, Scheme};

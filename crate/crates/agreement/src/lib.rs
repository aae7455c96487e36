//! Direct product (agreement) testing on simplicial complexes.

pub mod adversary;
pub mod assignment;
pub mod cohomology;
pub mod complex;
pub mod csp;
pub mod dp_test;
pub mod experiments;
pub mod face;
pub mod graph;
pub mod linalg;
pub mod list_decoder;
pub mod perm;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod ug;

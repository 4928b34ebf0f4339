//! Critical site percolation on the hexagonal lattice, Cardy's formula,
//! Loewner chains, SLE and the exploration path.
pub mod conformal;
pub mod curvestats;
pub mod exploration;
pub mod harness;
pub mod lattice;
pub mod loewner;
pub mod percolation;
pub mod quadrature;
pub mod rng;
pub mod sle;
pub mod stats;

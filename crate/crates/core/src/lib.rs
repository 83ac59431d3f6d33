//! Heterogeneous graph neural network design-space exploration.
//!
//! The crate is layered bottom-up: typed graphs ([`hgraph`]), meta-path and
//! homogenization transforms ([`transform`]), a small autodiff engine
//! ([`tensor`]), message-passing building blocks ([`layers`]), the assembled
//! model ([`model`]), configuration spaces and sampling ([`designspace`]),
//! training and metrics ([`train`]), the parallel experiment runner
//! ([`runner`]) and ranking analysis ([`analysis`]).

pub mod analysis;
pub mod designspace;
pub mod error;
pub mod hgraph;
pub mod layers;
pub mod model;
pub mod runner;
pub mod tensor;
pub mod train;
pub mod transform;

pub use error::{Error, Result};

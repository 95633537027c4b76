//! RADAM: texture descriptors from randomized autoencoders trained on the
//! aggregated activation maps of a frozen backbone.
//!
//! The per-image pipeline is
//! [`aggregate_maps`](aggregate::aggregate_maps) →
//! [`add_pe`](posenc::add_pe) → m × ([`sigmoid_forward`](rae::sigmoid_forward),
//! [`fit_decoder`](rae::fit_decoder)) → [`soup`](rae::soup), wrapped by
//! [`RadamEncoder`](rae::RadamEncoder). Descriptors are classified with the
//! linear models in [`classifier`].

pub mod aggregate;
pub mod classifier;
pub mod error;
pub mod posenc;
pub mod rae;
pub mod rng;
pub mod tensorio;

pub use error::{Error, Result};

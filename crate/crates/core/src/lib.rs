//! Two-stage hyperspectral pixel classification: band-slice spectral
//! networks with index-based feature enhancement, followed by a capsule
//! network with dynamic routing.

pub mod autodiff;
pub mod capsule;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub(crate) mod kernels;
pub mod layers;
pub mod model;
pub mod stage1;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};

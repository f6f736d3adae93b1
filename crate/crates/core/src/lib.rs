//! Document shadow removal by frequency splitting.
//!
//! An input image is split by a Laplacian pyramid ([`pyramid`]) into one
//! low-frequency residual and several high-frequency bands. The residual,
//! which carries the shadow's colour cast, is corrected by the
//! attention-aggregation network ([`aan`]); every band, which carries shadow
//! edges, is refined by its own gated multi-scale fusion transformer
//! ([`gmft`]). The corrected pyramid is collapsed back into an image.
//!
//! All network code is written once against the [`backend::Backend`] trait
//! and runs either eagerly or on a differentiable [`graph::Graph`].

pub mod aan;
pub mod backend;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gmft;
pub mod gradcheck;
pub mod graph;
pub mod image;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pyramid;
pub mod report;
pub mod resample;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/pyramid.md")]
    mod pyramid {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/gradients.md")]
    mod gradients {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

//! Selects the dimension of a static word embedding without training one.
//!
//! The corpus is split in two halves. Each half yields a signal matrix
//! (shifted PPMI or log-count) whose truncated SVD gives an *oracle matrix*
//! `X = U_k D_k^α` for every candidate dimension `k`. The chosen `k`
//! minimizes a distance between the two halves' oracle matrices: the mixed
//! product distance (MPD), the PIP loss, or either half of MPD on its own.
//!
//! ```
//! use dimsel::{
//!     criteria::{sweep_and_select, Criterion, Grid},
//!     postprocess::PostprocConfig,
//!     spectral::truncated_svd,
//!     synthetic::{planted_pair, PlantedSpec},
//! };
//!
//! // Two noisy copies of a rank-10 matrix.
//! let spec = PlantedSpec { n: 200, rank: 10, top: 10.0, bottom: 9.0, noise: 0.05 };
//! let (a, b) = planted_pair(&spec, 7);
//! let (da, db) = (truncated_svd(&a, 30, 1)?, truncated_svd(&b, 30, 1)?);
//! let report = sweep_and_select(&da, &db, &Grid::new(2, 30, 2), 0.5, Criterion::Mpd, &PostprocConfig::default(), 1)?;
//! assert_eq!(report.selected_k, 10);
//! # Ok::<(), dimsel::Error>(())
//! ```

pub mod alignment;
pub mod cooccurrence;
pub mod corpus;
pub mod criteria;
pub mod error;
pub mod evaluation;
pub mod postprocess;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/signal.md")]
    pub mod signal {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    pub mod oracle {}
    #[doc = include_str!("../../../book/src/postprocessing.md")]
    pub mod postprocessing {}
    #[doc = include_str!("../../../book/src/criteria.md")]
    pub mod criteria {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}

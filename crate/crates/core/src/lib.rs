//! Monotone measures of non-locality for bipartite no-signaling boxes.
//!
//! The crate computes maximal correlation, the maximal-correlation ribbon,
//! the hypercontractivity ribbon and the CHSH value of boxes, simulates
//! adaptive wirings of several boxes exactly, and ships the fuzzing
//! campaigns that check these measures never increase under wirings.
//!
//! ```
//! use nonlocal::{maxcorr::rho_box, nsbox::NoSignalingBox};
//!
//! let pr = NoSignalingBox::isotropic(0.8)?;
//! assert!((rho_box(&pr).rho - 0.8).abs() < 1e-12);
//! assert!((pr.chsh_value()? - 0.9).abs() < 1e-12);
//! # Ok::<(), nonlocal::Error>(())
//! ```

#![allow(clippy::needless_range_loop)]

pub mod eigen;
pub mod error;
pub mod harness;
pub mod hc_ribbon;
pub mod maxcorr;
pub mod mc_ribbon;
pub mod nsbox;
pub mod prob;
pub mod report;
pub mod seeds;
pub mod wiring;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/boxes.md")]
    mod boxes {}
    #[doc = include_str!("../../../book/src/maximal-correlation.md")]
    mod maximal_correlation {}
    #[doc = include_str!("../../../book/src/ribbons.md")]
    mod ribbons {}
    #[doc = include_str!("../../../book/src/wirings.md")]
    mod wirings {}
    #[doc = include_str!("../../../book/src/campaigns.md")]
    mod campaigns {}
}

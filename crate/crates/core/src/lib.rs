//! Perception-calibrated identity embeddings for stylized faces.
//!
//! The crate covers three stages:
//!
//! - [`calibration`]: turn human forced-choice judgments into per-(method, style)
//!   recognition curves and select the strength levels people still recognize.
//! - [`encoder`], [`losses`], [`trainer`]: adapt a frozen embedding backbone with
//!   low-rank adapters under an angular-margin + supervised-contrastive +
//!   embedding-regularization objective.
//! - [`evaluation`]: verification, retrieval, pose-consistency and
//!   human-agreement metrics over any embedding set.

pub mod calibration;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};

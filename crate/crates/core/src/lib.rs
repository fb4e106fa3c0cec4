//! Log-periodic power law singularity (LPPLS) bubble detection.
//!
//! The pipeline loads a price series ([`series`]), calibrates the LPPLS model
//! on shrinking windows ([`model`], [`optimizer`]), filters the fits
//! ([`qualify`]) and aggregates them into a confidence indicator
//! ([`indicator`]). [`multilevel`] escalates from a coarse timescale to finer
//! ones while the indicator is active, and [`crashes`] measures realised
//! drawdowns.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod crashes;
pub mod error;
pub mod indicator;
pub mod model;
pub mod multilevel;
pub mod optimizer;
pub mod qualify;
pub mod series;

pub use error::{Error, ErrorKind, Result};

//! Structural cumulative survival models for randomized trials with
//! treatment switching, fitted without assuming the randomized arm acts
//! only through treatment received.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod mc;
pub mod model;
mod par;
pub mod rng;
pub mod simulation;

pub use error::{Error, Result};
pub use estimator::{fit, fit_scsm, fit_ytt, EstimatorKind, FitOptions, FitResult};
pub use model::{CumulativeEffect, Dataset, Subject, TreatmentPath};

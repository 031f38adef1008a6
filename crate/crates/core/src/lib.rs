//! Bootstrap-robust prescriptive analytics.
//!
//! Contextual learners (Nadaraya-Watson and nearest neighbors) turn an
//! empirical model of covariate-label data into a label distribution at a
//! context of interest. Decisions are taken either nominally, by minimizing
//! the expected loss under that distribution, or robustly, by minimizing the
//! worst expected loss over all empirical models within a relative-entropy
//! ball around the training model. Robust prescriptions come with a
//! finite-sample bound on how often they disappoint on bootstrap data.

// `!(x > 0.0)` deliberately rejects NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod divergences;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod io;
pub mod learners;
pub mod model;
pub mod nominal;
pub mod robust;
pub mod smoothers;

pub use error::{Error, Result};

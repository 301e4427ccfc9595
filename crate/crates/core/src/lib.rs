//! Measuring how vulnerable multi-label classifiers are to evasion attacks.
//!
//! The crate trains small linear and MLP multi-label models, mounts
//! minimal-norm targeted attacks (projected gradient, penalty, and an exact
//! active-set QP for linear scores), explores the label space greedily to
//! count how many labels a budgeted perturbation can flip, certifies the
//! greedy search against brute-force enumeration, evaluates adversarial
//! generalization bounds, and provides low-rank and adversarial-training
//! countermeasures.

pub mod attack;
pub mod bounds;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod explore;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod qp;
pub mod train;

pub use error::{Error, Result};

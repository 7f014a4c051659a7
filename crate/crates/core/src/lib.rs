//! Generalized exponential dichotomies for nonautonomous linear difference
//! systems `x_{n+1} = A_n x_n`, bounded solutions of their perturbations, and
//! the pointwise equivalence maps between two perturbed systems that share
//! the same linear part.
//!
//! Everything lives on a finite index window. Quantities defined by series
//! over ℤ are computed on the window and carry a tail bound for what the
//! window drops.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounded_solver;
pub mod conjugacy;
pub mod dichotomy;
pub mod error;
pub mod lin_sys;
pub mod report;
pub mod sampling;
pub mod scenarios;
pub mod sequence;

pub use bounded_solver::{bounded_linear, bounded_nonlinear, BoundedSolution, LinearOptions, NonlinearOptions};
pub use conjugacy::{ConjugacyEngine, HolderParams, Tolerances};
pub use dichotomy::{verify_gdd, CertReport, Dichotomy, DichotomyCertificate, DichotomyKind};
pub use error::{Error, Result};
pub use lin_sys::{LinearSystem, Perturbation, Window};
pub use report::{CheckRecord, VerificationReport};
pub use sampling::Sampler;
pub use scenarios::{make_scenario, PerturbationSpec, Scenario};
pub use sequence::Sequence;

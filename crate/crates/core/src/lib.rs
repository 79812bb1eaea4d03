//! Double-loop prox-penalization solver for nested variational inequalities
//! `VI(G, zer(A + F))`.
//!
//! The outer loop anchors a strongly monotone regularized subproblem
//! `0 in A v + F v + beta_t G v + alpha (v - w^t)` and shrinks the Tikhonov
//! weight `beta_t`. Each subproblem is solved inexactly by an inertial,
//! relaxed forward-backward iteration.

// `!(x > 0.0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fb_engine;
pub mod harness;
pub mod inner_loop;
pub mod operators;
pub mod outer_loop;
pub mod problems;

pub use error::{Error, Result};
pub use fb_engine::FBContext;
pub use inner_loop::{DeltaModel, InnerParams, InnerResult};
pub use operators::{point, BoxSet, LipschitzMap, PhiParams, Point, ResolventMap};
pub use outer_loop::{solve_nested, OuterConfig, OuterRecord};
pub use problems::ProblemInstance;

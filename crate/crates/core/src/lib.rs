//! Exact first-passage moments of finite semi-Markov processes.
//!
//! A semi-Markov process is described by the transition matrix `p` of its
//! embedded jump chain and the conditional sojourn-time moments `e^(r)` of
//! each transition. For any universally accessible target `j` (every state,
//! `j` included, can reach `j`), the moments `E[T_j^r | Z(0) = i]` of the
//! first passage (or first return) time are finite and follow from one LU
//! factorization of `I - p I(-j)`.
//!
//! Modules:
//! - [`linalg`]: dense matrices, LU solves, infinity norm, Perron root.
//! - [`graph`]: accessibility, strongly connected components, canonical form.
//! - [`model`]: model type, validation, parametric sojourn families, JSON I/O.
//! - [`passage`]: first-passage moments and first-step residuals.
//! - [`estimate`]: plug-in estimation from transition traces.
//! - [`sim`]: seeded Monte Carlo trajectories and empirical passage moments.
//!
//! ```
//! use smp_passage::{linalg::Matrix, model::SmpModel, passage::first_moment};
//!
//! let p = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.8, 0.0, 0.2], [0.0, 0.0, 1.0]]).unwrap();
//! let e = Matrix::from_rows(&[[0.0, 6.0, 0.0], [0.7, 0.0, 1.1], [0.0, 0.0, 0.0]]).unwrap();
//! let names = vec!["healthy".into(), "ill".into(), "dead".into()];
//! let model = SmpModel::with_moments(names, p, vec![e]);
//! let mu = first_moment(&model, 2).unwrap();
//! assert!((mu[0] - 33.9).abs() < 1e-9 && (mu[1] - 27.9).abs() < 1e-9);
//! ```

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod estimate;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod passage;
pub mod random;
pub mod sim;

pub use error::{Error, Result};

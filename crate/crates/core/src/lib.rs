//! Discrete obstacle problems and their Newton derivatives.
//!
//! The crate is organized bottom-up:
//!
//! * [`mesh`]: Friedrichs–Keller triangulations of the unit square and P1
//!   stiffness/mass assembly with Dirichlet elimination.
//! * [`operators`]: sparse SPD storage, Cholesky/CG solves, full and
//!   restricted Poisson solves, energy/dual/L² norms.
//! * [`obstacle`]: primal-dual active set solver for unilateral and bilateral
//!   obstacle problems, multiplier splitting and Newton-derivative sets.
//! * [`subspaces`]: minimal angles, the block operator `R1` and projections
//!   onto sums of angled subspaces in a Gram-weighted space.
//! * [`control`]: the semismooth Newton method for box-constrained control
//!   with `H¹₀` cost.
//! * [`oracles`]: slow dense reference implementations.
//! * [`verify`]: seeded randomized property checks of the subspace calculus.
//! * [`config`] and [`io`]: run configuration parsing and CSV/VTK/fixture
//!   writers used by the command-line tool.

pub mod config;
pub mod control;
pub mod error;
pub mod io;
pub mod mesh;
pub mod obstacle;
pub mod operators;
pub mod oracles;
pub mod subspaces;
pub mod verify;

pub use error::{Error, Result};

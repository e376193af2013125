//! Radial laboratory for the Kähler-Ricci flow on balls in ℂⁿ.
//!
//! U(n)-invariant Kähler metrics on a ball `{|z|² < R2}` reduce to functions of
//! `ρ = |z|²`. The crate solves the (un)normalized complex Monge-Ampère flows in a
//! compactified radial chart, solves the limiting Kähler-Einstein equation with an
//! independent elliptic Newton solver, and checks the a-priori estimates of the flow
//! against computed trajectories.

pub mod background;
pub mod error;
pub mod estimates;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod pipeline;
pub mod quadrature;
pub mod scenario;
pub mod tridiag;

pub use error::{Error, Result};

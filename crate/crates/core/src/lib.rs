//! Discrete-time port-Hamiltonian systems by symplectic collocation.
//!
//! Gauss-Legendre collocation and partitioned Lobatto IIIA/IIIB pairs
//! applied to explicit port-Hamiltonian models, with the discrete Dirac
//! structure of each sampling interval, its energy balance, closed-form
//! references and convergence sweeps. `no_std` with `alloc`.

#![no_std]

extern crate alloc;

pub mod collocation;
pub mod dirac;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod integrator;
pub mod linalg;
pub mod models;
pub mod poly;

pub use error::{Error, Result};

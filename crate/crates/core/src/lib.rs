//! Exact computational models for the solvable Baumslag-Solitar groups
//! `BS(1,d) = Z[1/d] ⋊ Z`.

pub mod arith;
pub mod error;
pub mod flow;
pub mod fold;
pub mod group;
pub mod nerve;
pub mod quotient;
pub mod tree;
pub mod verify;
pub mod warped;

pub use error::{Error, Result};

//! Numerical verification toolkit for Ito-type identities of jump-diffusion
//! processes and their `L_p`-valued counterparts: drivers and sampling,
//! finite-dimensional and field-valued path construction, term-by-term
//! identity breakdowns, mollification, and Fubini-style consistency checks.

pub mod calculus;
pub mod config;
pub mod drivers;
pub mod error;
pub mod experiment;
pub mod field;
pub mod fubini;
pub mod grid;
pub mod lp_verifier;
pub mod mollifier;
pub mod report;
pub mod rng;
pub mod semimartingale;

pub use error::{Error, Result};

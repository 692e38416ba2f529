//! Numerical construction of bounded complete null curves in C^2 with
//! nontrivial topology, together with their minimal-surface (R^3) and
//! maxface (L^3) counterparts.
//!
//! The pipeline starts from a bounded null holomorphic disk, deforms it over
//! a compact Riemann surface backend (sphere or torus), kills the resulting
//! loop periods by Newton continuation, extracts the level-set domain on
//! which the immersion is single-valued, and emits meshes together with
//! machine-checked certificates for every finitely checkable estimate used
//! along the way.

pub mod config;
pub mod deform;
pub mod domain;
pub mod elliptic;
pub mod error;
pub mod exec;
pub mod export;
pub mod forms;
pub mod nulldisk;
pub mod numeric;
pub mod periods;
pub mod pipeline;
pub mod quad;
pub mod report;
pub mod surface;

pub use error::{Error, Result};
pub use numeric::{Jet, C};

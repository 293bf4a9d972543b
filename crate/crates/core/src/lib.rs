//! Balanced clustering with generalized Voronoi diagrams.
//!
//! Units with weights are split into `k` clusters of prescribed total weight
//! by solving a transportation program; the dual prices turn into additive
//! weights of a diagram (power, additively weighted, anisotropic or
//! shortest-path) that supports the clustering. Fractional vertex solutions
//! are rounded to integer clusterings with bounded deviation.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod diagram;
pub mod distance;
pub mod error;
pub mod evaluate;
pub mod geometry;
pub mod model;
pub mod pipeline;
pub mod rounding;
pub mod siteopt;
pub mod solver;
pub mod synthetic;
pub mod util;

pub use error::{Error, Result};
pub use geometry::{Mat2, Point};
pub use model::{FractionalClustering, Instance, Tolerances, Unit};

//! Forward solvers, linearisations, CGO probes and reconstruction routines
//! for inverse problems in quadratic mean-field games.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod cauchy;
pub mod cgo;
pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod field_io;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod linalg;
pub mod linearize;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{BoundaryTrace, Grid, GridSpec, Region, SpaceTimeField};

/// Order-preserving map, on the rayon pool when `parallel` is set.
pub(crate) fn par_map<T, U, F>(items: Vec<T>, parallel: bool, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if parallel {
        items.into_par_iter().map(f).collect()
    } else {
        items.into_iter().map(f).collect()
    }
}

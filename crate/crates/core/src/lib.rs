#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod convex;
pub mod energy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod measure;
pub mod torsion;
pub mod spectrum;
pub mod gamma;
pub mod optimize;
pub mod cli;

//! Compact third-order limited finite-volume schemes on uniform, non-uniform
//! and block-structured adaptive grids.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amr;
pub mod analysis;
pub mod error;
pub mod field;
pub mod kernels;
pub mod mesh;
pub mod physics;
pub mod problems;
pub mod scheme1d;
pub mod scheme2d;
pub mod timeint;

pub use error::{Error, PhysicsError, Result};

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod geodesic;
pub mod inversion;
pub mod manifold;
pub mod stitchspace;
pub mod harness;

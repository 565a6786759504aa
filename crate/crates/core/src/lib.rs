// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geometry;
pub mod ingest;
pub mod raster;
pub mod rx;
pub mod detect;
pub mod eval;
pub mod trainprep;
pub mod triage;
pub mod cli;
pub mod report;
pub mod synth;

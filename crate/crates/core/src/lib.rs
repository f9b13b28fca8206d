//! Benchmark toolkit for heterogeneous treatment effect estimation on
//! right-censored survival data.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselearn;
pub mod bench;
pub mod cate;
pub mod datagen;
pub mod error;
pub mod impute;
pub mod metrics;
pub mod rng;
pub mod rsf;
pub mod survcurve;

pub use error::{Error, Result};

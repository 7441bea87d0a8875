//! Dense linear algebra: matrices, seeded sampling, singular values, rank.

mod matrix;
mod rng;
mod svd;

pub use matrix::Matrix;
pub use rng::{derive_seed, splitmix64, RngStream};
pub use svd::{
    numerical_rank, product_singular_values, rank_from_values, singular_values,
    DEFAULT_RANK_TOL, MAX_SWEEPS_PER_VALUE,
};


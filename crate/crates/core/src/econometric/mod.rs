//! Per-product log-log regressions with spatial cross-price controls.
//!
//! Products are embedded in a low-rank characteristics space; distances in
//! that space weight competitor prices in polynomial terms.

mod ols;
mod regress;
mod space;

pub use ols::{fwl_fit, lemma_variance, ols_fit, LemmaVariance, OlsFit, RANK_TOLERANCE};
pub use regress::{
    build_regressors, estimate_all, write_estimates_csv, ProductDesign, ProductEstimate,
    PRICE_COLUMN,
};
pub use space::{
    encode_product_space, factorize, pairwise_distances, product_distances, ProductSpace,
};

/// Latent dimensions kept by default.
pub const DEFAULT_RANK: usize = 12;
/// Highest distance power in the cross-price terms.
pub const DEFAULT_DEGREE: usize = 3;

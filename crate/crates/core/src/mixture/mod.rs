//! K-means, spherical Gaussian mixtures, and their link to Gaussian-softmax RBMs.

mod bridge;
pub mod checks;
mod gmm;
mod kmeans;
mod limit;

pub use bridge::{configuration_log_weights, gmm_to_rbm, rbm_to_gmm};
pub use gmm::{gmm_em, GmmFit, SphericalGmm, COLLAPSE_THRESHOLD};
pub use kmeans::{kmeans, kmeans_objective, nearest_center, KMeansResult};
pub use limit::{
    mixture_nll, nearest_objective, nll_ordering_matches_kmeans, verify_kmeans_limit,
    KMeansLimitReport, LimitStep, HARD_ASSIGNMENT_TOL,
};

//! Mutual-information estimation and exact oracles.

pub mod exact;
pub mod mine;
pub mod pca;

pub use exact::{
    bivariate_gaussian_samples, discrete_mi_exact, empirical_entropy, entropy, gaussian_entropy, gaussian_mi, infonce_entropy_bound, one_hot,
    DiscreteJoint,
};
pub use mine::{mine_estimate, MiEstimate, MineConfig};
pub use pca::{max_mi_linear_direction, LinearDirection, TIE_TOLERANCE};

//! Synthetic source/target datasets, CSV I/O and input augmentation.

pub mod dataset;
pub mod synthetic;

pub use dataset::{
    load_matrix_csv, load_numeric_csv, save_matrix_csv, save_numeric_csv, Dataset, DatasetPair, Split,
};
pub use synthetic::{augment, gen_shared_pair, random_orthonormal, target_label, SharedPair, SharedPatternSpec};

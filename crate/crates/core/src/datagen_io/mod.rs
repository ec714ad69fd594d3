//! Synthetic data, outlier corruption, and matrix/image persistence.

mod matrix_io;
mod pgm;
mod synthetic;

pub use matrix_io::{load_matrix, save_matrix, MatrixFormat, BINARY_MAGIC};
pub use pgm::{load_image_dir, read_pgm, write_pgm, GrayImage};
pub use synthetic::{gen_synthetic, inject_outliers, normalization_projector, OutlierSpec, SyntheticSpec};

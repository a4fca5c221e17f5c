//! Special functions: Gamma, Mittag-Leffler (scalar and matrix) and Wright.

mod gamma;
mod matrix;
mod mittag_leffler;
mod wright;

pub use gamma::{gamma, ln_gamma, rgamma};
pub use matrix::{matrix_series, mittag_leffler_eigen, mittag_leffler_matrix, SERIES_NORM_LIMIT, SPECTRAL_GUARD};
pub use mittag_leffler::{mittag_leffler, MLParams};
pub use wright::{wright, WrightParams};

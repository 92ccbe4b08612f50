//! Data ingestion and generation: synthetic mixture sampling, CSV and IDX
//! loaders/writers, and PCA preprocessing.

mod csv;
mod idx;
mod pca;
mod synth;

pub use csv::{load_csv, save_points_csv};
pub use idx::{load_idx, save_idx_images, save_idx_labels};
pub use pca::{fit_pca, PcaTransform};
pub use synth::{sample_mixture, MixtureSpec};

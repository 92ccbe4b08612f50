//! Gaussian mixture clustering by EM with pluggable partial E-step policies.
//!
//! Classic EM recomputes every point's membership weights every iteration.
//! This crate's engine instead asks an [`ActiveSetPolicy`] which points are
//! worth refreshing: the rest keep their stale responsibilities while the
//! M-step continues to use the full matrix. Shipped policies:
//!
//! * [`Full`] — every point, classic EM;
//! * [`Tau`] — retire a point once its hard assignment has been stable for
//!   τ consecutive iterations;
//! * [`Lazy`] — skip high-confidence points, with periodic full refreshes;
//! * [`Star`] — keep only the tails of per-cluster max-heaps active.
//!
//! The loop is deterministic end to end: a seeded portable RNG
//! (ChaCha8) drives initialization, and all parallel reductions combine
//! chunk partials in a fixed order, so a fit is bit-identical for any
//! thread count.
//!
//! ```
//! use partial_em::{fit, sample_mixture, FitConfig, MixtureSpec, Tau, Termination};
//!
//! let data = sample_mixture(&MixtureSpec::example1(), 500, 7).unwrap();
//! let config = FitConfig { seed: 3, ..FitConfig::default() };
//! let result = fit(&data, 2, &Tau::new(10), &config).unwrap();
//! assert!(matches!(
//!     result.report.termination,
//!     Termination::Converged | Termination::ActiveSetEmpty
//! ));
//! let mut means: Vec<f64> = result.model.components().iter().map(|c| c.mean[0]).collect();
//! means.sort_by(|a, b| a.partial_cmp(b).unwrap());
//! assert!((means[0] + 2.0).abs() < 0.5 && (means[1] - 2.0).abs() < 0.5);
//! ```

pub mod data_io;
pub mod engine;
pub mod error;
pub mod eval;
pub mod gaussian;
pub mod model;
pub mod policies;

pub use data_io::{
    fit_pca, load_csv, load_idx, sample_mixture, save_idx_images, save_idx_labels,
    save_points_csv, MixtureSpec, PcaTransform,
};
pub use engine::{
    converged, e_step, f_function, fit, initialize, m_step, m_step_with, observed_loglik,
    resolve_ridge, CovKind, FitConfig, FitResult, InitMethod,
};
pub use error::{Error, Result};
pub use eval::{
    classification_error, confusion_matrix, kmeans, membership_error, ConfusionMatrix, KmeansFit,
};
pub use gaussian::{
    cholesky_regularized, log_density, log_sum_exp, Covariance, GaussianComponent, LN_2PI,
};
pub use model::{
    hard_assign, ActiveState, ConfigEcho, Dataset, DensityEvals, MembershipMatrix, MixtureModel,
    ModelJson, RunReport, Termination,
};
pub use policies::{
    full_update, lazy_update, star_update, tau_update, ActiveSetPolicy, Full, Lazy, LazyConfig,
    PolicyObs, Star, StarConfig, Tau, TauConfig,
};

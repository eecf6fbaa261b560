//! Reduced-rank ridge classifier: the iterative solver, its dense reference and
//! regularization selection.

mod cv;
mod fit;
pub mod oracle;
mod trainset;

pub use cv::{cross_validate_lambda, CvOutcome, DEFAULT_LAMBDA_GRID};
pub use fit::{classify, compute_offsets, fit, ClassifierGram, FitConfig, FitDiagnostics, FitResult};
pub use oracle::direct_fit;
pub use trainset::TrainSet;

//! Crosslingual document embeddings from reduced-rank ridge regression, solved with
//! matrix-free iterative linear algebra.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod linop;
pub mod pipeline;
pub mod retrieval;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};

//! Clustering-index meta-features for automatic classifier model selection.
//!
//! A binary-class dataset is described by the validity indices of four
//! clusterings of its bootstrap subsamples. Per-model-class regressors learn
//! the map from those indices to the F1 score a tuned classifier reaches,
//! and the recommendation pipeline ranks the six classifier families for an
//! unseen dataset without fitting all of them.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: ingestion, standardization, stratified splits and subsampling
//! - [`cluster`]: k-means++, Ward, spectral and HDBSCAN partitions
//! - [`indices`]: the 17 internal and 23 external validity indices
//! - [`learners`]: the six classifier families and the boosted-tree regressor
//! - [`stats`]: Hotelling's T², the MAE margin test, F1, R², Spearman
//! - [`fitness`]: the tuned-classifier fitness oracle and the training table
//! - [`mapper`]: per-class regressors and the `.ciams` bundle format
//! - [`recommend`]: single-shot and subsampled recommendation, AutoML flow
//! - [`eval`]: corpus-level evaluation harness and feature importance

pub mod cluster;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod fitness;
pub mod indices;
pub mod learners;
pub mod mapper;
pub mod matrix;
pub mod recommend;
pub mod seed;
pub mod stats;


pub use config::Config;
pub use data::{Dataset, Subsample};
pub use error::{CiamsError, Result};
pub use matrix::Matrix;

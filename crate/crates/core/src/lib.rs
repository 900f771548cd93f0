//! Method-level bug localization.
//!
//! Bug reports are embedded with static word vectors and column-wise
//! max-pooling; methods are embedded from AST path-contexts. A two-tower
//! feedforward classifier scores (report, method) pairs, candidates are
//! ranked per report, and rankings are scored with MAP, MRR and Accuracy@K.
//!
//! Module map:
//!
//! - [`textprep`]: report tokenization, camelCase splitting, Porter stemming
//! - [`wordvec`]: vector-file loading and max-pooled report vectors
//! - [`codeast`]: AST documents, path-context extraction, method vectors
//! - [`neural`]: dense towers, losses, backprop and the training loop
//! - [`imbalance`]: ROS / RUS resampling and balanced class weights
//! - [`evalkit`]: ranking, metrics and the chronological split
//! - [`dataset`]: manifests, buggy-method labeling, instance building
//! - [`experiment`]: the embedding × strategy matrix and best-count tables

pub mod codeast;
pub mod dataset;
mod error;
pub mod evalkit;
pub mod experiment;
pub mod imbalance;
pub mod neural;
pub mod textprep;
pub mod wordvec;

pub use error::{Error, Result};

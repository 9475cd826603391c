//! Robust spectral fuzzy clustering of multivariate time series.
//!
//! Blocks of a multichannel recording are summarised by lagged Kendall's-tau
//! canonical coherence between two channel groups; the resulting feature
//! vectors are clustered with fuzzy C-means.

pub mod error;
pub mod evaluation;
pub mod fcm;
pub mod filter;
pub mod kencoh;
pub mod kendall;
pub mod linalg;
pub mod mts;
pub mod pearson;
pub mod pipeline;
pub mod seed;
pub mod simgen;
pub mod validity;

pub use error::{Error, Result};
pub use filter::{design_bandpass, filter_block, filter_dataset, BandSpec, BandTable, FilterDesign};
pub use kencoh::{extract_features, solve_canonical, CanonicalFeature, ExtractOptions, FeatureSet};
pub use kendall::{dependence_set, dependence_set_with, kendall_tau, DependenceEstimator, LaggedDependenceSet};
pub use mts::{MtsBlock, MtsDataset, RegionMap};
pub use evaluation::{assign, rand_index, simulation_accuracy, AssignRule, Assignment, TruthKind};
pub use fcm::{fcm_fit, FcmParams, FuzzyPartition};
pub use simgen::{contaminate, gen_dataset, NoiseFamily, SimConfig};
pub use validity::{fsi, grid_search, GridReport};
pub use pipeline::{reproduce_sim, run_pipeline, PipelineConfig, ReproduceOptions};

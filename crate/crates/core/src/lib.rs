//! Generative tensor-network classification: per-class matrix product
//! states trained as Born machines, classified by fidelity.

#![allow(clippy::needless_range_loop)]

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod analysis;
pub mod classifier;
pub mod data;
pub mod discriminative;
pub mod error;
pub mod feature;
pub mod generative;
pub mod manifest;
pub mod mps;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
mod par;
pub mod tensor;

pub use analysis::{
    clustering_report, fidelity_matrix, hilbert_distance_matrix, raw_distance_matrix,
    ClassPairMatrix, ClusteringReport, HilbertDistances, MatrixKind, PairStats,
};
pub use classifier::{
    argmax, evaluate, Classifier, ClassifierBundle, Decision, Evaluation, LazyBundle, SampleResult,
};
pub use data::{load_idx, write_idx, Dataset, Provenance};
pub use discriminative::{
    classify_discriminative, pair_cost, pair_gradient, quadratic_cost, train_discriminative,
    train_discriminative_states, LabeledMps, MergedPair,
};
pub use error::{Error, Result};
pub use feature::{
    log_product_overlap, map_image, map_pixel, product_overlap, FeatureMap, ProductState,
};
pub use generative::{
    class_seed, nll_cost, nll_gradient, train_all_classes, train_generative, train_generative_from,
    train_generative_observed, update_step, Direction, SweepEvent, TrainConfig, TrainReport,
};
pub use manifest::Manifest;
pub use mps::{Container, Mps};
pub use tensor::Tensor;

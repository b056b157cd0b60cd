//! Dual-autoencoder (SyDa) and direct-autoencoder mappings between two
//! agents' feature spaces, mapping chains, and distance-error evaluation.
//!
//! Features are standardized per side before entering the networks and
//! de-standardized on the way out, so losses are in standardized units and
//! evaluation is in meters.

mod chain;
mod eval;
mod model;

pub use chain::{chain_map, check_chain, ChainOutput, FeatureMap, SydaStage};
pub use eval::{
    aggregate, avg_distance_error, cross_validate, fold_seed, keypoint_distances, kfold_indices,
    resolve_keypoints, CvReport, Distances, EvalReport, EvalSide, FoldError, KeypointError, Method,
};
pub use model::{
    direct_loss_and_grads, init_direct_net, syda_loss_and_grads, train_direct, train_syda,
    Architecture, DirectModel, DualNets, EpochLoss, LossReport, MappingModel, Standardizer,
    SydaLoss, SydaModel, STD_FLOOR,
};

//! Mixture of expert trees (MoËT): decision-tree experts under a softmax
//! linear gate, trained EM-style, distilled from teacher policies with a
//! Q-weighted DAgger loop, and encoded to SMT-LIB for bounded verification.

pub mod data;
pub mod dtree;
pub mod error;
pub mod gating;
pub mod imitation;
pub mod envs;
pub mod io;
pub mod verify;
pub mod model;

pub use data::{
    argmax_class, gini_index, weighted_class_distribution, ClassDistribution, MoetConfig,
    WeightedDataset, WeightedExample,
};
pub use dtree::{best_split, fit_tree, tree_stats, Split, TreeFitConfig, TreeNode};
pub use error::{Error, Result};
pub use gating::{
    gate_probabilities, gating_gradient, gating_objective, gradient_step, responsibilities, GatingParams,
    Responsibilities, Standardizer,
};
pub use io::{load_model, save_model};
pub use model::{train_moet, InferenceMode, MoetModel, TrainReport};

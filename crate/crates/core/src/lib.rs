//! Cross-domain recommendation by behavior graph matching.
//!
//! Ratings in a source and a target domain are expanded into rated-item nodes,
//! grouped into behavior graphs and trees, and the trees of both domains are
//! matched to produce bridges between source and target items. A classifier
//! trained on the content features of bridged items then ranks target items
//! for users seen only in the source domain.

mod csvio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod matching;
pub mod recommend;
pub mod training;
pub mod tree;

pub use dataset::{ContentCatalog, CrossDomainData, ItemId, Rating, RatingMatrix, UserId};
pub use error::{Error, ErrorKind, Result};
pub use graph::{build_forest, expand_items, BehaviorForest, BehaviorGraph, NodeKey, RatedItemNode};
pub use matching::{match_forests, Bridge, MatchOptions};
pub use recommend::Recommendation;
pub use training::{train, Classifier, ClassifierKind, DistributionVector, Model, TrainConfig, TrainingSample};
pub use tree::{build_trees, BehaviorTree};

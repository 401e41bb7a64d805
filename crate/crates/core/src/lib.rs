//! Multitask representation learning over finite feature classes:
//! optimistic bandit and episodic RL engines, eluder-dimension tools and
//! representation transfer to a new linear bandit task.

pub mod bandit;
pub mod beta;
pub mod confidence;
pub mod design;
pub mod eluder;
pub mod error;
pub mod function_class;
pub mod linalg;
pub mod mdp;
pub mod rng;
pub mod transfer;

pub use beta::{Alpha, BetaMode};
pub use confidence::{confidence_contains, ConfidenceSet, Selection, Strategy, TieBreak};
pub use design::{erm_fit, Design};
pub use error::{CoreError, Result};
pub use function_class::{
    empirical_sq_distance, FeatureClass, FeatureMap, FnFeature, MultiheadFunction,
    MultitaskHistory, SharedFeature,
};

//! Learning stage for edge caching and offloading.
//!
//! The actor and critic are plain multilayer perceptrons with hand-written
//! reverse passes ([`net`]), trained by clipped PPO with generalized
//! advantage estimation ([`loss`], [`gae`], [`learner`]). The agent in
//! [`agent`] samples caching groups from the semidefinite relaxation, lets
//! the actor pick offloading bits for each, masks them and executes the
//! best group. A2C and Q-learning variants share the same pipeline.

pub mod adam;
pub mod agent;
mod error;
pub mod features;
pub mod gae;
pub mod gradcheck;
pub mod hyper;
pub mod learner;
pub mod loss;
pub mod net;
pub mod train;

pub use agent::{mask_and_select, LearnedPolicy, OiodrlAgent, PpoOnlyAgent, Selection};
pub use error::LearnError;
pub use features::FeatureLayout;
pub use hyper::{Algorithm, Hyperparams};
pub use learner::Learner;

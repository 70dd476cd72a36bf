//! Clarify-then-ground reinforcement learning on a synthetic ambiguous-grounding world.
//!
//! A scene holds several look-alike objects and an under-specified query. A small
//! sequence policy asks attribute questions to a scripted user, then commits to a
//! keyframe, a box and a point. Training uses hierarchical group-relative policy
//! optimization: trajectory rewards, turn rewards (entropy reduction and question
//! efficiency) and a token-level factor obtained by re-scoring each trajectory
//! with a privileged self-teacher view.
//!
//! Module map:
//! - [`scene`]: attribute schema, scene generation, candidate filtering.
//! - [`dialogue`]: user simulator, episode loop, expert guidance.
//! - [`policy`]: vocabulary, observations, the two-layer policy and its gradients.
//! - [`rewards`]: trajectory and turn reward terms.
//! - [`higrpo`]: advantages, token factors, clipped surrogate, training loop.
//! - [`evalkit`]: segmentation metrics, mask propagation, tiered evaluation.
//! - [`cli`]: configuration and command implementations behind the binary.

pub mod cli;
pub mod dialogue;
pub mod error;
pub mod evalkit;
pub mod higrpo;
pub mod policy;
pub mod rewards;
pub mod scene;
pub mod seeding;

pub use error::{Error, Result};

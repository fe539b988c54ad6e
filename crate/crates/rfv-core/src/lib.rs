//! Retrieval-augmented imitation learning over a bank of demonstration clips.
//!
//! The crate is organized around the lifecycle of a retrieval-augmented
//! policy:
//!
//! - [`bank`] — persistent store of video clips with narrations and
//!   mid-level annotations (affordance masks, hand trajectories).
//! - [`midlevel`] — turns ingested detector outputs into those annotations:
//!   contact keyframe detection, centroid trajectories, cubic smoothing
//!   splines, affordance mask extraction.
//! - [`retriever`] — bi-encoder relevance scoring and exact top-k maximum
//!   inner product search, per camera view.
//! - [`encoders`] — clips, masks and trajectories to model tokens; token
//!   merging (bipartite soft matching) for video compression; memory
//!   sequence assembly.
//! - [`nncore`] — minimal f64 tensor kernel: linear / layernorm / softmax /
//!   multi-head attention with paired forward/backward passes, Adam, and
//!   bit-exact checkpoints.
//! - [`policy`] — the action-chunking policy generator: observation
//!   encoding, memory fusion via cross-attention, behavior-cloning training
//!   and temporal-ensemble action selection.
//! - [`sim`] — desk-scale 2D tabletop benchmark: task generation, scripted
//!   experts, rendering, synthetic human-video bank generation, rollout
//!   evaluation and ablation harnesses.
//! - [`config`] — the run configuration shared by the CLI and service.

pub mod bank;
pub mod blob;
pub mod config;
pub mod encoders;
pub mod error;
pub mod midlevel;
pub mod nncore;
pub mod policy;
pub mod retriever;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};

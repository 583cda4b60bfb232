//! Generative design of underactuated tendon-driven grippers.
//!
//! The pipeline has four stages, each a module of this crate:
//!
//! 1. [`grammar`] — a graph grammar whose production rules grow a palm-rooted
//!    design graph into a manufacturable gripper morphology.
//! 2. [`mechanism`] — compilation of a terminal design graph into a physical
//!    gripper description (palm, fingers, phalanx geometry, springs, tendon
//!    pulleys).
//! 3. [`sim`] — a deterministic planar quasi-static grasp simulator: the
//!    tendon-driven fingers close on a free-floating object (gravity off),
//!    and a ramped external load probes the secured grasp.
//! 4. [`reward`] — six grasp-quality criteria computed from the simulation
//!    trace and aggregated over an object set and a tension grid.
//!
//! [`search`] ties the stages together with Monte-Carlo Tree Search over the
//! grammar's action space, and [`config`] holds the file-backed configuration
//! for all of it.

pub mod config;
pub mod geometry;
pub mod grammar;
pub mod mechanism;
pub mod render;
pub mod reward;
pub mod scenarios;
pub mod search;
pub mod sim;

pub use config::Config;
pub use grammar::{Action, DesignGraph, Grammar, GrammarLimits, NodeKind};
pub use mechanism::{FingerSpec, MechanismSpec};
pub use reward::{DesignReward, RewardBreakdown, RewardWeights};
pub use search::{SearchConfig, SearchResult};
pub use sim::{SimConfig, SimObject, SimTrace};

//! Synthetic multi-action social navigation benchmark.
//!
//! Scenes are generated procedurally, pedestrians are forecast with a social
//! force model, and a rule-based oracle ranks six motion primitives. Policies
//! (oracle, noisy oracle, baselines, remote chat models) are scored against
//! those rankings with five set/rank metrics.

pub mod action_space;
pub mod dataset;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod pedestrian_sim;
pub mod policy;
pub mod prompts;
pub mod ranking_oracle;
pub mod scenario;
pub mod seeding;

pub use action_space::{format_ranked_actions, parse_ranked_actions, Action, RankedActions};
pub use geometry::{Pose2D, Vec2};
pub use pedestrian_sim::{predict_trajectories, SfmParams, TrajectorySet};
pub use ranking_oracle::{rank_actions, RolloutConfig};
pub use scenario::{classify_difficulty, generate_scene, Difficulty, DifficultyLevel, Scene};

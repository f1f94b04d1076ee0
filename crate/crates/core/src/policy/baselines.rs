//! Rule-based policies: the oracle, a seeded noisy oracle and greedy-forward.

use super::{Policy, PolicyError, Query, Stage};
use crate::action_space::{format_ranked_actions, Action, RankedActions};
use crate::dataset::DatasetHeader;
use crate::pedestrian_sim::{describe_predictions, predict_trajectories, SfmParams};
use crate::ranking_oracle::{rank_actions, RolloutConfig};
use crate::scenario::describe_scene;
use crate::seeding::{derive_seed, SplitMix64};

/// Answers every stage the way the dataset annotator does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePolicy {
    pub config: RolloutConfig,
    pub params: SfmParams,
}

impl OraclePolicy {
    pub fn new(header: &DatasetHeader) -> Self {
        OraclePolicy {
            config: header.rollout_config,
            params: header.sfm_params,
        }
    }

    pub fn ranking(&self, query: &Query<'_>) -> Result<RankedActions, PolicyError> {
        rank_actions(&query.sample.scene, &self.config, &self.params).map_err(|e| PolicyError::Internal(e.to_string()))
    }

    fn answer(&self, query: &Query<'_>, actions: &RankedActions) -> Result<String, PolicyError> {
        let scene = &query.sample.scene;
        Ok(match query.stage {
            Stage::Scene => describe_scene(scene),
            Stage::Prediction => {
                let trajs = predict_trajectories(scene, self.config.horizon, &self.params)
                    .map_err(|e| PolicyError::Internal(e.to_string()))?;
                describe_predictions(&trajs, scene)
            }
            Stage::Reasoning => String::new(),
            Stage::Action => format_ranked_actions(actions).map_err(|e| PolicyError::Internal(e.to_string()))?,
        })
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn respond(&self, query: &Query<'_>) -> Result<String, PolicyError> {
        if query.stage != Stage::Action {
            return self.answer(query, &RankedActions::empty());
        }
        let actions = self.ranking(query)?;
        self.answer(query, &actions)
    }
}

/// Oracle whose final answer is corrupted with probability `epsilon`.
///
/// Whether a sample is corrupted depends only on `(seed, id)` through one
/// uniform draw compared with `epsilon`, so the corrupted sets are nested in
/// `epsilon`. The edit itself comes from a second stream keyed the same way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyOracle {
    pub epsilon: f64,
    pub seed: u64,
    pub oracle: OraclePolicy,
}

impl NoisyOracle {
    pub fn new(epsilon: f64, seed: u64, oracle: OraclePolicy) -> Result<Self, PolicyError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(PolicyError::Config(format!("epsilon {epsilon} outside [0, 1]")));
        }
        Ok(NoisyOracle { epsilon, seed, oracle })
    }

    pub fn corrupts(&self, id: &str) -> bool {
        SplitMix64::new(derive_seed(self.seed, id, 0)).unit() < self.epsilon
    }

    /// One edit: replace a position with a non-ground-truth action or append
    /// one. With all six actions present there is nothing to insert, so two
    /// positions are swapped instead.
    pub fn corrupt(&self, id: &str, gt: &RankedActions) -> RankedActions {
        let mut rng = SplitMix64::new(derive_seed(self.seed, id, 1));
        let mut actions = gt.as_slice().to_vec();
        let outside: Vec<Action> = Action::ALL.into_iter().filter(|a| !gt.contains(*a)).collect();
        if outside.is_empty() {
            let n = actions.len() as u64;
            let i = rng.below(n) as usize;
            let j = (i + 1 + rng.below(n - 1) as usize) % actions.len();
            actions.swap(i, j);
        } else {
            let extra = outside[rng.below(outside.len() as u64) as usize];
            if rng.below(2) == 0 {
                let at = rng.below(actions.len() as u64) as usize;
                actions[at] = extra;
            } else {
                actions.push(extra);
            }
        }
        RankedActions::new(actions).expect("edit keeps actions distinct")
    }
}

impl Policy for NoisyOracle {
    fn name(&self) -> String {
        format!("noisy:{}", self.epsilon)
    }

    fn respond(&self, query: &Query<'_>) -> Result<String, PolicyError> {
        if query.stage != Stage::Action {
            return self.oracle.respond(query);
        }
        let gt = self.oracle.ranking(query)?;
        let id = &query.sample.id;
        let actions = if self.corrupts(id) { self.corrupt(id, &gt) } else { gt };
        self.oracle.answer(query, &actions)
    }
}

/// Always moves forward.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GreedyForward;

impl Policy for GreedyForward {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn respond(&self, query: &Query<'_>) -> Result<String, PolicyError> {
        Ok(match query.stage {
            Stage::Action => "1.Move forward".into(),
            _ => String::new(),
        })
    }
}

//! Ground-truth ranking of the six primitives for a scene.
//!
//! Actions are pruned by feasibility (pedestrian overlap, obstacle contact,
//! leaving the drivable region), then ordered by comfort bucket, efficiency
//! tier, clearance and finally left-before-right. Stop is the fallback: alone
//! when nothing else is feasible, appended last when some ranked action
//! passes closer than the comfort distance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action_space::{Action, RankedActions};
use crate::geometry::Pose2D;
use crate::pedestrian_sim::{horizon_steps, predict_trajectories, SfmParams, SimError, TrajectorySet};
use crate::scenario::Scene;

/// Clearances closer than this are treated as equal when ordering.
pub const CLEARANCE_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("trajectory set is not aligned with the rollout: {0}")]
    Misaligned(String),
    #[error("invalid rollout config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveSpec {
    pub action: Action,
    /// m/s.
    pub linear_speed: f64,
    /// rad/s, positive to the left.
    pub angular_speed: f64,
}

impl PrimitiveSpec {
    pub fn of(action: Action) -> PrimitiveSpec {
        let (linear_speed, angular_speed) = match action {
            Action::MoveForward => (1.0, 0.0),
            Action::MoveForwardLeft => (1.0, 0.5),
            Action::MoveForwardRight => (1.0, -0.5),
            Action::TurnLeft => (0.0, 1.0),
            Action::TurnRight => (0.0, -1.0),
            Action::Stop => (0.0, 0.0),
        };
        PrimitiveSpec {
            action,
            linear_speed,
            angular_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// s.
    pub horizon: f64,
    /// s.
    pub dt: f64,
    /// m.
    pub robot_radius: f64,
    /// m.
    pub comfort_distance: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: 2.0,
            dt: 0.1,
            robot_radius: 0.3,
            comfort_distance: 1.2,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<usize, OracleError> {
        if !(self.dt > 0.0 && self.dt <= 0.1 + 1e-12) {
            return Err(OracleError::InvalidConfig("dt must be in (0, 0.1]"));
        }
        if !(self.robot_radius > 0.0) {
            return Err(OracleError::InvalidConfig("robot_radius must be positive"));
        }
        if !(self.comfort_distance > 0.0) {
            return Err(OracleError::InvalidConfig("comfort_distance must be positive"));
        }
        horizon_steps(self.horizon, self.dt)
            .map_err(|_| OracleError::InvalidConfig("horizon must be a positive multiple of dt"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionAssessment {
    pub action: Action,
    pub feasible: bool,
    /// Minimum over the rollout of center distance minus both radii, against
    /// predicted pedestrians; `+inf` without pedestrians.
    pub min_clearance: f64,
    /// Minimum distance from the robot disc to any obstacle; `+inf` without
    /// obstacles.
    pub obstacle_clearance: f64,
    pub drivable_ok: bool,
}

impl ActionAssessment {
    /// 0 when the action keeps the comfort distance, 1 otherwise.
    pub fn comfort_bucket(&self, config: &RolloutConfig) -> u8 {
        if self.min_clearance >= config.comfort_distance {
            0
        } else {
            1
        }
    }
}

/// Unicycle rollout with forward Euler; includes the start pose.
pub fn rollout(start: Pose2D, action: Action, config: &RolloutConfig) -> Vec<Pose2D> {
    let spec = PrimitiveSpec::of(action);
    let steps = horizon_steps(config.horizon, config.dt).unwrap_or(0);
    let mut poses = Vec::with_capacity(steps + 1);
    let (mut x, mut y, mut theta) = (start.x, start.y, start.heading);
    poses.push(start);
    for _ in 0..steps {
        x += spec.linear_speed * theta.cos() * config.dt;
        y += spec.linear_speed * theta.sin() * config.dt;
        theta += spec.angular_speed * config.dt;
        poses.push(Pose2D::new(x, y, theta));
    }
    poses
}

pub fn assess_action(
    scene: &Scene,
    action: Action,
    trajs: &TrajectorySet,
    config: &RolloutConfig,
) -> Result<ActionAssessment, OracleError> {
    let steps = config.validate()?;
    if (trajs.dt - config.dt).abs() > 1e-12 {
        return Err(OracleError::Misaligned(format!(
            "dt {} vs rollout dt {}",
            trajs.dt, config.dt
        )));
    }
    if trajs.steps != steps {
        return Err(OracleError::Misaligned(format!(
            "{} steps vs rollout {} steps",
            trajs.steps, steps
        )));
    }
    if trajs.tracks.len() != scene.pedestrians().len()
        || trajs.tracks.iter().any(|t| t.positions.len() != steps + 1)
    {
        return Err(OracleError::Misaligned(
            "track count or length does not match the scene".to_string(),
        ));
    }

    let r = config.robot_radius;
    let poses = rollout(scene.robot(), action, config);
    let mut min_clearance = f64::INFINITY;
    let mut obstacle_clearance = f64::INFINITY;
    let mut drivable_ok = true;
    for (k, pose) in poses.iter().enumerate() {
        let c = pose.position();
        for track in &trajs.tracks {
            let gap = c.distance(track.positions[k]) - r - track.radius;
            min_clearance = min_clearance.min(gap);
        }
        for o in scene.obstacles() {
            obstacle_clearance = obstacle_clearance.min(o.surface_query(c).0 - r);
        }
        if !matches!(scene.drivable_margin(c), Some(m) if m >= r) {
            drivable_ok = false;
        }
    }
    Ok(ActionAssessment {
        action,
        feasible: drivable_ok && min_clearance > 0.0 && obstacle_clearance > 0.0,
        min_clearance,
        obstacle_clearance,
        drivable_ok,
    })
}

fn clearance_order(a: f64, b: f64) -> Ordering {
    if a == b || (a - b).abs() <= CLEARANCE_TIE_TOLERANCE {
        Ordering::Equal
    } else {
        // Larger clearance first.
        b.total_cmp(&a)
    }
}

/// Ordering of two feasible non-Stop candidates: comfort bucket, efficiency
/// tier, larger clearance, left before right.
pub fn ranking_order(a: &ActionAssessment, b: &ActionAssessment, config: &RolloutConfig) -> Ordering {
    a.comfort_bucket(config)
        .cmp(&b.comfort_bucket(config))
        .then(a.action.efficiency_rank().cmp(&b.action.efficiency_rank()))
        .then_with(|| clearance_order(a.min_clearance, b.min_clearance))
        .then(a.action.side().cmp(&b.action.side()))
}

/// Full oracle output with the per-action assessments it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub actions: RankedActions,
    /// Indexed like [`Action::ALL`].
    pub assessments: Vec<ActionAssessment>,
}

impl Ranking {
    pub fn assessment(&self, action: Action) -> &ActionAssessment {
        &self.assessments[action.index()]
    }
}

pub fn rank_actions_detailed(
    scene: &Scene,
    config: &RolloutConfig,
    params: &SfmParams,
) -> Result<Ranking, OracleError> {
    config.validate()?;
    let trajs = predict_trajectories(scene, config.horizon, params)?;
    let assessments = Action::ALL
        .iter()
        .map(|&a| assess_action(scene, a, &trajs, config))
        .collect::<Result<Vec<_>, _>>()?;

    let mut candidates: Vec<&ActionAssessment> = assessments
        .iter()
        .filter(|a| a.feasible && a.action != Action::Stop)
        .collect();
    // Each (bucket, tier) group holds at most a left/right pair, so the
    // tolerance in the clearance comparison cannot break transitivity.
    candidates.sort_by(|a, b| ranking_order(a, b, config));

    let stop = &assessments[Action::Stop.index()];
    let mut ordered: Vec<Action> = candidates.iter().map(|a| a.action).collect();
    let uncomfortable = candidates.iter().any(|a| a.comfort_bucket(config) == 1);
    if ordered.is_empty() || (stop.feasible && uncomfortable) {
        ordered.push(Action::Stop);
    }
    Ok(Ranking {
        actions: RankedActions::new(ordered).expect("actions are distinct"),
        assessments,
    })
}

/// Ground-truth ranked actions for a scene; never empty.
pub fn rank_actions(
    scene: &Scene,
    config: &RolloutConfig,
    params: &SfmParams,
) -> Result<RankedActions, OracleError> {
    rank_actions_detailed(scene, config, params).map(|r| r.actions)
}

/// Structural problems with a ranking: infeasible or missing actions,
/// ordering violations, misplaced Stop. Empty when consistent.
pub fn ranking_violations(ranking: &Ranking, config: &RolloutConfig) -> Vec<String> {
    let mut out = Vec::new();
    let actions = ranking.actions.as_slice();
    if actions.is_empty() {
        out.push("empty ranking".to_string());
        return out;
    }
    let moving: Vec<&ActionAssessment> = ranking
        .assessments
        .iter()
        .filter(|a| a.feasible && a.action != Action::Stop)
        .collect();
    if moving.is_empty() {
        if actions != [Action::Stop] {
            out.push(format!("nothing feasible but ranking is {actions:?}"));
        }
        return out;
    }
    let (body, tail) = match actions.split_last() {
        Some((Action::Stop, rest)) => (rest, true),
        _ => (actions, false),
    };
    for a in body {
        let s = ranking.assessment(*a);
        if !s.feasible || *a == Action::Stop {
            out.push(format!("{a:?} ranked but infeasible or misplaced"));
        }
    }
    for m in &moving {
        if !body.contains(&m.action) {
            out.push(format!("feasible {:?} missing", m.action));
        }
    }
    for w in body.windows(2) {
        let (a, b) = (ranking.assessment(w[0]), ranking.assessment(w[1]));
        if ranking_order(a, b, config) == Ordering::Greater {
            out.push(format!("{:?} ranked before {:?}", w[0], w[1]));
        }
    }
    let uncomfortable = moving.iter().any(|a| a.comfort_bucket(config) == 1);
    let stop_feasible = ranking.assessment(Action::Stop).feasible;
    if tail != (uncomfortable && stop_feasible) {
        out.push(format!("Stop appended = {tail}, expected {}", uncomfortable && stop_feasible));
    }
    out
}

/// Compares the ranking of `scene` with that of its mirror image. Adjacent
/// left/right pairs whose clearances tie may keep left-first order in both.
pub fn mirror_violation(
    scene: &Scene,
    config: &RolloutConfig,
    params: &SfmParams,
) -> Result<Option<String>, OracleError> {
    let original = rank_actions_detailed(scene, config, params)?;
    let mirrored = rank_actions_detailed(&scene.mirrored(), config, params)?;
    let expected: Vec<Action> = original.actions.mirrored().into_vec();
    let got = mirrored.actions.as_slice();
    if expected.len() != got.len() {
        return Ok(Some(format!("mirror ranking {got:?} vs expected {expected:?}")));
    }
    let mut k = 0;
    while k < got.len() {
        if got[k] == expected[k] {
            k += 1;
            continue;
        }
        let swappable = k + 1 < got.len()
            && got[k] == expected[k + 1]
            && got[k + 1] == expected[k]
            && got[k] == got[k + 1].mirrored()
            && clearance_order(
                mirrored.assessment(got[k]).min_clearance,
                mirrored.assessment(got[k + 1]).min_clearance,
            ) == Ordering::Equal;
        if !swappable {
            return Ok(Some(format!("mirror ranking {got:?} vs expected {expected:?}")));
        }
        k += 2;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::scenario::tests::{open_area, ped};
    use crate::scenario::{Obstacle, Pedestrian};
    use Action::*;

    fn scene_with(peds: Vec<Pedestrian>, obstacles: Vec<Obstacle>, drivable: Vec<Vec2>) -> Scene {
        Scene::new(Pose2D::new(0.0, 0.0, 0.0), 0.3, peds, obstacles, drivable, 1, 0).unwrap()
    }

    fn trajs_for(scene: &Scene) -> TrajectorySet {
        predict_trajectories(scene, 2.0, &SfmParams::default()).unwrap()
    }

    #[test]
    fn stop_never_moves() {
        let start = Pose2D::new(1.0, -2.0, 0.7);
        let poses = rollout(start, Stop, &RolloutConfig::default());
        assert_eq!(poses.len(), 21);
        assert!(poses.iter().all(|p| *p == start));
    }

    #[test]
    fn straight_line_rollout() {
        let poses = rollout(Pose2D::new(0.0, 0.0, 0.0), MoveForward, &RolloutConfig::default());
        let end = poses.last().unwrap();
        assert!((end.x - 2.0).abs() < 1e-9 && end.y.abs() < 1e-9 && end.heading.abs() < 1e-9);
    }

    #[test]
    fn diagonal_rollouts_mirror() {
        let c = RolloutConfig::default();
        let l = *rollout(Pose2D::new(0.0, 0.0, 0.0), MoveForwardLeft, &c).last().unwrap();
        let r = *rollout(Pose2D::new(0.0, 0.0, 0.0), MoveForwardRight, &c).last().unwrap();
        assert_eq!(l.x, r.x);
        assert_eq!(l.y, -r.y);
        assert_eq!(l.heading, -r.heading);
        assert!(l.y > 0.0);
    }

    #[test]
    fn empty_scene_everything_feasible() {
        let s = scene_with(vec![], vec![], open_area(10.0));
        let a = assess_action(&s, MoveForward, &trajs_for(&s), &RolloutConfig::default()).unwrap();
        assert!(a.feasible);
        assert_eq!(a.min_clearance, f64::INFINITY);
        let ranked = rank_actions(&s, &RolloutConfig::default(), &SfmParams::default()).unwrap();
        assert_eq!(
            ranked.as_slice(),
            &[MoveForward, MoveForwardLeft, MoveForwardRight, TurnLeft, TurnRight]
        );
    }

    #[test]
    fn pedestrian_dead_ahead_blocks_forward() {
        for x in [0.5, 1.1] {
            let s = scene_with(vec![ped(1, x, 0.0)], vec![], open_area(10.0));
            let a = assess_action(&s, MoveForward, &trajs_for(&s), &RolloutConfig::default()).unwrap();
            assert!(!a.feasible, "x = {x}");
            assert!(a.min_clearance <= 0.0);
        }
    }

    #[test]
    fn drivable_edge_ahead() {
        let drivable = vec![
            Vec2::new(-5.0, -5.0),
            Vec2::new(0.5, -5.0),
            Vec2::new(0.5, 5.0),
            Vec2::new(-5.0, 5.0),
        ];
        let s = scene_with(vec![], vec![], drivable);
        let c = RolloutConfig::default();
        let t = trajs_for(&s);
        let fwd = assess_action(&s, MoveForward, &t, &c).unwrap();
        assert!(!fwd.feasible && !fwd.drivable_ok);
        assert!(assess_action(&s, TurnLeft, &t, &c).unwrap().feasible);
    }

    #[test]
    fn misaligned_trajectories_are_rejected() {
        let s = scene_with(vec![ped(1, 3.0, 3.0)], vec![], open_area(10.0));
        let short = predict_trajectories(&s, 1.0, &SfmParams::default()).unwrap();
        assert!(matches!(
            assess_action(&s, Stop, &short, &RolloutConfig::default()),
            Err(OracleError::Misaligned(_))
        ));
    }

    #[test]
    fn boxed_in_falls_back_to_stop() {
        let obstacles = [(0.55, 0.0), (-0.55, 0.0), (0.0, 0.55), (0.0, -0.55)]
            .into_iter()
            .map(|(x, y)| Obstacle::Disc {
                center: Vec2::new(x, y),
                radius: 0.3,
            })
            .collect();
        let s = scene_with(vec![], obstacles, open_area(10.0));
        let ranked = rank_actions(&s, &RolloutConfig::default(), &SfmParams::default()).unwrap();
        assert_eq!(ranked.as_slice(), &[Stop]);
    }

    #[test]
    fn blocked_forward_prefers_diagonals_over_turns() {
        let config = RolloutConfig {
            comfort_distance: 0.3,
            ..RolloutConfig::default()
        };
        let s = scene_with(vec![ped(1, 2.2, 0.0)], vec![], open_area(10.0));
        let r = rank_actions_detailed(&s, &config, &SfmParams::default()).unwrap();
        assert!(!r.assessment(MoveForward).feasible);
        for a in [MoveForwardLeft, MoveForwardRight] {
            assert!(r.assessment(a).feasible);
            assert_eq!(r.assessment(a).comfort_bucket(&config), 0);
        }
        assert_eq!(
            r.actions.as_slice(),
            &[MoveForwardLeft, MoveForwardRight, TurnLeft, TurnRight]
        );
    }

    #[test]
    fn close_pass_appends_stop() {
        // Pedestrian 1.3 m to the left: everything feasible but uncomfortable.
        let s = scene_with(vec![ped(1, 1.0, 1.3)], vec![], open_area(10.0));
        let r = rank_actions_detailed(&s, &RolloutConfig::default(), &SfmParams::default()).unwrap();
        assert_eq!(r.actions.as_slice().last(), Some(&Stop));
        for w in r.actions.as_slice().windows(2) {
            if w[1] == Stop {
                continue;
            }
            let (a, b) = (r.assessment(w[0]), r.assessment(w[1]));
            assert_ne!(ranking_order(a, b, &RolloutConfig::default()), Ordering::Greater);
        }
        // Moving right keeps more room than moving left.
        let order = r.actions.as_slice();
        let pos = |x: Action| order.iter().position(|&a| a == x);
        if let (Some(l), Some(rr)) = (pos(MoveForwardLeft), pos(MoveForwardRight)) {
            assert!(rr < l || r.assessment(MoveForwardLeft).comfort_bucket(&RolloutConfig::default()) == 0);
        }
    }
}

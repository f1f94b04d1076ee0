//! Social-force pedestrian dynamics and short-horizon trajectory prediction.
//!
//! Each pedestrian relaxes toward its desired velocity `v0 * e_goal` (slowing
//! within `v0 * tau` of the goal) with time constant `tau` and is pushed away
//! from other pedestrians, the robot and obstacles by an isotropic exponential repulsion `A * exp((r_i + r_j - d) / B)`.
//! Integration is a forward Euler step with the velocity clamped to `v_max`;
//! the velocity component leaving the drivable polygon is removed on contact.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{point_in_polygon, segment_intersection, Vec2};
use crate::scenario::{Bearing, Pedestrian, Scene};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid social-force parameters: {0}")]
    InvalidParams(&'static str),
    #[error("horizon {horizon} s is not a positive multiple of dt = {dt} s")]
    InvalidHorizon { horizon: f64, dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfmParams {
    /// v0, m/s.
    pub desired_speed: f64,
    /// tau, s.
    pub relaxation_time: f64,
    /// A.
    pub interaction_strength: f64,
    /// B, m.
    pub interaction_range: f64,
    /// m/s.
    pub max_speed: f64,
    /// s.
    pub dt: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        SfmParams {
            desired_speed: 1.3,
            relaxation_time: 0.5,
            interaction_strength: 2.0,
            interaction_range: 0.3,
            max_speed: 2.0,
            dt: 0.1,
        }
    }
}

impl SfmParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.desired_speed,
            self.relaxation_time,
            self.interaction_strength,
            self.interaction_range,
            self.max_speed,
            self.dt,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(SimError::InvalidParams("all parameters must be positive"));
        }
        if self.dt > 0.1 + 1e-12 {
            return Err(SimError::InvalidParams("dt must not exceed 0.1 s"));
        }
        if self.max_speed < self.desired_speed {
            return Err(SimError::InvalidParams("max_speed must be >= desired_speed"));
        }
        Ok(())
    }
}

fn repulsion(params: &SfmParams, gap: f64, direction: Vec2) -> Vec2 {
    direction * (params.interaction_strength * (-gap / params.interaction_range).exp())
}

/// `v0` toward the goal, easing off linearly inside `v0 * tau` of it so a
/// pedestrian standing on its goal stays put.
fn desired_velocity(me: &Pedestrian, params: &SfmParams) -> Vec2 {
    let to_goal = me.goal - me.position;
    let arrival = params.desired_speed * params.relaxation_time;
    let dist = to_goal.norm();
    if dist >= arrival {
        to_goal.normalized() * params.desired_speed
    } else {
        to_goal * (1.0 / params.relaxation_time)
    }
}

fn acceleration(scene: &Scene, i: usize, params: &SfmParams) -> Vec2 {
    let me = &scene.pedestrians()[i];
    let mut acc = (desired_velocity(me, params) - me.velocity) * (1.0 / params.relaxation_time);

    for (j, other) in scene.pedestrians().iter().enumerate() {
        if j == i {
            continue;
        }
        let d = me.position - other.position;
        let dist = d.norm();
        if dist > 0.0 {
            acc += repulsion(params, dist - me.radius - other.radius, d * (1.0 / dist));
        }
    }

    let robot = scene.robot().position();
    let d = me.position - robot;
    let dist = d.norm();
    if dist > 0.0 {
        acc += repulsion(params, dist - me.radius - scene.robot_radius(), d * (1.0 / dist));
    }

    for obstacle in scene.obstacles() {
        let (surface, outward) = obstacle.surface_query(me.position);
        acc += repulsion(params, surface - me.radius, outward);
    }
    acc
}

/// Removes velocity components that would carry `pos` out of the drivable
/// polygon within one step.
fn contain(scene: &Scene, pos: Vec2, mut vel: Vec2, dt: f64) -> Vec2 {
    for _ in 0..3 {
        let next = pos + vel * dt;
        if point_in_polygon(next, scene.drivable()) {
            return vel;
        }
        let crossing = scene
            .drivable_edges()
            .filter_map(|(a, b)| segment_intersection(pos, next, a, b).map(|t| (t, a, b)))
            .min_by(|x, y| x.0.total_cmp(&y.0));
        let Some((_, a, b)) = crossing else {
            return Vec2::ZERO;
        };
        let n = scene.drivable_outward_normal(a, b);
        let outward = vel.dot(n);
        if outward <= 0.0 {
            return Vec2::ZERO;
        }
        vel = vel - n * outward;
    }
    Vec2::ZERO
}

/// Advances every pedestrian by one `dt`; the robot stays where it is.
pub fn sfm_step(scene: &Scene, params: &SfmParams) -> Scene {
    let dt = params.dt;
    let next: Vec<Pedestrian> = (0..scene.pedestrians().len())
        .map(|i| {
            let p = &scene.pedestrians()[i];
            let mut v = p.velocity + acceleration(scene, i, params) * dt;
            let speed = v.norm();
            if speed > params.max_speed {
                v = v * (params.max_speed / speed);
            }
            let v = contain(scene, p.position, v, dt);
            Pedestrian {
                position: p.position + v * dt,
                velocity: v,
                ..p.clone()
            }
        })
        .collect();
    scene
        .with_pedestrians(next)
        .expect("stepping preserves scene invariants")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u32,
    pub radius: f64,
    /// Positions at t = 0, dt, 2 dt, ...
    pub positions: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub dt: f64,
    pub steps: usize,
    pub tracks: Vec<Track>,
}

impl TrajectorySet {
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// `[[[x, y], ...] per pedestrian]`, for embedding in sample files.
    pub fn to_nested(&self) -> Vec<Vec<[f64; 2]>> {
        self.tracks
            .iter()
            .map(|t| t.positions.iter().map(|p| [p.x, p.y]).collect())
            .collect()
    }
}

/// Converts a horizon into a whole number of steps of length `dt`.
pub fn horizon_steps(horizon: f64, dt: f64) -> Result<usize, SimError> {
    let steps = (horizon / dt).round();
    if !(horizon > 0.0) || steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(SimError::InvalidHorizon { horizon, dt });
    }
    Ok(steps as usize)
}

/// Rolls the social-force model forward with the robot held static.
pub fn predict_trajectories(
    scene: &Scene,
    horizon: f64,
    params: &SfmParams,
) -> Result<TrajectorySet, SimError> {
    params.validate()?;
    let steps = horizon_steps(horizon, params.dt)?;
    let mut tracks: Vec<Track> = scene
        .pedestrians()
        .iter()
        .map(|p| Track {
            id: p.id,
            radius: p.radius,
            positions: Vec::with_capacity(steps + 1),
        })
        .collect();
    if tracks.is_empty() {
        return Ok(TrajectorySet { dt: params.dt, steps, tracks });
    }
    let mut state = scene.clone();
    for k in 0..=steps {
        if k > 0 {
            state = sfm_step(&state, params);
        }
        for (track, p) in tracks.iter_mut().zip(state.pedestrians()) {
            track.positions.push(p.position);
        }
    }
    Ok(TrajectorySet { dt: params.dt, steps, tracks })
}

/// Below this displacement over the horizon a pedestrian is stationary.
pub const STATIONARY_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionClass {
    Approaching,
    CrossingLeftToRight,
    CrossingRightToLeft,
    Receding,
    Stationary,
}

impl fmt::Display for MotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MotionClass::Approaching => "approaching",
            MotionClass::CrossingLeftToRight => "crossing left-to-right",
            MotionClass::CrossingRightToLeft => "crossing right-to-left",
            MotionClass::Receding => "receding",
            MotionClass::Stationary => "stationary",
        })
    }
}

/// Classifies a displacement by its direction in the robot frame.
pub fn classify_motion(displacement: Vec2, robot_heading: f64) -> MotionClass {
    if displacement.norm() < STATIONARY_THRESHOLD {
        return MotionClass::Stationary;
    }
    let local = displacement.rotate_into(robot_heading);
    let angle = local.y.atan2(local.x).to_degrees();
    if angle.abs() <= 45.0 {
        MotionClass::Receding
    } else if angle.abs() >= 135.0 {
        MotionClass::Approaching
    } else if angle > 0.0 {
        MotionClass::CrossingRightToLeft
    } else {
        MotionClass::CrossingLeftToRight
    }
}

pub fn describe_predictions(trajs: &TrajectorySet, scene: &Scene) -> String {
    if trajs.is_empty() {
        return "There are no pedestrians to predict.".to_string();
    }
    let robot = scene.robot();
    let rp = robot.position();
    let mut entries: Vec<(f64, u32, String)> = trajs
        .tracks
        .iter()
        .filter_map(|t| {
            let first = *t.positions.first()?;
            let last = *t.positions.last()?;
            let dist = first.distance(rp);
            let bearing = Bearing::of(&robot, first);
            let class = classify_motion(last - first, robot.heading);
            Some((dist, t.id, format!("{bearing}, {dist:.1} m) is {class}")))
        })
        .collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let clauses: Vec<String> = entries
        .into_iter()
        .enumerate()
        .map(|(k, (_, _, text))| format!("pedestrian {} ({text}", k + 1))
        .collect();
    format!("Over the next {:.1} s: {}.", trajs.horizon(), clauses.join("; "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::scenario::tests::open_area;

    fn walker(id: u32, pos: Vec2, goal: Vec2) -> Pedestrian {
        Pedestrian {
            id,
            position: pos,
            velocity: Vec2::ZERO,
            goal,
            radius: 0.3,
        }
    }

    fn scene_with(peds: Vec<Pedestrian>, robot: Vec2) -> Scene {
        Scene::new(Pose2D::new(robot.x, robot.y, 0.0), 0.3, peds, vec![], open_area(100.0), 1, 0)
            .unwrap()
    }

    #[test]
    fn driving_force_from_rest() {
        let p = SfmParams::default();
        let s = scene_with(vec![walker(1, Vec2::ZERO, Vec2::new(10.0, 0.0))], Vec2::new(0.0, 50.0));
        let v = sfm_step(&s, &p).pedestrians()[0].velocity;
        let expected = p.desired_speed / p.relaxation_time * p.dt;
        assert!((v.x - expected).abs() < 1e-12, "{v:?}");
        assert!(v.y.abs() < 1e-12);
    }

    #[test]
    fn mirror_symmetric_pair_stays_symmetric() {
        let p = SfmParams::default();
        let a = walker(1, Vec2::new(-2.0, 1.0), Vec2::new(5.0, -1.0));
        let b = walker(2, Vec2::new(-2.0, -1.0), Vec2::new(5.0, 1.0));
        let mut s = scene_with(vec![a, b], Vec2::new(-10.0, 0.0));
        for _ in 0..40 {
            s = sfm_step(&s, &p);
            let (pa, pb) = (s.pedestrians()[0].position, s.pedestrians()[1].position);
            assert!((pa.x - pb.x).abs() < 1e-9 && (pa.y + pb.y).abs() < 1e-9);
        }
    }

    #[test]
    fn speed_is_clamped() {
        let p = SfmParams::default();
        let mut fast = walker(1, Vec2::ZERO, Vec2::new(10.0, 0.0));
        fast.velocity = Vec2::new(5.0, 0.0);
        // Overlapping neighbour produces a huge push.
        let s = scene_with(vec![fast, walker(2, Vec2::new(0.05, 0.0), Vec2::ZERO)], Vec2::new(0.0, 30.0));
        let s = sfm_step(&s, &p);
        for ped in s.pedestrians() {
            assert!(ped.velocity.norm() <= p.max_speed + 1e-12);
        }
    }

    #[test]
    fn walls_contain_pedestrians() {
        let p = SfmParams::default();
        let corridor = vec![
            Vec2::new(-5.0, -1.0),
            Vec2::new(5.0, -1.0),
            Vec2::new(5.0, 1.0),
            Vec2::new(-5.0, 1.0),
        ];
        let ped = walker(1, Vec2::new(0.0, 0.5), Vec2::new(0.0, 20.0));
        let s = Scene::new(Pose2D::new(-4.0, 0.0, 0.0), 0.3, vec![ped], vec![], corridor.clone(), 1, 0)
            .unwrap();
        let t = predict_trajectories(&s, 3.0, &p).unwrap();
        for q in &t.tracks[0].positions {
            assert!(point_in_polygon(*q, &corridor) || crate::geometry::distance_to_boundary(*q, &corridor) < 1e-6);
        }
    }

    #[test]
    fn horizon_counting() {
        let p = SfmParams::default();
        let s = scene_with(vec![walker(1, Vec2::ZERO, Vec2::new(1.0, 0.0))], Vec2::new(0.0, 20.0));
        assert!(predict_trajectories(&s, 0.0, &p).is_err());
        assert!(predict_trajectories(&s, 0.15, &p).is_err());
        let t = predict_trajectories(&s, p.dt, &p).unwrap();
        assert_eq!(t.tracks[0].positions.len(), 2);
        let empty = scene_with(vec![], Vec2::ZERO);
        assert!(predict_trajectories(&empty, 2.0, &p).unwrap().is_empty());
    }

    #[test]
    fn prediction_is_deterministic() {
        let p = SfmParams::default();
        let s = scene_with(
            vec![
                walker(1, Vec2::new(2.0, 0.3), Vec2::new(-5.0, 0.0)),
                walker(2, Vec2::new(3.0, -0.4), Vec2::new(-5.0, 1.0)),
            ],
            Vec2::ZERO,
        );
        assert_eq!(predict_trajectories(&s, 2.0, &p), predict_trajectories(&s, 2.0, &p));
    }

    #[test]
    fn motion_classes() {
        assert_eq!(classify_motion(Vec2::new(0.05, 0.05), 0.0), MotionClass::Stationary);
        assert_eq!(classify_motion(Vec2::new(-1.0, 0.0), 0.0), MotionClass::Approaching);
        assert_eq!(classify_motion(Vec2::new(1.0, 0.1), 0.0), MotionClass::Receding);
        assert_eq!(classify_motion(Vec2::new(0.0, 1.0), 0.0), MotionClass::CrossingRightToLeft);
        assert_eq!(classify_motion(Vec2::new(0.0, -1.0), 0.0), MotionClass::CrossingLeftToRight);
        // Heading +y: moving along -y is approaching.
        assert_eq!(
            classify_motion(Vec2::new(0.0, -1.0), std::f64::consts::FRAC_PI_2),
            MotionClass::Approaching
        );
    }

    #[test]
    fn prediction_text() {
        let p = SfmParams::default();
        let empty = scene_with(vec![], Vec2::ZERO);
        let t = predict_trajectories(&empty, 2.0, &p).unwrap();
        assert!(describe_predictions(&t, &empty).contains("no pedestrians"));

        let s = scene_with(vec![walker(9, Vec2::new(4.0, 0.0), Vec2::new(-20.0, 0.0))], Vec2::ZERO);
        let t = predict_trajectories(&s, 2.0, &p).unwrap();
        let text = describe_predictions(&t, &s);
        assert!(text.contains("approaching"), "{text}");
        assert!(text.contains("ahead, 4.0 m"), "{text}");

        let still = scene_with(vec![walker(3, Vec2::new(0.0, 3.0), Vec2::new(0.0, 3.0))], Vec2::ZERO);
        let t = predict_trajectories(&still, 2.0, &p).unwrap();
        assert!(describe_predictions(&t, &still).contains("stationary"));
    }
}

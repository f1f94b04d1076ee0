//! Synthetic scenes: the robot, pedestrians, obstacles and the drivable
//! region, plus rule-based difficulty classification.

mod describe;
mod generate;
mod render;

pub use describe::{describe_scene, Bearing};
pub use generate::{generate_scene, MAX_GENERATION_ATTEMPTS};
pub use render::{render_topdown, scene_extent, Raster, RenderError, Rgb};

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    closest_boundary_point, closest_point_on_segment, distance_to_boundary, edges,
    is_convex_ccw, point_in_polygon, Pose2D, Vec2,
};

/// Pedestrians closer than this (center distance, meters) count toward
/// pedestrian complexity.
pub const PEDESTRIAN_RADIUS_OF_INTEREST: f64 = 6.0;
/// Obstacles closer than this (distance to nearest surface point) count
/// toward environmental complexity.
pub const OBSTACLE_RADIUS_OF_INTEREST: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("robot position is not strictly inside the drivable region")]
    RobotOutsideDrivable,
    #[error("duplicate pedestrian id {0}")]
    DuplicatePedestrianId(u32),
    #[error("route_options must be at least 1")]
    NoRoutes,
    #[error("drivable polygon needs at least 3 vertices")]
    DegenerateDrivable,
    #[error("invalid pedestrian {id}: {reason}")]
    InvalidPedestrian { id: u32, reason: &'static str },
    #[error("invalid obstacle #{index}: {reason}")]
    InvalidObstacle { index: usize, reason: &'static str },
    #[error("robot radius must be positive")]
    InvalidRobotRadius,
    #[error("no scene of level {target:?} found for seed {seed} within {attempts} attempts")]
    GenerationExhausted {
        seed: u64,
        target: Option<DifficultyLevel>,
        attempts: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pedestrian {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub goal: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    Disc { center: Vec2, radius: f64 },
    /// Convex, counter-clockwise.
    Polygon(Vec<Vec2>),
}

impl Obstacle {
    /// Signed distance from `p` to the obstacle surface (negative inside) and
    /// the outward unit direction at the nearest surface point.
    pub fn surface_query(&self, p: Vec2) -> (f64, Vec2) {
        match self {
            Obstacle::Disc { center, radius } => {
                let d = p - *center;
                (d.norm() - radius, d.normalized())
            }
            Obstacle::Polygon(vertices) => {
                let q = closest_boundary_point(p, vertices);
                let dist = p.distance(q);
                if point_in_polygon(p, vertices) {
                    (-dist, (q - p).normalized())
                } else {
                    (dist, (p - q).normalized())
                }
            }
        }
    }

    /// Distance from `p` to the obstacle, zero when inside.
    pub fn distance(&self, p: Vec2) -> f64 {
        self.surface_query(p).0.max(0.0)
    }

    pub fn points(&self) -> Vec<Vec2> {
        match self {
            Obstacle::Disc { center, radius } => vec![
                *center - Vec2::new(*radius, *radius),
                *center + Vec2::new(*radius, *radius),
            ],
            Obstacle::Polygon(v) => v.clone(),
        }
    }

    fn validate(&self, index: usize) -> Result<(), ScenarioError> {
        let ok = match self {
            Obstacle::Disc { radius, .. } => *radius > 0.0,
            Obstacle::Polygon(v) => is_convex_ccw(v),
        };
        if ok {
            Ok(())
        } else {
            let reason = match self {
                Obstacle::Disc { .. } => "disc radius must be positive",
                Obstacle::Polygon(_) => "polygon must be convex, counter-clockwise, >= 3 vertices",
            };
            Err(ScenarioError::InvalidObstacle { index, reason })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "wire::SceneRecord", into = "wire::SceneRecord")]
pub struct Scene {
    robot: Pose2D,
    robot_radius: f64,
    pedestrians: Vec<Pedestrian>,
    obstacles: Vec<Obstacle>,
    drivable: Vec<Vec2>,
    route_options: u32,
    seed: u64,
}

impl Scene {
    pub fn new(
        robot: Pose2D,
        robot_radius: f64,
        pedestrians: Vec<Pedestrian>,
        obstacles: Vec<Obstacle>,
        drivable: Vec<Vec2>,
        route_options: u32,
        seed: u64,
    ) -> Result<Scene, ScenarioError> {
        if drivable.len() < 3 {
            return Err(ScenarioError::DegenerateDrivable);
        }
        if robot_radius <= 0.0 {
            return Err(ScenarioError::InvalidRobotRadius);
        }
        let rp = robot.position();
        if !point_in_polygon(rp, &drivable) || distance_to_boundary(rp, &drivable) <= 0.0 {
            return Err(ScenarioError::RobotOutsideDrivable);
        }
        if route_options == 0 {
            return Err(ScenarioError::NoRoutes);
        }
        let mut ids = HashSet::new();
        for p in &pedestrians {
            if !ids.insert(p.id) {
                return Err(ScenarioError::DuplicatePedestrianId(p.id));
            }
            if p.radius <= 0.0 {
                return Err(ScenarioError::InvalidPedestrian {
                    id: p.id,
                    reason: "radius must be positive",
                });
            }
        }
        for (i, o) in obstacles.iter().enumerate() {
            o.validate(i)?;
        }
        Ok(Scene {
            robot: Pose2D::new(robot.x, robot.y, robot.heading),
            robot_radius,
            pedestrians,
            obstacles,
            drivable,
            route_options,
            seed,
        })
    }

    pub fn robot(&self) -> Pose2D {
        self.robot
    }

    pub fn robot_radius(&self) -> f64 {
        self.robot_radius
    }

    pub fn pedestrians(&self) -> &[Pedestrian] {
        &self.pedestrians
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn drivable(&self) -> &[Vec2] {
        &self.drivable
    }

    pub fn route_options(&self) -> u32 {
        self.route_options
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Copy with the given pedestrians, revalidated.
    pub fn with_pedestrians(&self, pedestrians: Vec<Pedestrian>) -> Result<Scene, ScenarioError> {
        Scene::new(
            self.robot,
            self.robot_radius,
            pedestrians,
            self.obstacles.clone(),
            self.drivable.clone(),
            self.route_options,
            self.seed,
        )
    }

    /// Copy with the given obstacles, revalidated.
    pub fn with_obstacles(&self, obstacles: Vec<Obstacle>) -> Result<Scene, ScenarioError> {
        Scene::new(
            self.robot,
            self.robot_radius,
            self.pedestrians.clone(),
            obstacles,
            self.drivable.clone(),
            self.route_options,
            self.seed,
        )
    }

    /// Reflection across the line through the robot along its heading.
    /// Left and right swap; polygon vertex order is reversed to stay
    /// counter-clockwise.
    pub fn mirrored(&self) -> Scene {
        let origin = self.robot.position();
        let fwd = self.robot.forward();
        let left = fwd.perp();
        let point = |p: Vec2| {
            let r = p - origin;
            origin + fwd * r.dot(fwd) - left * r.dot(left)
        };
        let vector = |v: Vec2| fwd * v.dot(fwd) - left * v.dot(left);
        let polygon = |poly: &[Vec2]| poly.iter().rev().map(|&p| point(p)).collect::<Vec<_>>();

        Scene {
            robot: self.robot,
            robot_radius: self.robot_radius,
            pedestrians: self
                .pedestrians
                .iter()
                .map(|p| Pedestrian {
                    id: p.id,
                    position: point(p.position),
                    velocity: vector(p.velocity),
                    goal: point(p.goal),
                    radius: p.radius,
                })
                .collect(),
            obstacles: self
                .obstacles
                .iter()
                .map(|o| match o {
                    Obstacle::Disc { center, radius } => Obstacle::Disc {
                        center: point(*center),
                        radius: *radius,
                    },
                    Obstacle::Polygon(v) => Obstacle::Polygon(polygon(v)),
                })
                .collect(),
            drivable: polygon(&self.drivable),
            route_options: self.route_options,
            seed: self.seed,
        }
    }

    /// Outward unit normal of the drivable edge `(a, b)`.
    pub(crate) fn drivable_outward_normal(&self, a: Vec2, b: Vec2) -> Vec2 {
        let ccw = crate::geometry::signed_area(&self.drivable) > 0.0;
        let n = (b - a).perp().normalized();
        // perp() points left of a->b, which is inward for a CCW boundary.
        if ccw {
            -n
        } else {
            n
        }
    }

    pub(crate) fn drivable_edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        edges(&self.drivable)
    }

    /// Distance from `p` to the drivable boundary when inside, `None` when
    /// outside.
    pub fn drivable_margin(&self, p: Vec2) -> Option<f64> {
        if point_in_polygon(p, &self.drivable) {
            Some(distance_to_boundary(p, &self.drivable))
        } else {
            None
        }
    }

    /// Nearest point on any drivable edge.
    pub fn nearest_drivable_edge_point(&self, p: Vec2) -> Vec2 {
        let mut best = self.drivable[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in self.drivable_edges() {
            let q = closest_point_on_segment(p, a, b);
            let d = q.distance(p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DifficultyLevel {
    Easy,
    Medium,
    Difficult,
}

impl DifficultyLevel {
    pub const ALL: [DifficultyLevel; 3] = [
        DifficultyLevel::Easy,
        DifficultyLevel::Medium,
        DifficultyLevel::Difficult,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DifficultyLevel::Easy => "Easy",
            DifficultyLevel::Medium => "Medium",
            DifficultyLevel::Difficult => "Difficult",
        }
    }

    pub fn from_sum(sum: u8) -> DifficultyLevel {
        match sum {
            0..=1 => DifficultyLevel::Easy,
            2..=3 => DifficultyLevel::Medium,
            _ => DifficultyLevel::Difficult,
        }
    }
}

impl fmt::Display for DifficultyLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DifficultyLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "easy" => Ok(DifficultyLevel::Easy),
            "medium" => Ok(DifficultyLevel::Medium),
            "difficult" | "hard" => Ok(DifficultyLevel::Difficult),
            other => Err(format!("unknown difficulty `{other}`")),
        }
    }
}

/// Per-factor scores, each 0–2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FactorScores {
    pub road: u8,
    pub pedestrian: u8,
    pub environment: u8,
}

impl FactorScores {
    pub fn sum(&self) -> u8 {
        self.road + self.pedestrian + self.environment
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "wire::DifficultyRecord", into = "wire::DifficultyRecord")]
pub struct Difficulty {
    pub level: DifficultyLevel,
    pub scores: FactorScores,
}

impl Difficulty {
    pub fn from_scores(scores: FactorScores) -> Difficulty {
        Difficulty {
            level: DifficultyLevel::from_sum(scores.sum()),
            scores,
        }
    }
}

fn count_score(count: usize) -> u8 {
    match count {
        0 => 0,
        1..=2 => 1,
        _ => 2,
    }
}

pub fn classify_difficulty(scene: &Scene) -> Difficulty {
    let rp = scene.robot.position();
    let road = match scene.route_options {
        0 | 1 => 0,
        2 => 1,
        _ => 2,
    };
    let near_peds = scene
        .pedestrians
        .iter()
        .filter(|p| p.position.distance(rp) <= PEDESTRIAN_RADIUS_OF_INTEREST)
        .count();
    let near_obstacles = scene
        .obstacles
        .iter()
        .filter(|o| o.distance(rp) <= OBSTACLE_RADIUS_OF_INTEREST)
        .count();
    Difficulty::from_scores(FactorScores {
        road,
        pedestrian: count_score(near_peds),
        environment: count_score(near_obstacles),
    })
}

mod wire {
    //! JSON layout of scenes and difficulty tags.

    use super::*;

    #[derive(Serialize, Deserialize)]
    pub struct RobotRecord {
        pub x: f64,
        pub y: f64,
        pub heading: f64,
        pub radius: f64,
    }

    #[derive(Serialize, Deserialize)]
    pub struct PedestrianRecord {
        pub id: u32,
        pub x: f64,
        pub y: f64,
        pub vx: f64,
        pub vy: f64,
        pub gx: f64,
        pub gy: f64,
        pub radius: f64,
    }

    #[derive(Serialize, Deserialize)]
    pub struct DiscRecord {
        pub cx: f64,
        pub cy: f64,
        pub r: f64,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(rename_all = "lowercase", deny_unknown_fields)]
    pub enum ObstacleRecord {
        Disc(DiscRecord),
        Polygon(Vec<[f64; 2]>),
    }

    #[derive(Serialize, Deserialize)]
    pub struct SceneRecord {
        pub robot: RobotRecord,
        pub pedestrians: Vec<PedestrianRecord>,
        pub obstacles: Vec<ObstacleRecord>,
        pub drivable: Vec<[f64; 2]>,
        pub route_options: u32,
        pub seed: u64,
    }

    fn pt(p: [f64; 2]) -> Vec2 {
        Vec2::new(p[0], p[1])
    }

    impl From<Scene> for SceneRecord {
        fn from(s: Scene) -> Self {
            SceneRecord {
                robot: RobotRecord {
                    x: s.robot.x,
                    y: s.robot.y,
                    heading: s.robot.heading,
                    radius: s.robot_radius,
                },
                pedestrians: s
                    .pedestrians
                    .iter()
                    .map(|p| PedestrianRecord {
                        id: p.id,
                        x: p.position.x,
                        y: p.position.y,
                        vx: p.velocity.x,
                        vy: p.velocity.y,
                        gx: p.goal.x,
                        gy: p.goal.y,
                        radius: p.radius,
                    })
                    .collect(),
                obstacles: s
                    .obstacles
                    .iter()
                    .map(|o| match o {
                        Obstacle::Disc { center, radius } => ObstacleRecord::Disc(DiscRecord {
                            cx: center.x,
                            cy: center.y,
                            r: *radius,
                        }),
                        Obstacle::Polygon(v) => {
                            ObstacleRecord::Polygon(v.iter().map(|p| [p.x, p.y]).collect())
                        }
                    })
                    .collect(),
                drivable: s.drivable.iter().map(|p| [p.x, p.y]).collect(),
                route_options: s.route_options,
                seed: s.seed,
            }
        }
    }

    impl TryFrom<SceneRecord> for Scene {
        type Error = ScenarioError;
        fn try_from(r: SceneRecord) -> Result<Self, Self::Error> {
            Scene::new(
                Pose2D::new(r.robot.x, r.robot.y, r.robot.heading),
                r.robot.radius,
                r.pedestrians
                    .into_iter()
                    .map(|p| Pedestrian {
                        id: p.id,
                        position: Vec2::new(p.x, p.y),
                        velocity: Vec2::new(p.vx, p.vy),
                        goal: Vec2::new(p.gx, p.gy),
                        radius: p.radius,
                    })
                    .collect(),
                r.obstacles
                    .into_iter()
                    .map(|o| match o {
                        ObstacleRecord::Disc(d) => Obstacle::Disc {
                            center: Vec2::new(d.cx, d.cy),
                            radius: d.r,
                        },
                        ObstacleRecord::Polygon(v) => {
                            Obstacle::Polygon(v.into_iter().map(pt).collect())
                        }
                    })
                    .collect(),
                r.drivable.into_iter().map(pt).collect(),
                r.route_options,
                r.seed,
            )
        }
    }

    #[derive(Serialize, Deserialize)]
    pub struct DifficultyRecord {
        pub level: DifficultyLevel,
        pub scores: [u8; 3],
    }

    impl From<Difficulty> for DifficultyRecord {
        fn from(d: Difficulty) -> Self {
            DifficultyRecord {
                level: d.level,
                scores: [d.scores.road, d.scores.pedestrian, d.scores.environment],
            }
        }
    }

    impl TryFrom<DifficultyRecord> for Difficulty {
        type Error = String;
        fn try_from(r: DifficultyRecord) -> Result<Self, Self::Error> {
            if r.scores.iter().any(|&s| s > 2) {
                return Err(format!("factor scores must be 0-2, got {:?}", r.scores));
            }
            let d = Difficulty::from_scores(FactorScores {
                road: r.scores[0],
                pedestrian: r.scores[1],
                environment: r.scores[2],
            });
            if d.level != r.level {
                return Err(format!(
                    "level {} inconsistent with scores {:?}",
                    r.level, r.scores
                ));
            }
            Ok(d)
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn open_area(half: f64) -> Vec<Vec2> {
        vec![
            Vec2::new(-half, -half),
            Vec2::new(half, -half),
            Vec2::new(half, half),
            Vec2::new(-half, half),
        ]
    }

    pub(crate) fn ped(id: u32, x: f64, y: f64) -> Pedestrian {
        Pedestrian {
            id,
            position: Vec2::new(x, y),
            velocity: Vec2::ZERO,
            goal: Vec2::new(x, y),
            radius: 0.3,
        }
    }

    fn disc(x: f64, y: f64, r: f64) -> Obstacle {
        Obstacle::Disc {
            center: Vec2::new(x, y),
            radius: r,
        }
    }

    fn scene(peds: Vec<Pedestrian>, obs: Vec<Obstacle>, routes: u32) -> Scene {
        Scene::new(
            Pose2D::new(0.0, 0.0, 0.0),
            0.3,
            peds,
            obs,
            open_area(20.0),
            routes,
            0,
        )
        .unwrap()
    }

    #[test]
    fn empty_scene_is_easy() {
        let d = classify_difficulty(&scene(vec![], vec![], 1));
        assert_eq!((d.scores.road, d.scores.pedestrian, d.scores.environment), (0, 0, 0));
        assert_eq!(d.level, DifficultyLevel::Easy);
    }

    #[test]
    fn crowded_cluttered_crossing_is_difficult() {
        let peds = vec![ped(1, 2.0, 0.0), ped(2, 0.0, 2.0), ped(3, -2.0, 0.0)];
        // Surface 1 m from the robot.
        let obs = vec![disc(1.2, 1.2, 1.2f64.hypot(1.2) - 1.0), disc(0.0, -1.5, 0.5), disc(-1.5, 0.0, 0.5)];
        let d = classify_difficulty(&scene(peds, obs, 3));
        assert_eq!((d.scores.road, d.scores.pedestrian, d.scores.environment), (2, 2, 2));
        assert_eq!(d.level, DifficultyLevel::Difficult);
    }

    #[test]
    fn one_more_obstacle_moves_easy_to_medium() {
        let s = scene(vec![ped(1, 3.0, 0.0), ped(2, 0.0, 3.0)], vec![], 1);
        let d = classify_difficulty(&s);
        assert_eq!((d.scores.road, d.scores.pedestrian, d.scores.environment), (0, 1, 0));
        assert_eq!(d.level, DifficultyLevel::Easy);
        let s = s.with_obstacles(vec![disc(0.0, -2.5, 0.5)]).unwrap();
        let d = classify_difficulty(&s);
        assert_eq!(d.scores.sum(), 2);
        assert_eq!(d.level, DifficultyLevel::Medium);
    }

    #[test]
    fn thresholds_are_inclusive() {
        let s = scene(vec![ped(1, 6.0, 0.0)], vec![disc(5.0, 0.0, 1.0)], 2);
        let d = classify_difficulty(&s);
        assert_eq!((d.scores.road, d.scores.pedestrian, d.scores.environment), (1, 1, 1));
        let s = scene(vec![ped(1, 6.01, 0.0)], vec![disc(5.0, 0.0, 0.99)], 2);
        let d = classify_difficulty(&s);
        assert_eq!((d.scores.pedestrian, d.scores.environment), (0, 0));
    }

    #[test]
    fn scene_invariants_are_enforced() {
        let outside = Scene::new(Pose2D::new(50.0, 0.0, 0.0), 0.3, vec![], vec![], open_area(5.0), 1, 0);
        assert_eq!(outside, Err(ScenarioError::RobotOutsideDrivable));
        let dup = Scene::new(
            Pose2D::new(0.0, 0.0, 0.0),
            0.3,
            vec![ped(1, 1.0, 1.0), ped(1, 2.0, 2.0)],
            vec![],
            open_area(5.0),
            1,
            0,
        );
        assert_eq!(dup, Err(ScenarioError::DuplicatePedestrianId(1)));
        let routes = Scene::new(Pose2D::new(0.0, 0.0, 0.0), 0.3, vec![], vec![], open_area(5.0), 0, 0);
        assert_eq!(routes, Err(ScenarioError::NoRoutes));
        let cw = Obstacle::Polygon(vec![
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 2.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(2.0, 1.0),
        ]);
        assert!(matches!(
            Scene::new(Pose2D::new(0.0, 0.0, 0.0), 0.3, vec![], vec![cw], open_area(5.0), 1, 0),
            Err(ScenarioError::InvalidObstacle { index: 0, .. })
        ));
    }

    #[test]
    fn json_layout_matches_schema() {
        let s = scene(
            vec![ped(4, 1.0, 2.0)],
            vec![
                disc(3.0, 0.0, 0.5),
                Obstacle::Polygon(vec![
                    Vec2::new(1.0, -3.0),
                    Vec2::new(2.0, -3.0),
                    Vec2::new(2.0, -2.0),
                ]),
            ],
            2,
        );
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["robot"]["radius"], 0.3);
        assert_eq!(v["pedestrians"][0]["id"], 4);
        assert_eq!(v["pedestrians"][0]["gx"], 1.0);
        assert_eq!(v["obstacles"][0]["disc"]["r"], 0.5);
        assert_eq!(v["obstacles"][1]["polygon"][2][1], -2.0);
        assert_eq!(v["drivable"][0][0], -20.0);
        assert_eq!(v["route_options"], 2);
        assert_eq!(v["seed"], 0);
        let back: Scene = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn mirror_reflects_across_heading_axis() {
        let s = Scene::new(
            Pose2D::new(1.0, 1.0, std::f64::consts::FRAC_PI_2),
            0.3,
            vec![ped(1, 0.0, 3.0)],
            vec![],
            open_area(10.0),
            1,
            0,
        )
        .unwrap();
        let m = s.mirrored();
        let p = m.pedestrians()[0].position;
        assert!((p.x - 2.0).abs() < 1e-12 && (p.y - 3.0).abs() < 1e-12);
        assert!(crate::geometry::signed_area(m.drivable()) > 0.0);
        let back = m.mirrored().pedestrians()[0].position;
        assert!(back.distance(Vec2::new(0.0, 3.0)) < 1e-12);
    }
}

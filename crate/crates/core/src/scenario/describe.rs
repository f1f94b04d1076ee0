use std::fmt;

use super::Scene;
use crate::geometry::{Pose2D, Vec2};

/// Coarse heading-relative direction: the frontal half-plane is split into
/// thirds (left above +30°, ahead within ±30°, right below −30°); anything
/// beyond ±90° is behind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bearing {
    Left,
    Ahead,
    Right,
    Behind,
}

impl Bearing {
    pub fn of(robot: &Pose2D, point: Vec2) -> Bearing {
        let local = (point - robot.position()).rotate_into(robot.heading);
        let angle = local.y.atan2(local.x).to_degrees();
        if angle.abs() > 90.0 {
            Bearing::Behind
        } else if angle > 30.0 {
            Bearing::Left
        } else if angle < -30.0 {
            Bearing::Right
        } else {
            Bearing::Ahead
        }
    }
}

impl fmt::Display for Bearing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bearing::Left => "left",
            Bearing::Ahead => "ahead",
            Bearing::Right => "right",
            Bearing::Behind => "behind",
        })
    }
}

fn plural(n: usize, one: &str, many: &str) -> String {
    if n == 1 {
        format!("{n} {one}")
    } else {
        format!("{n} {many}")
    }
}

/// First-turn scene summary.
pub fn describe_scene(scene: &Scene) -> String {
    let robot = scene.robot();
    let rp = robot.position();
    let peds = scene.pedestrians();
    let mut text = format!(
        "The scene contains {} and {}.",
        plural(peds.len(), "pedestrian", "pedestrians"),
        plural(scene.obstacles().len(), "obstacle", "obstacles"),
    );
    let nearest = peds
        .iter()
        .map(|p| (p.position.distance(rp), p.position))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    if let Some((dist, pos)) = nearest {
        text.push_str(&format!(
            " The nearest pedestrian is {} at {:.1} m.",
            Bearing::of(&robot, pos),
            dist
        ));
    }
    let routes = scene.route_options() as usize;
    if routes == 1 {
        text.push_str(" There is 1 route option.");
    } else {
        text.push_str(&format!(" There are {routes} route options."));
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::tests::{open_area, ped};
    use crate::scenario::Scene;

    fn scene(peds: Vec<crate::scenario::Pedestrian>) -> Scene {
        Scene::new(Pose2D::new(0.0, 0.0, 0.0), 0.3, peds, vec![], open_area(10.0), 1, 0).unwrap()
    }

    #[test]
    fn empty_scene() {
        let text = describe_scene(&scene(vec![]));
        assert!(text.contains("0 pedestrians"), "{text}");
        assert!(text.contains("1 route option"));
    }

    #[test]
    fn pedestrian_dead_ahead() {
        let text = describe_scene(&scene(vec![ped(1, 2.0, 0.0)]));
        assert!(text.contains("ahead"), "{text}");
        assert!(text.contains("2.0"), "{text}");
    }

    #[test]
    fn ids_do_not_matter() {
        let a = describe_scene(&scene(vec![ped(1, 2.0, 1.0), ped(2, -1.0, 3.0)]));
        let b = describe_scene(&scene(vec![ped(70, 2.0, 1.0), ped(5, -1.0, 3.0)]));
        assert_eq!(a, b);
    }

    #[test]
    fn bearings() {
        let r = Pose2D::new(0.0, 0.0, 0.0);
        assert_eq!(Bearing::of(&r, Vec2::new(1.0, 1.0)), Bearing::Left);
        assert_eq!(Bearing::of(&r, Vec2::new(1.0, -1.0)), Bearing::Right);
        assert_eq!(Bearing::of(&r, Vec2::new(1.0, 0.2)), Bearing::Ahead);
        assert_eq!(Bearing::of(&r, Vec2::new(-1.0, 0.0)), Bearing::Behind);
    }
}

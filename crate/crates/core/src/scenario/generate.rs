//! Seeded procedural scene generation with difficulty-targeted rejection
//! sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    classify_difficulty, DifficultyLevel, Obstacle, Pedestrian, ScenarioError, Scene,
    OBSTACLE_RADIUS_OF_INTEREST, PEDESTRIAN_RADIUS_OF_INTEREST,
};
use crate::geometry::{bounding_box, distance_to_boundary, point_in_polygon, Pose2D, Vec2};
use crate::pedestrian_sim::{predict_trajectories, SfmParams};

pub const MAX_GENERATION_ATTEMPTS: usize = 1000;

const ROBOT_RADIUS: f64 = 0.3;
/// Horizon over which the standing robot must not be run into.
const STANDING_CHECK_HORIZON: f64 = 2.0;

fn attempt_seed(seed: u64, attempt: u64) -> u64 {
    // SplitMix64 finaliser over (seed, attempt).
    let mut z = seed ^ attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Layout of the drivable region and its number of exits.
fn drivable_layout(rng: &mut ChaCha8Rng, routes: u32) -> (Vec<Vec2>, f64) {
    let v = Vec2::new;
    let back = -3.0;
    match routes {
        1 => {
            // Straight corridor, occasionally a wide plaza.
            let w = if rng.random_bool(0.25) {
                rng.random_range(6.0..12.0)
            } else {
                rng.random_range(2.8..5.0)
            };
            let len = rng.random_range(8.0..14.0);
            let h = w / 2.0;
            (vec![v(back, -h), v(len, -h), v(len, h), v(back, h)], w)
        }
        2 => {
            // T junction: branches to the left and right, no way straight on.
            let w = rng.random_range(2.8..5.0);
            let h = w / 2.0;
            let j = rng.random_range(4.5..8.0);
            let wc = rng.random_range(2.5..4.5);
            let b = rng.random_range(5.0..8.0);
            (
                vec![
                    v(back, -h),
                    v(j, -h),
                    v(j, -b),
                    v(j + wc, -b),
                    v(j + wc, b),
                    v(j, b),
                    v(j, h),
                    v(back, h),
                ],
                w,
            )
        }
        _ => {
            // Crossroads.
            let w = rng.random_range(2.8..5.0);
            let h = w / 2.0;
            let j = rng.random_range(4.5..8.0);
            let wc = rng.random_range(2.5..4.5);
            let b = rng.random_range(5.0..8.0);
            let len = j + wc + rng.random_range(3.0..6.0);
            (
                vec![
                    v(back, -h),
                    v(j, -h),
                    v(j, -b),
                    v(j + wc, -b),
                    v(j + wc, -h),
                    v(len, -h),
                    v(len, h),
                    v(j + wc, h),
                    v(j + wc, b),
                    v(j, b),
                    v(j, h),
                    v(back, h),
                ],
                w,
            )
        }
    }
}

fn sample_in(rng: &mut ChaCha8Rng, drivable: &[Vec2], margin: f64, accept: impl Fn(Vec2) -> bool) -> Option<Vec2> {
    let (lo, hi) = bounding_box(drivable);
    for _ in 0..200 {
        let p = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if point_in_polygon(p, drivable) && distance_to_boundary(p, drivable) >= margin && accept(p) {
            return Some(p);
        }
    }
    None
}

/// Counts of (near, far) agents for a factor score.
fn counts_for_score(rng: &mut ChaCha8Rng, score: u8, max_near: usize) -> (usize, usize) {
    let near = match score {
        0 => 0,
        1 => rng.random_range(1..=2),
        _ => rng.random_range(3..=max_near),
    };
    (near, rng.random_range(0..=2))
}

fn target_scores(rng: &mut ChaCha8Rng, target: Option<DifficultyLevel>) -> [u8; 3] {
    loop {
        let s = [rng.random_range(0..=2u8), rng.random_range(0..=2u8), rng.random_range(0..=2u8)];
        match target {
            None => return s,
            Some(t) if DifficultyLevel::from_sum(s.iter().sum()) == t => return s,
            _ => {}
        }
    }
}

fn make_obstacle(rng: &mut ChaCha8Rng, center: Vec2) -> Obstacle {
    if rng.random_bool(0.5) {
        Obstacle::Disc {
            center,
            radius: rng.random_range(0.2..0.6),
        }
    } else {
        let (hx, hy) = (rng.random_range(0.2..0.6), rng.random_range(0.2..0.6));
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        let corner = |x: f64, y: f64| center + Vec2::new(c * x - s * y, s * x + c * y);
        Obstacle::Polygon(vec![corner(-hx, -hy), corner(hx, -hy), corner(hx, hy), corner(-hx, hy)])
    }
}

fn candidate(seed: u64, attempt: u64, target: Option<DifficultyLevel>) -> Option<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(attempt_seed(seed, attempt));
    let [road, ped_score, env_score] = target_scores(&mut rng, target);
    let routes = road as u32 + 1;
    let (drivable, width) = drivable_layout(&mut rng, routes);

    let lateral = (width / 2.0 - 1.0).clamp(0.0, 0.4);
    let robot = Pose2D::new(
        0.0,
        if lateral > 0.0 { rng.random_range(-lateral..lateral) } else { 0.0 },
        rng.random_range(-0.15..0.15),
    );
    let rp = robot.position();

    let mut obstacles: Vec<Obstacle> = Vec::new();
    let (near_obs, far_obs) = counts_for_score(&mut rng, env_score, 5);
    for k in 0..near_obs + far_obs {
        let near = k < near_obs;
        let center = sample_in(&mut rng, &drivable, 0.3, |p| {
            let d = p.distance(rp);
            let zone = if near {
                d <= OBSTACLE_RADIUS_OF_INTEREST - 0.7
            } else {
                d > OBSTACLE_RADIUS_OF_INTEREST + 0.7
            };
            zone && d > ROBOT_RADIUS + 1.1 && obstacles.iter().all(|o| o.distance(p) > 0.9)
        });
        if let Some(c) = center {
            obstacles.push(make_obstacle(&mut rng, c));
        }
    }

    let mut pedestrians: Vec<Pedestrian> = Vec::new();
    let (near_peds, far_peds) = counts_for_score(&mut rng, ped_score, 6);
    for k in 0..near_peds + far_peds {
        let near = k < near_peds;
        let radius = rng.random_range(0.25..0.3);
        let pos = sample_in(&mut rng, &drivable, radius + 0.05, |p| {
            let d = p.distance(rp);
            let zone = if near {
                d <= PEDESTRIAN_RADIUS_OF_INTEREST - 0.3
            } else {
                d > PEDESTRIAN_RADIUS_OF_INTEREST + 0.3
            };
            zone && d > ROBOT_RADIUS + radius + 0.5
                && obstacles.iter().all(|o| o.distance(p) > radius + 0.15)
                && pedestrians.iter().all(|q| q.position.distance(p) > q.radius + radius + 0.15)
        });
        let Some(position) = pos else { continue };
        let (velocity, goal) = if rng.random_bool(0.25) {
            (Vec2::ZERO, position)
        } else {
            let goal = sample_in(&mut rng, &drivable, 0.5, |g| g.distance(position) > 4.0)?;
            let speed = rng.random_range(0.4..1.4);
            ((goal - position).normalized() * speed, goal)
        };
        pedestrians.push(Pedestrian {
            id: k as u32 + 1,
            position,
            velocity,
            goal,
            radius,
        });
    }

    let scene = Scene::new(robot, ROBOT_RADIUS, pedestrians, obstacles, drivable, routes, seed).ok()?;
    if let Some(t) = target {
        if classify_difficulty(&scene).level != t {
            return None;
        }
    }
    standing_position_safe(&scene).then_some(scene)
}

/// True when no predicted pedestrian reaches the stationary robot.
fn standing_position_safe(scene: &Scene) -> bool {
    let Ok(trajs) = predict_trajectories(scene, STANDING_CHECK_HORIZON, &SfmParams::default()) else {
        return false;
    };
    let rp = scene.robot().position();
    trajs.tracks.iter().all(|t| {
        t.positions
            .iter()
            .all(|p| p.distance(rp) - t.radius - scene.robot_radius() > 0.0)
    })
}

/// Deterministic scene for `seed`; with a target level, rejection-samples
/// until the classified level matches.
pub fn generate_scene(seed: u64, target: Option<DifficultyLevel>) -> Result<Scene, ScenarioError> {
    (0..MAX_GENERATION_ATTEMPTS as u64)
        .find_map(|attempt| candidate(seed, attempt, target))
        .ok_or(ScenarioError::GenerationExhausted {
            seed,
            target,
            attempts: MAX_GENERATION_ATTEMPTS,
        })
}

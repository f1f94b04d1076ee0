//! Top-down raster rendering to binary portable pixmap (P6).

use std::io::Write;

use thiserror::Error;

use super::Scene;
use crate::geometry::{bounding_box, point_in_polygon, Vec2};

pub type Rgb = [u8; 3];

pub const NON_DRIVABLE: Rgb = [255, 255, 255];
pub const DRIVABLE: Rgb = [200, 200, 200];
pub const OBSTACLE: Rgb = [0, 0, 0];
pub const PEDESTRIAN: Rgb = [220, 30, 30];
pub const PEDESTRIAN_TICK: Rgb = [120, 0, 0];
pub const ROBOT: Rgb = [30, 60, 220];
pub const ROBOT_TICK: Rgb = [0, 0, 110];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("pixels_per_meter must be at least 1")]
    InvalidResolution,
    #[error("extent {extent} m does not cover the scene bounding box ({width:.2} x {height:.2} m)")]
    ExtentTooSmall { extent: f64, width: f64, height: f64 },
    #[error("malformed PPM: {0}")]
    Malformed(&'static str),
    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Raster {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = y as usize * self.width + x as usize;
            self.pixels[i] = c;
        }
    }

    pub fn count(&self, color: Rgb) -> usize {
        self.pixels.iter().filter(|&&p| p == color).count()
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Raster, RenderError> {
        // Header: magic, width, height, maxval separated by single whitespace.
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(RenderError::Malformed("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| RenderError::Malformed("header"))?);
        }
        pos += 1;
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(RenderError::Malformed("expected P6 with maxval 255"));
        }
        let width: usize = fields[1].parse().map_err(|_| RenderError::Malformed("width"))?;
        let height: usize = fields[2].parse().map_err(|_| RenderError::Malformed("height"))?;
        let data = bytes.get(pos..).ok_or(RenderError::Malformed("missing data"))?;
        if data.len() != width * height * 3 {
            return Err(RenderError::Malformed("pixel data length"));
        }
        let pixels = data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Ok(Raster { width, height, pixels })
    }

    pub fn to_png(&self) -> Result<Vec<u8>, RenderError> {
        let mut out = Vec::new();
        {
            let mut encoder = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            encoder.set_color(png::ColorType::Rgb);
            encoder.set_depth(png::BitDepth::Eight);
            let mut writer = encoder.write_header()?;
            let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
            writer.write_image_data(&flat)?;
            writer.finish()?;
        }
        Ok(out)
    }

    pub fn write_ppm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_ppm())
    }
}

struct Frame {
    origin: Vec2,
    ppm: f64,
}

impl Frame {
    fn world(&self, px: usize, py: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (px as f64 + 0.5) / self.ppm,
            self.origin.y - (py as f64 + 0.5) / self.ppm,
        )
    }

    fn pixel(&self, p: Vec2) -> (i64, i64) {
        (
            ((p.x - self.origin.x) * self.ppm).floor() as i64,
            ((self.origin.y - p.y) * self.ppm).floor() as i64,
        )
    }
}

fn scene_points(scene: &Scene) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = scene.drivable().to_vec();
    for o in scene.obstacles() {
        pts.extend(o.points());
    }
    for p in scene.pedestrians() {
        pts.push(p.position - Vec2::new(p.radius, p.radius));
        pts.push(p.position + Vec2::new(p.radius, p.radius));
    }
    let r = scene.robot_radius();
    let rp = scene.robot().position();
    pts.push(rp - Vec2::new(r, r));
    pts.push(rp + Vec2::new(r, r));
    pts
}

/// Side of the smallest square window covering the scene, in meters.
pub fn scene_extent(scene: &Scene) -> f64 {
    let (lo, hi) = bounding_box(&scene_points(scene));
    (hi.x - lo.x).max(hi.y - lo.y)
}

fn fill_disc(img: &mut Raster, frame: &Frame, center: Vec2, radius: f64, color: Rgb) {
    let (x0, y0) = frame.pixel(center - Vec2::new(radius, -radius));
    let (x1, y1) = frame.pixel(center + Vec2::new(radius, -radius));
    for py in y0.max(0)..=y1 {
        for px in x0.max(0)..=x1 {
            if px as usize >= img.width || py as usize >= img.height {
                continue;
            }
            if frame.world(px as usize, py as usize).distance(center) <= radius {
                img.set(px, py, color);
            }
        }
    }
}

fn draw_segment(img: &mut Raster, frame: &Frame, a: Vec2, b: Vec2, color: Rgb) {
    let samples = ((b - a).norm() * frame.ppm * 2.0).ceil().max(1.0) as usize;
    for k in 0..=samples {
        let p = a + (b - a) * (k as f64 / samples as f64);
        let (x, y) = frame.pixel(p);
        img.set(x, y, color);
    }
}

/// Renders a square window of side `extent` meters centred on the scene's
/// bounding box, `pixels_per_meter` pixels per meter, +y up.
pub fn render_topdown(scene: &Scene, pixels_per_meter: u32, extent: f64) -> Result<Raster, RenderError> {
    if pixels_per_meter == 0 {
        return Err(RenderError::InvalidResolution);
    }
    let (lo, hi) = bounding_box(&scene_points(scene));
    let (width, height) = (hi.x - lo.x, hi.y - lo.y);
    if !(extent >= width && extent >= height) {
        return Err(RenderError::ExtentTooSmall { extent, width, height });
    }
    let ppm = pixels_per_meter as f64;
    let side = (extent * ppm).ceil() as usize;
    let center = (lo + hi) * 0.5;
    let frame = Frame {
        origin: Vec2::new(center.x - extent / 2.0, center.y + extent / 2.0),
        ppm,
    };

    let mut img = Raster::new(side, side, NON_DRIVABLE);
    for py in 0..side {
        for px in 0..side {
            let p = frame.world(px, py);
            let color = if scene.obstacles().iter().any(|o| o.surface_query(p).0 <= 0.0) {
                OBSTACLE
            } else if point_in_polygon(p, scene.drivable()) {
                DRIVABLE
            } else {
                continue;
            };
            img.set(px as i64, py as i64, color);
        }
    }

    for p in scene.pedestrians() {
        fill_disc(&mut img, &frame, p.position, p.radius, PEDESTRIAN);
    }
    for p in scene.pedestrians() {
        let speed = p.velocity.norm();
        if speed > 1e-6 {
            let tip = p.position + p.velocity.normalized() * (p.radius + speed.min(1.0) * 0.6);
            draw_segment(&mut img, &frame, p.position, tip, PEDESTRIAN_TICK);
        }
    }
    let robot = scene.robot();
    let r = scene.robot_radius();
    fill_disc(&mut img, &frame, robot.position(), r, ROBOT);
    draw_segment(
        &mut img,
        &frame,
        robot.position(),
        robot.position() + robot.forward() * (r + 0.5),
        ROBOT_TICK,
    );
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::scenario::tests::{open_area, ped};

    fn scene(peds: Vec<crate::scenario::Pedestrian>) -> Scene {
        Scene::new(Pose2D::new(0.0, 0.0, 0.3), 0.3, peds, vec![], open_area(4.0), 1, 0).unwrap()
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = scene(vec![ped(1, 2.0, 1.0)]);
        let a = render_topdown(&s, 10, 10.0).unwrap().to_ppm();
        let b = render_topdown(&s, 10, 10.0).unwrap().to_ppm();
        assert_eq!(a, b);
        assert!(a.starts_with(b"P6\n100 100\n255\n"));
        assert_eq!(a.len(), 15 + 100 * 100 * 3);
    }

    #[test]
    fn one_pedestrian_one_red_disc() {
        let none = render_topdown(&scene(vec![]), 10, 10.0).unwrap();
        assert_eq!(none.count(PEDESTRIAN), 0);
        let one = render_topdown(&scene(vec![ped(1, 2.0, 1.0)]), 10, 10.0).unwrap();
        let red = one.count(PEDESTRIAN);
        // Disc of radius 0.3 m at 10 px/m covers about pi * 9 pixels.
        assert!(red > 20 && red < 40, "{red}");
        assert!(one.count(ROBOT) > 0);
    }

    #[test]
    fn outside_drivable_is_white() {
        let img = render_topdown(&scene(vec![]), 10, 10.0).unwrap();
        assert_eq!(img.get(0, 0), NON_DRIVABLE);
        assert_eq!(img.get(img.width() - 1, img.height() - 1), NON_DRIVABLE);
        assert_eq!(img.get(50, 20), DRIVABLE);
    }

    #[test]
    fn extent_must_cover_scene() {
        assert!(matches!(
            render_topdown(&scene(vec![]), 10, 7.9),
            Err(RenderError::ExtentTooSmall { .. })
        ));
        assert!(matches!(
            render_topdown(&scene(vec![]), 0, 10.0),
            Err(RenderError::InvalidResolution)
        ));
    }

    #[test]
    fn ppm_parses_back() {
        let img = render_topdown(&scene(vec![ped(1, 2.0, 1.0)]), 5, 9.0).unwrap();
        assert_eq!(Raster::from_ppm(&img.to_ppm()).unwrap(), img);
        assert!(Raster::from_ppm(b"P3\n1 1\n255\n").is_err());
        let png = img.to_png().unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }
}

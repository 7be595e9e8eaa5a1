//! Deterministic flat-shaded software rasterizer.
//!
//! Scene conventions:
//!
//! * The object sits at the world origin; the camera is placed at spherical
//!   coordinates `(C_Azm, C_Elv, C_Dist)` and looks at the origin.
//! * Elevations are polar angles: `0` is the `+z` pole, `π/2` the horizontal
//!   plane, `π` the `-z` pole. The same convention applies to the light.
//! * Positive `C_Roll` turns the camera counterclockwise about its viewing
//!   axis, so image content appears rotated clockwise.
//! * Background colour is HSV `(B_Hue, B_Sat, 1.0)`.
//! * One directional light; diffuse intensity equals `L_Pow` on top of an
//!   ambient floor of 0.1.
//!
//! Rendering runs at `supersample × resolution` and is box-filtered down.

pub mod mesh;
pub mod obj;
pub mod primitives;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub use mesh::{canonical_frame, center_mesh, mass_profile, scale_to_unit_sphere, FrameInfo, Mesh, MeshError, Vec3};

use crate::space::{ParamSpace, SceneParams, SpaceError};

pub const CANONICAL_RESOLUTION: usize = 224;
pub const AMBIENT: f64 = 0.1;
const NEAR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenderOptions {
    pub resolution: usize,
    pub supersample: usize,
    /// Vertical field of view in radians.
    pub fov_y: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            resolution: CANONICAL_RESOLUTION,
            supersample: 2,
            fov_y: 50f64.to_radians(),
        }
    }
}

impl RenderOptions {
    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            resolution,
            ..Self::default()
        }
    }
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Self { width, height, pixels }
    }

    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Mean squared difference over all channels.
    pub fn mse(&self, other: &Image) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height), "image sizes differ");
        let sum: f64 = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum();
        sum / self.pixels.len() as f64
    }

    pub fn rotated_180(&self) -> Image {
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for px in self.pixels.chunks_exact(3).rev() {
            pixels.extend_from_slice(px);
        }
        Image {
            width: self.width,
            height: self.height,
            pixels,
        }
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Option<Image> {
        if bytes.len() != width * height * 3 {
            return None;
        }
        Some(Image {
            width,
            height,
            pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        })
    }

    /// Binary PPM (P6).
    pub fn write_ppm(&self, mut w: impl Write) -> std::io::Result<()> {
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.to_rgb8())
    }

    pub fn save_ppm(&self, path: &Path) -> std::io::Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_ppm(std::io::BufWriter::new(f))
    }
}

/// HSV to RGB with hue in radians.
pub fn hsv_to_rgb(hue: f64, sat: f64, val: f64) -> [f32; 3] {
    let h = (hue.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU) * 6.0;
    let sector = (h.floor() as i64).rem_euclid(6);
    let f = h - h.floor();
    let p = val * (1.0 - sat);
    let q = val * (1.0 - sat * f);
    let t = val * (1.0 - sat * (1.0 - f));
    let (r, g, b) = match sector {
        0 => (val, t, p),
        1 => (q, val, p),
        2 => (p, val, t),
        3 => (p, q, val),
        4 => (t, p, val),
        _ => (val, p, q),
    };
    [r as f32, g as f32, b as f32]
}

/// Scene settings decoded from a [`SceneParams`] by parameter name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scene {
    pub bg_hue: f64,
    pub bg_sat: f64,
    pub cam_azm: f64,
    pub cam_dist: f64,
    pub cam_elv: f64,
    pub cam_roll: f64,
    pub light_azm: f64,
    pub light_elv: f64,
    pub light_pow: f64,
}

impl Scene {
    /// Looks parameters up by their canonical names. Names missing from the
    /// space fall back to the canonical defaults.
    pub fn from_params(space: &ParamSpace, p: &SceneParams) -> Result<Scene, SpaceError> {
        space.check(p)?;
        let canonical = ParamSpace::maps_v1();
        let get = |name: &str| match space.index_of(name) {
            Ok(i) => p.values[i],
            Err(_) => canonical.specs[canonical.index_of(name).expect("canonical name")].default,
        };
        Ok(Scene {
            bg_hue: get("B_Hue"),
            bg_sat: get("B_Sat"),
            cam_azm: get("C_Azm"),
            cam_dist: get("C_Dist"),
            cam_elv: get("C_Elv"),
            cam_roll: get("C_Roll"),
            light_azm: get("L_Azm"),
            light_elv: get("L_Elv"),
            light_pow: get("L_Pow"),
        })
    }

    pub fn background(&self) -> [f32; 3] {
        hsv_to_rgb(wrap_angle(self.bg_hue), self.bg_sat, 1.0)
    }
}

/// Reduces an angle modulo `2π` and snaps it to a `2π / 2^40` grid, so that
/// `θ` and `θ + 2π` render bit-identically.
pub fn wrap_angle(a: f64) -> f64 {
    const STEPS: f64 = (1u64 << 40) as f64;
    let turns = (a.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * STEPS).round();
    (turns % STEPS) / STEPS * std::f64::consts::TAU
}

fn spherical(azm: f64, elv: f64) -> Vec3 {
    Vec3::new(elv.sin() * azm.cos(), elv.sin() * azm.sin(), elv.cos())
}

struct Camera {
    pos: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
}

impl Camera {
    fn new(s: &Scene) -> Self {
        let (sa, ca) = wrap_angle(s.cam_azm).sin_cos();
        let (se, ce) = s.cam_elv.sin_cos();
        let radial = Vec3::new(se * ca, se * sa, ce);
        // tangent frame of the sphere; smooth through the poles
        let e_phi = Vec3::new(-sa, ca, 0.0);
        let e_theta = Vec3::new(ce * ca, ce * sa, -se);
        let (sr, cr) = wrap_angle(s.cam_roll).sin_cos();
        let up0 = -e_theta;
        Camera {
            pos: radial * s.cam_dist,
            right: e_phi * cr + up0 * sr,
            up: up0 * cr - e_phi * sr,
            forward: -radial,
        }
    }

    fn to_view(&self, v: &Vec3) -> Vec3 {
        let d = v - self.pos;
        Vec3::new(d.dot(&self.right), d.dot(&self.up), d.dot(&self.forward))
    }
}

/// Rendered image plus per-pixel object coverage in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: Image,
    pub coverage: Vec<f32>,
}

impl Rendered {
    /// Object footprint in pixels (sum of coverage).
    pub fn footprint(&self) -> f64 {
        self.coverage.iter().map(|&c| c as f64).sum()
    }
}

pub fn render(space: &ParamSpace, p: &SceneParams, mesh: &Mesh, opts: &RenderOptions) -> Result<Image, SpaceError> {
    Ok(render_full(space, p, mesh, opts)?.image)
}

pub fn render_full(space: &ParamSpace, p: &SceneParams, mesh: &Mesh, opts: &RenderOptions) -> Result<Rendered, SpaceError> {
    Ok(render_scene(&Scene::from_params(space, p)?, mesh, opts))
}

pub fn render_scene(scene: &Scene, mesh: &Mesh, opts: &RenderOptions) -> Rendered {
    let ss = opts.supersample.max(1);
    let w = opts.resolution * ss;
    let h = w;
    let bg = scene.background();
    let mut color = vec![[0f32; 3]; w * h];
    let mut inv_depth = vec![0f64; w * h];
    let mut hit = vec![false; w * h];

    let cam = Camera::new(scene);
    let light = spherical(wrap_angle(scene.light_azm), scene.light_elv);
    let focal = (h as f64 / 2.0) / (opts.fov_y / 2.0).tan();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);

    let view: Vec<Vec3> = mesh.vertices.iter().map(|v| cam.to_view(v)).collect();
    for (fi, face) in mesh.faces.iter().enumerate() {
        let world = [mesh.vertices[face[0]], mesh.vertices[face[1]], mesh.vertices[face[2]]];
        let n = (world[1] - world[0]).cross(&(world[2] - world[0]));
        let len = n.norm();
        if len == 0.0 {
            continue;
        }
        let mut n = n / len;
        // two-sided: orient toward the camera
        if n.dot(&(cam.pos - mesh.face_centroid(fi))) < 0.0 {
            n = -n;
        }
        let shade = (AMBIENT + scene.light_pow * n.dot(&light).max(0.0)).min(1.0) as f32;
        let rgb = [mesh.albedo[0] * shade, mesh.albedo[1] * shade, mesh.albedo[2] * shade];

        let tri = [view[face[0]], view[face[1]], view[face[2]]];
        let poly = clip_near(&tri);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<(f64, f64, f64)> = poly
            .iter()
            .map(|v| (cx + v.x / v.z * focal, cy - v.y / v.z * focal, 1.0 / v.z))
            .collect();
        for k in 1..screen.len() - 1 {
            raster_triangle(
                [screen[0], screen[k], screen[k + 1]],
                rgb,
                w,
                h,
                &mut color,
                &mut inv_depth,
                &mut hit,
            );
        }
    }

    let res = opts.resolution;
    let mut pixels = Vec::with_capacity(res * res * 3);
    let mut coverage = Vec::with_capacity(res * res);
    let norm = 1.0 / (ss * ss) as f32;
    for y in 0..res {
        for x in 0..res {
            let mut acc = [0f32; 3];
            let mut cov = 0f32;
            for sy in 0..ss {
                for sx in 0..ss {
                    let i = (y * ss + sy) * w + x * ss + sx;
                    let c = if hit[i] {
                        cov += 1.0;
                        color[i]
                    } else {
                        bg
                    };
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                }
            }
            pixels.extend_from_slice(&[acc[0] * norm, acc[1] * norm, acc[2] * norm]);
            coverage.push(cov * norm);
        }
    }
    Rendered {
        image: Image {
            width: res,
            height: res,
            pixels,
        },
        coverage,
    }
}

/// Clips a view-space triangle against `z = NEAR`.
fn clip_near(tri: &[Vec3; 3]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR;
        let b_in = b.z >= NEAR;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR - a.z) / (b.z - a.z);
            out.push(a + (b - a) * t);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn raster_triangle(
    p: [(f64, f64, f64); 3],
    rgb: [f32; 3],
    w: usize,
    h: usize,
    color: &mut [[f32; 3]],
    inv_depth: &mut [f64],
    hit: &mut [bool],
) {
    let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
    if area == 0.0 || !area.is_finite() {
        return;
    }
    let min_x = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let max_x = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(w as f64) as usize;
    let min_y = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let max_y = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(h as f64) as usize;
    let edge = |a: (f64, f64, f64), b: (f64, f64, f64), x: f64, y: f64| (b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0);
    for y in min_y..max_y {
        let py = y as f64 + 0.5;
        for x in min_x..max_x {
            let px = x as f64 + 0.5;
            let w0 = edge(p[1], p[2], px, py) / area;
            let w1 = edge(p[2], p[0], px, py) / area;
            let w2 = edge(p[0], p[1], px, py) / area;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            let z = w0 * p[0].2 + w1 * p[1].2 + w2 * p[2].2;
            let i = y * w + x;
            if !hit[i] || z > inv_depth[i] {
                hit[i] = true;
                inv_depth[i] = z;
                color[i] = rgb;
            }
        }
    }
}

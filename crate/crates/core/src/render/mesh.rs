//! Triangle meshes and the geometric normalization applied before rendering.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Radius of the sphere the furthest vertex is scaled onto.
pub const UNIT_SPHERE_RADIUS: f64 = 0.5;

/// Number of bins in the mass profile along the long axis.
pub const MASS_PROFILE_BINS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    BadIndex { face: usize, index: usize, count: usize },
    #[error("mesh has no faces")]
    Empty,
    #[error("total surface area is zero")]
    ZeroArea,
    #[error("all vertices lie at the origin")]
    Degenerate,
    #[error("obj line {line}: {message}")]
    Obj { line: usize, message: String },
    #[error("unknown primitive {0}")]
    UnknownPrimitive(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub name: String,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Diffuse surface colour, linear RGB in `[0, 1]`.
    pub albedo: [f32; 3],
}

impl Mesh {
    pub fn new(name: impl Into<String>, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::Empty);
        }
        for (fi, f) in faces.iter().enumerate() {
            for &i in f {
                if i >= vertices.len() {
                    return Err(MeshError::BadIndex {
                        face: fi,
                        index: i,
                        count: vertices.len(),
                    });
                }
            }
        }
        Ok(Self {
            name: name.into(),
            vertices,
            faces,
            albedo: [0.8, 0.8, 0.8],
        })
    }

    pub fn with_albedo(mut self, albedo: [f32; 3]) -> Self {
        self.albedo = albedo;
        self
    }

    fn corners(&self, f: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.corners(f);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn face_centroid(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.corners(f);
        (a + b + c) / 3.0
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Area-weighted surface centroid `Σ A_f c_f / Σ A_f`.
    pub fn surface_centroid(&self) -> Result<Vec3, MeshError> {
        let mut total = 0.0;
        let mut acc = Vec3::zeros();
        for f in 0..self.faces.len() {
            let a = self.face_area(f);
            total += a;
            acc += self.face_centroid(f) * a;
        }
        if total <= 0.0 {
            return Err(MeshError::ZeroArea);
        }
        Ok(acc / total)
    }

    pub fn max_vertex_norm(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Mesh {
        Mesh {
            name: self.name.clone(),
            vertices: self.vertices.iter().map(f).collect(),
            faces: self.faces.clone(),
            albedo: self.albedo,
        }
    }

    /// Axis-aligned bounding box extents.
    pub fn extents(&self) -> Vec3 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        hi - lo
    }

    /// Centers, aligns to the canonical frame and scales onto the `r = 0.5` sphere.
    pub fn normalized(&self) -> Result<(Mesh, FrameInfo), MeshError> {
        let (centered, _) = center_mesh(self)?;
        let (aligned, info) = canonical_frame(&centered, None);
        let (scaled, _) = scale_to_unit_sphere(&aligned, UNIT_SPHERE_RADIUS)?;
        Ok((scaled, info))
    }
}

/// Translates the mesh so its area-weighted surface centroid is the origin.
/// Returns the removed centroid.
pub fn center_mesh(m: &Mesh) -> Result<(Mesh, Vec3), MeshError> {
    let c = m.surface_centroid()?;
    Ok((m.map_vertices(|v| v - c), c))
}

/// Uniformly scales so the furthest vertex lies at distance `r`; returns the factor.
pub fn scale_to_unit_sphere(m: &Mesh, r: f64) -> Result<(Mesh, f64), MeshError> {
    let far = m.max_vertex_norm();
    if far <= 0.0 {
        return Err(MeshError::Degenerate);
    }
    let s = r / far;
    Ok((m.map_vertices(|v| v * s), s))
}

/// What [`canonical_frame`] did to a mesh.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameInfo {
    /// Source axis index for (long, sides, up).
    pub axis_order: [usize; 3],
    /// AABB extents of the source axes.
    pub extents: [f64; 3],
    /// Two or more extents were equal; order fell back to x, y, z priority.
    pub extent_tie: bool,
    pub up_negated: bool,
    pub sides_flipped: bool,
    pub anchor_flipped: bool,
    /// Row-major map from source to canonical coordinates.
    pub transform: [[f64; 3]; 3],
}

fn third_central_moment(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean).powi(3)).sum::<f64>() / n as f64
}

/// Vertex-count histogram along the canonical long axis (x), normalized to
/// unit mass, over the mesh's own `[min, max]` range.
pub fn mass_profile(m: &Mesh, bins: usize) -> Vec<f64> {
    let (lo, hi) = m
        .vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v.x), hi.max(v.x)));
    let mut hist = vec![0.0; bins];
    let width = hi - lo;
    for v in &m.vertices {
        let t = if width > 0.0 { (v.x - lo) / width } else { 0.5 };
        let b = ((t * bins as f64).floor() as usize).min(bins - 1);
        hist[b] += 1.0;
    }
    let total: f64 = hist.iter().sum();
    if total > 0.0 {
        hist.iter_mut().for_each(|h| *h /= total);
    }
    hist
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Rotates a centered mesh into its canonical (long, sides, up) frame.
///
/// 1. Source axes are sorted by descending AABB extent (ties: x, y, z).
/// 2. The up axis is negated when the third central moment of the vertex
///    projections onto it is positive.
/// 3. The sides axis is flipped if needed to keep the frame right-handed.
/// 4. With an `anchor` profile, a 180° turn about up is applied when the
///    mirrored long-axis mass profile is strictly closer to the anchor.
pub fn canonical_frame(m: &Mesh, anchor: Option<&[f64]>) -> (Mesh, FrameInfo) {
    let ext = m.extents();
    let mut order = [0usize, 1, 2];
    // stable sort keeps x before y before z on equal extents
    order.sort_by(|&a, &b| ext[b].partial_cmp(&ext[a]).unwrap_or(std::cmp::Ordering::Equal));
    let extent_tie = ext[0] == ext[1] || ext[1] == ext[2] || ext[0] == ext[2];

    let mut t = Matrix3::zeros();
    for (row, &src) in order.iter().enumerate() {
        t[(row, src)] = 1.0;
    }
    let up_src = order[2];
    let m3 = third_central_moment(m.vertices.iter().map(|v| v[up_src]));
    let up_negated = m3 > 0.0;
    if up_negated {
        t[(2, up_src)] = -1.0;
    }
    let sides_flipped = t.determinant() < 0.0;
    if sides_flipped {
        t[(1, order[1])] *= -1.0;
    }
    let mut out = m.map_vertices(|v| t * v);

    let mut anchor_flipped = false;
    if let Some(anchor) = anchor {
        let profile = mass_profile(&out, anchor.len());
        let mirrored: Vec<f64> = profile.iter().rev().copied().collect();
        if l2(&mirrored, anchor) < l2(&profile, anchor) {
            anchor_flipped = true;
            let flip = Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0));
            t = flip * t;
            out = out.map_vertices(|v| flip * v);
        }
    }

    let mut transform = [[0.0; 3]; 3];
    for (r, row) in transform.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = t[(r, c)];
        }
    }
    let info = FrameInfo {
        axis_order: order,
        extents: [ext[0], ext[1], ext[2]],
        extent_tie,
        up_negated,
        sides_flipped,
        anchor_flipped,
        transform,
    };
    (out, info)
}

//! Procedural test meshes. All are returned in their natural coordinates;
//! call [`Mesh::normalized`] before rendering.

use std::f64::consts::{PI, TAU};

use super::mesh::{Mesh, MeshError, Vec3};

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 10] = [
    "sphere",
    "cube",
    "torus",
    "cone",
    "cylinder",
    "octahedron",
    "tetrahedron",
    "pyramid",
    "slab",
    "rod",
];

pub fn builtin(name: &str) -> Result<Mesh, MeshError> {
    let (mesh, albedo) = match name {
        "sphere" => (uv_sphere(24, 12), [0.85, 0.25, 0.2]),
        "cube" => (cube(), [0.2, 0.55, 0.85]),
        "torus" => (torus(1.0, 0.35, 28, 12), [0.9, 0.75, 0.2]),
        "cone" => (cone(24), [0.3, 0.75, 0.3]),
        "cylinder" => (cylinder(24), [0.7, 0.35, 0.8]),
        "octahedron" => (octahedron(), [0.95, 0.5, 0.1]),
        "tetrahedron" => (tetrahedron(), [0.25, 0.8, 0.8]),
        "pyramid" => (pyramid(), [0.6, 0.45, 0.3]),
        "slab" => (cuboid(2.0, 1.2, 0.3), [0.5, 0.5, 0.9]),
        "rod" => (cylinder(16).map_vertices(|v| Vec3::new(v.x * 0.05, v.y * 0.05, v.z)), [0.15, 0.15, 0.15]),
        other => return Err(MeshError::UnknownPrimitive(other.to_string())),
    };
    let mut mesh = mesh.with_albedo(albedo);
    mesh.name = name.to_string();
    Ok(mesh)
}

fn build(name: &str, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Mesh {
    Mesh::new(name, vertices, faces).expect("procedural mesh indices are valid")
}

/// Latitude-longitude sphere of radius 1.
pub fn uv_sphere(segments: usize, rings: usize) -> Mesh {
    let mut v = vec![Vec3::new(0.0, 0.0, 1.0)];
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = TAU * s as f64 / segments as f64;
            v.push(Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        }
    }
    let south = v.len();
    v.push(Vec3::new(0.0, 0.0, -1.0));
    let ring = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut f = Vec::new();
    for s in 0..segments {
        f.push([0, ring(1, s), ring(1, s + 1)]);
        f.push([south, ring(rings - 1, s + 1), ring(rings - 1, s)]);
    }
    for r in 1..rings - 1 {
        for s in 0..segments {
            let (a, b, c, d) = (ring(r, s), ring(r, s + 1), ring(r + 1, s), ring(r + 1, s + 1));
            f.push([a, c, d]);
            f.push([a, d, b]);
        }
    }
    build("sphere", v, f)
}

/// Box with the given full extents, centered at the origin.
pub fn cuboid(ex: f64, ey: f64, ez: f64) -> Mesh {
    let h = Vec3::new(ex / 2.0, ey / 2.0, ez / 2.0);
    let v: Vec<Vec3> = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            )
        })
        .collect();
    let quads = [
        [0, 2, 3, 1],
        [4, 5, 7, 6],
        [0, 1, 5, 4],
        [2, 6, 7, 3],
        [0, 4, 6, 2],
        [1, 3, 7, 5],
    ];
    let f = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
    build("cuboid", v, f)
}

/// The cube `[-1, 1]^3`.
pub fn cube() -> Mesh {
    let mut m = cuboid(2.0, 2.0, 2.0);
    m.name = "cube".into();
    m
}

pub fn torus(major: f64, minor: f64, segments: usize, sides: usize) -> Mesh {
    let mut v = Vec::with_capacity(segments * sides);
    for i in 0..segments {
        let u = TAU * i as f64 / segments as f64;
        for j in 0..sides {
            let w = TAU * j as f64 / sides as f64;
            let r = major + minor * w.cos();
            v.push(Vec3::new(r * u.cos(), r * u.sin(), minor * w.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % segments) * sides + j % sides;
    let mut f = Vec::new();
    for i in 0..segments {
        for j in 0..sides {
            f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build("torus", v, f)
}

/// Cone with unit base radius at `z = -1` and apex at `z = 1`, capped.
pub fn cone(segments: usize) -> Mesh {
    let mut v: Vec<Vec3> = (0..segments)
        .map(|s| {
            let a = TAU * s as f64 / segments as f64;
            Vec3::new(a.cos(), a.sin(), -1.0)
        })
        .collect();
    let apex = v.len();
    v.push(Vec3::new(0.0, 0.0, 1.0));
    let base = v.len();
    v.push(Vec3::new(0.0, 0.0, -1.0));
    let mut f = Vec::new();
    for s in 0..segments {
        let n = (s + 1) % segments;
        f.push([s, n, apex]);
        f.push([n, s, base]);
    }
    build("cone", v, f)
}

/// Capped cylinder of radius 1 spanning `z ∈ [-1, 1]`.
pub fn cylinder(segments: usize) -> Mesh {
    let mut v = Vec::new();
    for z in [-1.0, 1.0] {
        for s in 0..segments {
            let a = TAU * s as f64 / segments as f64;
            v.push(Vec3::new(a.cos(), a.sin(), z));
        }
    }
    let bottom = v.len();
    v.push(Vec3::new(0.0, 0.0, -1.0));
    let top = v.len();
    v.push(Vec3::new(0.0, 0.0, 1.0));
    let mut f = Vec::new();
    for s in 0..segments {
        let n = (s + 1) % segments;
        let (a, b, c, d) = (s, n, s + segments, n + segments);
        f.push([a, b, d]);
        f.push([a, d, c]);
        f.push([b, a, bottom]);
        f.push([c, d, top]);
    }
    build("cylinder", v, f)
}

pub fn octahedron() -> Mesh {
    let v = vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-1.0, 0.0, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        Vec3::new(0.0, -1.0, 0.0),
        Vec3::new(0.0, 0.0, 1.0),
        Vec3::new(0.0, 0.0, -1.0),
    ];
    let f = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    build("octahedron", v, f)
}

pub fn tetrahedron() -> Mesh {
    let v = vec![
        Vec3::new(1.0, 1.0, 1.0),
        Vec3::new(1.0, -1.0, -1.0),
        Vec3::new(-1.0, 1.0, -1.0),
        Vec3::new(-1.0, -1.0, 1.0),
    ];
    build("tetrahedron", v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

/// Square pyramid, base side 2 at `z = -0.6`, apex at `z = 1`.
pub fn pyramid() -> Mesh {
    let v = vec![
        Vec3::new(-1.0, -1.0, -0.6),
        Vec3::new(1.0, -1.0, -0.6),
        Vec3::new(1.0, 1.0, -0.6),
        Vec3::new(-1.0, 1.0, -0.6),
        Vec3::new(0.0, 0.0, 1.0),
    ];
    let f = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4], [0, 2, 1], [0, 3, 2]];
    build("pyramid", v, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_builtins_normalize() {
        for name in BUILTIN_NAMES {
            let m = builtin(name).unwrap();
            let (n, _) = m.normalized().unwrap();
            assert!(n.surface_centroid().unwrap().norm() < 1e-9, "{name}");
            assert!((n.max_vertex_norm() - 0.5).abs() < 1e-9, "{name}");
        }
        assert!(builtin("teapot").is_err());
    }

    #[test]
    fn sphere_area_close_to_analytic() {
        let a = uv_sphere(64, 32).surface_area();
        assert!((a - 4.0 * PI).abs() / (4.0 * PI) < 0.01);
    }
}

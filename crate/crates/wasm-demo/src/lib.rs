//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes and returns plain numbers, strings and typed arrays.
//! Errors come back as strings.

use maps_core::oracle::{LinearOracle, QuadraticOracle};
use maps_core::render::{primitives, render};
use maps_core::{seed, ParamSpace, RenderOptions, SceneParams};
use rand::Rng;
use wasm_bindgen::prelude::*;

fn space() -> ParamSpace {
    ParamSpace::maps_v1()
}

/// The scene space as JSON: `[{name, kind, low, high, default}, ...]`.
#[wasm_bindgen]
pub fn space_json() -> String {
    serde_json::to_string(&space().specs).expect("specs serialize")
}

/// Names of the procedural meshes, as a JSON array.
#[wasm_bindgen]
pub fn mesh_names() -> String {
    serde_json::to_string(&primitives::BUILTIN_NAMES).expect("names serialize")
}

/// Renders `mesh` at `params` into a square RGBA buffer for `ImageData`.
#[wasm_bindgen]
pub fn render_rgba(mesh: &str, params: &[f64], resolution: usize) -> Result<Vec<u8>, String> {
    let s = space();
    let m = primitives::builtin(mesh)
        .map_err(|e| e.to_string())?
        .normalized()
        .map_err(|e| e.to_string())?
        .0;
    let img = render(&s, &SceneParams::new(params.to_vec()), &m, &RenderOptions::with_resolution(resolution)).map_err(|e| e.to_string())?;
    Ok(img.to_rgb8().chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect())
}

/// Class-0 probability of a synthetic oracle over a `steps x steps` grid of
/// two parameters, row-major with `a0` varying slowest. Other parameters sit
/// at their defaults. `kind` is `linear` or `quadratic`.
#[wasm_bindgen]
pub fn sweep_probs(kind: &str, oracle_seed: u32, a0: &str, a1: &str, steps: usize) -> Result<Vec<f64>, String> {
    let s = space();
    let margin: Box<dyn Fn(&SceneParams) -> f64> = match kind {
        "linear" => {
            let o = LinearOracle::random("demo", &s, 0.0, oracle_seed as u64);
            Box::new(move |p| o.margin_at(p))
        }
        "quadratic" => {
            let o = QuadraticOracle::random("demo", &s, 0.0, oracle_seed as u64);
            Box::new(move |p| o.margin_at(p))
        }
        _ => return Err(format!("unknown oracle kind {kind}")),
    };
    let grid = s.grid_sweep(&[a0, a1], steps, &s.default_params()).map_err(|e| e.to_string())?;
    Ok(grid.iter().map(|p| 1.0 / (1.0 + (-margin(p)).exp())).collect())
}

/// `n` design points projected onto two parameters, as interleaved `(u0, u1)`
/// pairs in unit coordinates. `design` is `lhs` or `random`.
#[wasm_bindgen]
pub fn design_points(design: &str, n: usize, seed: u32, a0: &str, a1: &str) -> Result<Vec<f64>, String> {
    let s = space();
    let (i0, i1) = (s.index_of(a0).map_err(|e| e.to_string())?, s.index_of(a1).map_err(|e| e.to_string())?);
    let points = match design {
        "lhs" => s.lhs_sample(n, seed as u64).map_err(|e| e.to_string())?,
        "random" => {
            let mut rng = seed::rng(seed as u64);
            (0..n)
                .map(|_| s.denormalize(&(0..s.dim()).map(|_| rng.random::<f64>()).collect::<Vec<_>>()))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?
        }
        _ => return Err(format!("unknown design {design}")),
    };
    let mut out = Vec::with_capacity(2 * n);
    for p in &points {
        let u = s.normalize(p).map_err(|e| e.to_string())?;
        out.extend([u[i0], u[i1]]);
    }
    Ok(out)
}

use maps_wasm_demo::*;

#[test]
fn space_and_meshes_are_listed() {
    let specs: serde_json::Value = serde_json::from_str(&space_json()).unwrap();
    assert_eq!(specs.as_array().unwrap().len(), 9);
    assert_eq!(specs[0]["name"], "B_Hue");
    let names: Vec<String> = serde_json::from_str(&mesh_names()).unwrap();
    assert!(names.contains(&"sphere".to_string()));
}

#[test]
fn render_fills_an_rgba_buffer() {
    let specs: Vec<serde_json::Value> = serde_json::from_str(&space_json()).unwrap();
    let params: Vec<f64> = specs.iter().map(|s| s["default"].as_f64().unwrap()).collect();
    let px = render_rgba("torus", &params, 16).unwrap();
    assert_eq!(px.len(), 16 * 16 * 4);
    assert!(px.chunks(4).all(|p| p[3] == 255));
    assert!(render_rgba("teapot", &params, 16).is_err());
    assert!(render_rgba("torus", &params[..3], 16).is_err());
}

#[test]
fn sweep_is_a_probability_grid() {
    let g = sweep_probs("quadratic", 3, "C_Azm", "C_Dist", 10).unwrap();
    assert_eq!(g.len(), 100);
    assert!(g.iter().all(|p| (0.0..=1.0).contains(p)));
    assert!(g.iter().any(|&p| (p - g[0]).abs() > 1e-3));
    assert_eq!(g, sweep_probs("quadratic", 3, "C_Azm", "C_Dist", 10).unwrap());
    assert!(sweep_probs("cubic", 3, "C_Azm", "C_Dist", 10).is_err());
}

#[test]
fn lhs_projection_hits_every_stratum() {
    let n = 40;
    let pts = design_points("lhs", n, 5, "B_Hue", "L_Pow").unwrap();
    for axis in 0..2 {
        let mut seen = vec![0; n];
        for pair in pts.chunks(2) {
            seen[((pair[axis] * n as f64) as usize).min(n - 1)] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
    let r = design_points("random", n, 5, "B_Hue", "L_Pow").unwrap();
    assert_eq!(r.len(), 2 * n);
    assert!(r.iter().all(|u| (0.0..=1.0).contains(u)));
}

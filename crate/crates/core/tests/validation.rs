use std::f64::consts::TAU;

use maps_core::cmaes::{constrained_revalidate, validate_mesh, RangeOverride, StopReason, ValidationConfig, ValidationStatus};
use maps_core::oracle::{LinearOracle, LogitVector, Oracle, OracleDescriptor, OracleError, OracleInput, Query, TemplateClassifier};
use maps_core::render::{self, hsv_to_rgb, primitives, Mesh};
use maps_core::{Image, ParamSpace, RenderOptions, SceneParams};

fn mesh(name: &str) -> Mesh {
    primitives::builtin(name).unwrap().normalized().unwrap().0
}

/// Class 0 is the mesh seen at `star`; class 1 is the same mesh at unrelated settings.
fn star_classifier(space: &ParamSpace, m: &Mesh, star: &SceneParams, opts: &RenderOptions, seed: u64) -> TemplateClassifier {
    let target = render::render(space, star, m, opts).unwrap();
    let others = space.lhs_sample(8, seed).unwrap().iter().map(|p| render::render(space, p, m, opts).unwrap()).collect();
    TemplateClassifier::new("star", vec![vec![target], others]).unwrap()
}

#[test]
fn known_optimum_is_recognized_for_every_procedural_mesh() {
    let space = ParamSpace::maps_v1();
    let opts = RenderOptions::with_resolution(32);
    let stars = space.lhs_sample(primitives::BUILTIN_NAMES.len(), 7).unwrap();
    for (k, name) in primitives::BUILTIN_NAMES.iter().enumerate() {
        let m = mesh(name);
        let mut o = star_classifier(&space, &m, &stars[k], &opts, 100 + k as u64);
        let out = validate_mesh(&space, &m, &mut o, &opts, &ValidationConfig::new(9, 0, 3)).unwrap();
        assert_eq!(out.status, ValidationStatus::Recognized, "{name}");
        assert!(out.restarts_used <= 10);
        let best = out.best_params.unwrap();
        let z = o.classify(&render::render(&space, &best, &m, &opts).unwrap()).unwrap();
        assert_eq!(z.top1(), Some(0), "{name}: reported optimum must reproduce");
    }
}

#[test]
fn validation_is_deterministic() {
    let space = ParamSpace::maps_v1();
    let opts = RenderOptions::with_resolution(24);
    let m = mesh("torus");
    let star = space.lhs_sample(1, 11).unwrap().remove(0);
    let run = || {
        let mut o = star_classifier(&space, &m, &star, &opts, 12);
        serde_json::to_string(&validate_mesh(&space, &m, &mut o, &opts, &ValidationConfig::new(9, 0, 21)).unwrap()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn indistinguishable_classes_exhaust_the_budget() {
    let space = ParamSpace::maps_v1();
    let opts = RenderOptions::with_resolution(8);
    let m = mesh("cube");
    let img = Image::filled(8, 8, [0.5; 3]);
    let mut o = TemplateClassifier::new("twins", vec![vec![img.clone()], vec![img]]).unwrap();
    let cfg = ValidationConfig::new(9, 0, 2);
    let out = validate_mesh(&space, &m, &mut o, &opts, &cfg).unwrap();
    assert_eq!(out.status, ValidationStatus::Failure);
    assert_eq!(out.generations_used, cfg.k_restarts * cfg.t_max);
    assert_eq!(out.evaluations, cfg.k_restarts * cfg.t_max * cfg.lambda);
    assert_eq!(out.traces.len(), 10);
    assert!(out.traces.iter().all(|t| t.stop == StopReason::Budget && t.best_log_prob.len() == 100));
}

/// Records every configuration it is asked about.
struct Recorder {
    inner: LinearOracle,
    seen: Vec<SceneParams>,
}

impl Oracle for Recorder {
    fn descriptor(&self) -> &OracleDescriptor {
        self.inner.descriptor()
    }
    fn input(&self) -> OracleInput {
        OracleInput::Params
    }
    fn query(&mut self, batch: &[Query<'_>]) -> Result<Vec<LogitVector>, OracleError> {
        self.seen.extend(batch.iter().map(|q| q.params.clone()));
        self.inner.query(batch)
    }
}

#[test]
fn every_queried_configuration_is_inside_the_box() {
    let space = ParamSpace::maps_v1();
    // Class 0 gains with C_Dist, so the optimum sits on the box boundary and
    // unclamped samples leave the cube often.
    let mut w = vec![0.0; 13];
    let dist = space.feature_layout().columns.iter().position(|c| c.param == 3).unwrap();
    w[dist] = 5.0;
    let mut o = Recorder {
        inner: LinearOracle::new("edge", &space, w, 0.0, 0).unwrap(),
        seen: vec![],
    };
    let mut cfg = ValidationConfig::new(9, 0, 8);
    cfg.sigma0 = 0.6;
    let out = validate_mesh(&space, &mesh("cube"), &mut o, &RenderOptions::with_resolution(8), &cfg).unwrap();
    assert!(!o.seen.is_empty());
    assert_eq!(o.seen.len(), out.evaluations);
    for p in &o.seen {
        space.check(p).unwrap();
    }
    assert!(o.seen.iter().any(|p| p.values[3] == 8.0 || p.values[3] == 1.0), "box edge was reached");
}

fn rod_close_up_classifier(space: &ParamSpace, rod: &Mesh, opts: &RenderOptions) -> TemplateClassifier {
    let near = space.with_range("C_Dist", 0.2, 8.0).unwrap();
    let mut close = near.default_params();
    close.values[near.index_of("C_Dist").unwrap()] = 0.3;
    let target = render::render(&near, &close, rod, opts).unwrap();
    let r = opts.resolution;
    let mut backgrounds: Vec<Image> = (0..12)
        .flat_map(|h| (0..4).map(move |s| Image::filled(r, r, hsv_to_rgb(h as f64 / 12.0 * TAU, s as f64 / 3.0, 1.0))))
        .collect();
    backgrounds.push(Image::filled(r, r, [0.02; 3]));
    TemplateClassifier::new("rod-close-up", vec![vec![target], backgrounds]).unwrap()
}

#[test]
fn close_range_override_rescues_an_elongated_mesh() {
    let space = ParamSpace::maps_v1();
    let opts = RenderOptions::with_resolution(32);
    let rod = mesh("rod");
    let mut o = rod_close_up_classifier(&space, &rod, &opts);
    let ov = [RangeOverride { name: "C_Dist".into(), low: 0.2, high: 1.0 }];
    for seed in 0..3 {
        let wide = validate_mesh(&space, &rod, &mut o, &opts, &ValidationConfig::new(9, 0, seed)).unwrap();
        assert_eq!(wide.status, ValidationStatus::Failure, "seed {seed}");
        let narrow = constrained_revalidate(&space, &rod, &mut o, &opts, &wide, &ov).unwrap();
        assert_eq!(narrow.status, ValidationStatus::Recognized, "seed {seed}");
        assert_eq!(narrow.overrides, ov.to_vec());
        let d = narrow.best_params.unwrap().values[3];
        assert!((0.2..=1.0).contains(&d));
    }
}

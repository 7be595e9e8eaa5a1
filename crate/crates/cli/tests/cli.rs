use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

use maps_core::oracle::protocol::{stub_logits, Message};
use maps_core::oracle::LinearOracle;
use maps_core::render::{self, primitives};
use maps_core::{ParamSpace, RenderOptions, SceneParams};

const BIN: &str = env!("CARGO_BIN_EXE_maps");

fn maps(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

#[track_caller]
fn ok(args: &[&str]) -> Output {
    let out = maps(args);
    assert!(out.status.success(), "maps {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[track_caller]
fn fails(args: &[&str]) -> String {
    let out = maps(args);
    assert!(!out.status.success(), "maps {args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const ORACLES: [&str; 6] = ["--oracle", "builtin:linear:1", "--oracle", "builtin:linear:2", "--oracle", "builtin:quadratic:3"];
const MESHES: [&str; 4] = ["--mesh", "sphere", "--mesh", "cube"];

fn args<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(ORACLES.iter()).chain(MESHES.iter()).chain(tail).copied().collect()
}

/// validate → sample → fit → compare into `root`.
fn pipeline(root: &Path, n: &str) -> [PathBuf; 4] {
    let dirs = ["v", "s", "f", "c"].map(|d| root.join(d));
    ok(&args(&["validate", "--out", s(&dirs[0])], &[]));
    ok(&args(&["sample", "--out", s(&dirs[1]), "--n", n, "--seed", "5"], &[]));
    ok(&["fit", "--input", s(&dirs[1]), "--out", s(&dirs[2]), "--sweep", "50,100"]);
    ok(&["compare", "--input", s(&dirs[2]), "--records", s(&dirs[1]), "--out", s(&dirs[3])]);
    dirs
}

#[test]
fn pipeline_outputs_chain_together() {
    let tmp = tempfile::tempdir().unwrap();
    let [v, smp, f, c] = pipeline(tmp.path(), "120");

    let summary = json(&v.join("summary.json"));
    assert_eq!(summary["overall"]["meshes"], 6);
    assert_eq!(summary["by_model"].as_array().unwrap().len(), 3);
    assert_eq!(jsonl(&v.join("validations.jsonl")).len(), 6);

    let manifest = json(&smp.join("manifest.json"));
    let run_id = manifest["run_id"].as_str().unwrap();
    assert_eq!(manifest["renderer"], maps_core::RENDERER_ID);
    assert_eq!(manifest["box_rule"], maps_core::cmaes::BOX_RULE);
    assert_eq!(manifest["score"], "margin");
    assert_eq!(manifest["oracles"][0]["id"], "builtin:linear:1");
    let records = jsonl(&smp.join("records.jsonl"));
    assert_eq!(records.len(), 3 * 2 * 120);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["seq"], i as u64);
        assert_eq!(r["run"], run_id);
        assert_eq!(r["params"].as_array().unwrap().len(), 9);
        assert_eq!(r["top1_correct"], r["margin"].as_f64().unwrap() > 0.0);
    }
    // Paired designs: every oracle sees the same scenes on a mesh.
    assert_eq!(records[0]["params"], records[240]["params"]);
    assert_ne!(records[0]["params"], records[120]["params"]);

    let profiles = jsonl(&f.join("profiles.jsonl"));
    assert_eq!(profiles.len(), 6);
    assert_eq!(json(&f.join("manifest.json"))["inputs"][0]["run_id"], run_id);
    let csv = fs::read_to_string(f.join("profiles.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 6 * 9);
    assert!(csv.starts_with("run,model_id,mesh_id,parameter,"));
    let sweeps = jsonl(&f.join("convergence.jsonl"));
    assert_eq!(sweeps.len(), 6);
    assert_eq!(sweeps[0]["linear"]["points"].as_array().unwrap().len(), 2);

    let report = json(&c.join("compare.json"));
    assert_eq!(report["models"].as_array().unwrap().len(), 3);
    assert_eq!(report["tree"]["merges"].as_array().unwrap().len(), 2);
    assert_eq!(report["clusters"].as_array().unwrap().len(), 3);
    assert_eq!(report["coefficients"][0]["heatmap"]["values"].as_array().unwrap().len(), 2);
    let d = fs::read_to_string(c.join("distances.csv")).unwrap();
    assert_eq!(d.lines().count(), 4);
    let acc = json(&c.join("accuracy.json"));
    let cells = acc["matrix"]["values"].as_array().unwrap();
    assert_eq!(cells.len(), 3);
    // Accuracy cell = share of positive margins among that cell's records.
    let hits = records[..120].iter().filter(|r| r["top1_correct"] == true).count();
    assert_eq!(cells[0][0].as_f64().unwrap(), hits as f64 / 120.0);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn reruns_are_byte_identical_except_manifest_time() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = pipeline(a.path(), "100");
    let db = pipeline(b.path(), "100");
    for (x, y) in da.iter().zip(&db) {
        let (fx, fy) = (files(x), files(y));
        assert_eq!(fx.len(), fy.len());
        for ((nx, bx), (ny, by)) in fx.iter().zip(&fy) {
            assert_eq!(nx, ny);
            if nx == "manifest.json" {
                let strip = |v: &[u8]| {
                    let mut m: Value = serde_json::from_slice(v).unwrap();
                    m["created_unix"] = Value::Null;
                    for i in m["inputs"].as_array_mut().unwrap() {
                        i["path"] = Value::Null;
                    }
                    m
                };
                assert_eq!(strip(bx), strip(by));
            } else {
                assert!(bx == by, "{} differs between reruns", x.join(nx).display());
            }
        }
    }
}

#[test]
fn interrupted_sample_resumes_to_the_same_records() {
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full");
    let part = tmp.path().join("part");
    let base = args(&["sample", "--n", "40"], &[]);
    let with_out = |dir: &Path, extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = base.iter().map(|s| s.to_string()).collect();
        v.extend(["--out".to_string(), s(dir).to_string()]);
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let run = |v: Vec<String>| maps(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(run(with_out(&full, &[])).status.success());
    let records = fs::read_to_string(full.join("records.jsonl")).unwrap();

    // Simulate a crash mid-write: 97 complete rows and half of the next.
    fs::create_dir(&part).unwrap();
    fs::copy(full.join("manifest.json"), part.join("manifest.json")).unwrap();
    let cut: usize = records.split_inclusive('\n').take(97).map(str::len).sum();
    let torn = &records[..cut + 30];
    fs::write(part.join("records.jsonl"), torn).unwrap();

    let again = run(with_out(&part, &[]));
    assert!(!again.status.success(), "rerun without --resume must refuse");
    assert!(run(with_out(&part, &["--resume"])).status.success());
    assert_eq!(fs::read_to_string(part.join("records.jsonl")).unwrap(), records);

    // Resuming a finished run adds nothing.
    assert!(run(with_out(&part, &["--resume"])).status.success());
    assert_eq!(fs::read_to_string(part.join("records.jsonl")).unwrap(), records);

    // A different configuration cannot resume into this directory.
    let mut other = with_out(&part, &["--resume"]);
    other.extend(["--seed".into(), "9".into()]);
    let out = run(other);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("holds run"));
}

#[test]
fn fit_refuses_an_incomplete_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let smp = tmp.path().join("s");
    ok(&args(&["sample", "--n", "30", "--out", s(&smp)], &[]));
    let text = fs::read_to_string(smp.join("records.jsonl")).unwrap();
    let kept: String = text.split_inclusive('\n').take(50).collect();
    fs::write(smp.join("records.jsonl"), kept).unwrap();
    let err = fails(&["fit", "--input", s(&smp), "--out", s(&tmp.path().join("f"))]);
    assert!(err.contains("50 of 180 records"), "{err}");
}

fn stub_exec() -> String {
    format!("exec:{BIN} stub-oracle --classes 3 --max-batch 5")
}

/// In-process stub logits for the scene the CLI rendered.
fn expected_stub(record: &Value, mesh: &str, resolution: usize) -> Vec<f64> {
    let space = ParamSpace::maps_v1();
    let m = primitives::builtin(mesh).unwrap().normalized().unwrap().0;
    let p: SceneParams = serde_json::from_value(record["params"].clone()).unwrap();
    let img = render::render(&space, &p, &m, &RenderOptions::with_resolution(resolution)).unwrap();
    stub_logits(&img.to_rgb8(), 3)
}

#[test]
fn exec_oracle_logits_match_in_process_stub() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let oracle = stub_exec();
    ok(&["sample", "--oracle", &oracle, "--mesh", "torus", "--n", "12", "--resolution", "16", "--logits", "--batch", "7", "--out", s(&out)]);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["oracles"][0]["kind"], "external");
    assert_eq!(manifest["oracles"][0]["class_count"], 3);
    let records = jsonl(&out.join("records.jsonl"));
    assert_eq!(records.len(), 12);
    for r in &records {
        let got: Vec<f64> = serde_json::from_value(r["logits"].clone()).unwrap();
        let want = expected_stub(r, "torus", 16);
        assert_eq!(got, want);
        let m = want[0] - want[1].max(want[2]);
        assert_eq!(r["margin"].as_f64().unwrap(), m);
    }
}

#[test]
fn tcp_oracle_round_trip() {
    let mut server = Command::new(BIN)
        .args(["stub-oracle", "--classes", "3", "--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().rsplit(' ').next().unwrap().to_string();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let oracle = format!("tcp:{addr}");
    let res = maps(&["sample", "--oracle", &oracle, "--mesh", "cone", "--n", "6", "--resolution", "12", "--logits", "--out", s(&out)]);
    server.kill().unwrap();
    server.wait().unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for r in jsonl(&out.join("records.jsonl")) {
        let got: Vec<f64> = serde_json::from_value(r["logits"].clone()).unwrap();
        assert_eq!(got, expected_stub(&r, "cone", 12));
    }
}

#[test]
fn silent_exec_oracle_times_out() {
    let tmp = tempfile::tempdir().unwrap();
    let ready = Message::Ready {
        class_count: 2,
        max_batch: 4,
        id: "mute".into(),
    }
    .to_line();
    let script = format!("exec:read hello; printf '%s\\n' '{}'; sleep 5", ready.trim_end());
    let out = Command::new(BIN)
        .args(["sample", "--oracle", &script, "--mesh", "cube", "--n", "2", "--resolution", "8", "--out", s(&tmp.path().join("s"))])
        .env("MAPS_ORACLE_TIMEOUT_MS", "300")
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("timed out after 300 ms"), "{err}");
}

#[test]
fn validate_with_template_oracle_and_override() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    ok(&[
        "validate", "--oracle", "builtin:templates:4", "--mesh", "pyramid", "--mesh", "slab", "--resolution", "24", "--seed", "2", "--override",
        "C_Dist=1:2", "--out", s(&out),
    ]);
    let rows = jsonl(&out.join("validations.jsonl"));
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r["outcome"]["status"], "recognized", "{}", r["mesh"]);
        assert!(r.get("revalidation").is_none(), "override only applies to failures");
        assert_eq!(r["outcome"]["config"]["lambda"], 6);
    }
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["overall"]["recognized"], 2);
}

#[test]
fn config_file_is_layered_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "oracle = [\"builtin:linear:3\"]\nmesh = [\"cube\"]\nn = 5\nseed = 8\n[sample]\nlogits = true\n").unwrap();
    let a = tmp.path().join("a");
    ok(&["sample", "--config", s(&cfg), "--n", "7", "--out", s(&a)]);
    let rows = jsonl(&a.join("records.jsonl"));
    assert_eq!(rows.len(), 7);
    assert!(rows[0].get("logits").is_some());
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["seed"], 8);
    assert_eq!(m["config"]["common"]["n"], 7);

    // The same settings given as flags produce the same run.
    let b = tmp.path().join("b");
    ok(&["sample", "--oracle", "builtin:linear:3", "--mesh", "cube", "--n", "7", "--seed", "8", "--logits", "--out", s(&b)]);
    assert_eq!(json(&b.join("manifest.json"))["run_id"], m["run_id"]);
    assert_eq!(fs::read(a.join("records.jsonl")).unwrap(), fs::read(b.join("records.jsonl")).unwrap());

    fs::write(&cfg, "nn = 5\n").unwrap();
    assert!(fails(&["sample", "--config", s(&cfg), "--oracle", "builtin:linear", "--out", s(&tmp.path().join("c"))]).contains("nn"));
}

#[test]
fn sweep_grid_matches_direct_softmax() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("g");
    ok(&["sweep2d", "--oracle", "builtin:linear:6", "--mesh", "sphere", "--axes", "B_Hue,C_Dist", "--steps", "5", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("grid.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][0], "B_Hue\\C_Dist");
    let space = ParamSpace::maps_v1();
    let o = LinearOracle::random("x", &space, 0.1, 6);
    let (hue, dist) = (space.index_of("B_Hue").unwrap(), space.index_of("C_Dist").unwrap());
    for row in &rows[1..] {
        assert_eq!(row.len(), 6);
        for (c, cell) in row[1..].iter().enumerate() {
            let mut p = space.default_params();
            p.values[hue] = row[0].parse().unwrap();
            p.values[dist] = rows[0][c + 1].parse().unwrap();
            let want = 1.0 / (1.0 + (-o.margin_at(&p)).exp());
            let got: f64 = cell.parse().unwrap();
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }
    // C_Dist is linear, so both endpoints appear; hue is circular and does not repeat 2π.
    assert_eq!(rows[0][1..].first().unwrap().parse::<f64>().unwrap(), 1.0);
    assert_eq!(rows[0][1..].last().unwrap().parse::<f64>().unwrap(), 8.0);
    assert!(rows[5][0].parse::<f64>().unwrap() < std::f64::consts::TAU);
}

#[test]
fn taxonomy_report_on_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    ok(&["taxonomy", "--exclude", "dog", "--out", s(&out)]);
    let r = json(&out.join("taxonomy.json"));
    assert_eq!((r["nodes"].as_u64(), r["classes"].as_u64(), r["k"].as_u64()), (Some(60), Some(32), Some(20)));
    let clusters = r["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 20);
    let mut members: Vec<String> = clusters.iter().flat_map(|c| c["members"].as_array().unwrap().iter().map(|m| m.as_str().unwrap().to_string())).collect();
    assert_eq!(members.len(), 32);
    members.sort();
    members.dedup();
    assert_eq!(members.len(), 32);
    for c in clusters {
        assert!(c["members"].as_array().unwrap().contains(&c["medoid"]));
        let (inc, tot) = (c["included"].as_u64().unwrap(), c["total"].as_u64().unwrap());
        assert!(tot >= c["members"].as_array().unwrap().len() as u64, "root covers its members");
        assert_eq!(c["coverage"].as_f64().unwrap(), inc as f64 / tot as f64);
    }
    assert_eq!(r["depth_fit"]["fit"]["n"], 32);
    assert_eq!(r["exclusions"][0]["subtree"], "dog");
    assert_eq!(r["exclusions"][0]["fit"]["fit"]["n"], 29);
    let sim = fs::read_to_string(out.join("similarity.csv")).unwrap();
    assert_eq!(sim.lines().count(), 33);
}

#[test]
fn bad_inputs_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(fails(&["sample", "--oracle", "builtin:resnet", "--out", s(&tmp.path().join("a"))]).contains("unknown builtin oracle"));
    assert!(fails(&["sample", "--out", s(&tmp.path().join("b"))]).contains("no oracle"));
    assert!(fails(&["validate", "--oracle", "builtin:linear", "--mesh", "blob", "--out", s(&tmp.path().join("c"))]).contains("blob"));
    assert!(fails(&["validate", "--oracle", "builtin:linear", "--override", "C_Dist=5:2", "--out", s(&tmp.path().join("d"))]).contains("C_Dist"));
    assert!(fails(&["sweep2d", "--oracle", "builtin:linear", "--mesh", "cube", "--axes", "B_Hue", "--out", s(&tmp.path().join("e"))]).contains("two names"));

    let f = tmp.path().join("f");
    ok(&["sample", "--oracle", "builtin:linear", "--mesh", "cube", "--n", "40", "--out", s(&tmp.path().join("s"))]);
    ok(&["fit", "--input", s(&tmp.path().join("s")), "--out", s(&f)]);
    assert!(fails(&["compare", "--input", s(&f), "--out", s(&tmp.path().join("g"))]).contains("at least two models"));
    assert!(fails(&["fit", "--input", s(&f), "--out", s(&tmp.path().join("h"))]).contains("not a sample run"));
}

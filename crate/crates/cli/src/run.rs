//! Run directories: one manifest plus append-only result files.

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use maps_core::cmaes::BOX_RULE;
use maps_core::oracle::ScoreKind;
use maps_core::{seed, OracleDescriptor, ParamSpace, RENDERER_ID};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: PathBuf,
    pub run_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub tool_version: String,
    pub renderer: String,
    pub box_rule: String,
    pub score: Option<ScoreKind>,
    pub space_source: Option<String>,
    pub space: Option<ParamSpace>,
    pub oracles: Vec<OracleDescriptor>,
    pub meshes: Vec<String>,
    pub seed: u64,
    pub n: Option<usize>,
    pub inputs: Vec<InputRef>,
    /// Resolved settings that determine the run id.
    pub config: serde_json::Value,
    pub created_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            run_id: String::new(),
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            renderer: RENDERER_ID.to_string(),
            box_rule: BOX_RULE.to_string(),
            score: None,
            space_source: None,
            space: None,
            oracles: Vec::new(),
            meshes: Vec::new(),
            seed,
            n: None,
            inputs: Vec::new(),
            config,
            created_unix: 0,
        }
    }

    /// Hash of everything except the id and timestamp.
    fn identity(&self) -> String {
        let mut m = self.clone();
        m.run_id.clear();
        m.created_unix = 0;
        for i in &mut m.inputs {
            i.path = PathBuf::new();
        }
        let bytes = serde_json::to_vec(&m).expect("manifest serializes");
        format!("{:016x}", seed::hash_words(0x6d61_7073, bytes.iter().map(|&b| b as u64)))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug)]
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub resumed: bool,
}

impl Run {
    /// Creates the run directory, or reopens it when `resume` is set and it
    /// holds the same run.
    pub fn start(mut manifest: RunManifest, out: Option<&Path>, resume: bool) -> Result<Run> {
        manifest.run_id = manifest.identity();
        let dir = match out {
            Some(p) => p.to_path_buf(),
            None => PathBuf::from("runs").join(format!("{}-{}", manifest.command, manifest.run_id)),
        };
        if dir.join(MANIFEST).exists() {
            let existing = RunManifest::load(&dir)?;
            if existing.run_id != manifest.run_id {
                bail!("{} holds run {}, not {}", dir.display(), existing.run_id, manifest.run_id);
            }
            if !resume {
                bail!("{} already holds this run; pass --resume to continue it", dir.display());
            }
            return Ok(Run {
                dir,
                manifest: existing,
                resumed: true,
            });
        }
        if dir.exists() && fs::read_dir(&dir)?.next().is_some() {
            bail!("{} exists and is not a run directory", dir.display());
        }
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        manifest.created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        write_json(&dir.join(MANIFEST), &manifest)?;
        Ok(Run {
            dir,
            manifest,
            resumed: false,
        })
    }

    pub fn id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Opens a JSON-lines stream, returning the rows already present.
    pub fn appender<T: DeserializeOwned>(&self, name: &str) -> Result<(Appender, Vec<T>)> {
        Appender::open(&self.path(name))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Every row of a complete JSON-lines file.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if !text.is_empty() && !text.ends_with('\n') {
        bail!("{} ends in a partial row; resume the run that produced it", path.display());
    }
    text.lines()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

/// Single writer for one JSON-lines file. Each row is flushed whole, so an
/// interruption leaves at most one partial trailing row, which reopening drops.
pub struct Appender {
    out: BufWriter<File>,
}

impl Appender {
    pub fn open<T: DeserializeOwned>(path: &Path) -> Result<(Appender, Vec<T>)> {
        let mut rows = Vec::new();
        if path.exists() {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let complete = text.rfind('\n').map_or(0, |i| i + 1);
            for (i, line) in text[..complete].lines().enumerate() {
                rows.push(serde_json::from_str(line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
            }
            if complete < text.len() {
                OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok((Appender { out: BufWriter::new(file) }, rows))
    }

    pub fn push<T: Serialize>(&mut self, row: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, row)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl Drop for Appender {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn appender_drops_partial_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        fs::write(&path, "1\n2\n{\"trunc").unwrap();
        let (mut a, rows) = Appender::open::<u32>(&path).unwrap();
        assert_eq!(rows, vec![1, 2]);
        a.push(&3).unwrap();
        drop(a);
        assert_eq!(fs::read_to_string(&path).unwrap(), "1\n2\n3\n");
        assert_eq!(read_jsonl::<u32>(&path).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn run_id_ignores_time_and_input_paths() {
        let mut a = RunManifest::new("fit", serde_json::json!({"x": 1}), 3);
        a.inputs.push(InputRef {
            path: "a".into(),
            run_id: "r".into(),
        });
        let mut b = a.clone();
        b.created_unix = 99;
        b.inputs[0].path = "b".into();
        assert_eq!(a.identity(), b.identity());
        b.seed = 4;
        assert_ne!(a.identity(), b.identity());
    }

    #[test]
    fn rerun_needs_resume() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let m = RunManifest::new("fit", serde_json::json!({}), 1);
        Run::start(m.clone(), Some(&out), false).unwrap();
        assert!(Run::start(m.clone(), Some(&out), false).is_err());
        assert!(Run::start(m.clone(), Some(&out), true).unwrap().resumed);
        let mut other = m;
        other.seed = 2;
        assert!(Run::start(other, Some(&out), true).is_err());
    }
}

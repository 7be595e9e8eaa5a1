//! Flag and config-file settings. A config file is TOML: common keys at the
//! top level and command-specific keys under a table named after the command.
//! Flags always win over the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use maps_core::render::{mesh::Mesh, obj, primitives, CANONICAL_RESOLUTION};
use maps_core::space::CANONICAL_PRESET;
use maps_core::ParamSpace;

pub const COMMANDS: [&str; 6] = ["validate", "sample", "fit", "compare", "taxonomy", "sweep2d"];

/// Fills unset values from a lower-priority source.
pub trait Layer {
    fn layer(&mut self, lower: Self);
}

impl<T> Layer for Option<T> {
    fn layer(&mut self, lower: Self) {
        if self.is_none() {
            *self = lower;
        }
    }
}

impl<T> Layer for Vec<T> {
    fn layer(&mut self, lower: Self) {
        if self.is_empty() {
            *self = lower;
        }
    }
}

impl Layer for bool {
    fn layer(&mut self, lower: Self) {
        *self |= lower;
    }
}

#[macro_export]
macro_rules! layered {
    ($t:ty { $($f:ident),* $(,)? }) => {
        impl $crate::config::Layer for $t {
            fn layer(&mut self, lower: Self) {
                $( $crate::config::Layer::layer(&mut self.$f, lower.$f); )*
            }
        }
    };
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Space preset name or space TOML file.
    #[arg(long)]
    pub space: Option<String>,
    /// builtin:linear[:seed], builtin:quadratic[:seed], builtin:templates[:seed],
    /// exec:<command> or tcp:<host:port>. Repeatable.
    #[arg(long)]
    pub oracle: Vec<String>,
    /// Procedural primitive name or .obj path. Repeatable.
    #[arg(long)]
    pub mesh: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Samples per (oracle, mesh).
    #[arg(long)]
    pub n: Option<usize>,
    /// Run directory; defaults to runs/<command>-<run id>.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Continue an interrupted run in --out.
    #[arg(long)]
    #[serde(skip_serializing)]
    pub resume: bool,
    /// Render width and height in pixels.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Target class index.
    #[arg(long)]
    pub target: Option<usize>,
}

layered!(Common { config, space, oracle, mesh, seed, n, out, resume, resolution, target });

impl Common {
    pub fn space_source(&self) -> &str {
        self.space.as_deref().unwrap_or(CANONICAL_PRESET)
    }

    pub fn space(&self) -> Result<ParamSpace> {
        let src = self.space_source();
        ParamSpace::resolve(src).with_context(|| format!("space {src}"))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn resolution(&self) -> usize {
        self.resolution.unwrap_or(CANONICAL_RESOLUTION)
    }

    pub fn target(&self) -> usize {
        self.target.unwrap_or(0)
    }

    /// Mesh names, defaulting to every procedural primitive.
    pub fn mesh_names(&self) -> Vec<String> {
        if self.mesh.is_empty() {
            primitives::BUILTIN_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            self.mesh.clone()
        }
    }

    pub fn oracles(&self) -> Result<&[String]> {
        anyhow::ensure!(!self.oracle.is_empty(), "no oracle given (use --oracle)");
        Ok(&self.oracle)
    }
}

/// Primitive name or OBJ file, normalized for rendering.
pub fn load_mesh(name: &str) -> Result<Mesh> {
    let raw = if primitives::BUILTIN_NAMES.contains(&name) {
        primitives::builtin(name)?
    } else {
        obj::load_obj(Path::new(name)).with_context(|| format!("mesh {name}"))?
    };
    Ok(raw.normalized().with_context(|| format!("normalizing mesh {name}"))?.0)
}

/// Layers the config file (if any) under the flags.
pub fn apply_file<T: Layer + DeserializeOwned>(common: &mut Common, opts: &mut T, command: &str) -> Result<()> {
    let Some(path) = common.config.clone() else {
        return Ok(());
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut table: toml::Table = text.parse().with_context(|| format!("parsing {}", path.display()))?;
    let section = table.remove(command);
    for c in COMMANDS {
        table.remove(c);
    }
    let file_common: Common = toml::Value::Table(table).try_into().with_context(|| format!("{}: top-level keys", path.display()))?;
    common.layer(file_common);
    if let Some(section) = section {
        let file_opts: T = section.try_into().with_context(|| format!("{}: [{command}] table", path.display()))?;
        opts.layer(file_opts);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Default, Deserialize, PartialEq)]
    #[serde(default, deny_unknown_fields)]
    struct Opts {
        steps: Option<usize>,
        axes: Vec<String>,
    }
    layered!(Opts { steps, axes });

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn flags_override_file() {
        let f = write("seed = 4\nn = 10\noracle = [\"builtin:linear\"]\n[sweep2d]\nsteps = 7\naxes = [\"B_Hue\", \"C_Azm\"]\n[fit]\nsweep = [1]\n");
        let mut common = Common {
            config: Some(f.path().to_path_buf()),
            seed: Some(9),
            ..Default::default()
        };
        let mut opts = Opts {
            steps: Some(3),
            ..Default::default()
        };
        apply_file(&mut common, &mut opts, "sweep2d").unwrap();
        assert_eq!((common.seed, common.n), (Some(9), Some(10)));
        assert_eq!(common.oracle, vec!["builtin:linear".to_string()]);
        assert_eq!(opts, Opts { steps: Some(3), axes: vec!["B_Hue".into(), "C_Azm".into()] });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = write("sede = 4\n");
        let mut common = Common {
            config: Some(f.path().to_path_buf()),
            ..Default::default()
        };
        assert!(apply_file(&mut common, &mut Opts::default(), "sweep2d").is_err());
        let f = write("[sweep2d]\nstep = 4\n");
        common.config = Some(f.path().to_path_buf());
        assert!(apply_file(&mut common, &mut Opts::default(), "sweep2d").is_err());
    }
}

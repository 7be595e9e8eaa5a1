//! Scene-factor sensitivity toolkit.
//!
//! The crate covers the full analysis chain for probing how an image
//! classifier's decisions depend on controlled scene factors:
//!
//! * [`space`]: the bounded parametric scene space, encodings and samplers.
//! * [`render`]: mesh normalization and a deterministic software rasterizer.
//! * [`oracle`]: logit-producing oracles (synthetic and external) plus the
//!   margin / log-probability definitions.
//! * [`cmaes`]: a CMA-ES optimizer and the restart-based recognizability check.
//! * [`sensitivity`]: surrogate regression of decision margins.
//! * [`analysis`]: cross-model comparison, clustering and taxonomy statistics.

pub mod analysis;
pub mod cmaes;
pub mod oracle;
pub mod render;
pub mod seed;
pub mod sensitivity;
pub mod space;

pub use oracle::{LogitVector, MarginRecord, Oracle, OracleDescriptor, OracleError, OracleKind};
pub use render::{Image, Mesh, RenderOptions};
pub use space::{ParamKind, ParamSpace, ParamSpec, SceneParams, SpaceError};

/// Identifier recorded in every result so synthetic and external renders are never pooled.
pub const RENDERER_ID: &str = "maps-raster/1 (flat-shaded z-buffer, ss=2 box filter)";

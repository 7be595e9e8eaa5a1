use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use maps_core::analysis::taxonomy::{coverage, semantic_clusters, ClassSet, Coverage, TaxonomyTree};
use maps_core::analysis::LogisticFit;

use crate::config::Common;
use crate::layered;
use crate::run::{write_json, Run, RunManifest};

const DEFAULT_K: usize = 20;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaxonomyOpts {
    /// Tab-separated `id, parent[, name]` file; defaults to the bundled fixture.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Tab-separated `id, 0|1` inclusion file.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// Number of semantic clusters.
    #[arg(long)]
    pub k: Option<usize>,
    /// Refit the depth model without this subtree. Repeatable.
    #[arg(long)]
    pub exclude: Vec<String>,
}

layered!(TaxonomyOpts { taxonomy, classes, k, exclude });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitOutcome {
    Fit(LogisticFit),
    Error(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub members: Vec<String>,
    pub root: String,
    pub medoid: String,
    pub medoid_mean_similarity: Option<f64>,
    pub medoid_tie: bool,
    pub included: usize,
    pub total: usize,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub subtree: String,
    pub fit: FitOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyReport {
    pub run: String,
    pub nodes: usize,
    pub classes: usize,
    pub included: usize,
    pub k: usize,
    pub clusters: Vec<ClusterEntry>,
    /// Inclusion modeled on node depth.
    pub depth_fit: FitOutcome,
    pub exclusions: Vec<Exclusion>,
}

fn outcome<E: std::fmt::Display>(r: Result<LogisticFit, E>) -> FitOutcome {
    match r {
        Ok(f) => FitOutcome::Fit(f),
        Err(e) => FitOutcome::Error(e.to_string()),
    }
}

pub fn run(common: Common, opts: TaxonomyOpts) -> Result<()> {
    let tree = match &opts.taxonomy {
        Some(p) => TaxonomyTree::from_file(p).with_context(|| format!("taxonomy {}", p.display()))?,
        None => TaxonomyTree::fixture(),
    };
    let classes = match &opts.classes {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ClassSet::parse(&tree, &text).with_context(|| format!("classes {}", p.display()))?
        }
        None if opts.taxonomy.is_none() => ClassSet::fixture(&tree),
        None => anyhow::bail!("--taxonomy needs a matching --classes file"),
    };
    let k = opts.k.unwrap_or(DEFAULT_K).clamp(1, classes.len().max(1));
    let excluded = opts.exclude.iter().map(|id| tree.index_of(id)).collect::<Result<Vec<_>, _>>()?;

    let manifest = RunManifest::new("taxonomy", serde_json::json!({ "common": common, "taxonomy": opts }), common.seed());
    let run = Run::start(manifest, common.out.as_deref(), common.resume)?;

    let (sim, groups) = semantic_clusters(&tree, &classes.nodes, k)?;
    let labels: Vec<String> = classes.nodes.iter().map(|&i| tree.ids[i].clone()).collect();
    let mut w = csv::Writer::from_path(run.path("similarity.csv"))?;
    w.write_record(std::iter::once("label").chain(labels.iter().map(String::as_str)))?;
    for (i, label) in labels.iter().enumerate() {
        w.write_record(std::iter::once(label.clone()).chain((0..labels.len()).map(|j| sim[(i, j)].to_string())))?;
    }
    w.flush()?;

    let roots: Vec<usize> = groups.iter().map(|g| g.root).collect();
    let cov: Vec<Coverage> = coverage(&tree, &classes, &roots);
    let clusters = groups
        .iter()
        .zip(&cov)
        .map(|(g, c)| ClusterEntry {
            members: g.members.iter().map(|&i| labels[i].clone()).collect(),
            root: tree.ids[g.root].clone(),
            medoid: labels[g.medoid.member].clone(),
            medoid_mean_similarity: g.medoid.mean_similarity,
            medoid_tie: g.medoid.tie,
            included: c.included,
            total: c.total,
            coverage: c.fraction,
        })
        .collect();
    let report = TaxonomyReport {
        run: run.id().to_string(),
        nodes: tree.len(),
        classes: classes.len(),
        included: classes.included.iter().filter(|&&b| b).count(),
        k,
        clusters,
        depth_fit: outcome(classes.fit_depth(&tree, None)),
        exclusions: excluded
            .iter()
            .map(|&r| Exclusion {
                subtree: tree.ids[r].clone(),
                fit: outcome(classes.fit_depth(&tree, Some(r))),
            })
            .collect(),
    };
    write_json(&run.path("taxonomy.json"), &report)?;
    eprintln!("taxonomy: {} classes in {k} clusters; results in {}", classes.len(), run.dir.display());
    Ok(())
}

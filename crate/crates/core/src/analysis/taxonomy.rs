//! Rooted class taxonomies: Wu-Palmer similarity, medoids and coverage.
//!
//! Depth counts from 1 at the root, so `wu_palmer(root, x) = 2 / (1 + depth(x))`
//! is always defined.
//!
//! Input is a tab-separated edge list, one node per line:
//!
//! ```text
//! child_id <TAB> parent_id <TAB> display_name
//! ```
//!
//! The root leaves `parent_id` empty. Blank lines and lines starting with `#`
//! are skipped; `display_name` is optional and defaults to the id.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cluster::{cut_tree, ward_cluster};
use super::logistic::{fit_logistic, LogisticError, LogisticFit};
use super::DistanceMatrix;

/// The 60-node taxonomy fixture.
pub const FIXTURE_TAXONOMY: &str = include_str!("../../data/taxonomy60.tsv");
/// Class list over the fixture's leaves with inclusion flags.
pub const FIXTURE_CLASSES: &str = include_str!("../../data/classes60.tsv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaxonomyError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("node {0} defined twice")]
    Duplicate(String),
    #[error("node {child} names unknown parent {parent}")]
    UnknownParent { child: String, parent: String },
    #[error("taxonomy has no root")]
    NoRoot,
    #[error("taxonomy has two roots: {0} and {1}")]
    MultipleRoots(String, String),
    #[error("node {0} is on a cycle")]
    Cycle(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaxonomyTree {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<usize>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl TaxonomyTree {
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let mut ids: Vec<String> = vec![];
        let mut names = vec![];
        let mut parent_ids = vec![];
        let mut index = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let child = cols.next().unwrap_or("").trim();
            if child.is_empty() {
                return Err(TaxonomyError::Syntax {
                    line: lineno + 1,
                    message: "missing child id".into(),
                });
            }
            let parent = cols.next().unwrap_or("").trim();
            let name = cols.next().map(str::trim).filter(|s| !s.is_empty()).unwrap_or(child);
            if index.insert(child.to_string(), ids.len()).is_some() {
                return Err(TaxonomyError::Duplicate(child.into()));
            }
            ids.push(child.to_string());
            names.push(name.to_string());
            parent_ids.push(parent.to_string());
        }

        let mut parent = Vec::with_capacity(ids.len());
        let mut root: Option<usize> = None;
        for (i, p) in parent_ids.iter().enumerate() {
            if p.is_empty() {
                if let Some(r) = root {
                    return Err(TaxonomyError::MultipleRoots(ids[r].clone(), ids[i].clone()));
                }
                root = Some(i);
                parent.push(None);
            } else {
                let j = *index.get(p).ok_or_else(|| TaxonomyError::UnknownParent {
                    child: ids[i].clone(),
                    parent: p.clone(),
                })?;
                parent.push(Some(j));
            }
        }
        root.ok_or(TaxonomyError::NoRoot)?;

        let n = ids.len();
        let mut depth = vec![0usize; n];
        for start in 0..n {
            let mut path = vec![];
            let mut x = start;
            while depth[x] == 0 {
                path.push(x);
                if path.len() > n {
                    return Err(TaxonomyError::Cycle(ids[start].clone()));
                }
                match parent[x] {
                    Some(p) => x = p,
                    None => {
                        depth[x] = 1;
                        path.pop();
                        break;
                    }
                }
            }
            let mut d = depth[x];
            for &y in path.iter().rev() {
                d += 1;
                depth[y] = d;
            }
        }
        Ok(Self {
            ids,
            names,
            parent,
            depth,
            index,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|e| TaxonomyError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn fixture() -> Self {
        Self::parse(FIXTURE_TAXONOMY).expect("fixture parses")
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Result<usize, TaxonomyError> {
        self.index.get(id).copied().ok_or_else(|| TaxonomyError::UnknownNode(id.into()))
    }

    pub fn root(&self) -> usize {
        self.parent.iter().position(Option::is_none).expect("validated root")
    }

    /// Common ancestor of `a` and `b` with the greatest depth.
    pub fn lca(&self, mut a: usize, mut b: usize) -> usize {
        while self.depth[a] > self.depth[b] {
            a = self.parent[a].expect("deeper than root");
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b].expect("deeper than root");
        }
        while a != b {
            a = self.parent[a].expect("below root");
            b = self.parent[b].expect("below root");
        }
        a
    }

    /// Lowest common ancestor of a non-empty set.
    pub fn lca_of(&self, nodes: &[usize]) -> Option<usize> {
        let (&first, rest) = nodes.split_first()?;
        Some(rest.iter().fold(first, |acc, &x| self.lca(acc, x)))
    }

    /// `2·depth(lcs) / (depth(a) + depth(b))`.
    pub fn wu_palmer(&self, a: usize, b: usize) -> f64 {
        let l = self.lca(a, b);
        2.0 * self.depth[l] as f64 / (self.depth[a] + self.depth[b]) as f64
    }

    /// `x` lies in the subtree rooted at `root` (inclusive).
    pub fn is_under(&self, mut x: usize, root: usize) -> bool {
        while self.depth[x] > self.depth[root] {
            x = self.parent[x].expect("deeper than root");
        }
        x == root
    }

    pub fn similarity_matrix(&self, nodes: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(nodes.len(), nodes.len(), |i, j| self.wu_palmer(nodes[i], nodes[j]))
    }
}

/// Classes attached to taxonomy nodes, each flagged as included or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSet {
    pub nodes: Vec<usize>,
    pub included: Vec<bool>,
}

impl ClassSet {
    /// Lines of `node_id <TAB> 0|1`.
    pub fn parse(tree: &TaxonomyTree, text: &str) -> Result<Self, TaxonomyError> {
        let mut nodes = vec![];
        let mut included = vec![];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t').map(str::trim);
            let id = cols.next().unwrap_or("");
            let flag = match cols.next() {
                Some("1") | Some("true") => true,
                Some("0") | Some("false") => false,
                other => {
                    return Err(TaxonomyError::Syntax {
                        line: lineno + 1,
                        message: format!("inclusion flag must be 0 or 1, got {other:?}"),
                    })
                }
            };
            nodes.push(tree.index_of(id)?);
            included.push(flag);
        }
        Ok(Self { nodes, included })
    }

    pub fn fixture(tree: &TaxonomyTree) -> Self {
        Self::parse(tree, FIXTURE_CLASSES).expect("fixture classes parse")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Logistic model of inclusion on node depth, optionally dropping one subtree.
    pub fn fit_depth(&self, tree: &TaxonomyTree, exclude: Option<usize>) -> Result<LogisticFit, LogisticError> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| exclude.is_none_or(|r| !tree.is_under(self.nodes[i], r))).collect();
        let x: Vec<f64> = keep.iter().map(|&i| tree.depth[self.nodes[i]] as f64).collect();
        let y: Vec<bool> = keep.iter().map(|&i| self.included[i]).collect();
        fit_logistic(&x, &y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medoid {
    /// Index into the similarity matrix.
    pub member: usize,
    /// Mean similarity to the other members; `None` for a singleton.
    pub mean_similarity: Option<f64>,
    /// Another member reached the same mean.
    pub tie: bool,
}

/// Member with the highest mean similarity to the rest; ties go to the
/// smallest index and are flagged.
pub fn medoid(members: &[usize], sim: &DMatrix<f64>) -> Result<Medoid, TaxonomyError> {
    let mut sorted = members.to_vec();
    sorted.sort_unstable();
    match sorted.as_slice() {
        [] => Err(TaxonomyError::EmptyCluster),
        &[only] => Ok(Medoid {
            member: only,
            mean_similarity: None,
            tie: false,
        }),
        _ => {
            let others = (sorted.len() - 1) as f64;
            let mut best = Medoid {
                member: usize::MAX,
                mean_similarity: None,
                tie: false,
            };
            let mut best_mean = f64::NEG_INFINITY;
            for &i in &sorted {
                let mean = sorted.iter().filter(|&&j| j != i).map(|&j| sim[(i, j)]).sum::<f64>() / others;
                if mean > best_mean {
                    best_mean = mean;
                    best = Medoid {
                        member: i,
                        mean_similarity: Some(mean),
                        tie: false,
                    };
                } else if mean == best_mean {
                    best.tie = true;
                }
            }
            Ok(best)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub root: usize,
    pub included: usize,
    pub total: usize,
    /// `included / total`; `None` when no class sits under the root.
    pub fraction: Option<f64>,
}

/// Share of the classes under each root that are included.
pub fn coverage(tree: &TaxonomyTree, classes: &ClassSet, roots: &[usize]) -> Vec<Coverage> {
    roots
        .iter()
        .map(|&root| {
            let under: Vec<usize> = (0..classes.len()).filter(|&i| tree.is_under(classes.nodes[i], root)).collect();
            let included = under.iter().filter(|&&i| classes.included[i]).count();
            Coverage {
                root,
                included,
                total: under.len(),
                fraction: (!under.is_empty()).then(|| included as f64 / under.len() as f64),
            }
        })
        .collect()
}

/// One group of the semantic clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticCluster {
    /// Indices into the clustered node list.
    pub members: Vec<usize>,
    /// Lowest common ancestor of the members.
    pub root: usize,
    pub medoid: Medoid,
}

/// Ward clustering of `nodes` on `1 − wu_palmer`, cut into `k` groups.
pub fn semantic_clusters(tree: &TaxonomyTree, nodes: &[usize], k: usize) -> Result<(DMatrix<f64>, Vec<SemanticCluster>), super::AnalysisError> {
    let sim = tree.similarity_matrix(nodes);
    let labels = nodes.iter().map(|&i| tree.ids[i].clone()).collect();
    let dist = DistanceMatrix::from_pairs(labels, |a, b| 1.0 - sim[(a, b)]);
    let t = ward_cluster(&dist)?;
    let assign = cut_tree(&t, k)?;
    let clusters = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..nodes.len()).filter(|&i| assign[i] == c).collect();
            let ids: Vec<usize> = members.iter().map(|&i| nodes[i]).collect();
            SemanticCluster {
                root: tree.lca_of(&ids).expect("non-empty cluster"),
                medoid: medoid(&members, &sim).expect("non-empty cluster"),
                members,
            }
        })
        .collect();
    Ok((sim, clusters))
}

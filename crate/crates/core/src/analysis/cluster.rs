//! Ward agglomerative clustering on a precomputed distance matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{row_distances, AnalysisError, DistanceMatrix};

/// One agglomeration step. Leaves are nodes `0..n`; step `s` creates node `n + s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
}

/// Ward's linkage via the Lance–Williams update on squared distances:
///
/// `d²(k, i∪j) = ((n_i+n_k) d²_ik + (n_j+n_k) d²_jk − n_k d²_ij) / (n_i+n_j+n_k)`
///
/// Heights are reported as `sqrt(d²)`, so two singletons merge at their
/// plain distance. Among equal candidates the pair with the lowest
/// (smallest-member, smallest-member) indices wins.
pub fn ward_cluster(d: &DistanceMatrix) -> Result<ClusterTree, AnalysisError> {
    let n = d.len();
    if n < 2 {
        return Err(AnalysisError::TooFew { need: 2, got: n });
    }
    let mut d2 = d.values.map(|v| v * v);
    // Slot i always holds the cluster whose smallest member is i.
    let mut active = vec![true; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in (0..n).filter(|&i| active[i]) {
            for j in (i + 1..n).filter(|&j| active[j]) {
                if d2[(i, j)] < best.2 || best.0 == usize::MAX {
                    best = (i, j, d2[(i, j)]);
                }
            }
        }
        let (i, j, dij) = best;
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in (0..n).filter(|&k| active[k] && k != i && k != j) {
            let nk = size[k] as f64;
            let v = ((ni + nk) * d2[(i, k)] + (nj + nk) * d2[(j, k)] - nk * dij) / (ni + nj + nk);
            d2[(i, k)] = v;
            d2[(k, i)] = v;
        }
        active[j] = false;
        size[i] += size[j];
        merges.push(Merge {
            a: node[i].min(node[j]),
            b: node[i].max(node[j]),
            height: dij.max(0.0).sqrt(),
            size: size[i],
        });
        node[i] = n + step;
    }
    Ok(ClusterTree {
        labels: d.labels.clone(),
        merges,
    })
}

/// Ward clustering of the rows of `x` on their Euclidean distances.
pub fn ward_rows(x: &DMatrix<f64>) -> ClusterTree {
    let labels = (0..x.nrows()).map(|i| i.to_string()).collect();
    ward_cluster(&row_distances(labels, x)).expect("at least two rows")
}

/// Cluster labels after undoing the last `k − 1` merges. Labels are numbered
/// by each cluster's smallest member.
pub fn cut_tree(tree: &ClusterTree, k: usize) -> Result<Vec<usize>, AnalysisError> {
    let n = tree.len();
    if k == 0 || k > n {
        return Err(AnalysisError::Shape(format!("cannot cut {n} leaves into {k} clusters")));
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    // Any leaf under a node stands in for it.
    let mut rep: Vec<usize> = (0..n).collect();
    for m in &tree.merges[..n - k] {
        let (ra, rb) = (find(&mut parent, rep[m.a]), find(&mut parent, rep[m.b]));
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        parent[hi] = lo;
        rep.push(lo);
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    // Union by smaller index keeps each root at its cluster's smallest member.
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    Ok(roots
        .iter()
        .map(|&r| {
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            label[r]
        })
        .collect())
}

/// Plot coordinates for one merge: leaves sit at `x = 0, 1, …` in leaf order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub left: (f64, f64),
    pub right: (f64, f64),
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaf_order: Vec<usize>,
    pub leaf_labels: Vec<String>,
    pub links: Vec<Link>,
}

impl ClusterTree {
    /// Number of leaves.
    pub fn len(&self) -> usize {
        self.merges.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// `(size, smallest leaf)` for every node id.
    fn node_keys(&self) -> Vec<(usize, usize)> {
        let mut keys: Vec<(usize, usize)> = (0..self.len()).map(|i| (1, i)).collect();
        for m in &self.merges {
            keys.push((m.size, keys[m.a].1.min(keys[m.b].1)));
        }
        keys
    }

    fn ordered(m: &Merge, keys: &[(usize, usize)]) -> (usize, usize) {
        if keys[m.a] <= keys[m.b] {
            (m.a, m.b)
        } else {
            (m.b, m.a)
        }
    }

    fn root(&self) -> usize {
        2 * self.len() - 2
    }

    /// Leaves of node `id`, in leaf order.
    pub fn members(&self, id: usize) -> Vec<usize> {
        let n = self.len();
        let keys = self.node_keys();
        let mut out = vec![];
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if x < n {
                out.push(x);
            } else {
                let (l, r) = Self::ordered(&self.merges[x - n], &keys);
                stack.push(r);
                stack.push(l);
            }
        }
        out
    }

    /// Recursive rule: the smaller subtree goes first, ties by smallest leaf.
    pub fn leaf_order(&self) -> Vec<usize> {
        self.members(self.root())
    }

    pub fn dendrogram(&self) -> Dendrogram {
        let n = self.len();
        let leaf_order = self.leaf_order();
        let keys = self.node_keys();
        let mut pos = vec![(0.0, 0.0); 2 * n - 1];
        for (x, &leaf) in leaf_order.iter().enumerate() {
            pos[leaf] = (x as f64, 0.0);
        }
        let links = self
            .merges
            .iter()
            .enumerate()
            .map(|(s, m)| {
                let (l, r) = Self::ordered(m, &keys);
                pos[n + s] = ((pos[l].0 + pos[r].0) / 2.0, m.height);
                Link {
                    left: pos[l],
                    right: pos[r],
                    height: m.height,
                }
            })
            .collect();
        Dendrogram {
            leaf_labels: leaf_order.iter().map(|&i| self.labels[i].clone()).collect(),
            leaf_order,
            links,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    #[test]
    fn identical_pair_merges_first_at_zero() {
        let t = ward_rows(&points(&[5.0, 0.0, 0.0]));
        assert_eq!(t.merges[0], Merge { a: 1, b: 2, height: 0.0, size: 2 });
        assert_eq!(t.merges[1].size, 3);
    }

    #[test]
    fn two_points_merge_at_their_distance() {
        let t = ward_rows(&DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]));
        assert_eq!(t.merges, vec![Merge { a: 0, b: 1, height: 5.0, size: 2 }]);
    }

    #[test]
    fn ward_height_of_singleton_with_pair() {
        // d² = 2·n_a·n_b/(n_a + n_b)·‖c_a − c_b‖² with c = 1 and 10.
        let t = ward_rows(&points(&[0.0, 2.0, 10.0]));
        let expect = ((2.0 * 1.0 / 3.0) * 81.0 * 2.0f64).sqrt();
        assert!((t.merges[1].height - expect).abs() < 1e-12);
    }

    #[test]
    fn ties_pick_lowest_pair() {
        let t = ward_rows(&points(&[0.0, 1.0, 2.0, 3.0]));
        assert_eq!((t.merges[0].a, t.merges[0].b), (0, 1));
        assert_eq!((t.merges[1].a, t.merges[1].b), (2, 3));
    }

    #[test]
    fn cut_and_order() {
        let t = ward_rows(&points(&[10.0, 0.0, 10.1, 0.1, 20.0]));
        assert_eq!(cut_tree(&t, 1).unwrap(), vec![0; 5]);
        assert_eq!(cut_tree(&t, 5).unwrap(), vec![0, 1, 2, 3, 4]);
        assert_eq!(cut_tree(&t, 3).unwrap(), vec![0, 1, 0, 1, 2]);
        assert!(cut_tree(&t, 0).is_err() && cut_tree(&t, 6).is_err());
        // {0,2} joins 20 before the far pair: root splits {1,3} | {4} ∪ {0,2}.
        assert_eq!(t.leaf_order(), vec![1, 3, 4, 0, 2]);
        let dg = t.dendrogram();
        assert_eq!(dg.links.len(), 4);
        assert_eq!(dg.links[3].height, t.merges[3].height);
    }
}

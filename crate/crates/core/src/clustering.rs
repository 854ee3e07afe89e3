//! Pairwise index entropies and ε-greedy grouping of free indices into
//! balanced clusters.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::linalg::singular_values;
use crate::network::{IndexId, NodeId, TreeNetwork};
use crate::search::Clusters;

/// Effective rank of every pair unfolding, keyed by `(smaller id, larger id)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyTable {
    pub scores: BTreeMap<(IndexId, IndexId), f64>,
}

impl EntropyTable {
    pub fn get(&self, a: IndexId, b: IndexId) -> Option<f64> {
        self.scores.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Computes the table with one tour per pivot index. The network is
/// orthonormalized once; each pivot is then carried through the tree by
/// adjacent swaps, and every partner met on the way is scored from the
/// local core, which is the orthogonality center at that moment.
pub fn all_pair_entropy(net: &TreeNetwork) -> Result<EntropyTable> {
    let free = net.free_order().to_vec();
    if free.len() < 2 {
        return invalid("pair entropies need at least two free indices");
    }
    let mut base = net.clone();
    if base.center().is_none() {
        let first = base.owner(free[0]).expect("free index has an owner");
        base.orthonormalize_toward(first)?;
    }
    let mut scores = BTreeMap::new();
    for (p, &pivot) in free.iter().enumerate() {
        let partners: BTreeSet<IndexId> = free[p + 1..].iter().copied().collect();
        if partners.is_empty() {
            break;
        }
        let mut work = base.clone();
        let start = work.owner(pivot).expect("free index has an owner");
        work.move_center(start)?;
        tour(&mut work, pivot, start, None, &partners, &mut scores)?;
    }
    Ok(EntropyTable { scores })
}

fn tour(
    net: &mut TreeNetwork,
    pivot: IndexId,
    at: NodeId,
    parent: Option<NodeId>,
    partners: &BTreeSet<IndexId>,
    scores: &mut BTreeMap<(IndexId, IndexId), f64>,
) -> Result<()> {
    let node = net.node(at).expect("tour stays on live nodes");
    let here: Vec<IndexId> = node
        .indices
        .iter()
        .copied()
        .filter(|i| partners.contains(i))
        .collect();
    for j in here {
        let node = net.node(at).unwrap();
        let rows = [node.axis_of(pivot).unwrap(), node.axis_of(j).unwrap()];
        let score = if node.core.order() == 2 {
            1.0
        } else {
            let m = node.core.unfold(&rows)?.to_matrix(1);
            singular_values(&m)?.effective_rank()?
        };
        scores.insert((pivot.min(j), pivot.max(j)), score);
    }
    let children: Vec<NodeId> = net
        .neighbors(at)
        .into_iter()
        .filter(|&(v, bond)| Some(v) != parent && !net.side_free(v, bond).is_disjoint(partners))
        .map(|(v, _)| v)
        .collect();
    for v in children {
        net.swap_adjacent(pivot, v)?;
        tour(net, pivot, v, Some(at), partners, scores)?;
        net.swap_adjacent(pivot, at)?;
    }
    Ok(())
}

/// Chosen grouping and its score (sum of cluster effective ranks).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterPartition {
    pub clusters: Clusters,
    pub score: f64,
}

/// Knobs for [`cluster_indices`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterParams {
    /// Maximum number of clusters.
    pub max_clusters: usize,
    /// Number of randomized greedy constructions to compare.
    pub candidates: usize,
    /// Probability of taking a uniformly random eligible pair.
    pub explore: f64,
}

/// Sum over clusters of the effective rank of each cluster's unfolding.
pub fn partition_score(net: &TreeNetwork, clusters: &Clusters) -> Result<f64> {
    let total = net.free_order().len();
    let mut score = 0.0;
    for c in &clusters.0 {
        if c.len() == total {
            score += 1.0;
            continue;
        }
        let side: BTreeSet<IndexId> = c.iter().copied().collect();
        score += net.unfolding_spectrum(&side)?.effective_rank()?;
    }
    Ok(score)
}

/// Target cluster sizes: `n` split into `k` parts differing by at most one,
/// larger parts first.
fn balanced_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| n / k + usize::from(c < n % k)).collect()
}

/// Groups the free indices into at most `max_clusters` balanced clusters.
/// With few enough indices every index is its own cluster.
pub fn cluster_indices<R: Rng>(
    net: &TreeNetwork,
    params: ClusterParams,
    rng: &mut R,
) -> Result<ClusterPartition> {
    if params.max_clusters < 2 {
        return invalid("need at least two clusters");
    }
    let free = net.free_order().to_vec();
    if free.len() <= params.max_clusters {
        let clusters = Clusters::singletons(&free);
        let score = partition_score(net, &clusters)?;
        return Ok(ClusterPartition { clusters, score });
    }
    let table = all_pair_entropy(net)?;
    let mut best: Option<ClusterPartition> = None;
    for _ in 0..params.candidates.max(1) {
        let clusters = greedy_partition(&free, &table, params, rng);
        let score = partition_score(net, &clusters)?;
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(ClusterPartition { clusters, score });
        }
    }
    Ok(best.expect("at least one candidate"))
}

fn greedy_partition<R: Rng>(
    free: &[IndexId],
    table: &EntropyTable,
    params: ClusterParams,
    rng: &mut R,
) -> Clusters {
    let mut remaining: BTreeSet<IndexId> = free.iter().copied().collect();
    let mut out = Vec::new();
    for target in balanced_sizes(free.len(), params.max_clusters) {
        let mut cluster: Vec<IndexId> = Vec::new();
        while cluster.len() < target {
            let room = target - cluster.len();
            // Eligible pairs bring in one or two unassigned indices and fit.
            let mut eligible: Vec<((IndexId, IndexId), f64)> = table
                .scores
                .iter()
                .filter(|((a, b), _)| {
                    let fresh =
                        usize::from(remaining.contains(a)) + usize::from(remaining.contains(b));
                    let in_cluster =
                        usize::from(cluster.contains(a)) + usize::from(cluster.contains(b));
                    fresh > 0 && fresh + in_cluster == 2 && fresh <= room
                })
                .map(|(&k, &v)| (k, v))
                .collect();
            if eligible.is_empty() {
                let pick = if params.explore > 0.0 && rng.gen::<f64>() < params.explore {
                    *remaining
                        .iter()
                        .copied()
                        .collect::<Vec<_>>()
                        .choose(rng)
                        .unwrap()
                } else {
                    *remaining.iter().next().unwrap()
                };
                remaining.remove(&pick);
                cluster.push(pick);
                continue;
            }
            let explore = params.explore > 0.0 && rng.gen::<f64>() < params.explore;
            let (a, b) = if explore {
                eligible.choose(rng).unwrap().0
            } else {
                eligible.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
                eligible[0].0
            };
            for i in [a, b] {
                if remaining.remove(&i) {
                    cluster.push(i);
                }
            }
        }
        cluster.sort_unstable();
        out.push(cluster);
    }
    Clusters(out)
}

/// Uniformly random balanced partition (ablation baseline).
pub fn random_partition<R: Rng>(
    net: &TreeNetwork,
    max_clusters: usize,
    rng: &mut R,
) -> Result<ClusterPartition> {
    let mut free = net.free_order().to_vec();
    if free.len() <= max_clusters {
        let clusters = Clusters::singletons(&free);
        let score = partition_score(net, &clusters)?;
        return Ok(ClusterPartition { clusters, score });
    }
    free.shuffle(rng);
    let mut out = Vec::new();
    let mut it = free.into_iter();
    for size in balanced_sizes(net.free_order().len(), max_clusters) {
        let mut c: Vec<IndexId> = it.by_ref().take(size).collect();
        c.sort_unstable();
        out.push(c);
    }
    let clusters = Clusters(out);
    let score = partition_score(net, &clusters)?;
    Ok(ClusterPartition { clusters, score })
}

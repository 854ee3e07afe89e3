//! Ordered factorizations of free index sizes and their effective-rank cost.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::instrument::{self, Counter};
use crate::linalg::singular_values;
use crate::network::{IndexId, NodeId, TreeNetwork};

/// Upper bound on the number of reshaped variants returned.
pub const MAX_VARIANTS: usize = 256;

/// All ordered tuples of integers > 1 with product `n` and length at most
/// `max_len`, sorted by length and then lexicographically.
pub fn enumerate_factorizations(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if n < 2 || max_len == 0 {
        return out;
    }
    let mut prefix = Vec::new();
    factor_rec(n, max_len, &mut prefix, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    out
}

fn factor_rec(n: usize, max_len: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    prefix.push(n);
    out.push(prefix.clone());
    prefix.pop();
    if prefix.len() + 2 > max_len {
        return;
    }
    for p in 2..n {
        if n.is_multiple_of(p) {
            prefix.push(p);
            factor_rec(n / p, max_len, prefix, out);
            prefix.pop();
        }
    }
}

/// Effective ranks of prefix splits, keyed by `(index, prefix product)`.
#[derive(Debug, Clone, Default)]
pub struct SplitRankCache {
    entries: BTreeMap<(IndexId, usize), f64>,
}

impl SplitRankCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, idx: IndexId, prefix: usize) -> Option<f64> {
        self.entries.get(&(idx, prefix)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Cost `sum_j e(P_{j-1}) * p_j * e(P_j)` where `e(P)` is the effective
/// rank of the node core unfolded with the first `P` values of `idx` as rows.
/// The end points (`P = 1` and `P = n`) count as 1. The network should have
/// its center at `node` so the core spectra are global ones.
pub fn reshape_cost(
    net: &TreeNetwork,
    node: NodeId,
    idx: IndexId,
    factors: &[usize],
    cache: &mut SplitRankCache,
) -> Result<f64> {
    let n = net.index_size(idx);
    if factors.iter().any(|&p| p < 2) || factors.iter().product::<usize>() != n {
        return invalid(format!("factors {factors:?} do not factor {n}"));
    }
    let Some(core_node) = net.node(node) else {
        return invalid(format!("unknown node {node}"));
    };
    let Some(axis) = core_node.axis_of(idx) else {
        return invalid(format!("{idx} is not on {node}"));
    };
    let mut cost = 0.0;
    let mut prefix = 1usize;
    let mut prev = 1.0;
    for &p in factors {
        prefix *= p;
        let e = if prefix == n {
            1.0
        } else if let Some(e) = cache.get(idx, prefix) {
            e
        } else {
            let core = &core_node.core;
            let rows_first = if core.order() == 1 {
                core.clone()
            } else {
                core.unfold(&[axis])?
            };
            let cols = rows_first.len() / prefix;
            let m = nalgebra::DMatrix::from_row_slice(prefix, cols, rows_first.values());
            instrument::bump(Counter::ReshapeSvd);
            let e = singular_values(&m)?.effective_rank().unwrap_or(1.0);
            cache.entries.insert((idx, prefix), e);
            e
        };
        cost += prev * p as f64 * e;
        prev = e;
    }
    Ok(cost)
}

/// One factorization choice per reshapeable index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReshapeVariant {
    pub choices: Vec<(IndexId, Vec<usize>)>,
    pub cost: f64,
}

impl ReshapeVariant {
    pub fn is_identity(&self) -> bool {
        self.choices.iter().all(|(_, f)| f.len() == 1)
    }

    /// Applies the factorizations to a copy of `net`.
    pub fn apply(&self, net: &TreeNetwork) -> Result<TreeNetwork> {
        let mut out = net.clone();
        for (idx, factors) in &self.choices {
            if factors.len() > 1 {
                out.reshape_free(*idx, factors)?;
            }
        }
        Ok(out)
    }
}

/// Free indices of `node` outside `frozen`.
fn reshapeable(net: &TreeNetwork, node: NodeId, frozen: &BTreeSet<IndexId>) -> Vec<IndexId> {
    net.node(node)
        .map(|n| {
            n.indices
                .iter()
                .copied()
                .filter(|i| net.index(*i).is_some_and(|info| info.free) && !frozen.contains(i))
                .collect()
        })
        .unwrap_or_default()
}

/// Keeps the `top_k` cheapest factorizations per free index of `node`
/// (ties: shorter first, then lexicographic) and returns their cartesian
/// combinations, cheapest summed cost first, capped at [`MAX_VARIANTS`].
/// Indices in `frozen` keep their size.
pub fn top_reshape(
    net: &TreeNetwork,
    node: NodeId,
    max_factors: usize,
    top_k: usize,
    frozen: &BTreeSet<IndexId>,
) -> Result<Vec<ReshapeVariant>> {
    let mut work = net.clone();
    work.move_center(node)?;
    let mut cache = SplitRankCache::new();
    let mut per_index: Vec<IndexOptions> = Vec::new();
    for idx in reshapeable(&work, node, frozen) {
        let mut scored = Vec::new();
        for f in enumerate_factorizations(work.index_size(idx), max_factors) {
            let c = reshape_cost(&work, node, idx, &f, &mut cache)?;
            scored.push((c, f));
        }
        if scored.is_empty() {
            continue;
        }
        scored.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| a.1.len().cmp(&b.1.len()))
                .then_with(|| a.1.cmp(&b.1))
        });
        scored.truncate(top_k.max(1));
        per_index.push((idx, scored));
    }
    Ok(cheapest_combinations(&per_index, MAX_VARIANTS))
}

#[derive(PartialEq)]
struct Frontier {
    cost: f64,
    picks: Vec<usize>,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed for a min-heap.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.picks.cmp(&self.picks))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Scored factorizations available for one index.
type IndexOptions = (IndexId, Vec<(f64, Vec<usize>)>);

fn cheapest_combinations(per_index: &[IndexOptions], limit: usize) -> Vec<ReshapeVariant> {
    let build = |picks: &[usize]| ReshapeVariant {
        choices: per_index
            .iter()
            .zip(picks)
            .map(|((idx, opts), &k)| (*idx, opts[k].1.clone()))
            .collect(),
        cost: per_index
            .iter()
            .zip(picks)
            .map(|((_, opts), &k)| opts[k].0)
            .sum(),
    };
    let start = vec![0usize; per_index.len()];
    let mut heap = BinaryHeap::new();
    let mut seen = BTreeSet::new();
    heap.push(Frontier {
        cost: build(&start).cost,
        picks: start.clone(),
    });
    seen.insert(start);
    let mut out = Vec::new();
    while let Some(Frontier { picks, .. }) = heap.pop() {
        out.push(build(&picks));
        if out.len() == limit {
            break;
        }
        for i in 0..picks.len() {
            if picks[i] + 1 < per_index[i].1.len() {
                let mut next = picks.clone();
                next[i] += 1;
                if seen.insert(next.clone()) {
                    heap.push(Frontier {
                        cost: build(&next).cost,
                        picks: next,
                    });
                }
            }
        }
    }
    out
}

/// Identity variant (no index reshaped).
pub fn identity_variant(
    net: &TreeNetwork,
    node: NodeId,
    frozen: &BTreeSet<IndexId>,
) -> ReshapeVariant {
    let choices: Vec<(IndexId, Vec<usize>)> = reshapeable(net, node, frozen)
        .into_iter()
        .map(|i| (i, vec![net.index_size(i)]))
        .collect();
    let cost = choices.iter().map(|(_, f)| f[0] as f64).sum();
    ReshapeVariant { choices, cost }
}

/// Uniformly random factorization per index (ablation baseline).
pub fn random_variant<R: Rng>(
    net: &TreeNetwork,
    node: NodeId,
    max_factors: usize,
    frozen: &BTreeSet<IndexId>,
    rng: &mut R,
) -> ReshapeVariant {
    let choices: Vec<(IndexId, Vec<usize>)> = reshapeable(net, node, frozen)
        .into_iter()
        .filter_map(|i| {
            let opts = enumerate_factorizations(net.index_size(i), max_factors);
            opts.choose(rng).map(|f| (i, f.clone()))
        })
        .collect();
    ReshapeVariant {
        choices,
        cost: f64::NAN,
    }
}

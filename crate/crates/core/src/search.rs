//! Topology search over clustered free indices: spectrum table, laminar
//! family enumeration, rank-constraint solving and the lazy-merge transform
//! that realizes a chosen family on an existing network.
//!
//! Clusters are numbered `0..k`; the last cluster is the anchor. A
//! bi-partition is stored canonically as the bitmask of the side that does
//! not contain the anchor.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::Spectrum;
use crate::network::{IndexId, TreeNetwork};

/// Largest node (in entries) a forced merge may create.
pub const MERGE_CAP: u128 = 1 << 24;

/// Relative tolerance for exact splits made while realizing a family.
const SPLIT_REL_TOL: f64 = 1e-14;

/// Canonical bi-partition masks forming a laminar family, sorted ascending.
pub type Family = Vec<u32>;

/// Free-index groups treated as atomic by the search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Clusters(pub Vec<Vec<IndexId>>);

impl Clusters {
    pub fn singletons(indices: &[IndexId]) -> Self {
        Self(indices.iter().map(|&i| vec![i]).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn full_mask(&self) -> u32 {
        (1u32 << self.0.len()) - 1
    }

    fn anchor_bit(&self) -> u32 {
        1u32 << (self.0.len() - 1)
    }

    /// Canonical form: the side without the anchor.
    pub fn canonical(&self, mask: u32) -> u32 {
        if mask & self.anchor_bit() != 0 {
            !mask & self.full_mask()
        } else {
            mask
        }
    }

    pub fn side(&self, mask: u32) -> BTreeSet<IndexId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(c, _)| mask >> c & 1 == 1)
            .flat_map(|(_, ids)| ids.iter().copied())
            .collect()
    }

    /// Products of member index sizes.
    pub fn sizes(&self, net: &TreeNetwork) -> Vec<u128> {
        self.0
            .iter()
            .map(|ids| ids.iter().map(|&i| net.index_size(i) as u128).product())
            .collect()
    }

    fn owner_of(&self) -> BTreeMap<IndexId, usize> {
        self.0
            .iter()
            .enumerate()
            .flat_map(|(c, ids)| ids.iter().map(move |&i| (i, c)))
            .collect()
    }

    /// Cluster mask of a free-index set, or `None` when it cuts a cluster.
    fn mask_of(&self, set: &BTreeSet<IndexId>, owner: &BTreeMap<IndexId, usize>) -> Option<u32> {
        let mut mask = 0u32;
        for i in set {
            mask |= 1 << owner[i];
        }
        let covered: usize = (0..self.0.len())
            .filter(|c| mask >> c & 1 == 1)
            .map(|c| self.0[c].len())
            .sum();
        (covered == set.len()).then_some(mask)
    }

    fn validate(&self, net: &TreeNetwork) -> Result<()> {
        if self.0.len() < 2 || self.0.len() > 16 {
            return invalid(format!(
                "search needs 2..=16 clusters, got {}",
                self.0.len()
            ));
        }
        let all: BTreeSet<IndexId> = self.0.iter().flatten().copied().collect();
        let free: BTreeSet<IndexId> = net.free_order().iter().copied().collect();
        let count: usize = self.0.iter().map(Vec::len).sum();
        if all != free || count != free.len() || self.0.iter().any(Vec::is_empty) {
            return invalid("clusters must partition the free indices");
        }
        Ok(())
    }
}

/// Spectra of every canonical cluster bi-partition.
#[derive(Debug, Clone)]
pub struct SpectrumTable {
    pub entries: BTreeMap<u32, Spectrum>,
}

impl SpectrumTable {
    pub fn get(&self, mask: u32) -> Option<&Spectrum> {
        self.entries.get(&mask)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One spectrum per canonical subset of clusters.
pub fn precompute_spectra(net: &TreeNetwork, clusters: &Clusters) -> Result<SpectrumTable> {
    clusters.validate(net)?;
    let k = clusters.len();
    let mut entries = BTreeMap::new();
    for mask in 1..(1u32 << (k - 1)) {
        entries.insert(mask, net.unfolding_spectrum(&clusters.side(mask))?);
    }
    Ok(SpectrumTable { entries })
}

/// All laminar families of canonical bi-partitions over `k` clusters,
/// including the empty family.
pub fn enumerate_topologies(k: usize) -> Vec<Family> {
    assert!((2..=16).contains(&k), "cluster count out of range");
    let masks: Vec<u32> = (1..(1u32 << (k - 1))).collect();
    let mut out = Vec::new();
    let mut current = Vec::new();
    extend_families(&masks, 0, &mut current, &mut out);
    out
}

fn laminar(a: u32, b: u32) -> bool {
    a & b == 0 || a & b == a || a & b == b
}

fn extend_families(masks: &[u32], from: usize, current: &mut Vec<u32>, out: &mut Vec<Family>) {
    out.push(current.clone());
    for i in from..masks.len() {
        let m = masks[i];
        if current.iter().all(|&c| laminar(c, m)) {
            current.push(m);
            extend_families(masks, i + 1, current, out);
            current.pop();
        }
    }
}

/// Node of the tree induced by a family: the clusters it carries and the
/// family positions of its incident edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InducedNode {
    pub clusters: Vec<usize>,
    pub edges: Vec<usize>,
}

/// Tree induced by a laminar family: a root carrying the anchor plus one
/// node per family member.
pub fn induced_tree(family: &[u32], k: usize) -> Vec<InducedNode> {
    let m = family.len();
    // Parent of member i: smallest strict superset in the family, else root (index m).
    let parent: Vec<usize> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i && family[i] & family[j] == family[i])
                .min_by_key(|&j| family[j].count_ones())
                .unwrap_or(m)
        })
        .collect();
    let mut nodes = vec![
        InducedNode {
            clusters: Vec::new(),
            edges: Vec::new(),
        };
        m + 1
    ];
    for c in 0..k {
        let home = (0..m)
            .filter(|&j| family[j] >> c & 1 == 1)
            .min_by_key(|&j| family[j].count_ones())
            .unwrap_or(m);
        nodes[home].clusters.push(c);
    }
    for i in 0..m {
        nodes[i].edges.push(i);
        nodes[parent[i]].edges.push(i);
    }
    nodes
}

/// Size of the induced tree with the given bond ranks.
pub fn induced_size(nodes: &[InducedNode], cluster_sizes: &[u128], ranks: &[usize]) -> u128 {
    nodes
        .iter()
        .map(|n| {
            let c: u128 = n.clusters.iter().map(|&c| cluster_sizes[c]).product();
            let r: u128 = n.edges.iter().map(|&e| ranks[e] as u128).product();
            c.saturating_mul(r)
        })
        .fold(0u128, |a, b| a.saturating_add(b))
}

/// Minimal-size rank vector for a family under a squared-tail budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankAssignment {
    /// Rank per family member, aligned with the family.
    pub ranks: Vec<usize>,
    pub total_size: u128,
    pub discarded_sq_total: f64,
}

/// Branch-and-bound over per-edge ranks minimizing the induced size subject
/// to `sum tail_sq <= eps_abs^2`. Unassigned edges are bounded below by their
/// smallest rank that fits the whole budget.
pub fn solve_rank_constraints(
    family: &[u32],
    table: &SpectrumTable,
    eps_abs: f64,
    cluster_sizes: &[u128],
) -> Result<RankAssignment> {
    if !(eps_abs >= 0.0) {
        return invalid("error budget must be >= 0");
    }
    let k = cluster_sizes.len();
    let nodes = induced_tree(family, k);
    let spectra: Vec<&Spectrum> = family
        .iter()
        .map(|m| {
            table
                .get(*m)
                .ok_or_else(|| Error::InvalidArgument(format!("no spectrum for split {m:#b}")))
        })
        .collect::<Result<_>>()?;
    let budget_sq = eps_abs * eps_abs;
    let hi: Vec<usize> = spectra.iter().map(|s| s.nonzero_count().max(1)).collect();
    let lo: Vec<usize> = spectra
        .iter()
        .zip(&hi)
        .map(|(s, &h)| s.min_rank_within(eps_abs).clamp(1, h))
        .collect();
    let mut search = RankSearch {
        nodes: &nodes,
        cluster_sizes,
        spectra: &spectra,
        lo: &lo,
        hi: &hi,
        best: None,
        ranks: lo.clone(),
    };
    search.descend(0, budget_sq, 0.0);
    let (ranks, total_size, discarded) = search.best.expect("exact ranks are always feasible");
    Ok(RankAssignment {
        ranks,
        total_size,
        discarded_sq_total: discarded,
    })
}

struct RankSearch<'a> {
    nodes: &'a [InducedNode],
    cluster_sizes: &'a [u128],
    spectra: &'a [&'a Spectrum],
    lo: &'a [usize],
    hi: &'a [usize],
    best: Option<(Vec<usize>, u128, f64)>,
    ranks: Vec<usize>,
}

impl RankSearch<'_> {
    fn descend(&mut self, edge: usize, remaining: f64, used: f64) {
        let m = self.ranks.len();
        if edge == m {
            let size = induced_size(self.nodes, self.cluster_sizes, &self.ranks);
            if self.best.as_ref().is_none_or(|b| size < b.1) {
                self.best = Some((self.ranks.clone(), size, used));
            }
            return;
        }
        let spec = self.spectra[edge];
        let start = spec
            .min_rank_within(remaining.max(0.0).sqrt())
            .clamp(self.lo[edge], self.hi[edge]);
        let last = edge + 1 == m;
        for r in start..=self.hi[edge] {
            let tail = spec.tail_sq(r);
            // The exact rank is always admissible; its tail is rounding noise.
            if tail > remaining && r < self.hi[edge] {
                continue;
            }
            self.ranks[edge] = r;
            // Admissible bound: remaining edges at their lowest useful rank.
            for e in edge + 1..m {
                self.ranks[e] = self.lo[e];
            }
            let bound = induced_size(self.nodes, self.cluster_sizes, &self.ranks);
            if self.best.as_ref().is_some_and(|b| bound >= b.1) {
                break;
            }
            self.descend(edge + 1, (remaining - tail).max(0.0), used + tail);
            if last {
                break;
            }
        }
    }
}

/// Rewrites `net` into the topology induced by `family` over `clusters`.
/// Edges whose bi-partition is absent from the family (or cuts a cluster)
/// are contracted away; missing splits are applied exactly; finally every
/// edge is truncated according to `plan(mask)` = (absolute budget, rank cap).
pub fn transform_structure(
    net: &TreeNetwork,
    clusters: &Clusters,
    family: &[u32],
    mut plan: impl FnMut(u32) -> (f64, Option<usize>),
) -> Result<TreeNetwork> {
    clusters.validate(net)?;
    let wanted: BTreeSet<u32> = family.iter().copied().collect();
    if family
        .iter()
        .enumerate()
        .any(|(i, &a)| family[i + 1..].iter().any(|&b| !laminar(a, b)))
    {
        return invalid("family is not laminar");
    }
    let owner = clusters.owner_of();
    let mut out = net.clone();
    let tol = SPLIT_REL_TOL * out.norm()?;

    // Contract every edge that conflicts with the target or duplicates a kept split.
    loop {
        let mut seen = BTreeSet::new();
        let mut conflict = None;
        for (bond, a, b) in out.edges() {
            let side = out.side_free(a, bond);
            let keep = match clusters.mask_of(&side, &owner) {
                Some(m) => {
                    let c = clusters.canonical(m);
                    c != 0 && wanted.contains(&c) && seen.insert(c)
                }
                None => false,
            };
            if !keep {
                conflict = Some((bond, a, b));
                break;
            }
        }
        let Some((bond, a, b)) = conflict else { break };
        let r = out.index_size(bond) as u128;
        let merged = (out.node(a).unwrap().core.len() as u128)
            * (out.node(b).unwrap().core.len() as u128)
            / (r * r);
        if merged > MERGE_CAP {
            return Err(Error::TooLarge {
                entries: merged,
                cap: MERGE_CAP,
            });
        }
        out.merge_nodes(a, b)?;
    }

    // Apply the missing splits, each at the node whose legs separate it.
    loop {
        let present: BTreeSet<u32> = out
            .edges()
            .iter()
            .filter_map(|&(bond, a, _)| clusters.mask_of(&out.side_free(a, bond), &owner))
            .map(|m| clusters.canonical(m))
            .collect();
        let Some(&target) = family.iter().find(|m| !present.contains(m)) else {
            break;
        };
        let mut applied = false;
        for node in out.node_ids() {
            let legs: Vec<(IndexId, u32)> = out
                .leg_sets(node)
                .into_iter()
                .map(|(leg, set)| {
                    let mut m = 0u32;
                    for i in &set {
                        m |= 1 << owner[i];
                    }
                    (leg, m)
                })
                .collect();
            if legs
                .iter()
                .any(|&(_, m)| m & target != 0 && m & target != m)
            {
                continue;
            }
            let side: Vec<IndexId> = legs
                .iter()
                .filter(|&&(_, m)| m & target == m)
                .map(|&(l, _)| l)
                .collect();
            let union = legs
                .iter()
                .filter(|&&(_, m)| m & target == m)
                .fold(0, |a, &(_, m)| a | m);
            if union != target || side.is_empty() || side.len() == legs.len() {
                continue;
            }
            out.split_node(node, &side, tol, None)?;
            applied = true;
            break;
        }
        if !applied {
            return Err(Error::InvalidArgument(format!(
                "split {target:#b} cannot be realized"
            )));
        }
    }

    let masks: BTreeMap<IndexId, u32> = out
        .edges()
        .iter()
        .map(|&(bond, a, _)| {
            let m = clusters
                .mask_of(&out.side_free(a, bond), &owner)
                .expect("aligned");
            (bond, clusters.canonical(m))
        })
        .collect();
    out.truncate_sweep(|bond| plan(masks[&bond]))?;
    Ok(out)
}

/// Outcome of [`structure_search`].
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub net: TreeNetwork,
    pub family: Option<Family>,
    pub predicted_size: Option<u128>,
    pub changed: bool,
    /// Squared error budget spent by the chosen rank assignment.
    pub discarded_sq: f64,
}

/// Scored candidate emitted for tracing.
#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub family: Family,
    pub predicted_size: u128,
    pub feasible: bool,
}

/// Enumerates every topology over `clusters`, solves its ranks under the
/// absolute budget `eps_abs`, and realizes the smallest candidate that
/// beats the current size. Returns the input unchanged otherwise.
pub fn structure_search(
    net: &TreeNetwork,
    clusters: &Clusters,
    eps_abs: f64,
) -> Result<SearchResult> {
    structure_search_traced(net, clusters, eps_abs, &mut |_| {})
}

pub fn structure_search_traced(
    net: &TreeNetwork,
    clusters: &Clusters,
    eps_abs: f64,
    trace: &mut dyn FnMut(&Candidate),
) -> Result<SearchResult> {
    let unchanged = |net: &TreeNetwork| SearchResult {
        net: net.clone(),
        family: None,
        predicted_size: None,
        changed: false,
        discarded_sq: 0.0,
    };
    if clusters.len() < 2 {
        return Ok(unchanged(net));
    }
    let table = precompute_spectra(net, clusters)?;
    let sizes = clusters.sizes(net);
    let current = net.size() as u128;
    let mut scored = Vec::new();
    for family in enumerate_topologies(clusters.len()) {
        let a = solve_rank_constraints(&family, &table, eps_abs, &sizes)?;
        trace(&Candidate {
            family: family.clone(),
            predicted_size: a.total_size,
            feasible: a.total_size < current,
        });
        if a.total_size < current {
            scored.push((a.total_size, family, a));
        }
    }
    scored.sort_by(|x, y| {
        x.0.cmp(&y.0)
            .then_with(|| x.1.len().cmp(&y.1.len()))
            .then_with(|| x.1.cmp(&y.1))
    });
    for (predicted, family, assignment) in scored {
        let plan: BTreeMap<u32, (f64, usize)> = family
            .iter()
            .zip(&assignment.ranks)
            .map(|(&m, &r)| {
                let tail = table.get(m).unwrap().tail_sq(r).sqrt();
                (m, (tail * (1.0 + 1e-9) + f64::MIN_POSITIVE, r))
            })
            .collect();
        match transform_structure(net, clusters, &family, |m| {
            let (b, r) = plan[&m];
            (b, Some(r))
        }) {
            Ok(out) if (out.size() as u128) < current => {
                return Ok(SearchResult {
                    net: out,
                    family: Some(family),
                    predicted_size: Some(predicted),
                    changed: true,
                    discarded_sq: assignment.discarded_sq_total,
                })
            }
            Ok(_) | Err(Error::TooLarge { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(unchanged(net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::tt_svd;
    use crate::instrument::{self, Counter};
    use crate::linalg::singular_values;
    use crate::network::Target;
    use crate::tensor::DenseTensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
    }

    fn rel_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
        let diff: f64 = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        diff.sqrt() / a.frobenius_norm()
    }

    fn singletons(net: &TreeNetwork) -> Clusters {
        Clusters::singletons(net.free_order())
    }

    #[test]
    fn topology_counts() {
        assert_eq!(enumerate_topologies(2), vec![vec![], vec![1]]);
        assert_eq!(enumerate_topologies(3).len(), 8);
        for k in 2..=5 {
            for f in enumerate_topologies(k) {
                for (i, &a) in f.iter().enumerate() {
                    assert!(a != 0 && a >> (k - 1) == 0);
                    for &b in &f[i + 1..] {
                        assert!(a & b == 0 || a & b == a || a & b == b);
                    }
                }
            }
        }
    }

    #[test]
    fn induced_tree_has_no_bare_degree_two_nodes() {
        for f in enumerate_topologies(5) {
            let nodes = induced_tree(&f, 5);
            assert_eq!(nodes.len(), f.len() + 1);
            for n in &nodes[..f.len()] {
                assert!(!n.clusters.is_empty() || n.edges.len() >= 3, "{f:?}");
            }
            let placed: usize = nodes.iter().map(|n| n.clusters.len()).sum();
            assert_eq!(placed, 5);
        }
    }

    #[test]
    fn spectrum_table_matches_dense_svd() {
        let t = random(&[2, 3, 2, 3], 1);
        let net = tt_svd(&t, 0.0).unwrap();
        let two = Clusters(vec![
            vec![IndexId(0), IndexId(1)],
            vec![IndexId(2), IndexId(3)],
        ]);
        assert_eq!(precompute_spectra(&net, &two).unwrap().len(), 1);
        let table = precompute_spectra(&net, &singletons(&net)).unwrap();
        assert_eq!(table.len(), 7);
        for (&mask, spec) in &table.entries {
            let rows: Vec<usize> = (0..4).filter(|c| mask >> c & 1 == 1).collect();
            let u = t.unfold(&rows).unwrap();
            let oracle = singular_values(&u.to_matrix(1)).unwrap();
            for (a, b) in spec.values().iter().zip(oracle.values()) {
                assert!((a - b).abs() < 1e-8 * oracle.largest(), "mask {mask:#b}");
            }
        }
    }

    fn table_of(spectra: &[(u32, Vec<f64>)]) -> SpectrumTable {
        SpectrumTable {
            entries: spectra
                .iter()
                .map(|(m, v)| (*m, Spectrum::new(v.clone()).unwrap()))
                .collect(),
        }
    }

    #[test]
    fn single_edge_budget_one_gives_rank_one() {
        let table = table_of(&[(1, vec![3.0, 1.0])]);
        let a = solve_rank_constraints(&[1], &table, 1.0, &[2, 2]).unwrap();
        assert_eq!(a.ranks, vec![1]);
        assert_eq!(a.total_size, 4);
        assert_eq!(a.discarded_sq_total, 1.0);
    }

    #[test]
    fn zero_budget_keeps_exact_ranks() {
        let table = table_of(&[
            (1, vec![3.0, 2.0, 1.0, 0.0]),
            (3, vec![5.0, 1.0]),
            (4, vec![1.0, 0.5, 0.25]),
        ]);
        let a = solve_rank_constraints(&[1, 3, 4], &table, 0.0, &[4, 4, 4, 4]).unwrap();
        assert_eq!(a.ranks, vec![3, 2, 3]);
    }

    fn brute_force(family: &[u32], table: &SpectrumTable, eps: f64, sizes: &[u128]) -> u128 {
        let lens: Vec<usize> = family
            .iter()
            .map(|m| table.get(*m).unwrap().len())
            .collect();
        let nodes = induced_tree(family, sizes.len());
        let mut best = u128::MAX;
        let mut ranks = vec![1usize; family.len()];
        loop {
            let tail: f64 = family
                .iter()
                .zip(&ranks)
                .map(|(m, &r)| table.get(*m).unwrap().tail_sq(r))
                .sum();
            if tail <= eps * eps {
                best = best.min(induced_size(&nodes, sizes, &ranks));
            }
            let mut e = 0;
            loop {
                if e == ranks.len() {
                    return best;
                }
                ranks[e] += 1;
                if ranks[e] <= lens[e] {
                    break;
                }
                ranks[e] = 1;
                e += 1;
            }
        }
    }

    #[test]
    fn solver_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let families: Vec<Family> = enumerate_topologies(4)
            .into_iter()
            .filter(|f| !f.is_empty() && f.len() <= 3)
            .collect();
        for trial in 0..300 {
            let family = &families[trial % families.len()];
            let spectra: Vec<(u32, Vec<f64>)> = family
                .iter()
                .map(|&m| {
                    let len = rng.gen_range(1..=6);
                    (m, (0..len).map(|_| rng.gen_range(0.01..1.0)).collect())
                })
                .collect();
            let table = table_of(&spectra);
            let sizes: Vec<u128> = (0..4).map(|_| rng.gen_range(2..6)).collect();
            let eps = rng.gen_range(0.0..1.5);
            let a = solve_rank_constraints(family, &table, eps, &sizes).unwrap();
            assert_eq!(
                a.total_size,
                brute_force(family, &table, eps, &sizes),
                "{family:?} eps {eps}"
            );
            assert!(a.discarded_sq_total <= eps * eps + 1e-15);
            assert_eq!(
                a.total_size,
                induced_size(&induced_tree(family, 4), &sizes, &a.ranks)
            );
        }
    }

    #[test]
    fn negative_budget_rejected() {
        let table = table_of(&[(1, vec![1.0])]);
        assert!(solve_rank_constraints(&[1], &table, -1.0, &[2, 2]).is_err());
    }

    #[test]
    fn current_topology_needs_no_merges() {
        let t = random(&[3, 3, 3, 3], 2);
        let net = tt_svd(&t, 0.0).unwrap();
        // The chain's own splits: {0}, {0,1}, {0,1,2}.
        instrument::reset();
        let out =
            transform_structure(&net, &singletons(&net), &[1, 3, 7], |_| (1e-14, None)).unwrap();
        assert_eq!(instrument::get(Counter::Merge), 0);
        assert_eq!(out.size(), net.size());
        assert!(rel_err(&t, &out.contract_to_dense(Target::Native).unwrap()) < 1e-12);
    }

    #[test]
    fn overlapping_split_merges_two_cores() {
        let t = random(&[2, 3, 2, 3], 3);
        let net = tt_svd(&t, 0.0).unwrap();
        instrument::reset();
        // {I1} | rest, {I2, I3} | rest, {I4} | rest.
        let out =
            transform_structure(&net, &singletons(&net), &[1, 6, 7], |_| (1e-14, None)).unwrap();
        assert_eq!(instrument::get(Counter::Merge), 1);
        out.validate().unwrap();
        assert_eq!(out.node_count(), 4);
        assert!(rel_err(&t, &out.contract_to_dense(Target::Native).unwrap()) < 1e-12);
    }

    #[test]
    fn random_families_realized_within_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let families = enumerate_topologies(4);
        for trial in 0..40 {
            let t = random(&[3, 2, 3, 2], 50 + trial);
            let net = tt_svd(&t, 0.0).unwrap();
            let clusters = singletons(&net);
            let family = &families[rng.gen_range(0..families.len())];
            let table = precompute_spectra(&net, &clusters).unwrap();
            let eps_rel = [0.0, 0.05, 0.3][trial as usize % 3];
            let eps_abs = eps_rel * t.frobenius_norm();
            let a = solve_rank_constraints(family, &table, eps_abs, &clusters.sizes(&net)).unwrap();
            let plan: BTreeMap<u32, usize> = family
                .iter()
                .copied()
                .zip(a.ranks.iter().copied())
                .collect();
            let out = transform_structure(&net, &clusters, family, |m| {
                let tail = table.get(m).unwrap().tail_sq(plan[&m]).sqrt();
                (tail * (1.0 + 1e-9), Some(plan[&m]))
            })
            .unwrap();
            out.validate().unwrap();
            assert_eq!(out.node_count(), family.len() + 1);
            assert_eq!(out.size() as u128, a.total_size, "{family:?}");
            let e = rel_err(&t, &out.contract_to_dense(Target::Native).unwrap());
            assert!(
                e <= 1.05 * eps_rel + 1e-12,
                "{family:?} err {e} eps {eps_rel}"
            );
        }
    }

    fn tucker(n: usize, r: usize, seed: u64) -> DenseTensor {
        let g = random(&[r; 4], seed);
        let u: Vec<DenseTensor> = (0..4).map(|k| random(&[n, r], seed + 1 + k)).collect();
        DenseTensor::from_fn(vec![n; 4], |i| {
            let mut s = 0.0;
            for a in 0..r {
                for b in 0..r {
                    for c in 0..r {
                        for d in 0..r {
                            s += g.get(&[a, b, c, d])
                                * u[0].get(&[i[0], a])
                                * u[1].get(&[i[1], b])
                                * u[2].get(&[i[2], c])
                                * u[3].get(&[i[3], d]);
                        }
                    }
                }
            }
            s
        })
    }

    #[test]
    fn tucker_data_finds_star() {
        let t = tucker(6, 2, 5);
        let net = tt_svd(&t, 0.0).unwrap();
        assert_eq!(net.size(), 120);
        let res = structure_search(&net, &singletons(&net), 1e-10 * t.frobenius_norm()).unwrap();
        assert!(res.changed);
        assert_eq!(res.family, Some(vec![1, 2, 4, 7]));
        assert_eq!(res.net.size(), 64);
        assert!(rel_err(&t, &res.net.contract_to_dense(Target::Native).unwrap()) < 1e-9);
    }

    #[test]
    fn huge_budget_allows_degenerate_winner() {
        let t = random(&[3, 3, 3, 3], 6);
        let net = tt_svd(&t, 0.0).unwrap();
        let res = structure_search(&net, &singletons(&net), 10.0 * t.frobenius_norm()).unwrap();
        assert!(res.changed);
        assert!(res.net.node(res.net.node_ids()[0]).is_some());
        let bonds: Vec<usize> = res
            .net
            .edges()
            .iter()
            .map(|&(b, _, _)| res.net.index_size(b))
            .collect();
        assert!(bonds.iter().all(|&r| r == 1));
    }

    #[test]
    fn search_is_deterministic() {
        let t = tucker(4, 2, 7);
        let net = tt_svd(&t, 0.0).unwrap();
        let eps = 1e-2 * t.frobenius_norm();
        let a = structure_search(&net, &singletons(&net), eps).unwrap();
        let b = structure_search(&net, &singletons(&net), eps).unwrap();
        assert_eq!(
            crate::network::serialize(&a.net),
            crate::network::serialize(&b.net)
        );
    }

    #[test]
    fn unchanged_when_nothing_beats_current() {
        let net = TreeNetwork::single(random(&[2, 2], 8));
        let res = structure_search(&net, &singletons(&net), 0.0).unwrap();
        assert!(!res.changed);
        assert_eq!(res.net.size(), net.size());
    }
}

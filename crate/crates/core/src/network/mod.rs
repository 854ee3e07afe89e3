//! Tree tensor networks: cores joined by internal (bond) indices, with
//! dangling free indices and a reshape map back to the native indices of the
//! represented data.

mod canonical;
mod io;
mod restructure;
mod surgery;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{tensordot, DenseTensor};

pub use canonical::{Split, SWAP_REL_TOL};
pub use io::{deserialize, serialize, FORMAT_VERSION};
pub use surgery::{Extracted, SubstituteOutcome};

/// Default cap on the number of entries of any densely materialized tensor.
pub const DENSE_CAP: u64 = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for IndexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexInfo {
    pub size: usize,
    pub free: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// Index carried by each axis of `core`, in axis order.
    pub indices: Vec<IndexId>,
    pub core: DenseTensor,
}

impl Node {
    pub fn axis_of(&self, idx: IndexId) -> Option<usize> {
        self.indices.iter().position(|&i| i == idx)
    }
}

/// Axis layout requested from [`TreeNetwork::contract_to_dense`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Axes follow the native indices, with factor indices regrouped.
    Native,
    /// Axes follow the current free index order.
    Current,
}

/// First invariant violation found by [`TreeNetwork::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNetwork {
    pub(crate) indices: BTreeMap<IndexId, IndexInfo>,
    pub(crate) nodes: BTreeMap<NodeId, Node>,
    pub(crate) free_order: Vec<IndexId>,
    /// Native index id -> ordered factor indices (row-major factorization).
    pub(crate) reshape_map: IndexMap<IndexId, Vec<IndexId>>,
    pub(crate) next_id: u64,
    /// Node toward which every other node is an isometry, when known.
    pub(crate) center: Option<NodeId>,
}

impl TreeNetwork {
    /// Network with one node holding `core`; free indices `0..order`.
    pub fn single(core: DenseTensor) -> Self {
        let d = core.order();
        let ids: Vec<IndexId> = (0..d as u64).map(IndexId).collect();
        let mut indices = BTreeMap::new();
        for (k, &id) in ids.iter().enumerate() {
            indices.insert(
                id,
                IndexInfo {
                    size: core.shape()[k],
                    free: true,
                },
            );
        }
        let node = NodeId(d as u64);
        let mut nodes = BTreeMap::new();
        nodes.insert(
            node,
            Node {
                indices: ids.clone(),
                core,
            },
        );
        Self {
            indices,
            nodes,
            free_order: ids.clone(),
            reshape_map: ids.iter().map(|&i| (i, vec![i])).collect(),
            next_id: d as u64 + 1,
            center: Some(node),
        }
    }

    /// Tensor train from cores shaped `[n1, r1]`, `[r1, n2, r2]`, ..., `[r, nd]`.
    /// A single core of order 1 gives a one-node network.
    pub fn chain(cores: Vec<DenseTensor>) -> Result<Self> {
        let d = cores.len();
        if d == 0 {
            return invalid("chain needs at least one core");
        }
        if d == 1 {
            if cores[0].order() != 1 {
                return invalid("single chain core must have order 1");
            }
            return Ok(Self::single(cores.into_iter().next().unwrap()));
        }
        let mut indices = BTreeMap::new();
        let free: Vec<IndexId> = (0..d as u64).map(IndexId).collect();
        let bonds: Vec<IndexId> = (0..d as u64 - 1).map(|k| IndexId(d as u64 + k)).collect();
        let mut nodes = BTreeMap::new();
        let first_node = 2 * d as u64 - 1;
        for (k, core) in cores.into_iter().enumerate() {
            let mut legs = Vec::new();
            if k > 0 {
                legs.push(bonds[k - 1]);
            }
            legs.push(free[k]);
            if k + 1 < d {
                legs.push(bonds[k]);
            }
            if core.order() != legs.len() {
                return invalid(format!(
                    "chain core {k} has order {}, expected {}",
                    core.order(),
                    legs.len()
                ));
            }
            for (ax, &leg) in legs.iter().enumerate() {
                let size = core.shape()[ax];
                let free_leg = free.contains(&leg);
                if let Some(prev) = indices.insert(
                    leg,
                    IndexInfo {
                        size,
                        free: free_leg,
                    },
                ) {
                    if prev.size != size {
                        return invalid(format!(
                            "bond {leg} has mismatched sizes {} and {size}",
                            prev.size
                        ));
                    }
                }
            }
            nodes.insert(
                NodeId(first_node + k as u64),
                Node {
                    indices: legs,
                    core,
                },
            );
        }
        let net = Self {
            indices,
            nodes,
            free_order: free.clone(),
            reshape_map: free.iter().map(|&i| (i, vec![i])).collect(),
            next_id: first_node + d as u64,
            center: None,
        };
        net.validate().map_err(|v| Error::InvalidArgument(v.0))?;
        Ok(net)
    }

    /// Assembles a network from raw parts and validates it.
    pub fn from_parts(
        indices: BTreeMap<IndexId, IndexInfo>,
        nodes: BTreeMap<NodeId, Node>,
        free_order: Vec<IndexId>,
        reshape_map: IndexMap<IndexId, Vec<IndexId>>,
    ) -> Result<Self> {
        let max_id = indices
            .keys()
            .map(|i| i.0)
            .chain(nodes.keys().map(|n| n.0))
            .chain(reshape_map.keys().map(|n| n.0))
            .max()
            .unwrap_or(0);
        let net = Self {
            indices,
            nodes,
            free_order,
            reshape_map,
            next_id: max_id + 1,
            center: None,
        };
        net.validate().map_err(|v| Error::InvalidArgument(v.0))?;
        Ok(net)
    }

    pub(crate) fn fresh(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub(crate) fn fresh_index(&mut self, size: usize, free: bool) -> IndexId {
        let id = IndexId(self.fresh());
        self.indices.insert(id, IndexInfo { size, free });
        id
    }

    pub(crate) fn fresh_node(&mut self) -> NodeId {
        NodeId(self.fresh())
    }

    // ----- queries -----

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn index(&self, id: IndexId) -> Option<IndexInfo> {
        self.indices.get(&id).copied()
    }

    pub fn index_size(&self, id: IndexId) -> usize {
        self.indices[&id].size
    }

    pub fn free_order(&self) -> &[IndexId] {
        &self.free_order
    }

    pub fn reshape_map(&self) -> &IndexMap<IndexId, Vec<IndexId>> {
        &self.reshape_map
    }

    pub fn center(&self) -> Option<NodeId> {
        self.center
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Native index ids with their sizes, in native order.
    pub fn native_sizes(&self) -> Vec<(IndexId, usize)> {
        self.reshape_map
            .iter()
            .map(|(&n, fs)| (n, fs.iter().map(|f| self.index_size(*f)).product()))
            .collect()
    }

    /// Node carrying a free index.
    pub fn owner(&self, idx: IndexId) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|(_, n)| n.indices.contains(&idx))
            .map(|(&id, _)| id)
    }

    /// Both endpoints of an internal index.
    pub fn endpoints(&self, bond: IndexId) -> Option<(NodeId, NodeId)> {
        let mut it = self
            .nodes
            .iter()
            .filter(|(_, n)| n.indices.contains(&bond))
            .map(|(&id, _)| id);
        match (it.next(), it.next()) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        }
    }

    /// Neighbors of `node` with the connecting bond, in the node's axis order.
    pub fn neighbors(&self, node: NodeId) -> Vec<(NodeId, IndexId)> {
        let n = &self.nodes[&node];
        n.indices
            .iter()
            .filter(|i| !self.indices[i].free)
            .filter_map(|&b| {
                self.endpoints(b)
                    .map(|(x, y)| (if x == node { y } else { x }, b))
            })
            .collect()
    }

    /// Internal edges as (bond, endpoint, endpoint).
    pub fn edges(&self) -> Vec<(IndexId, NodeId, NodeId)> {
        let mut owners: BTreeMap<IndexId, Vec<NodeId>> = BTreeMap::new();
        for (&nid, n) in &self.nodes {
            for &i in &n.indices {
                if !self.indices[&i].free {
                    owners.entry(i).or_default().push(nid);
                }
            }
        }
        owners
            .into_iter()
            .filter(|(_, v)| v.len() == 2)
            .map(|(b, v)| (b, v[0], v[1]))
            .collect()
    }

    /// Free indices reachable from `start` without crossing `via` (a bond of `start`
    /// leading away), i.e. the side of the cut at `via` that contains `start`.
    pub fn side_free(&self, start: NodeId, via: IndexId) -> BTreeSet<IndexId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![(start, via)];
        while let Some((node, came)) = stack.pop() {
            for &i in &self.nodes[&node].indices {
                if i == came {
                    continue;
                }
                if self.indices[&i].free {
                    out.insert(i);
                } else if let Some((a, b)) = self.endpoints(i) {
                    let next = if a == node { b } else { a };
                    stack.push((next, i));
                }
            }
        }
        out
    }

    /// For each leg of `node`, the set of free indices behind it.
    pub fn leg_sets(&self, node: NodeId) -> Vec<(IndexId, BTreeSet<IndexId>)> {
        self.nodes[&node]
            .indices
            .iter()
            .map(|&leg| {
                if self.indices[&leg].free {
                    (leg, BTreeSet::from([leg]))
                } else {
                    let (a, b) = self.endpoints(leg).expect("bond has two endpoints");
                    let far = if a == node { b } else { a };
                    (leg, self.side_free(far, leg))
                }
            })
            .collect()
    }

    /// Path of nodes from `from` to `to`, inclusive.
    pub fn path(&self, from: NodeId, to: NodeId) -> Vec<NodeId> {
        let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(u) = queue.pop_front() {
            if u == to {
                break;
            }
            for (v, _) in self.neighbors(u) {
                if seen.insert(v) {
                    prev.insert(v, u);
                    queue.push_back(v);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[&cur];
            path.push(cur);
        }
        path.reverse();
        path
    }

    /// Bond joining two adjacent nodes.
    pub fn bond_between(&self, a: NodeId, b: NodeId) -> Option<IndexId> {
        let nb = &self.nodes.get(&b)?.indices;
        self.nodes
            .get(&a)?
            .indices
            .iter()
            .copied()
            .find(|i| !self.indices[i].free && nb.contains(i))
    }

    /// Total number of entries over all cores.
    pub fn size(&self) -> usize {
        self.nodes.values().map(|n| n.core.len()).sum()
    }

    /// Number of entries of the represented data tensor.
    pub fn dense_size(&self) -> u128 {
        self.free_order
            .iter()
            .map(|i| self.index_size(*i) as u128)
            .product()
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        let v = |m: String| Err(Violation(m));
        if self.nodes.is_empty() {
            return v("network has no nodes".into());
        }
        let mut carriers: BTreeMap<IndexId, usize> = BTreeMap::new();
        for (id, node) in &self.nodes {
            if node.core.order() != node.indices.len() {
                return v(format!(
                    "node {id} core order {} differs from {} indices",
                    node.core.order(),
                    node.indices.len()
                ));
            }
            let uniq: BTreeSet<_> = node.indices.iter().collect();
            if uniq.len() != node.indices.len() {
                return v(format!("node {id} repeats an index"));
            }
            for (ax, idx) in node.indices.iter().enumerate() {
                let Some(info) = self.indices.get(idx) else {
                    return v(format!("node {id} references unknown index {idx}"));
                };
                if info.size != node.core.shape()[ax] {
                    return v(format!(
                        "node {id} axis {ax} has size {}, index {idx} has size {}",
                        node.core.shape()[ax],
                        info.size
                    ));
                }
                *carriers.entry(*idx).or_default() += 1;
            }
        }
        let mut internal = 0usize;
        for (idx, info) in &self.indices {
            let c = carriers.get(idx).copied().unwrap_or(0);
            let want = if info.free { 1 } else { 2 };
            if c != want {
                return v(format!(
                    "{} index {idx} appears on {c} nodes",
                    if info.free { "free" } else { "internal" }
                ));
            }
            if info.size == 0 {
                return v(format!("index {idx} has size 0"));
            }
            if !info.free {
                internal += 1;
            }
        }
        if internal + 1 != self.nodes.len() {
            return v(format!(
                "{} nodes joined by {internal} internal indices: not a tree",
                self.nodes.len()
            ));
        }
        // Connectivity.
        let start = *self.nodes.keys().next().unwrap();
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for (w, _) in self.neighbors(u) {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        if seen.len() != self.nodes.len() {
            return v("network is disconnected (or has a cycle)".into());
        }
        let free: BTreeSet<IndexId> = self
            .indices
            .iter()
            .filter(|(_, i)| i.free)
            .map(|(&k, _)| k)
            .collect();
        let order: BTreeSet<IndexId> = self.free_order.iter().copied().collect();
        if order != free || order.len() != self.free_order.len() {
            return v("free_order does not list every free index exactly once".into());
        }
        let mut mapped = BTreeSet::new();
        for (native, factors) in &self.reshape_map {
            if factors.is_empty() {
                return v(format!("native index {native} has no factors"));
            }
            for f in factors {
                if !free.contains(f) {
                    return v(format!(
                        "reshape factor {f} of {native} is not a free index"
                    ));
                }
                if !mapped.insert(*f) {
                    return v(format!("free index {f} appears twice in the reshape map"));
                }
            }
        }
        if mapped != free {
            return v("reshape map does not cover every free index".into());
        }
        if let Some(c) = self.center {
            if !self.nodes.contains_key(&c) {
                return v(format!("orthogonality center {c} is not a node"));
            }
        }
        Ok(())
    }

    // ----- contraction -----

    /// Contracts the connected node set `group` into one tensor; returns the
    /// tensor and the index carried by each axis.
    pub fn contract_group(&self, group: &[NodeId]) -> (DenseTensor, Vec<IndexId>) {
        let in_group: BTreeSet<NodeId> = group.iter().copied().collect();
        let first = group[0];
        let mut acc = self.nodes[&first].core.clone();
        let mut labels = self.nodes[&first].indices.clone();
        let mut done = BTreeSet::from([first]);
        let mut frontier = VecDeque::from([first]);
        while let Some(u) = frontier.pop_front() {
            for (w, bond) in self.neighbors(u) {
                if !in_group.contains(&w) || done.contains(&w) {
                    continue;
                }
                let node = &self.nodes[&w];
                let ax_a = labels.iter().position(|&l| l == bond).unwrap();
                let ax_b = node.axis_of(bond).unwrap();
                acc = tensordot(&acc, &[ax_a], &node.core, &[ax_b]);
                labels.remove(ax_a);
                labels.extend(node.indices.iter().copied().filter(|&i| i != bond));
                done.insert(w);
                frontier.push_back(w);
            }
        }
        assert_eq!(
            done.len(),
            in_group.len(),
            "contract_group needs a connected group"
        );
        (acc, labels)
    }

    /// Dense data tensor, capped at `cap` entries.
    pub fn contract_to_dense_capped(&self, target: Target, cap: u64) -> Result<DenseTensor> {
        self.validate().map_err(|v| Error::InvalidArgument(v.0))?;
        let entries = self.dense_size();
        if entries > cap as u128 {
            return Err(Error::TooLarge {
                entries,
                cap: cap as u128,
            });
        }
        // Contract starting from the largest-degree node keeps intermediates compact enough.
        let order: Vec<NodeId> = self.node_ids();
        let (t, labels) = self.contract_group(&order);
        let axes: Vec<IndexId> = match target {
            Target::Current => self.free_order.clone(),
            Target::Native => self.reshape_map.values().flatten().copied().collect(),
        };
        let perm: Vec<usize> = axes
            .iter()
            .map(|a| labels.iter().position(|l| l == a).unwrap())
            .collect();
        let t = t.permute(&perm);
        match target {
            Target::Current => Ok(t),
            Target::Native => {
                let shape = self.native_sizes().into_iter().map(|(_, s)| s).collect();
                t.reshape(shape)
            }
        }
    }

    pub fn contract_to_dense(&self, target: Target) -> Result<DenseTensor> {
        self.contract_to_dense_capped(target, DENSE_CAP)
    }

    /// Value at a point given in native coordinates.
    pub fn evaluate_native(&self, point: &[usize]) -> f64 {
        let mut fixed = BTreeMap::new();
        for ((_, factors), &x) in self.reshape_map.iter().zip(point) {
            // Row-major split of the native coordinate over its factors.
            let mut rem = x;
            for f in factors.iter().rev() {
                let s = self.index_size(*f);
                fixed.insert(*f, rem % s);
                rem /= s;
            }
        }
        self.evaluate_fixed(&fixed)
    }

    /// Value at a point given by a coordinate for every free index.
    pub fn evaluate_fixed(&self, fixed: &BTreeMap<IndexId, usize>) -> f64 {
        // Slice every core at its free coordinates, then contract the bond-only tree.
        let mut sliced: BTreeMap<NodeId, (DenseTensor, Vec<IndexId>)> = BTreeMap::new();
        for (&id, node) in &self.nodes {
            let mut t = node.core.clone();
            let mut labels = node.indices.clone();
            let mut ax = 0;
            while ax < labels.len() {
                if let Some(&x) = fixed.get(&labels[ax]) {
                    t = slice_axis(&t, ax, x);
                    labels.remove(ax);
                } else {
                    ax += 1;
                }
            }
            sliced.insert(id, (t, labels));
        }
        let start = *self.nodes.keys().next().unwrap();
        let (mut acc, mut labels) = sliced.remove(&start).unwrap();
        let mut queue = VecDeque::from([start]);
        let mut done = BTreeSet::from([start]);
        while let Some(u) = queue.pop_front() {
            for (w, bond) in self.neighbors(u) {
                if !done.insert(w) {
                    continue;
                }
                let (t, l) = sliced.remove(&w).unwrap();
                let a = labels.iter().position(|&x| x == bond).unwrap();
                let b = l.iter().position(|&x| x == bond).unwrap();
                acc = tensordot(&acc, &[a], &t, &[b]);
                labels.remove(a);
                labels.extend(l.into_iter().filter(|&x| x != bond));
                queue.push_back(w);
            }
        }
        debug_assert!(labels.is_empty());
        acc.values()[0]
    }

    /// Frobenius norm of the represented tensor.
    pub fn norm(&self) -> Result<f64> {
        if let Some(c) = self.center {
            return Ok(self.nodes[&c].core.frobenius_norm());
        }
        let mut tmp = self.clone();
        let c = *tmp.nodes.keys().next().unwrap();
        tmp.orthonormalize_toward(c)?;
        Ok(tmp.nodes[&c].core.frobenius_norm())
    }
}

/// Fixes axis `ax` of `t` at position `x`, dropping the axis.
fn slice_axis(t: &DenseTensor, ax: usize, x: usize) -> DenseTensor {
    let shape = t.shape();
    let outer: usize = shape[..ax].iter().product();
    let n = shape[ax];
    let inner: usize = shape[ax + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        let base = (o * n + x) * inner;
        out.extend_from_slice(&t.values()[base..base + inner]);
    }
    let mut new_shape = shape.to_vec();
    new_shape.remove(ax);
    DenseTensor::from_parts(new_shape, out)
}

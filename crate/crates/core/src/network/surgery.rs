//! Cutting subnetworks out of a network, splicing replacements back in, and
//! reshaping free indices.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;

use super::{IndexId, IndexInfo, Node, NodeId, TreeNetwork};
use crate::error::{invalid, Error, Result};

/// A connected node set cut out as a standalone network. Bonds that crossed
/// the cut appear as free indices listed in `boundary`.
#[derive(Debug, Clone)]
pub struct Extracted {
    pub net: TreeNetwork,
    pub nodes: BTreeSet<NodeId>,
    pub boundary: BTreeSet<IndexId>,
}

/// Result of [`TreeNetwork::substitute`].
#[derive(Debug, Clone, PartialEq)]
pub struct SubstituteOutcome {
    /// Ids of the spliced-in nodes in the host network.
    pub new_nodes: Vec<NodeId>,
}

impl TreeNetwork {
    /// Copies the connected node set `nodes` into a standalone network.
    /// Each free index of the piece is its own native index.
    pub fn extract(&self, nodes: &BTreeSet<NodeId>) -> Result<Extracted> {
        if nodes.is_empty() || nodes.iter().any(|n| !self.nodes.contains_key(n)) {
            return invalid("subnetwork must be a non-empty set of existing nodes");
        }
        let mut counts: BTreeMap<IndexId, usize> = BTreeMap::new();
        for n in nodes {
            for &i in &self.nodes[n].indices {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut indices = BTreeMap::new();
        let mut boundary = BTreeSet::new();
        for (&i, &c) in &counts {
            let info = self.indices[&i];
            let free = info.free || c == 1;
            if !info.free && c == 1 {
                boundary.insert(i);
            }
            indices.insert(
                i,
                IndexInfo {
                    size: info.size,
                    free,
                },
            );
        }
        let sub_nodes: BTreeMap<NodeId, Node> =
            nodes.iter().map(|&n| (n, self.nodes[&n].clone())).collect();
        let mut free_order: Vec<IndexId> = self
            .free_order
            .iter()
            .copied()
            .filter(|i| counts.contains_key(i))
            .collect();
        free_order.extend(boundary.iter().copied());
        let reshape_map: IndexMap<IndexId, Vec<IndexId>> =
            free_order.iter().map(|&i| (i, vec![i])).collect();
        let mut net = TreeNetwork {
            indices,
            nodes: sub_nodes,
            free_order,
            reshape_map,
            next_id: self.next_id,
            center: None,
        };
        if let Some(c) = self.center.filter(|c| nodes.contains(c)) {
            // Nodes inside the piece stay isometries toward the host center.
            net.center = Some(c);
        }
        net.validate()
            .map_err(|v| Error::InvalidArgument(format!("subnetwork: {v}")))?;
        Ok(Extracted {
            net,
            nodes: nodes.clone(),
            boundary,
        })
    }

    /// Replaces the piece described by `cut` with `replacement`, which must
    /// expose the same boundary bonds (same sizes) and be built over the
    /// piece's native indices. Ids created inside `replacement` are remapped
    /// to fresh host ids.
    pub fn substitute(
        &mut self,
        cut: &Extracted,
        replacement: &TreeNetwork,
    ) -> Result<SubstituteOutcome> {
        replacement
            .validate()
            .map_err(|v| Error::InvalidArgument(format!("replacement: {v}")))?;
        let piece_natives: BTreeSet<IndexId> = cut.net.free_order.iter().copied().collect();
        let repl_natives: BTreeSet<IndexId> = replacement.reshape_map.keys().copied().collect();
        if piece_natives != repl_natives {
            return invalid("replacement native indices differ from the piece's free indices");
        }
        for &b in &cut.boundary {
            if replacement.reshape_map[&b] != [b] {
                return invalid(format!("boundary bond {b} must not be reshaped"));
            }
            if replacement.indices.get(&b).map(|i| i.size) != Some(self.indices[&b].size) {
                return invalid(format!("boundary bond {b} changed size"));
            }
        }
        for (native, factors) in &replacement.reshape_map {
            let native_size: usize = factors
                .iter()
                .map(|f| replacement.indices[f].size)
                .product();
            if native_size != cut.net.indices[native].size {
                return invalid(format!("native index {native} changed size"));
            }
        }

        // Ids to keep: boundary bonds and untouched free indices of the piece.
        let mut remap: BTreeMap<u64, u64> = BTreeMap::new();
        for (&i, info) in &replacement.indices {
            let keep =
                info.free && piece_natives.contains(&i) && replacement.reshape_map[&i] == [i];
            let id = if keep { i.0 } else { self.fresh() };
            remap.insert(i.0, id);
        }
        let mut node_map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for &n in replacement.nodes.keys() {
            let id = self.fresh_node();
            node_map.insert(n, id);
        }
        let idx = |i: &IndexId| IndexId(remap[&i.0]);

        // Remove the old piece.
        for n in &cut.nodes {
            self.nodes.remove(n);
        }
        for i in cut.net.indices.keys() {
            self.indices.remove(i);
        }

        // Splice in the replacement.
        for (&i, info) in &replacement.indices {
            let free = info.free && !cut.boundary.contains(&i);
            self.indices.insert(
                idx(&i),
                IndexInfo {
                    size: info.size,
                    free,
                },
            );
        }
        let mut new_nodes = Vec::new();
        for (n, node) in &replacement.nodes {
            let id = node_map[n];
            new_nodes.push(id);
            self.nodes.insert(
                id,
                Node {
                    indices: node.indices.iter().map(idx).collect(),
                    core: node.core.clone(),
                },
            );
        }
        for (native, factors) in &replacement.reshape_map {
            if cut.boundary.contains(native) {
                continue;
            }
            let mapped: Vec<IndexId> = factors.iter().map(idx).collect();
            splice(&mut self.free_order, *native, &mapped);
            for list in self.reshape_map.values_mut() {
                splice(list, *native, &mapped);
            }
        }
        self.center = match (self.center, replacement.center) {
            (Some(c), Some(rc)) if cut.nodes.contains(&c) => Some(node_map[&rc]),
            _ => None,
        };
        self.validate()
            .map_err(|v| Error::InvalidArgument(format!("after substitution: {v}")))?;
        Ok(SubstituteOutcome { new_nodes })
    }

    /// Splits free index `idx` into factors of the given sizes (row-major),
    /// returning the new factor ids. A single factor leaves the index alone.
    pub fn reshape_free(&mut self, idx: IndexId, factors: &[usize]) -> Result<Vec<IndexId>> {
        let Some(info) = self.indices.get(&idx).copied() else {
            return invalid(format!("unknown index {idx}"));
        };
        if !info.free {
            return invalid(format!("{idx} is not a free index"));
        }
        let degenerate = factors.len() > 1 && factors.contains(&1);
        if factors.is_empty() || degenerate || factors.iter().product::<usize>() != info.size {
            return invalid(format!(
                "factors {factors:?} do not factor size {}",
                info.size
            ));
        }
        if factors.len() <= 1 {
            return Ok(vec![idx]);
        }
        let owner = self.owner(idx).unwrap();
        let ids: Vec<IndexId> = factors.iter().map(|&f| self.fresh_index(f, true)).collect();
        self.indices.remove(&idx);
        let node = self.nodes.get_mut(&owner).unwrap();
        let ax = node.axis_of(idx).unwrap();
        let mut shape = node.core.shape().to_vec();
        shape.splice(ax..=ax, factors.iter().copied());
        node.core = node.core.clone().reshape(shape)?;
        node.indices.splice(ax..=ax, ids.iter().copied());
        splice(&mut self.free_order, idx, &ids);
        for list in self.reshape_map.values_mut() {
            splice(list, idx, &ids);
        }
        Ok(ids)
    }
}

/// Replaces `old` in `list` by `new`, in place.
fn splice(list: &mut Vec<IndexId>, old: IndexId, new: &[IndexId]) {
    if let Some(p) = list.iter().position(|&x| x == old) {
        list.splice(p..=p, new.iter().copied());
    }
}

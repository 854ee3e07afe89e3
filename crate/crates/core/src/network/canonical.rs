//! Gauge moves and local restructuring: orthonormalization, center moves,
//! adjacent index swaps, node splits and merges, edge truncation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;

use super::{IndexId, Node, NodeId, TreeNetwork};
use crate::error::{invalid, Result};
use crate::instrument::{self, Counter};
use crate::linalg::{qr_orthonormalize, singular_values, truncated_svd, Spectrum};
use crate::tensor::{tensordot, DenseTensor};

/// Relative tolerance used by swaps to drop numerically zero singular values.
pub const SWAP_REL_TOL: f64 = 1e-13;

/// Outcome of [`TreeNetwork::split_node`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    /// New node holding the requested legs.
    pub side_node: NodeId,
    /// The original node, now holding the remaining legs.
    pub rest_node: NodeId,
    pub bond: IndexId,
    pub discarded_sq: f64,
}

/// Node core laid out as a matrix over `rows` (in the given order) and the
/// remaining legs (in node order).
struct Unfolded {
    matrix: DMatrix<f64>,
    rows: Vec<IndexId>,
    cols: Vec<IndexId>,
    row_sizes: Vec<usize>,
    col_sizes: Vec<usize>,
}

impl TreeNetwork {
    fn unfold_node(&self, node: NodeId, rows: &[IndexId]) -> Unfolded {
        let n = &self.nodes[&node];
        let cols: Vec<IndexId> = n
            .indices
            .iter()
            .copied()
            .filter(|i| !rows.contains(i))
            .collect();
        let perm: Vec<usize> = rows
            .iter()
            .chain(cols.iter())
            .map(|i| n.axis_of(*i).expect("leg belongs to node"))
            .collect();
        let p = n.core.permute(&perm);
        let size = |ids: &[IndexId]| ids.iter().map(|i| self.indices[i].size).collect::<Vec<_>>();
        Unfolded {
            matrix: p.to_matrix(rows.len()),
            row_sizes: size(rows),
            col_sizes: size(&cols),
            rows: rows.to_vec(),
            cols,
        }
    }

    /// Moves the gauge from `from` into its neighbor `to` with one QR.
    fn push_gauge(&mut self, from: NodeId, to: NodeId) -> Result<()> {
        let bond = match self.bond_between(from, to) {
            Some(b) => b,
            None => return invalid(format!("{from} and {to} are not adjacent")),
        };
        let others: Vec<IndexId> = self.nodes[&from]
            .indices
            .iter()
            .copied()
            .filter(|&i| i != bond)
            .collect();
        let u = self.unfold_node(from, &others);
        let (q, r) = qr_orthonormalize(&u.matrix)?;
        let k = q.ncols();
        let mut shape = u.row_sizes.clone();
        shape.push(k);
        let mut legs = others;
        legs.push(bond);
        self.nodes.insert(
            from,
            Node {
                indices: legs,
                core: DenseTensor::from_matrix(&q, shape),
            },
        );
        self.absorb_left(to, bond, &r);
        self.indices.get_mut(&bond).unwrap().size = k;
        Ok(())
    }

    /// Replaces `node`'s `bond` axis by `m * (bond axis)`, where `m` is
    /// `new_size x old_size`; the bond becomes the node's first leg.
    fn absorb_left(&mut self, node: NodeId, bond: IndexId, m: &DMatrix<f64>) {
        let n = &self.nodes[&node];
        let ax = n.axis_of(bond).unwrap();
        let mt = DenseTensor::from_matrix(m, vec![m.nrows(), m.ncols()]);
        let core = tensordot(&mt, &[1], &n.core, &[ax]);
        let mut legs = vec![bond];
        legs.extend(n.indices.iter().copied().filter(|&i| i != bond));
        self.nodes.insert(
            node,
            Node {
                indices: legs,
                core,
            },
        );
    }

    /// Makes every node other than `center` an isometry toward it.
    pub fn orthonormalize_toward(&mut self, center: NodeId) -> Result<()> {
        if !self.nodes.contains_key(&center) {
            return invalid(format!("unknown node {center}"));
        }
        instrument::bump(Counter::FullOrthonormalize);
        // Breadth-first order from the center; process farthest nodes first.
        let mut order = vec![(center, center)];
        let mut seen = BTreeSet::from([center]);
        let mut queue = VecDeque::from([center]);
        while let Some(u) = queue.pop_front() {
            for (w, _) in self.neighbors(u) {
                if seen.insert(w) {
                    order.push((w, u));
                    queue.push_back(w);
                }
            }
        }
        for &(node, parent) in order.iter().skip(1).rev() {
            self.push_gauge(node, parent)?;
        }
        self.center = Some(center);
        Ok(())
    }

    /// Moves the orthogonality center to `target`, orthonormalizing first if
    /// no center is known.
    pub fn move_center(&mut self, target: NodeId) -> Result<()> {
        if !self.nodes.contains_key(&target) {
            return invalid(format!("unknown node {target}"));
        }
        match self.center {
            None => self.orthonormalize_toward(target),
            Some(c) if c == target => Ok(()),
            Some(c) => {
                let path = self.path(c, target);
                for w in path.windows(2) {
                    self.push_gauge(w[0], w[1])?;
                    self.center = Some(w[1]);
                }
                Ok(())
            }
        }
    }

    /// Moves free index `idx` from its node onto the adjacent node `toward`.
    /// The center ends at `toward`; the joining bond gets a fresh id.
    pub fn swap_adjacent(&mut self, idx: IndexId, toward: NodeId) -> Result<IndexId> {
        let Some(info) = self.indices.get(&idx) else {
            return invalid(format!("unknown index {idx}"));
        };
        if !info.free {
            return invalid(format!("{idx} is not a free index"));
        }
        let a = self.owner(idx).expect("free index has an owner");
        let Some(bond) = self.bond_between(a, toward) else {
            return invalid(format!(
                "{toward} is not adjacent to the node holding {idx}"
            ));
        };
        self.move_center(a)?;
        instrument::bump(Counter::Swap);
        let na = &self.nodes[&a];
        let nb = &self.nodes[&toward];
        let merged = tensordot(
            &na.core,
            &[na.axis_of(bond).unwrap()],
            &nb.core,
            &[nb.axis_of(bond).unwrap()],
        );
        let labels: Vec<IndexId> = na
            .indices
            .iter()
            .chain(nb.indices.iter())
            .copied()
            .filter(|&i| i != bond)
            .collect();
        let rows: Vec<IndexId> = na
            .indices
            .iter()
            .copied()
            .filter(|&i| i != bond && i != idx)
            .collect();
        let cols: Vec<IndexId> = std::iter::once(idx)
            .chain(nb.indices.iter().copied().filter(|&i| i != bond))
            .collect();
        let perm: Vec<usize> = rows
            .iter()
            .chain(cols.iter())
            .map(|l| labels.iter().position(|x| x == l).unwrap())
            .collect();
        let t = merged.permute(&perm);
        let m = t.to_matrix(rows.len());
        let svd = truncated_svd(&m, SWAP_REL_TOL * t.frobenius_norm(), None)?;
        let r = svd.rank;
        self.indices.remove(&bond);
        let new_bond = self.fresh_index(r, false);
        let mut a_shape: Vec<usize> = rows.iter().map(|i| self.indices[i].size).collect();
        a_shape.push(r);
        let mut a_legs = rows;
        a_legs.push(new_bond);
        let mut b_shape = vec![r];
        b_shape.extend(cols.iter().map(|i| self.indices[i].size));
        let mut b_legs = vec![new_bond];
        b_legs.extend(cols);
        self.nodes.insert(
            a,
            Node {
                indices: a_legs,
                core: DenseTensor::from_matrix(&svd.left, a_shape),
            },
        );
        self.nodes.insert(
            toward,
            Node {
                indices: b_legs,
                core: DenseTensor::from_matrix(&svd.weighted_right(), b_shape),
            },
        );
        self.center = Some(toward);
        Ok(new_bond)
    }

    /// Splits `node` into a new node holding the legs `side` and the original
    /// node holding the rest, discarding singular values within `budget`
    /// (absolute) and keeping at most `max_rank`.
    pub fn split_node(
        &mut self,
        node: NodeId,
        side: &[IndexId],
        budget: f64,
        max_rank: Option<usize>,
    ) -> Result<Split> {
        let Some(n) = self.nodes.get(&node) else {
            return invalid(format!("unknown node {node}"));
        };
        let uniq: BTreeSet<_> = side.iter().collect();
        if side.is_empty() || uniq.len() != side.len() || side.len() >= n.indices.len() {
            return invalid("split needs a non-empty proper subset of the node's legs");
        }
        if side.iter().any(|i| !n.indices.contains(i)) {
            return invalid(format!("split legs must belong to {node}"));
        }
        self.move_center(node)?;
        let u = self.unfold_node(node, side);
        let svd = truncated_svd(&u.matrix, budget, max_rank)?;
        let bond = self.fresh_index(svd.rank, false);
        let side_node = self.fresh_node();
        let mut s_shape = u.row_sizes;
        s_shape.push(svd.rank);
        let mut s_legs = u.rows;
        s_legs.push(bond);
        let mut r_shape = vec![svd.rank];
        r_shape.extend(u.col_sizes);
        let mut r_legs = vec![bond];
        r_legs.extend(u.cols);
        self.nodes.insert(
            side_node,
            Node {
                indices: s_legs,
                core: DenseTensor::from_matrix(&svd.left, s_shape),
            },
        );
        self.nodes.insert(
            node,
            Node {
                indices: r_legs,
                core: DenseTensor::from_matrix(&svd.weighted_right(), r_shape),
            },
        );
        self.center = Some(node);
        Ok(Split {
            side_node,
            rest_node: node,
            bond,
            discarded_sq: svd.discarded_sq,
        })
    }

    /// Contracts two adjacent nodes into one fresh node.
    pub fn merge_nodes(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let bond = if a == b {
            None
        } else {
            self.bond_between(a, b)
        };
        let Some(bond) = bond else {
            return invalid(format!("{a} and {b} are not adjacent"));
        };
        instrument::bump(Counter::Merge);
        let na = self.nodes.remove(&a).unwrap();
        let nb = self.nodes.remove(&b).unwrap();
        let core = tensordot(
            &na.core,
            &[na.axis_of(bond).unwrap()],
            &nb.core,
            &[nb.axis_of(bond).unwrap()],
        );
        let indices: Vec<IndexId> = na
            .indices
            .iter()
            .chain(nb.indices.iter())
            .copied()
            .filter(|&i| i != bond)
            .collect();
        self.indices.remove(&bond);
        let id = self.fresh_node();
        self.nodes.insert(id, Node { indices, core });
        if self.center == Some(a) || self.center == Some(b) {
            self.center = Some(id);
        }
        Ok(id)
    }

    /// Truncates internal index `bond` to the minimal rank within `budget`
    /// (absolute), capped at `max_rank`. Returns the new size and the
    /// discarded squared norm.
    pub fn truncate_edge(
        &mut self,
        bond: IndexId,
        budget: f64,
        max_rank: Option<usize>,
    ) -> Result<(usize, f64)> {
        let Some((a, b)) = self.endpoints(bond) else {
            return invalid(format!("{bond} is not an internal index"));
        };
        // Start from whichever endpoint is nearer the current center.
        let (u, v) = match self.center {
            Some(c) if self.path(c, b).len() < self.path(c, a).len() => (b, a),
            _ => (a, b),
        };
        self.move_center(u)?;
        let others: Vec<IndexId> = self.nodes[&u]
            .indices
            .iter()
            .copied()
            .filter(|&i| i != bond)
            .collect();
        let un = self.unfold_node(u, &others);
        let svd = truncated_svd(&un.matrix, budget, max_rank)?;
        let mut shape = un.row_sizes;
        shape.push(svd.rank);
        let mut legs = others;
        legs.push(bond);
        self.nodes.insert(
            u,
            Node {
                indices: legs,
                core: DenseTensor::from_matrix(&svd.left, shape),
            },
        );
        self.absorb_left(v, bond, &svd.weighted_right());
        self.indices.get_mut(&bond).unwrap().size = svd.rank;
        self.center = Some(v);
        Ok((svd.rank, svd.discarded_sq))
    }

    /// Singular values of the unfolding with the free indices `side` as rows.
    /// Works on a copy; relocates indices with swaps when no single node
    /// separates `side` from its complement.
    pub fn unfolding_spectrum(&self, side: &BTreeSet<IndexId>) -> Result<Spectrum> {
        let free: BTreeSet<IndexId> = self.free_order.iter().copied().collect();
        if side.is_empty() || !side.is_subset(&free) || side.len() == free.len() {
            return invalid("unfolding side must be a non-empty proper subset of the free indices");
        }
        let mut net = self.clone();
        let node = match net.separating_node(side) {
            Some(n) => n,
            None => net.gather(side)?,
        };
        net.move_center(node)?;
        let rows: Vec<IndexId> = net
            .leg_sets(node)
            .into_iter()
            .filter(|(_, s)| s.is_subset(side))
            .map(|(l, _)| l)
            .collect();
        let u = net.unfold_node(node, &rows);
        singular_values(&u.matrix)
    }

    /// A node each of whose legs lies entirely on one side of the cut,
    /// preferring the one nearest the current center.
    fn separating_node(&self, side: &BTreeSet<IndexId>) -> Option<NodeId> {
        let mut candidates: Vec<NodeId> = self
            .nodes
            .keys()
            .copied()
            .filter(|&n| {
                self.leg_sets(n)
                    .iter()
                    .all(|(_, s)| s.is_subset(side) || s.is_disjoint(side))
            })
            .collect();
        if let Some(c) = self.center {
            candidates.sort_by_key(|&n| (self.path(c, n).len(), n));
        }
        candidates.first().copied()
    }

    /// Swaps the indices of `side` (or of its complement, whichever is
    /// cheaper) onto one node and returns that node.
    fn gather(&mut self, side: &BTreeSet<IndexId>) -> Result<NodeId> {
        let complement: BTreeSet<IndexId> = self
            .free_order
            .iter()
            .copied()
            .filter(|i| !side.contains(i))
            .collect();
        let owners: BTreeMap<IndexId, NodeId> = self
            .free_order
            .iter()
            .map(|&i| (i, self.owner(i).unwrap()))
            .collect();
        let mut best: Option<(usize, u128, NodeId, bool)> = None;
        for &t in self.nodes.keys() {
            for (use_side, set) in [(true, side), (false, &complement)] {
                let dist: usize = set.iter().map(|i| self.path(owners[i], t).len() - 1).sum();
                let bonds: u128 = self
                    .neighbors(t)
                    .iter()
                    .map(|(_, b)| self.indices[b].size as u128)
                    .product();
                let key = (dist, bonds, t, !use_side);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let (_, _, target, use_complement) = best.expect("network has nodes");
        let set = if use_complement {
            complement
        } else {
            side.clone()
        };
        for idx in set {
            loop {
                let at = self.owner(idx).unwrap();
                if at == target {
                    break;
                }
                let next = self.path(at, target)[1];
                self.swap_adjacent(idx, next)?;
            }
        }
        Ok(target)
    }
}

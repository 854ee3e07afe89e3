//! Whole-network truncation sweeps.

use super::{IndexId, NodeId, TreeNetwork};
use crate::error::Result;

impl TreeNetwork {
    /// Truncates every internal index once, in depth-first order from the
    /// current center (or the first node), keeping the center adjacent to
    /// the edge being cut so each local SVD sees the global spectrum.
    /// `plan` gives each bond's absolute budget and optional rank cap.
    /// Returns the sum of discarded squared singular values.
    pub fn truncate_sweep(
        &mut self,
        mut plan: impl FnMut(IndexId) -> (f64, Option<usize>),
    ) -> Result<f64> {
        let root = match self.center {
            Some(c) => c,
            None => *self.nodes.keys().next().expect("network has nodes"),
        };
        self.move_center(root)?;
        let mut discarded = 0.0;
        // Explicit stack of (node, parent) pairs; children visited in axis order.
        let mut stack: Vec<(NodeId, Option<NodeId>)> = vec![(root, None)];
        while let Some((u, parent)) = stack.pop() {
            if let Some(p) = parent {
                let bond = self.bond_between(p, u).expect("tree edge");
                self.move_center(p)?;
                let (budget, cap) = plan(bond);
                let (_, d) = self.truncate_edge(bond, budget, cap)?;
                discarded += d;
            }
            let children: Vec<NodeId> = self
                .neighbors(u)
                .into_iter()
                .map(|(v, _)| v)
                .filter(|&v| Some(v) != parent)
                .collect();
            for v in children.into_iter().rev() {
                stack.push((v, Some(u)));
            }
        }
        Ok(discarded)
    }

    /// Rounds every edge with the uniform absolute budget
    /// `eps_rel * norm / sqrt(#edges)`.
    pub fn round_uniform(&mut self, eps_rel: f64) -> Result<f64> {
        let edges = self.nodes.len().saturating_sub(1);
        if edges == 0 {
            return Ok(0.0);
        }
        let root = self
            .center
            .unwrap_or_else(|| *self.nodes.keys().next().unwrap());
        self.move_center(root)?;
        let budget = eps_rel * self.norm()? / (edges as f64).sqrt();
        self.truncate_sweep(|_| (budget, None))
    }
}

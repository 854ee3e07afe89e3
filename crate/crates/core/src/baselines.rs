//! Fixed-structure comparators: TT-SVD, TT rounding, and balanced
//! hierarchical Tucker conversion and rounding.

use crate::error::{invalid, Error, Result};
use crate::linalg::NUMERICAL_ZERO;
use crate::network::{IndexId, TreeNetwork, DENSE_CAP};
use crate::search::{transform_structure, Clusters};
use crate::tensor::DenseTensor;

/// Builds a tensor train by sequential truncated SVDs, each allowed an
/// absolute budget of `eps * ||t|| / sqrt(d - 1)`.
pub fn tt_svd(t: &DenseTensor, eps: f64) -> Result<TreeNetwork> {
    if t.order() == 0 {
        return invalid("tt_svd needs a tensor of order >= 1");
    }
    if !(eps >= 0.0) {
        return invalid("eps must be >= 0");
    }
    if t.len() as u128 > DENSE_CAP as u128 {
        return Err(Error::TooLarge {
            entries: t.len() as u128,
            cap: DENSE_CAP as u128,
        });
    }
    let d = t.order();
    let mut net = TreeNetwork::single(t.clone());
    if d == 1 {
        return Ok(net);
    }
    let budget = eps.max(NUMERICAL_ZERO) * t.frobenius_norm() / ((d - 1) as f64).sqrt();
    let cap = (eps >= 1.0).then_some(1);
    let mut rest = net.center().expect("single node is centered");
    let mut carried: Option<IndexId> = None;
    for k in 0..d - 1 {
        let mut side = Vec::new();
        side.extend(carried);
        side.push(IndexId(k as u64));
        let split = net.split_node(rest, &side, budget, cap)?;
        rest = split.rest_node;
        carried = Some(split.bond);
    }
    Ok(net)
}

/// True when every node has at most two neighbours.
pub fn is_chain(net: &TreeNetwork) -> bool {
    net.node_ids()
        .into_iter()
        .all(|n| net.neighbors(n).len() <= 2)
}

/// Orthonormalizes toward one end of the chain, then truncates every bond
/// with a uniform budget so the relative error stays within `eps`.
pub fn tt_round(net: &TreeNetwork, eps: f64) -> Result<TreeNetwork> {
    if !is_chain(net) {
        return invalid("tt_round needs a chain topology");
    }
    let mut out = net.clone();
    let end = out
        .node_ids()
        .into_iter()
        .find(|&n| out.neighbors(n).len() <= 1)
        .expect("a chain has an end");
    out.orthonormalize_toward(end)?;
    round(&mut out, eps)?;
    Ok(out)
}

/// Rounds a tree network at fixed topology with the uniform budget
/// `eps * norm / sqrt(#edges)`.
pub fn ht_round(net: &TreeNetwork, eps: f64) -> Result<TreeNetwork> {
    let mut out = net.clone();
    if out.center().is_none() {
        let first = out.node_ids()[0];
        out.orthonormalize_toward(first)?;
    }
    round(&mut out, eps)?;
    Ok(out)
}

fn round(net: &mut TreeNetwork, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return invalid("eps must be >= 0");
    }
    net.round_uniform(eps.max(NUMERICAL_ZERO))
}

/// Canonical masks of the balanced dimension tree over `d` leaves; each
/// range is split at its ceiling midpoint.
pub fn balanced_family(d: usize) -> Vec<u32> {
    let clusters = Clusters((0..d as u64).map(|i| vec![IndexId(i)]).collect());
    let mut masks = Vec::new();
    let mut stack = vec![(0usize, d)];
    while let Some((lo, hi)) = stack.pop() {
        if hi - lo < 2 {
            continue;
        }
        let mid = lo + (hi - lo).div_ceil(2);
        for (a, b) in [(lo, mid), (mid, hi)] {
            let mask = ((1u32 << (b - a)) - 1) << a;
            masks.push(clusters.canonical(mask));
            stack.push((a, b));
        }
    }
    masks.sort_unstable();
    masks.dedup();
    masks
}

/// Converts a chain into the balanced hierarchical Tucker tree over its
/// free indices (in free order), preserving the contraction.
pub fn tt_to_balanced_ht(net: &TreeNetwork) -> Result<TreeNetwork> {
    if !is_chain(net) {
        return invalid("tt_to_balanced_ht needs a chain topology");
    }
    let d = net.free_order().len();
    if d < 2 {
        return Ok(net.clone());
    }
    let clusters = Clusters::singletons(net.free_order());
    let tol = 1e-14 * net.norm()?;
    transform_structure(net, &clusters, &balanced_family(d), |_| (tol, None))
}

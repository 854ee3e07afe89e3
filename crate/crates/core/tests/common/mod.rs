//! Seeded property checks shared by the property suite and the acceptance
//! runner. Every check returns a description of the first violation.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use treeround::baselines::{tt_round, tt_svd};
use treeround::bench::{BenchmarkCase, Function};
use treeround::clustering::{all_pair_entropy, cluster_indices, ClusterParams};
use treeround::driver::{hiss, Method, SearchConfig};
use treeround::linalg::{effective_rank, truncated_svd, Spectrum};
use treeround::network::{deserialize, serialize};
use treeround::search::{
    enumerate_topologies, induced_size, induced_tree, precompute_spectra, solve_rank_constraints,
    transform_structure, Clusters, SpectrumTable,
};
use treeround::{DenseTensor, IndexId, Target, TreeNetwork};

pub type Check = fn(u64) -> Result<(), String>;

/// Every property, by name.
pub const PROPERTIES: &[(&str, Check)] = &[
    ("unfold_refold_identity", unfold_refold_identity),
    ("truncated_svd_minimal_rank", truncated_svd_minimal_rank),
    ("effective_rank_bounds", effective_rank_bounds),
    ("contraction_invariance", contraction_invariance),
    ("split_error_accounting", split_error_accounting),
    ("complement_spectra_agree", complement_spectra_agree),
    ("tt_svd_error_bound", tt_svd_error_bound),
    ("tt_round_size_idempotence", tt_round_size_idempotence),
    ("entropy_and_clusters", entropy_and_clusters),
    ("spectrum_table_matches_dense", spectrum_table_matches_dense),
    (
        "rank_solver_matches_brute_force",
        rank_solver_matches_brute_force,
    ),
    (
        "transform_prediction_and_error",
        transform_prediction_and_error,
    ),
    ("reshape_roundtrip", reshape_roundtrip),
    ("serialization_roundtrip", serialization_roundtrip),
    ("hiss_never_grows", hiss_never_grows),
    ("seeded_determinism", seeded_determinism),
    ("report_identities", report_identities),
];

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> DenseTensor {
    DenseTensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Tensor with quickly decaying unfolding spectra.
pub fn smooth_tensor(shape: &[usize], rng: &mut impl Rng) -> DenseTensor {
    let w: Vec<f64> = shape.iter().map(|_| rng.gen_range(0.5..2.0)).collect();
    DenseTensor::from_fn(shape.to_vec(), |i| {
        let s: f64 = i
            .iter()
            .zip(shape)
            .zip(&w)
            .map(|((&k, &n), w)| w * (1.0 + k as f64 / n as f64))
            .sum();
        1.0 / s
    })
}

pub fn rel_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
    let diff: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    diff.sqrt() / a.frobenius_norm().max(f64::MIN_POSITIVE)
}

pub fn dense(net: &TreeNetwork) -> DenseTensor {
    net.contract_to_dense(Target::Native)
        .expect("small network contracts")
}

/// Random tree network obtained by exact random splits of a dense tensor.
pub fn random_tree(rng: &mut impl Rng, order: usize, max_dim: usize) -> (TreeNetwork, DenseTensor) {
    let shape: Vec<usize> = (0..order).map(|_| rng.gen_range(2..=max_dim)).collect();
    let t = random_tensor(&shape, rng);
    let mut net = TreeNetwork::single(t.clone());
    for _ in 0..order {
        let splittable: Vec<_> = net
            .node_ids()
            .into_iter()
            .filter(|&n| net.node(n).unwrap().indices.len() >= 3)
            .collect();
        let Some(&node) = splittable.choose(rng) else {
            break;
        };
        let mut legs = net.node(node).unwrap().indices.clone();
        legs.shuffle(rng);
        let take = rng.gen_range(1..legs.len() - 1);
        net.split_node(node, &legs[..take], 0.0, None).unwrap();
    }
    (net, t)
}

fn native_ids(net: &TreeNetwork) -> Vec<IndexId> {
    net.reshape_map().keys().copied().collect()
}

pub fn unfold_refold_identity(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let order = rng.gen_range(2..=4);
    let shape: Vec<usize> = (0..order).map(|_| rng.gen_range(1..=4)).collect();
    let t = random_tensor(&shape, &mut rng);
    let mut modes: Vec<usize> = (0..order).collect();
    modes.shuffle(&mut rng);
    let mut rows = modes[..rng.gen_range(1..order)].to_vec();
    rows.sort_unstable();
    let m = t.unfold(&rows).map_err(|e| e.to_string())?;
    ensure!(
        (m.frobenius_norm() - t.frobenius_norm()).abs() <= 1e-14 * t.frobenius_norm(),
        "norm changed"
    );
    let cols: Vec<usize> = (0..order).filter(|k| !rows.contains(k)).collect();
    let perm: Vec<usize> = rows.iter().chain(&cols).copied().collect();
    let mut inverse = vec![0; order];
    for (pos, &axis) in perm.iter().enumerate() {
        inverse[axis] = pos;
    }
    let permuted_shape: Vec<usize> = perm.iter().map(|&a| shape[a]).collect();
    let back = m
        .reshape(permuted_shape)
        .map_err(|e| e.to_string())?
        .permute(&inverse);
    ensure!(back == t, "refold differs for rows {rows:?}");
    Ok(())
}

pub fn truncated_svd_minimal_rank(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (r, c) = (rng.gen_range(1..=64), rng.gen_range(1..=64));
    let decay = rng.gen_range(0.3..0.95);
    let m = DMatrix::from_fn(r, c, |i, j| {
        rng.gen_range(-1.0..1.0) * f64::powi(decay, (i + j) as i32)
    });
    let oracle: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    let total: f64 = oracle.iter().map(|s| s * s).sum();
    let budget = rng.gen_range(0.0..1.0) * total.sqrt();
    let t = truncated_svd(&m, budget, None).map_err(|e| e.to_string())?;
    let slack = 1e-12 * total.sqrt();
    ensure!(
        t.discarded_sq.sqrt() <= budget + slack,
        "discarded {} over budget {budget}",
        t.discarded_sq.sqrt()
    );
    let tail = |k: usize| {
        oracle[k.min(oracle.len())..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    };
    ensure!(
        t.rank == 1 || tail(t.rank - 1) > budget - slack,
        "rank {} is not minimal for budget {budget}",
        t.rank
    );
    Ok(())
}

pub fn effective_rank_bounds(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let n = rng.gen_range(1..=12);
    let zeros = rng.gen_range(0..n);
    let mut values: Vec<f64> = (0..n - zeros).map(|_| rng.gen_range(0.01..10.0)).collect();
    values.extend(std::iter::repeat_n(0.0, zeros));
    let s = Spectrum::new(values.clone()).map_err(|e| e.to_string())?;
    let er = effective_rank(&s).map_err(|e| e.to_string())?;
    let nonzero = (n - zeros) as f64;
    ensure!(
        er >= 1.0 - 1e-12 && er <= nonzero + 1e-9,
        "erank {er} outside [1, {nonzero}]"
    );
    let c = rng.gen_range(1e-3..1e3);
    let scaled =
        Spectrum::new(values.iter().map(|v| v * c).collect()).map_err(|e| e.to_string())?;
    let er_scaled = effective_rank(&scaled).map_err(|e| e.to_string())?;
    ensure!(
        (er - er_scaled).abs() <= 1e-10 * er,
        "not scale invariant: {er} vs {er_scaled}"
    );
    let flat = Spectrum::new(vec![2.5; n - zeros]).map_err(|e| e.to_string())?;
    let er_flat = effective_rank(&flat).map_err(|e| e.to_string())?;
    ensure!(
        (er_flat - nonzero).abs() <= 1e-9,
        "flat spectrum erank {er_flat} != {nonzero}"
    );
    Ok(())
}

pub fn contraction_invariance(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (mut net, t) = {
        let order = rng.gen_range(3..=5);
        random_tree(&mut rng, order, 3)
    };
    let check = |net: &TreeNetwork, what: &str| -> Result<(), String> {
        net.validate().map_err(|v| format!("{what}: {v:?}"))?;
        let e = rel_diff(&t, &dense(net));
        ensure!(e <= 1e-10, "{what}: contraction moved by {e}");
        Ok(())
    };
    check(&net, "random splits")?;
    let nodes = net.node_ids();
    net.orthonormalize_toward(*nodes.choose(&mut rng).unwrap())
        .map_err(|e| e.to_string())?;
    check(&net, "orthonormalize")?;
    for _ in 0..4 {
        let free = net.free_order().to_vec();
        let idx = *free.choose(&mut rng).unwrap();
        let owner = net.owner(idx).unwrap();
        let Some(&(toward, _)) = net.neighbors(owner).choose(&mut rng) else {
            continue;
        };
        net.swap_adjacent(idx, toward).map_err(|e| e.to_string())?;
        check(&net, "swap")?;
    }
    let node = *net.node_ids().choose(&mut rng).unwrap();
    let legs = net.node(node).unwrap().indices.clone();
    if legs.len() >= 2 {
        let split = net
            .split_node(node, &legs[..1], 0.0, None)
            .map_err(|e| e.to_string())?;
        check(&net, "split")?;
        net.merge_nodes(split.side_node, split.rest_node)
            .map_err(|e| e.to_string())?;
        check(&net, "merge")?;
    }
    Ok(())
}

pub fn split_error_accounting(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let shape: Vec<usize> = (0..4).map(|_| rng.gen_range(2..=8)).collect();
    let t = random_tensor(&shape, &mut rng);
    let mut net = TreeNetwork::single(t.clone());
    let mut discarded = 0.0;
    let mut rest = net.node_ids()[0];
    let mut carried: Option<IndexId> = None;
    for k in 0..3u64 {
        let budget = rng.gen_range(0.0..0.3) * t.frobenius_norm();
        let side: Vec<IndexId> = carried.into_iter().chain([IndexId(k)]).collect();
        let split = net
            .split_node(rest, &side, budget, None)
            .map_err(|e| e.to_string())?;
        discarded += split.discarded_sq;
        rest = split.rest_node;
        carried = Some(split.bond);
    }
    let err = rel_diff(&t, &dense(&net)) * t.frobenius_norm();
    ensure!(
        err <= discarded.sqrt() * (1.0 + 1e-9) + 1e-12,
        "error {err} exceeds accounted {}",
        discarded.sqrt()
    );
    Ok(())
}

pub fn complement_spectra_agree(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (net, _) = {
        let order = rng.gen_range(3..=5);
        random_tree(&mut rng, order, 3)
    };
    let free = net.free_order().to_vec();
    let take = rng.gen_range(1..free.len());
    let mut shuffled = free.clone();
    shuffled.shuffle(&mut rng);
    let side: BTreeSet<IndexId> = shuffled[..take].iter().copied().collect();
    let rest: BTreeSet<IndexId> = free.iter().copied().filter(|i| !side.contains(i)).collect();
    let a = net.unfolding_spectrum(&side).map_err(|e| e.to_string())?;
    let b = net.unfolding_spectrum(&rest).map_err(|e| e.to_string())?;
    let floor = 1e-10 * a.largest();
    let nz = |s: &Spectrum| {
        s.values()
            .iter()
            .copied()
            .filter(|&v| v > floor)
            .collect::<Vec<_>>()
    };
    let (na, nb) = (nz(&a), nz(&b));
    ensure!(
        na.len() == nb.len(),
        "nonzero counts differ: {} vs {}",
        na.len(),
        nb.len()
    );
    for (x, y) in na.iter().zip(&nb) {
        ensure!(
            (x - y).abs() <= 1e-10 * a.largest(),
            "values differ: {x} vs {y}"
        );
    }
    Ok(())
}

pub fn tt_svd_error_bound(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let shape: Vec<usize> = (0..rng.gen_range(2..=5))
        .map(|_| rng.gen_range(2..=5))
        .collect();
    let t = random_tensor(&shape, &mut rng);
    let eps = rng.gen_range(0.0..0.6);
    let net = tt_svd(&t, eps).map_err(|e| e.to_string())?;
    let e = rel_diff(&t, &dense(&net));
    ensure!(
        e <= eps.max(1e-13) * (1.0 + 1e-10) + 1e-14,
        "tt_svd error {e} > eps {eps}"
    );
    Ok(())
}

pub fn tt_round_size_idempotence(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let shape: Vec<usize> = (0..5).map(|_| rng.gen_range(3..=6)).collect();
    let net = tt_svd(&smooth_tensor(&shape, &mut rng), 0.0).map_err(|e| e.to_string())?;
    let eps = [1e-2, 1e-4, 1e-6, 1e-8][rng.gen_range(0..4)];
    let once = tt_round(&net, eps).map_err(|e| e.to_string())?;
    let twice = tt_round(&once, eps).map_err(|e| e.to_string())?;
    let bonds = |n: &TreeNetwork| {
        let mut b: Vec<_> = n
            .edges()
            .into_iter()
            .map(|(bond, a, _)| (n.side_free(a, bond), n.index_size(bond)))
            .map(|(side, r)| (side.into_iter().min(), r))
            .collect();
        b.sort();
        b
    };
    ensure!(
        bonds(&once) == bonds(&twice),
        "bond sizes changed on a second rounding at eps {eps}"
    );
    Ok(())
}

pub fn entropy_and_clusters(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (net, _) = {
        let order = rng.gen_range(3..=6);
        random_tree(&mut rng, order, 3)
    };
    let table = all_pair_entropy(&net).map_err(|e| e.to_string())?;
    let free = net.free_order().to_vec();
    let total: usize = free.iter().map(|&i| net.index_size(i)).product();
    for (a, &i) in free.iter().enumerate() {
        for &j in &free[a + 1..] {
            let score = table.get(i, j).ok_or("missing pair")?;
            let pair = net.index_size(i) * net.index_size(j);
            let cap = pair.min(total / pair) as f64;
            ensure!(
                score >= 1.0 - 1e-12 && score <= cap.max(1.0) + 1e-9,
                "entropy {score} outside [1, {cap}]"
            );
        }
    }
    let max_clusters = rng.gen_range(2..=4);
    let params = ClusterParams {
        max_clusters,
        candidates: 3,
        explore: 0.2,
    };
    let partition = cluster_indices(&net, params, &mut rng).map_err(|e| e.to_string())?;
    let mut covered: Vec<IndexId> = partition.clusters.0.iter().flatten().copied().collect();
    covered.sort();
    let mut expected = free.clone();
    expected.sort();
    ensure!(
        covered == expected,
        "clusters do not partition the free indices"
    );
    ensure!(
        partition.clusters.len() <= max_clusters.max(1),
        "too many clusters"
    );
    Ok(())
}

pub fn spectrum_table_matches_dense(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (net, t) = {
        let order = rng.gen_range(3..=5);
        random_tree(&mut rng, order, 3)
    };
    let clusters = Clusters::singletons(net.free_order());
    let table = precompute_spectra(&net, &clusters).map_err(|e| e.to_string())?;
    let natives = native_ids(&net);
    for (&mask, spectrum) in &table.entries {
        let side = clusters.side(mask);
        let rows: Vec<usize> = natives
            .iter()
            .enumerate()
            .filter(|(_, id)| side.contains(id))
            .map(|(k, _)| k)
            .collect();
        let m = t.unfold(&rows).map_err(|e| e.to_string())?;
        let matrix = m.to_matrix(1);
        let oracle = matrix.svd(false, false).singular_values;
        let scale = oracle.max().max(f64::MIN_POSITIVE);
        for (k, &v) in oracle.iter().enumerate() {
            let got = spectrum.values().get(k).copied().unwrap_or(0.0);
            ensure!(
                (got - v).abs() <= 1e-8 * scale,
                "mask {mask:b} value {k}: {got} vs {v}"
            );
        }
    }
    Ok(())
}

pub fn rank_solver_matches_brute_force(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let k = rng.gen_range(2..=4);
    let families: Vec<Vec<u32>> = enumerate_topologies(k)
        .into_iter()
        .filter(|f| !f.is_empty() && f.len() <= 3)
        .collect();
    let family = families.choose(&mut rng).unwrap().clone();
    let sizes: Vec<u128> = (0..k).map(|_| rng.gen_range(2..6)).collect();
    let mut table = SpectrumTable {
        entries: Default::default(),
    };
    let side_volume = |mask: u32, inside: bool| -> u128 {
        (0..k)
            .filter(|&c| (mask >> c & 1 == 1) == inside)
            .map(|c| sizes[c])
            .product()
    };
    for &mask in &family {
        let cap = side_volume(mask, true).min(side_volume(mask, false)) as usize;
        let len = rng.gen_range(1..=cap.min(6));
        let values = (0..len).map(|_| rng.gen_range(0.01..1.0)).collect();
        table.entries.insert(mask, Spectrum::new(values).unwrap());
    }
    let eps = rng.gen_range(0.0..1.5);
    let solved = solve_rank_constraints(&family, &table, eps, &sizes).map_err(|e| e.to_string())?;

    let nodes = induced_tree(&family, k);
    let lens: Vec<usize> = family.iter().map(|m| table.entries[m].len()).collect();
    let mut best = u128::MAX;
    let mut ranks = vec![1usize; family.len()];
    'outer: loop {
        let tail: f64 = family
            .iter()
            .zip(&ranks)
            .map(|(m, &r)| table.entries[m].tail_sq(r))
            .sum();
        if tail <= eps * eps {
            best = best.min(induced_size(&nodes, &sizes, &ranks));
        }
        for e in 0..ranks.len() {
            ranks[e] += 1;
            if ranks[e] <= lens[e] {
                continue 'outer;
            }
            ranks[e] = 1;
        }
        break;
    }
    ensure!(
        solved.total_size == best,
        "solver {} vs brute force {best} on {family:?}",
        solved.total_size
    );
    ensure!(
        solved.discarded_sq_total <= eps * eps + 1e-15,
        "solver exceeded the budget"
    );
    Ok(())
}

pub fn transform_prediction_and_error(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let shape: Vec<usize> = (0..4).map(|_| rng.gen_range(2..=4)).collect();
    let t = random_tensor(&shape, &mut rng);
    let net = tt_svd(&t, 0.0).map_err(|e| e.to_string())?;
    let clusters = Clusters::singletons(net.free_order());
    let table = precompute_spectra(&net, &clusters).map_err(|e| e.to_string())?;
    let families = enumerate_topologies(4);
    let family = families.choose(&mut rng).unwrap().clone();
    let eps_rel = rng.gen_range(0.01..0.5);
    let norm = t.frobenius_norm();
    let sizes = clusters.sizes(&net);
    let plan = solve_rank_constraints(&family, &table, eps_rel * norm, &sizes)
        .map_err(|e| e.to_string())?;
    let ranks: std::collections::BTreeMap<u32, usize> = family
        .iter()
        .copied()
        .zip(plan.ranks.iter().copied())
        .collect();
    let out = transform_structure(&net, &clusters, &family, |mask| {
        let r = ranks.get(&mask).copied();
        let tail = r.map_or(0.0, |r| table.entries[&mask].tail_sq(r).sqrt());
        (tail * (1.0 + 1e-9) + f64::MIN_POSITIVE, r)
    })
    .map_err(|e| e.to_string())?;
    out.validate().map_err(|v| format!("{v:?}"))?;
    ensure!(
        out.size() as u128 <= plan.total_size,
        "actual size {} above predicted {} for {family:?}",
        out.size(),
        plan.total_size
    );
    let e = rel_diff(&t, &dense(&out));
    ensure!(e <= 1.05 * eps_rel, "error {e} above 1.05 x {eps_rel}");
    Ok(())
}

pub fn reshape_roundtrip(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let shape = [[4usize, 6, 8], [8, 9, 4], [12, 2, 6]][rng.gen_range(0..3)];
    let t = random_tensor(&shape, &mut rng);
    let mut net = tt_svd(&t, 0.0).map_err(|e| e.to_string())?;
    let before = dense(&net);
    let composite: Vec<IndexId> = net
        .free_order()
        .iter()
        .copied()
        .filter(|&i| net.index_size(i) >= 4)
        .collect();
    let idx = *composite.choose(&mut rng).unwrap();
    let n = net.index_size(idx);
    let divisors: Vec<usize> = (2..n).filter(|d| n % d == 0).collect();
    let a = *divisors.choose(&mut rng).unwrap();
    let factors = net
        .reshape_free(idx, &[a, n / a])
        .map_err(|e| e.to_string())?;
    net.validate().map_err(|v| format!("{v:?}"))?;
    ensure!(
        net.reshape_map()[&idx] == factors,
        "reshape map does not record the factors"
    );
    let after = dense(&net);
    ensure!(after.shape() == t.shape(), "native shape changed");
    ensure!(
        rel_diff(&before, &after) <= 1e-14,
        "reshape changed the entry layout"
    );
    Ok(())
}

pub fn serialization_roundtrip(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (mut net, _) = {
        let order = rng.gen_range(2..=5);
        random_tree(&mut rng, order, 4)
    };
    if rng.gen_bool(0.5) {
        let first = net.node_ids()[0];
        net.orthonormalize_toward(first)
            .map_err(|e| e.to_string())?;
    }
    let text = serialize(&net);
    let back = deserialize(&text).map_err(|e| e.to_string())?;
    ensure!(
        serialize(&back) == text,
        "serialization is not a fixed point"
    );
    ensure!(dense(&back) == dense(&net), "round trip changed values");
    Ok(())
}

fn small_hiss_input(rng: &mut ChaCha8Rng) -> (TreeNetwork, SearchConfig) {
    let shape: Vec<usize> = (0..rng.gen_range(4..=6))
        .map(|_| rng.gen_range(2..=4))
        .collect();
    let net = tt_svd(&smooth_tensor(&shape, rng), 1e-10).unwrap();
    let cfg = SearchConfig {
        eps: [1e-1, 1e-2, 1e-3][rng.gen_range(0..3)],
        iterations: 3,
        seed: rng.gen(),
        ..SearchConfig::default()
    };
    (net, cfg)
}

pub fn hiss_never_grows(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (net, cfg) = small_hiss_input(&mut rng);
    let out = hiss(&net, &cfg).map_err(|e| e.to_string())?;
    out.net.validate().map_err(|v| format!("{v:?}"))?;
    ensure!(
        out.net.size() <= net.size(),
        "size grew from {} to {}",
        net.size(),
        out.net.size()
    );
    let e = rel_diff(&dense(&net), &dense(&out.net));
    ensure!(e <= 1.5 * cfg.eps, "error {e} above 1.5 x {}", cfg.eps);
    Ok(())
}

pub fn seeded_determinism(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let (net, cfg) = small_hiss_input(&mut rng);
    let a = serialize(&hiss(&net, &cfg).map_err(|e| e.to_string())?.net);
    let b = serialize(&hiss(&net, &cfg).map_err(|e| e.to_string())?.net);
    ensure!(a == b, "two runs with seed {} differ", cfg.seed);
    Ok(())
}

pub fn report_identities(seed: u64) -> Result<(), String> {
    let functions = [
        Function::Dixon,
        Function::Qing,
        Function::Trigonometric,
        Function::Hilbert,
    ];
    let function = functions[(seed % 4) as usize];
    let method = [Method::Hiss, Method::Tt][(seed / 4 % 2) as usize];
    let case = BenchmarkCase::new(function, 4, 1e-2, method, seed);
    let a = case.run().map_err(|e| e.to_string())?;
    let b = case.run().map_err(|e| e.to_string())?;
    let strip = |r: &treeround::bench::MetricsReport| {
        let mut rec = r.csv_record();
        rec[8].clear();
        rec
    };
    ensure!(strip(&a) == strip(&b), "CSV rows differ on re-run");
    let expected = a.cr_over_input * (a.sizes.dense as f64 / a.sizes.input as f64);
    ensure!(
        (a.cr_over_data - expected).abs() <= 1e-12 * expected,
        "cr_over_data {} != {expected}",
        a.cr_over_data
    );
    ensure!(
        a.cr_over_input >= 1.0,
        "cr_over_input {} < 1",
        a.cr_over_input
    );
    ensure!(
        a.recon_error_sampled <= 3.0 * case.eps,
        "error {} above 3 eps",
        a.recon_error_sampled
    );
    Ok(())
}

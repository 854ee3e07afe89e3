//! Sub-network sampling, recursive refinement and the top-level
//! replace-if-improved loop.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{ht_round, is_chain, tt_round, tt_to_balanced_ht};
use crate::clustering::{cluster_indices, random_partition, ClusterParams};
use crate::error::{invalid, Result};
use crate::network::{IndexId, NodeId, TreeNetwork};
use crate::reshape::{identity_variant, random_variant, top_reshape, ReshapeVariant};
use crate::search::{structure_search_traced, Candidate};

/// Which components of the search are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    /// Indices are never reshaped.
    NoReshape,
    /// Clusters and factorizations are drawn uniformly at random.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Relative error tolerance.
    pub eps: f64,
    /// Nodes per sampled sub-network.
    pub subnet_nodes: usize,
    /// Sampling iterations.
    pub iterations: usize,
    /// Maximum clusters handed to the structure search.
    pub max_clusters: usize,
    /// Greedy clustering candidates compared per call.
    pub cluster_candidates: usize,
    /// Probability of a random pair during clustering.
    pub explore: f64,
    /// Maximum factors per reshaped index.
    pub max_factors: usize,
    /// Factorizations kept per index.
    pub top_k: usize,
    /// Reshape variants recursed into per fragment, cheapest first.
    pub variants_tried: usize,
    /// Recursion depth limit below the sampled sub-network.
    pub max_depth: usize,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            eps: 1e-2,
            subnet_nodes: 4,
            iterations: 5,
            max_clusters: 4,
            cluster_candidates: 5,
            explore: 0.1,
            max_factors: 4,
            top_k: 10,
            variants_tried: 4,
            max_depth: 2,
            seed: 0,
            ablation: Ablation::Full,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) {
            return invalid("eps must be >= 0");
        }
        if self.subnet_nodes < 2 {
            return invalid("sub-networks need at least 2 nodes");
        }
        if self.max_clusters < 2 {
            return invalid("max_clusters must be >= 2");
        }
        if self.iterations < 1 {
            return invalid("iterations must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.explore) {
            return invalid("explore must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Sampler = 1,
    Clustering = 2,
    Ablation = 3,
}

fn stream(seed: u64, s: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s as u64);
    rng
}

/// Visit counts and the sampler's random stream.
#[derive(Debug, Clone)]
pub struct SamplerState {
    pub visit_counts: BTreeMap<NodeId, u64>,
    pub rng: ChaCha8Rng,
}

impl SamplerState {
    pub fn new(net: &TreeNetwork, seed: u64) -> Self {
        Self {
            visit_counts: net.node_ids().into_iter().map(|n| (n, 0)).collect(),
            rng: stream(seed, Stream::Sampler),
        }
    }

    /// Replaces counts of removed nodes; new nodes inherit the largest count
    /// among the nodes they replace.
    pub fn replace(&mut self, removed: &[NodeId], added: &[NodeId]) {
        let inherited = removed
            .iter()
            .filter_map(|n| self.visit_counts.remove(n))
            .max()
            .unwrap_or(0);
        for &n in added {
            self.visit_counts.insert(n, inherited);
        }
    }
}

/// Draws one candidate with weight `1 / (1 + visits)`.
pub fn priority_sample(candidates: &[NodeId], state: &mut SamplerState) -> Result<NodeId> {
    if candidates.is_empty() {
        return invalid("cannot sample from an empty candidate set");
    }
    let weights: Vec<f64> = candidates
        .iter()
        .map(|n| 1.0 / (1.0 + *state.visit_counts.get(n).unwrap_or(&0) as f64))
        .collect();
    let dist = WeightedIndex::new(&weights).expect("positive weights");
    Ok(candidates[dist.sample(&mut state.rng)])
}

/// Connected set of `min(size, |V|)` nodes grown from a prioritized seed by
/// prioritized neighbour expansion. Each added node's visit count grows by 1.
pub fn stochastic_sample(
    net: &TreeNetwork,
    size: usize,
    state: &mut SamplerState,
) -> Result<Vec<NodeId>> {
    let all = net.node_ids();
    let target = size.min(all.len()).max(1);
    let mut chosen = vec![priority_sample(&all, state)?];
    while chosen.len() < target {
        let frontier: BTreeSet<NodeId> = chosen
            .iter()
            .flat_map(|&u| net.neighbors(u))
            .map(|(v, _)| v)
            .filter(|v| !chosen.contains(v))
            .collect();
        let frontier: Vec<NodeId> = frontier.into_iter().collect();
        chosen.push(priority_sample(&frontier, state)?);
    }
    for n in &chosen {
        *state.visit_counts.entry(*n).or_insert(0) += 1;
    }
    Ok(chosen)
}

/// One progress record per sampling iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub subnet: Vec<NodeId>,
    pub pre_size: usize,
    pub post_size: usize,
    pub accepted: bool,
}

/// Structured trace events.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent<'a> {
    Iteration(&'a IterationRecord),
    Candidate(&'a Candidate),
}

struct Context<'a> {
    cfg: &'a SearchConfig,
    cluster_rng: ChaCha8Rng,
    ablation_rng: ChaCha8Rng,
    trace: &'a mut dyn FnMut(TraceEvent),
}

/// Recursive refinement of a sub-network at relative tolerance `eps_rel`.
/// Indices in `frozen` are never reshaped.
pub fn rec_search(
    sub: &TreeNetwork,
    eps_rel: f64,
    cfg: &SearchConfig,
    frozen: &BTreeSet<IndexId>,
) -> Result<TreeNetwork> {
    cfg.validate()?;
    let mut ctx = Context {
        cfg,
        cluster_rng: stream(cfg.seed, Stream::Clustering),
        ablation_rng: stream(cfg.seed, Stream::Ablation),
        trace: &mut |_| {},
    };
    let mut sub = sub.clone();
    if sub.center().is_none() {
        let first = sub.node_ids()[0];
        sub.orthonormalize_toward(first)?;
    }
    let eps_abs = eps_rel * sub.norm()?;
    recurse(&sub, eps_abs, 0, frozen, &mut ctx)
}

fn recurse(
    sub: &TreeNetwork,
    eps_abs: f64,
    depth: usize,
    frozen: &BTreeSet<IndexId>,
    ctx: &mut Context,
) -> Result<TreeNetwork> {
    if sub.free_order().len() < 2 {
        return Ok(sub.clone());
    }
    let cfg = ctx.cfg;
    let partition = match cfg.ablation {
        Ablation::Random => random_partition(sub, cfg.max_clusters, &mut ctx.ablation_rng)?,
        _ => cluster_indices(
            sub,
            ClusterParams {
                max_clusters: cfg.max_clusters,
                candidates: cfg.cluster_candidates,
                explore: cfg.explore,
            },
            &mut ctx.cluster_rng,
        )?,
    };
    let trace = &mut *ctx.trace;
    let searched =
        structure_search_traced(sub, &partition.clusters, eps_abs / 2f64.sqrt(), &mut |c| {
            trace(TraceEvent::Candidate(c))
        })?;
    // Fragments get the part of eps_abs the structure step left unspent.
    let spent_sq = searched.discarded_sq * (1.0 + 1e-8);
    let eps_fragments = (eps_abs * eps_abs - spent_sq).max(0.0).sqrt();
    let mut current = searched.net;
    if depth >= cfg.max_depth {
        return Ok(current);
    }
    let fragments = current.node_ids();
    let budget = eps_fragments / (fragments.len() as f64).sqrt();
    for u in fragments {
        current.move_center(u)?;
        let cut = current.extract(&[u].into_iter().collect())?;
        let mut frozen_here = frozen.clone();
        frozen_here.extend(cut.boundary.iter().copied());
        let frag_node = cut.net.node_ids()[0];
        let variants: Vec<ReshapeVariant> = match cfg.ablation {
            Ablation::NoReshape => vec![identity_variant(&cut.net, frag_node, &frozen_here)],
            Ablation::Random => vec![random_variant(
                &cut.net,
                frag_node,
                cfg.max_factors,
                &frozen_here,
                &mut ctx.ablation_rng,
            )],
            Ablation::Full => {
                let mut v = top_reshape(
                    &cut.net,
                    frag_node,
                    cfg.max_factors,
                    cfg.top_k,
                    &frozen_here,
                )?;
                v.truncate(cfg.variants_tried.max(1));
                v
            }
        };
        // Without a reshape, only a fragment carrying a multi-index cluster
        // offers splits the search above has not already scored.
        let reshapes = variants.iter().any(|v| !v.is_identity());
        let grouped = partition
            .clusters
            .0
            .iter()
            .any(|c| c.len() > 1 && c.iter().any(|i| cut.net.free_order().contains(i)));
        if !reshapes && !grouped {
            continue;
        }
        let mut best: Option<TreeNetwork> = None;
        for variant in &variants {
            let reshaped = variant.apply(&cut.net)?;
            let candidate = recurse(&reshaped, budget, depth + 1, &frozen_here, ctx)?;
            let limit = best.as_ref().map_or(cut.net.size(), TreeNetwork::size);
            if candidate.size() < limit {
                best = Some(candidate);
            }
        }
        if let Some(replacement) = best {
            current.substitute(&cut, &replacement)?;
        }
    }
    Ok(current)
}

/// Result of [`hiss`].
#[derive(Debug, Clone)]
pub struct HissOutcome {
    pub net: TreeNetwork,
    pub log: Vec<IterationRecord>,
}

/// Repeatedly samples a sub-network, refines it at `eps / sqrt(iterations)`
/// and substitutes it back when the total size strictly decreases.
pub fn hiss(net: &TreeNetwork, cfg: &SearchConfig) -> Result<HissOutcome> {
    hiss_traced(net, cfg, &mut |_| {})
}

pub fn hiss_traced(
    net: &TreeNetwork,
    cfg: &SearchConfig,
    trace: &mut dyn FnMut(TraceEvent),
) -> Result<HissOutcome> {
    cfg.validate()?;
    net.validate()
        .map_err(|v| crate::Error::InvalidArgument(v.0))?;
    let mut global = net.clone();
    if global.center().is_none() {
        let first = global.node_ids()[0];
        global.orthonormalize_toward(first)?;
    }
    let per_iteration = cfg.eps * global.norm()? / (cfg.iterations as f64).sqrt();
    let mut state = SamplerState::new(&global, cfg.seed);
    let mut ctx = Context {
        cfg,
        cluster_rng: stream(cfg.seed, Stream::Clustering),
        ablation_rng: stream(cfg.seed, Stream::Ablation),
        trace,
    };
    let mut log = Vec::new();
    for iter in 0..cfg.iterations {
        let chosen = stochastic_sample(&global, cfg.subnet_nodes, &mut state)?;
        global.move_center(chosen[0])?;
        let cut = global.extract(&chosen.iter().copied().collect())?;
        let frozen: BTreeSet<IndexId> = cut.boundary.iter().copied().collect();
        let result = recurse(&cut.net, per_iteration, 0, &frozen, &mut ctx)?;
        let pre_size = cut.net.size();
        let post_size = result.size();
        let accepted = post_size < pre_size;
        if accepted {
            let outcome = global.substitute(&cut, &result)?;
            state.replace(&chosen, &outcome.new_nodes);
        }
        let record = IterationRecord {
            iter,
            subnet: chosen,
            pre_size,
            post_size,
            accepted,
        };
        (ctx.trace)(TraceEvent::Iteration(&record));
        log.push(record);
    }
    Ok(HissOutcome { net: global, log })
}

/// Rounding methods exposed to the command line and benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Hiss,
    HissNoreshape,
    HissRandom,
    Tt,
    Ht,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Hiss,
        Method::HissNoreshape,
        Method::HissRandom,
        Method::Tt,
        Method::Ht,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Hiss => "hiss",
            Method::HissNoreshape => "hiss-noreshape",
            Method::HissRandom => "hiss-random",
            Method::Tt => "tt",
            Method::Ht => "ht",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// Rounds `net` at `cfg.eps` with the chosen method.
pub fn round(net: &TreeNetwork, method: Method, cfg: &SearchConfig) -> Result<TreeNetwork> {
    round_traced(net, method, cfg, &mut |_| {})
}

pub fn round_traced(
    net: &TreeNetwork,
    method: Method,
    cfg: &SearchConfig,
    trace: &mut dyn FnMut(TraceEvent),
) -> Result<TreeNetwork> {
    let with = |ablation| SearchConfig {
        ablation,
        ..cfg.clone()
    };
    match method {
        Method::Hiss => Ok(hiss_traced(net, &with(Ablation::Full), trace)?.net),
        Method::HissNoreshape => Ok(hiss_traced(net, &with(Ablation::NoReshape), trace)?.net),
        Method::HissRandom => Ok(hiss_traced(net, &with(Ablation::Random), trace)?.net),
        Method::Tt => tt_round(net, cfg.eps),
        Method::Ht => {
            if !is_chain(net) {
                return ht_round(net, cfg.eps);
            }
            ht_round(&tt_to_balanced_ht(net)?, cfg.eps)
        }
    }
}

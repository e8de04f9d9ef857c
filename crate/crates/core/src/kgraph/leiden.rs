//! Leiden community detection with the modularity objective.
//!
//! Each pass runs fast local moving, refines every community into
//! well-connected sub-communities (randomized, seeded), and aggregates the
//! graph on the refined partition while seeding the aggregate with the
//! unrefined one. Passes repeat until every community is a single aggregate
//! node; the whole procedure is then restarted from its own output until
//! the partition stops changing.

use std::collections::{BTreeMap, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;

/// Randomness of the refinement step.
const REFINE_THETA: f64 = 0.01;
const MAX_RESTARTS: usize = 16;
const EPS: f64 = 1e-12;

/// Undirected weighted graph. Self-loops are stored once in `adj[v]` as
/// `(v, w)` and count twice towards the degree.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    /// Sum of edge weights (self-loops included once).
    total_weight: f64,
}

impl WeightedGraph {
    /// Builds a graph on `n` nodes. Parallel edges are summed.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut maps: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (u, v, w) in edges {
            assert!(u < n && v < n, "edge endpoint out of range");
            assert!(w > 0.0, "edge weights must be positive");
            *maps[u].entry(v).or_insert(0.0) += w;
            if u != v {
                *maps[v].entry(u).or_insert(0.0) += w;
            }
        }
        let adj: Vec<Vec<(usize, f64)>> =
            maps.into_iter().map(|m| m.into_iter().collect()).collect();
        let degree: Vec<f64> = adj
            .iter()
            .enumerate()
            .map(|(v, nbrs)| {
                nbrs.iter()
                    .map(|&(u, w)| if u == v { 2.0 * w } else { w })
                    .sum()
            })
            .collect();
        let total_weight = degree.iter().sum::<f64>() / 2.0;
        Self {
            adj,
            degree,
            total_weight,
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    /// Collapses each community of `partition` into one node.
    pub fn aggregate(&self, partition: &[usize]) -> WeightedGraph {
        let k = partition.iter().max().map_or(0, |&c| c + 1);
        let mut edges = Vec::new();
        for (u, nbrs) in self.adj.iter().enumerate() {
            for &(v, w) in nbrs {
                if u <= v {
                    edges.push((partition[u], partition[v], w));
                }
            }
        }
        WeightedGraph::new(k, edges)
    }
}

/// Modularity `sum_c [L_c / m - gamma * (K_c / 2m)^2]`. Zero for a graph
/// without edges.
pub fn modularity(graph: &WeightedGraph, partition: &[usize], resolution: f64) -> f64 {
    let m = graph.total_weight;
    if m <= 0.0 {
        return 0.0;
    }
    let k = partition.iter().max().map_or(0, |&c| c + 1);
    let mut internal = vec![0.0; k];
    let mut totals = vec![0.0; k];
    for (u, nbrs) in graph.adj.iter().enumerate() {
        totals[partition[u]] += graph.degree[u];
        for &(v, w) in nbrs {
            if u <= v && partition[u] == partition[v] {
                internal[partition[u]] += w;
            }
        }
    }
    internal
        .iter()
        .zip(&totals)
        .map(|(l, t)| l / m - resolution * (t / (2.0 * m)).powi(2))
        .sum()
}

/// Renumbers communities `0..k` in order of first appearance.
pub fn relabel(partition: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    partition
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}

fn community_count(partition: &[usize]) -> usize {
    partition.iter().max().map_or(0, |&c| c + 1)
}

/// Runs Leiden on `graph` and returns a relabelled partition of its nodes.
pub fn leiden<R: Rng>(graph: &WeightedGraph, resolution: f64, rng: &mut R) -> Vec<usize> {
    let mut current: Vec<usize> = (0..graph.node_count()).collect();
    for _ in 0..MAX_RESTARTS {
        let next = leiden_pass(graph, &current, resolution, rng);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn leiden_pass<R: Rng>(
    base: &WeightedGraph,
    initial: &[usize],
    resolution: f64,
    rng: &mut R,
) -> Vec<usize> {
    let mut graph = base.clone();
    // Aggregate node of every original node.
    let mut node_of: Vec<usize> = (0..base.node_count()).collect();
    let mut partition = relabel(initial);
    loop {
        move_nodes_fast(&graph, &mut partition, resolution, rng);
        partition = relabel(&partition);
        if community_count(&partition) == graph.node_count() {
            break;
        }
        let refined = relabel(&refine(&graph, &partition, resolution, rng));
        let (collapse, seed) = if community_count(&refined) < graph.node_count() {
            let mut seed = vec![0; community_count(&refined)];
            for (v, &r) in refined.iter().enumerate() {
                seed[r] = partition[v];
            }
            (refined, seed)
        } else {
            let k = community_count(&partition);
            (partition.clone(), (0..k).collect())
        };
        graph = graph.aggregate(&collapse);
        node_of.iter_mut().for_each(|n| *n = collapse[*n]);
        partition = seed;
    }
    relabel(&node_of.iter().map(|&n| partition[n]).collect::<Vec<_>>())
}

/// Queue-based local moving: each node is moved to the neighbouring
/// community (or an empty one) with the largest modularity gain. Ties keep
/// the current community, then prefer the lowest community id.
fn move_nodes_fast<R: Rng>(
    graph: &WeightedGraph,
    partition: &mut [usize],
    resolution: f64,
    rng: &mut R,
) {
    let n = graph.node_count();
    let two_m = 2.0 * graph.total_weight;
    if two_m <= 0.0 {
        return;
    }
    let mut totals = vec![0.0; n.max(community_count(partition))];
    let mut sizes = vec![0usize; totals.len()];
    for v in 0..n {
        totals[partition[v]] += graph.degree[v];
        sizes[partition[v]] += 1;
    }
    let mut empty: Vec<usize> = (0..totals.len()).filter(|&c| sizes[c] == 0).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut queue: VecDeque<usize> = order.into();
    let mut queued = vec![true; n];
    let mut link: BTreeMap<usize, f64> = BTreeMap::new();

    while let Some(v) = queue.pop_front() {
        queued[v] = false;
        let current = partition[v];
        let kv = graph.degree[v];
        totals[current] -= kv;
        sizes[current] -= 1;

        link.clear();
        for &(u, w) in graph.neighbors(v) {
            if u != v {
                *link.entry(partition[u]).or_insert(0.0) += w;
            }
        }
        let gain = |c: usize, w: f64| w - resolution * kv * totals[c] / two_m;
        let mut best = current;
        let mut best_gain = gain(current, link.get(&current).copied().unwrap_or(0.0));
        for (&c, &w) in &link {
            let g = gain(c, w);
            if g > best_gain + EPS {
                best = c;
                best_gain = g;
            }
        }
        if best_gain < -EPS && sizes[current] > 0 {
            if let Some(&c) = empty.last() {
                best = c;
            }
        }

        if best != current && sizes[current] == 0 {
            empty.push(current);
        }
        if let Some(pos) = empty.iter().position(|&c| c == best) {
            empty.swap_remove(pos);
        }
        totals[best] += kv;
        sizes[best] += 1;
        partition[v] = best;

        if best != current {
            for &(u, _) in graph.neighbors(v) {
                if u != v && partition[u] != best && !queued[u] {
                    queued[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
}

/// Splits each community into well-connected sub-communities. Starts from
/// singletons and merges nodes only within their community.
fn refine<R: Rng>(
    graph: &WeightedGraph,
    partition: &[usize],
    resolution: f64,
    rng: &mut R,
) -> Vec<usize> {
    let n = graph.node_count();
    let m = graph.total_weight;
    let two_m = 2.0 * m;
    let mut refined: Vec<usize> = (0..n).collect();
    if m <= 0.0 {
        return refined;
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        members.entry(partition[v]).or_default().push(v);
    }
    let mut sub_total: Vec<f64> = graph.degree.clone();
    let mut sub_size = vec![1usize; n];
    // Edge weight from each sub-community to the rest of its community.
    let mut sub_external = vec![0.0; n];
    let mut node_external = vec![0.0; n];
    for v in 0..n {
        node_external[v] = graph
            .neighbors(v)
            .iter()
            .filter(|&&(u, _)| u != v && partition[u] == partition[v])
            .map(|&(_, w)| w)
            .sum();
        sub_external[v] = node_external[v];
    }

    let mut link: BTreeMap<usize, f64> = BTreeMap::new();
    for (_, mut nodes) in members {
        let community_total: f64 = nodes.iter().map(|&v| graph.degree[v]).sum();
        let well_connected = |ext: f64, tot: f64| {
            ext >= resolution * tot * (community_total - tot) / two_m - EPS
        };
        nodes.shuffle(rng);
        for &v in &nodes {
            let kv = graph.degree[v];
            if sub_size[refined[v]] != 1 || !well_connected(node_external[v], kv) {
                continue;
            }
            let own = refined[v];
            sub_total[own] -= kv;
            sub_size[own] -= 1;
            sub_external[own] = 0.0;

            link.clear();
            link.insert(own, 0.0);
            for &(u, w) in graph.neighbors(v) {
                if u != v && partition[u] == partition[v] {
                    *link.entry(refined[u]).or_insert(0.0) += w;
                }
            }
            let candidates: Vec<(usize, f64, f64)> = link
                .iter()
                .filter(|&(&t, _)| t == own || well_connected(sub_external[t], sub_total[t]))
                .map(|(&t, &w)| (t, w, (w - resolution * kv * sub_total[t] / two_m) / m))
                .filter(|&(_, _, g)| g >= -EPS)
                .collect();
            let top = candidates.iter().map(|c| c.2).fold(f64::MIN, f64::max);
            let weights: Vec<f64> = candidates
                .iter()
                .map(|c| ((c.2 - top) / REFINE_THETA).exp())
                .collect();
            let total: f64 = weights.iter().sum();
            let mut pick = rng.gen::<f64>() * total;
            let mut chosen = candidates.last().map_or((own, 0.0), |c| (c.0, c.1));
            for (c, w) in candidates.iter().zip(&weights) {
                if pick < *w {
                    chosen = (c.0, c.1);
                    break;
                }
                pick -= w;
            }

            let (target, w_vt) = chosen;
            sub_external[target] += node_external[v] - 2.0 * w_vt;
            sub_total[target] += kv;
            sub_size[target] += 1;
            refined[v] = target;
        }
    }
    refined
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_triangles() -> WeightedGraph {
        WeightedGraph::new(
            6,
            [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
                .map(|(u, v)| (u, v, 1.0)),
        )
    }

    #[test]
    fn modularity_reference_values() {
        let g = two_triangles();
        // m = 7; each side has L = 3, K = 7.
        let q = modularity(&g, &[0, 0, 0, 1, 1, 1], 1.0);
        assert!((q - (2.0 * (3.0 / 7.0 - 0.25))).abs() < 1e-12);
        let all = modularity(&g, &[0; 6], 1.0);
        assert!(all.abs() < 1e-12);
    }

    #[test]
    fn splits_two_triangles() {
        for seed in 0..10 {
            let p = leiden(&two_triangles(), 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_eq!(p, [0, 0, 0, 1, 1, 1], "seed {seed}");
        }
    }

    #[test]
    fn isolated_nodes_stay_single() {
        let g = WeightedGraph::new(4, [(0, 1, 1.0)]);
        let p = leiden(&g, 1.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(p, [0, 0, 1, 2]);
        let empty = WeightedGraph::new(1, []);
        assert_eq!(leiden(&empty, 1.0, &mut ChaCha8Rng::seed_from_u64(0)), [0]);
    }

    #[test]
    fn aggregate_preserves_weight_and_modularity() {
        let g = two_triangles();
        let p = [0, 0, 0, 1, 1, 1];
        let agg = g.aggregate(&p);
        assert_eq!(agg.node_count(), 2);
        assert!((agg.total_weight() - g.total_weight()).abs() < 1e-12);
        let q_fine = modularity(&g, &p, 1.0);
        let q_agg = modularity(&agg, &[0, 1], 1.0);
        assert!((q_fine - q_agg).abs() < 1e-12);
    }

    #[test]
    fn relabel_orders_by_first_appearance() {
        assert_eq!(relabel(&[5, 5, 2, 9, 2]), [0, 0, 1, 2, 1]);
    }
}

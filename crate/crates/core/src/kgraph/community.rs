use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::leiden::{leiden, WeightedGraph};
use super::{Community, KnowledgeGraph};

/// Resolution used for the finest level.
pub const BASE_RESOLUTION: f64 = 1.0;
/// Coarser levels halve the resolution until communities merge, at most
/// this many times per level.
const MAX_HALVINGS: usize = 12;

fn entity_graph(graph: &KnowledgeGraph) -> (Vec<&str>, WeightedGraph) {
    let ids: Vec<&str> = graph.entities.keys().map(String::as_str).collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let edges = graph
        .relations
        .iter()
        .map(|r| (index[r.src.as_str()], index[r.dst.as_str()], f64::from(r.weight)));
    let wg = WeightedGraph::new(ids.len(), edges);
    (ids, wg)
}

fn count(partition: &[usize]) -> usize {
    partition.iter().max().map_or(0, |&c| c + 1)
}

/// Node partitions per level, finest first. Each level's communities are
/// unions of the previous level's.
fn level_partitions(graph: &KnowledgeGraph, max_levels: usize, seed: u64) -> Vec<Vec<usize>> {
    let (_, wg) = entity_graph(graph);
    if wg.node_count() == 0 || max_levels == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels = vec![leiden(&wg, BASE_RESOLUTION, &mut rng)];
    let mut resolution = BASE_RESOLUTION;
    while levels.len() < max_levels {
        let finer = levels.last().expect("non-empty");
        if count(finer) <= 1 {
            break;
        }
        let agg = wg.aggregate(finer);
        let mut merged = None;
        for _ in 0..MAX_HALVINGS {
            resolution /= 2.0;
            let p = leiden(&agg, resolution, &mut rng);
            if count(&p) < agg.node_count() {
                merged = Some(p);
                break;
            }
        }
        let Some(coarse) = merged else { break };
        levels.push(finer.iter().map(|&c| coarse[c]).collect());
    }
    levels
}

/// Node-to-community assignment at `level`, keyed by entity id.
pub fn partition_at_level(communities: &[Community], level: usize) -> BTreeMap<String, String> {
    communities
        .iter()
        .filter(|c| c.level == level)
        .flat_map(|c| c.member_entities.iter().map(|m| (m.clone(), c.id.clone())))
        .collect()
}

/// Hierarchical Leiden communities (modularity objective).
///
/// Level 0 is the finest partition found at resolution 1.0; each further
/// level groups the communities of the level below and links them through
/// `parent`. Isolated entities form singleton communities. Results are a
/// pure function of the graph and `seed`. Communities are ordered by level,
/// then by smallest member id.
pub fn detect_communities(graph: &KnowledgeGraph, max_levels: usize, seed: u64) -> Vec<Community> {
    let (ids, _) = entity_graph(graph);
    let levels = level_partitions(graph, max_levels, seed);

    let mut per_level: Vec<Vec<BTreeSet<String>>> = Vec::new();
    for partition in &levels {
        let mut groups: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
        for (node, &c) in partition.iter().enumerate() {
            groups.entry(c).or_default().insert(ids[node].to_string());
        }
        let mut sets: Vec<BTreeSet<String>> = groups.into_values().collect();
        sets.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
        per_level.push(sets);
    }

    let name = |level: usize, i: usize| format!("L{level}-C{i}");
    let mut out = Vec::new();
    for (level, sets) in per_level.iter().enumerate() {
        for (i, members) in sets.iter().enumerate() {
            let parent = per_level.get(level + 1).and_then(|up| {
                let first = members.iter().next()?;
                up.iter().position(|s| s.contains(first)).map(|j| name(level + 1, j))
            });
            let internal_relations = graph
                .relations
                .iter()
                .filter(|r| members.contains(&r.src) && members.contains(&r.dst))
                .cloned()
                .collect();
            out.push(Community {
                id: name(level, i),
                level,
                member_entities: members.clone(),
                internal_relations,
                parent,
                report: None,
            });
        }
    }
    out
}

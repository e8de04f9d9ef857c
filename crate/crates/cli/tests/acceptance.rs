//! Acceptance run: one PASS/FAIL line per criterion. Exits non-zero if any
//! gating criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semrag::chunker::{buffer_merge, chunk_document, split_with_overlap, Chunk, ChunkingConfig, Document};
use semrag::embeddings::{Batching, Embedding, StubEmbedder, TableEmbedder};
use semrag::evalkit::{answer_correctness, answer_relevancy, answer_similarity, correctness_score, CorrectnessMode, SWEEP_COLUMNS};
use semrag::kgraph::{detect_communities, partition_at_level, Community, CommunityReport, Entity, KnowledgeGraph, Relation};
use semrag::llm::{StubLlm, StubScript};
use semrag::retrieval::{
    global_search, local_search, naive_search, rank_reports, GlobalSearchConfig, ItemKind, LocalSearchConfig,
    NaiveConfig, Query,
};
use semrag::store::ChunkIndex;
use semrag::text::Sentence;

const CHUNK_TIME_LIMIT: Duration = Duration::from_secs(5);
const PIPELINE_TIME_LIMIT: Duration = Duration::from_secs(60);
const METRIC_TOL: f64 = 1e-9;
const SIMILARITY_TOL: f64 = 1e-6;
const SCORE_TOL: f64 = 1e-9;

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(u8, &str, Check); 9] = [
        (1, "chunking oracle", chunking_oracle),
        (2, "overlap exactness", overlap_exactness),
        (3, "buffer-merge law", buffer_merge_law),
        (4, "community detection", community_detection),
        (5, "retrieval exactness", retrieval_exactness),
        (6, "local/global fixtures", search_fixtures),
        (7, "metric arithmetic", metric_arithmetic),
        (8, "end-to-end determinism", end_to_end_determinism),
        (9, "schema fidelity", schema_fidelity),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS [{id}] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name}: {detail}");
            }
        }
    }
    match live_smoke() {
        None => println!("SKIP [10] live-provider smoke: set SEMRAG_LIVE_URL to run (not gating)"),
        Some(Ok(detail)) => println!("PASS [10] live-provider smoke: {detail} (not gating)"),
        Some(Err(detail)) => println!("FAIL [10] live-provider smoke: {detail} (not gating)"),
    }
    println!("acceptance: {} of 9 gating criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn verdict(violations: usize, what: String) -> Result<String, String> {
    if violations == 0 {
        Ok(what)
    } else {
        Err(format!("{violations} violations; {what}"))
    }
}

// [1] -------------------------------------------------------------------

fn unit(theta: f64) -> Vec<f32> {
    vec![theta.cos() as f32, theta.sin() as f32]
}

/// Nearest-rank percentile with integer arithmetic: rank = ceil(p * n / 100).
fn oracle_percentile(values: &[f64], p: u32) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as u32;
    let rank = (p * n).div_ceil(100).max(1);
    sorted[rank as usize - 1]
}

fn chunking_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut mismatches = 0;
    let mut total_chunks = 0;
    for d in 0..50 {
        let b = rng.gen_range(0..=3usize);
        let m = rng.gen_range(2 * b + 2..=2 * b + 12);
        let sentences: Vec<String> = (0..m).map(|i| format!("Doc{d} line{i} has words.")).collect();
        let text = sentences.join(" ");

        // Planted consecutive distances, distinct multiples of 0.02.
        let mut grid: Vec<u32> = (1..50).collect();
        grid.shuffle(&mut rng);
        let distances: Vec<f64> = grid[..m - 1].iter().map(|&k| f64::from(k) * 0.02).collect();
        let mut table = TableEmbedder::new(2);
        let mut theta = 0.0;
        for i in 0..m {
            if i > 0 {
                theta += (1.0 - distances[i - 1]).acos();
            }
            let lo = i.saturating_sub(b);
            let hi = (i + b).min(m - 1);
            table.insert(sentences[lo..=hi].join(" "), unit(theta));
        }

        let (config, threshold) = if d % 2 == 0 {
            let tau = 0.01 + 0.02 * f64::from(rng.gen_range(0..49u32));
            (ChunkingConfig::absolute(tau), tau)
        } else {
            let p = *[50u32, 75, 90, 95].choose(&mut rng).unwrap();
            (ChunkingConfig::percentile(f64::from(p)), oracle_percentile(&distances, p))
        };
        let config = config.with_buffer(b);

        let mut expected = Vec::new();
        let mut start = 0;
        for (i, &dist) in distances.iter().enumerate() {
            if dist >= threshold {
                expected.push((start, i));
                start = i + 1;
            }
        }
        expected.push((start, m - 1));

        let doc = Document {
            id: format!("doc{d}"),
            text,
            meta: Default::default(),
        };
        let chunks = chunk_document(&doc, &config, &table, Batching::default()).map_err(|e| e.to_string())?;
        let got: Vec<(usize, usize)> = chunks.iter().map(|c| (c.sentence_range[0], c.sentence_range[1])).collect();
        let texts_ok = chunks
            .iter()
            .all(|c| c.text == sentences[c.sentence_range[0]..=c.sentence_range[1]].join(" "));
        if got != expected || !texts_ok {
            mismatches += 1;
        }
        total_chunks += chunks.len();
    }
    let elapsed = started.elapsed();
    if elapsed >= CHUNK_TIME_LIMIT {
        return Err(format!("took {:.2} s (limit {} s)", elapsed.as_secs_f64(), CHUNK_TIME_LIMIT.as_secs()));
    }
    verdict(
        mismatches,
        format!(
            "{mismatches} mismatching documents of 50 ({total_chunks} chunks) in {:.3} s (limit {} s)",
            elapsed.as_secs_f64(),
            CHUNK_TIME_LIMIT.as_secs()
        ),
    )
}

// [2] -------------------------------------------------------------------

fn overlap_exactness() -> Result<String, String> {
    const LIMIT: usize = 1024;
    const OVERLAP: usize = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut pairs = 0;
    for c in 0..1000 {
        let n = rng.gen_range(LIMIT + 1..=6000);
        let words: Vec<String> = (0..n).map(|j| format!("t{j}")).collect();
        let chunk = Chunk {
            id: format!("d{c}#0"),
            doc_id: format!("d{c}"),
            text: words.join(" "),
            token_count: n,
            sentence_range: [0, 0],
            embedding: Embedding(vec![1.0, 0.0]),
            sub_index: None,
        };
        let subs = split_with_overlap(&chunk, LIMIT, OVERLAP);
        let idx: Vec<Vec<usize>> = subs
            .iter()
            .map(|s| s.text.split_whitespace().map(|w| w[1..].parse().unwrap()).collect())
            .collect();
        for (s, ix) in subs.iter().zip(&idx) {
            let contiguous = ix.windows(2).all(|w| w[1] == w[0] + 1);
            if ix.len() > LIMIT || ix.len() != s.token_count || !contiguous {
                violations += 1;
            }
        }
        for w in idx.windows(2) {
            pairs += 1;
            let a: BTreeSet<usize> = w[0].iter().copied().collect();
            let shared = w[1].iter().filter(|t| a.contains(t)).count();
            let suffix_is_prefix = w[0][w[0].len() - OVERLAP..] == w[1][..OVERLAP.min(w[1].len())];
            if shared != OVERLAP || !suffix_is_prefix {
                violations += 1;
            }
        }
        if idx.first().map(|v| v[0]) != Some(0) || idx.last().map(|v| *v.last().unwrap()) != Some(n - 1) {
            violations += 1;
        }
    }
    verdict(violations, format!("{violations} violations over 1000 chunks, {pairs} consecutive pairs"))
}

// [3] -------------------------------------------------------------------

fn buffer_merge_law() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..10_000 {
        let m = rng.gen_range(1..=50usize);
        let b = rng.gen_range(0..=10usize);
        let sentences: Vec<Sentence> = (0..m)
            .map(|i| Sentence {
                index: i,
                text: format!("s{i}."),
                token_count: 2,
                span: 0..0,
            })
            .collect();
        let groups = buffer_merge(&sentences, b);
        if groups.len() != m {
            violations += 1;
            continue;
        }
        for (i0, g) in groups.iter().enumerate() {
            // One-based law: group i spans [max(1, i - b), min(m, i + b)].
            let i = i0 as i64 + 1;
            let lo = (i - b as i64).max(1) as usize;
            let hi = (i + b as i64).min(m as i64) as usize;
            let text = (lo..=hi).map(|j| format!("s{}.", j - 1)).collect::<Vec<_>>().join(" ");
            if g.member_range != (lo - 1, hi - 1) || g.text != text || g.center_index != i0 {
                violations += 1;
            }
        }
    }
    verdict(violations, format!("{violations} violations over 10000 random (m <= 50, b <= 10) cases"))
}

// [4] -------------------------------------------------------------------

fn modularity(edges: &[(usize, usize)], labels: &[usize]) -> f64 {
    let m = edges.len() as f64;
    let k = labels.iter().max().unwrap() + 1;
    let mut inside = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for &(a, b) in edges {
        degree[labels[a]] += 1.0;
        degree[labels[b]] += 1.0;
        if labels[a] == labels[b] {
            inside[labels[a]] += 1.0;
        }
    }
    (0..k).map(|c| inside[c] / m - (degree[c] / (2.0 * m)).powi(2)).sum()
}

/// Every set partition of `n` nodes as a restricted growth string.
fn for_each_partition(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(labels: &mut Vec<usize>, n: usize, max: usize, f: &mut impl FnMut(&[usize])) {
        if labels.len() == n {
            f(labels);
            return;
        }
        for l in 0..=max + 1 {
            labels.push(l);
            rec(labels, n, max.max(l), f);
            labels.pop();
        }
    }
    let mut labels = vec![0];
    rec(&mut labels, n, 0, f);
}

fn groups(labels: impl IntoIterator<Item = (String, String)>) -> BTreeSet<BTreeSet<String>> {
    let mut by: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (node, c) in labels {
        by.entry(c).or_default().insert(node);
    }
    by.into_values().collect()
}

fn community_detection() -> Result<String, String> {
    let mut edges = Vec::new();
    for base in [0, 5] {
        for i in base..base + 5 {
            for j in i + 1..base + 5 {
                edges.push((i, j));
            }
        }
    }
    edges.push((4, 5));

    let mut best = f64::NEG_INFINITY;
    let mut argmax: Vec<Vec<usize>> = Vec::new();
    let mut visited = 0;
    for_each_partition(10, &mut |labels| {
        visited += 1;
        let q = modularity(&edges, labels);
        if q > best + 1e-12 {
            best = q;
            argmax = vec![labels.to_vec()];
        } else if (q - best).abs() <= 1e-12 {
            argmax.push(labels.to_vec());
        }
    });
    if argmax.len() != 1 {
        return Err(format!("oracle optimum not unique ({} partitions)", argmax.len()));
    }
    let name = |i: usize| format!("n{i}");
    let optimum = groups(argmax[0].iter().enumerate().map(|(i, l)| (name(i), l.to_string())));
    let cliques: BTreeSet<BTreeSet<String>> = [(0..5).map(name).collect(), (5..10).map(name).collect()].into();
    if optimum != cliques {
        return Err("exhaustive optimum is not the two cliques".into());
    }

    let mut graph = KnowledgeGraph::default();
    for i in 0..10 {
        let e = Entity::new(&name(i), "concept", "node", "c0");
        graph.entities.insert(e.id.clone(), e);
    }
    graph.relations = edges
        .iter()
        .map(|&(a, b)| Relation::new(&name(a), &name(b), "edge", "c0").unwrap())
        .collect();
    graph.relations.sort_by(|a, b| a.key().cmp(&b.key()));

    let mut mismatched_seeds = Vec::new();
    let mut first: Option<BTreeSet<BTreeSet<String>>> = None;
    for seed in 0..20 {
        let communities: Vec<Community> = detect_communities(&graph, 3, seed);
        let level0 = groups(partition_at_level(&communities, 0));
        if level0 != optimum || first.as_ref().is_some_and(|f| *f != level0) {
            mismatched_seeds.push(seed);
        }
        first.get_or_insert(level0);
    }
    verdict(
        mismatched_seeds.len(),
        format!(
            "level 0 equals the exhaustive optimum (Q = {best:.6}, {visited} partitions searched) for {} of 20 seeds{}",
            20 - mismatched_seeds.len(),
            if mismatched_seeds.is_empty() { String::new() } else { format!("; failing seeds {mismatched_seeds:?}") }
        ),
    )
}

// [5] -------------------------------------------------------------------

fn oracle_cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Brute force: score everything, sort by score desc, then id, then kind.
fn oracle_top(mut scored: Vec<(f64, String, u8)>, k: usize) -> Vec<(String, f64)> {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    scored.into_iter().take(k).map(|(s, id, _)| (id, s)).collect()
}

fn same(got: &[(String, f64)], want: &[(String, f64)]) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| g.0 == w.0 && (g.1 - w.1).abs() <= SCORE_TOL)
}

fn retrieval_exactness() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let e = StubEmbedder::new(11, 64);
    let vocab = ["river", "lake", "town", "copper", "comet", "guild", "railway", "ferry", "archive", "moss"];
    let sentence = |rng: &mut ChaCha8Rng, n: usize| {
        (0..n).map(|_| *vocab.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let chunks: Vec<Chunk> = (0..1000)
        .map(|i| {
            let text = format!("{} {i}", sentence(&mut rng, 6));
            Chunk {
                id: format!("c{i:04}"),
                doc_id: "d".into(),
                token_count: 7,
                embedding: e.embed(&text),
                text,
                sentence_range: [i, i],
                sub_index: None,
            }
        })
        .collect();
    let index = ChunkIndex::new(chunks).map_err(|e| e.to_string())?;

    let mut graph = KnowledgeGraph::default();
    for i in 0..40 {
        let mut ent = Entity::new(&format!("entity {i}"), "concept", &sentence(&mut rng, 4), "c0000");
        ent.embedding = Some(e.embed(&ent.search_text()));
        graph.entities.insert(ent.id.clone(), ent);
    }

    let mut mismatches = 0;
    let mut comparisons = 0;
    for qi in 0..20 {
        let query = Query::new(format!("{} question {qi}", sentence(&mut rng, 3)));
        let qv = e.embed(&query.text);
        let chunk_scores: Vec<(f64, String, u8)> = index
            .chunks
            .iter()
            .map(|c| (oracle_cos(qv.as_slice(), c.embedding.as_slice()), c.id.clone(), 0))
            .collect();
        let entity_scores: Vec<(f64, String, u8)> = graph
            .entities
            .values()
            .map(|ent| (oracle_cos(qv.as_slice(), ent.embedding.as_ref().unwrap().as_slice()), ent.id.clone(), 1))
            .collect();
        for k in [1, 5, 50] {
            let want = oracle_top(chunk_scores.clone(), k);
            let knn = index.knn(qv.as_slice(), k).map_err(|e| e.to_string())?;

            let naive = naive_search(&query, &index, &NaiveConfig { k, window_l: 1_000_000 }, &e)
                .map_err(|e| e.to_string())?;
            let naive: Vec<(String, f64)> = naive.items.iter().map(|i| (i.source_id.clone(), i.score)).collect();

            let pooled = oracle_top(chunk_scores.iter().cloned().chain(entity_scores.iter().cloned()).collect(), k);
            let cfg = LocalSearchConfig {
                tau_e: -1.0,
                tau_d: -1.0,
                k,
                window_l: 1_000_000,
                ..Default::default()
            };
            let local = local_search(&query, &graph, &index, &cfg, &e).map_err(|e| e.to_string())?;
            let local: Vec<(String, f64)> = local.items.iter().map(|i| (i.source_id.clone(), i.score)).collect();

            for (got, want) in [(&knn, &want), (&naive, &want), (&local, &pooled)] {
                comparisons += 1;
                if !same(got, want) {
                    mismatches += 1;
                }
            }
        }
    }
    verdict(
        mismatches,
        format!("{mismatches} mismatches in {comparisons} comparisons (knn, naive, local at tau = -1; k in 1, 5, 50; 1000 chunks)"),
    )
}

// [6] -------------------------------------------------------------------

fn deg(d: f64) -> Vec<f32> {
    unit(d.to_radians())
}

fn fixture_chunk(id: &str, angle: f64) -> Chunk {
    Chunk {
        id: id.into(),
        doc_id: "d".into(),
        text: format!("chunk {id}"),
        token_count: 2,
        sentence_range: [0, 0],
        embedding: Embedding(deg(angle)),
        sub_index: None,
    }
}

fn local_ids(tau_e: f64, tau_d: f64, k: usize) -> Result<(Vec<String>, usize), String> {
    let mut graph = KnowledgeGraph::default();
    for (name, angle) in [("A", 10.0), ("B", 45.0), ("C", 120.0)] {
        let mut ent = Entity::new(name, "concept", "fixture", "g0");
        ent.embedding = Some(Embedding(deg(angle)));
        graph.entities.insert(ent.id.clone(), ent);
    }
    let index = ChunkIndex::new(
        [("g0", 20.0), ("g1", 75.0), ("g2", 170.0), ("g3", 200.0)]
            .iter()
            .map(|(id, a)| fixture_chunk(id, *a))
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let e = TableEmbedder::new(2).with("query", deg(0.0));
    let cfg = LocalSearchConfig {
        tau_e,
        tau_d,
        k,
        window_l: 1000,
        ..Default::default()
    };
    let ctx = local_search(&Query::new("query"), &graph, &index, &cfg, &e).map_err(|e| e.to_string())?;
    Ok((ctx.items.iter().map(|i| i.source_id.clone()).collect(), ctx.meta.candidates))
}

fn report(id: &str, text: &str, angle: f64, rank: f64) -> Community {
    Community {
        id: id.into(),
        level: 0,
        member_entities: Default::default(),
        internal_relations: Vec::new(),
        parent: None,
        report: Some(CommunityReport {
            community_id: id.into(),
            summary_text: text.into(),
            embedding: Embedding(deg(angle)),
            rank,
        }),
    }
}

fn search_fixtures() -> Result<String, String> {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    // Entities at 10, 45, 120 degrees from the query; chunks at 20, 75, 170,
    // 200. cos: A .985, B .707, C -.5; chunk-to-query g0 .940, g1 .259.
    // tau_e .5 keeps A, B. tau_d .75: g0 (A, 10 deg) and g1 (B, 30 deg) pass.
    let (ids, candidates) = local_ids(0.5, 0.75, 3)?;
    check("local tau_e .5 tau_d .75 k 3", ids == ["a", "g0", "b"] && candidates == 4);
    // tau_e .9 keeps only A; only g0 is within 41.4 degrees of A.
    let (ids, candidates) = local_ids(0.9, 0.75, 10)?;
    check("local tau_e .9", ids == ["a", "g0"] && candidates == 2);
    // tau_e 1.1 admits nothing.
    let (ids, _) = local_ids(1.1, 0.75, 10)?;
    check("local tau_e 1.1", ids.is_empty());

    // Report A: angle 0, rank 1. Report B: angle 60, rank 4. With w = .3:
    // A = .3 * 1/4 + .7 * 1 = .775, B = .3 * 1 + .7 * .5 = .65.
    let communities = vec![
        report("L0-C0", "Alpha one. Alpha two.", 0.0, 1.0),
        report("L0-C1", "Beta one. Beta two.", 60.0, 4.0),
    ];
    let reports: Vec<&CommunityReport> = communities.iter().map(|c| c.report.as_ref().unwrap()).collect();
    let ranked = rank_reports(&reports, &Embedding(deg(0.0)), 0.3).map_err(|e| e.to_string())?;
    check(
        "report ranking",
        ranked[0].0.community_id == "L0-C0"
            && (ranked[0].1 - 0.775).abs() < 1e-6
            && (ranked[1].1 - 0.65).abs() < 1e-6,
    );

    let e = TableEmbedder::new(2).with("query", deg(0.0));
    let llm = StubLlm::new(
        StubScript::default()
            .rule("POINT: Alpha one.", "90")
            .rule("POINT: Alpha two.", "10")
            .rule("POINT: Beta one.", "40")
            .rule("POINT: Beta two.", "70"),
    );
    let global = |top_k_reports: usize, rank_weight: f64| -> Result<Vec<String>, String> {
        let cfg = GlobalSearchConfig {
            top_k_reports,
            k_points: 3,
            point_sentences: 1,
            rank_weight,
            ..Default::default()
        };
        let ctx = global_search(&Query::new("query"), &communities, &cfg, &llm, &e).map_err(|e| e.to_string())?;
        if ctx.items.iter().any(|i| i.kind != ItemKind::ReportPoint) {
            return Err("non-point item in global context".into());
        }
        Ok(ctx.items.iter().map(|i| i.source_id.clone()).collect())
    };
    // Points scored 90, 10, 40, 70: best three across both reports.
    check("global K 2", global(2, 0.3)? == ["L0-C0#p0", "L0-C1#p1", "L0-C1#p0"]);
    // Only report A is expanded.
    check("global K 1", global(1, 0.3)? == ["L0-C0#p0", "L0-C0#p1"]);
    // Ranking by rank alone expands report B instead.
    check("global K 1 w 1", global(1, 1.0)? == ["L0-C1#p1", "L0-C1#p0"]);

    if failures.is_empty() {
        Ok("3 local and 4 global hand-computed fixtures reproduced exactly".into())
    } else {
        Err(format!("mismatched: {}", failures.join(", ")))
    }
}

// [7] -------------------------------------------------------------------

fn metric_arithmetic() -> Result<String, String> {
    let formula = correctness_score(1, 1, 1, 0.8);

    // Planted vectors with exact cosines: (4, 3) vs (5, 0) is 0.8.
    let e = TableEmbedder::new(2)
        .with("generated", vec![4.0, 3.0])
        .with("truth", vec![5.0, 0.0])
        .with("Q?", vec![2.0, 0.0])
        .with("A?", vec![3.0, 4.0])
        .with("B?", vec![7.0, 0.0]);
    let judge = StubLlm::new(StubScript::default().with_default("{\"TP\": [\"a\"], \"FP\": [\"b\"], \"FN\": [\"c\"]}"));
    let pipeline = answer_correctness("q", "generated", "truth", CorrectnessMode::Llm, &judge, &e)
        .map_err(|e| e.to_string())?
        .score;

    let stub = StubEmbedder::new(9, 64);
    let x = "The Marrow River ends in Lake Oren.";
    let self_sim = answer_similarity(x, x, &stub).map_err(|e| e.to_string())?;

    // Regenerated questions with similarities 0.6 and 1.0 to the original.
    let asker = StubLlm::new(StubScript::default().with_default("1. A?\n2. B?"));
    let relevancy = answer_relevancy("Q?", "answer", 2, &asker, &e).map_err(|e| e.to_string())?.score;

    let detail = format!(
        "correctness {formula:.12} and {pipeline:.12} (want 0.575 +/- {METRIC_TOL:e}), similarity(x, x) {self_sim:.9} (want 1 +/- {SIMILARITY_TOL:e}), relevancy {relevancy:.12} (want 0.8 +/- {METRIC_TOL:e})"
    );
    let ok = (formula - 0.575).abs() <= METRIC_TOL
        && (pipeline - 0.575).abs() <= METRIC_TOL
        && (self_sim - 1.0).abs() <= SIMILARITY_TOL
        && (relevancy - 0.8).abs() <= METRIC_TOL;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// [8], [9] --------------------------------------------------------------

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy").join(name)
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_semrag"))
        .args(args)
        .env_remove("SEMRAG_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`semrag {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

/// ingest -> chunk -> graph -> eval -> sweep on the toy corpus in stub mode.
fn pipeline(run: &Path) -> Result<Duration, String> {
    let started = Instant::now();
    let run = run.to_str().unwrap();
    let corpus = toy("corpus.jsonl");
    let qa = toy("qa.jsonl");
    let cfg = toy("config.toml");
    let script = toy("stub_llm.json");
    let (corpus, qa, cfg, script) = (corpus.to_str().unwrap(), qa.to_str().unwrap(), cfg.to_str().unwrap(), script.to_str().unwrap());
    let common = ["--config", cfg, "--seed", "7", "--stub-embed", "--stub-llm", script];
    let with = |args: &[&str]| -> Vec<String> { args.iter().chain(common.iter()).map(|s| s.to_string()).collect() };
    for args in [
        with(&["ingest", corpus, run]),
        with(&["chunk", run]),
        with(&["graph", run]),
        with(&["eval", run, qa]),
        with(&["sweep", run, qa, "--buffers", "0,2,5"]),
    ] {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run_cli(&refs)?;
    }
    Ok(started.elapsed())
}

fn end_to_end_determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("run-a"), tmp.path().join("run-b"));
    let ta = pipeline(&a)?;
    let tb = pipeline(&b)?;
    let csv_a = std::fs::read(a.join("sweep.csv")).map_err(|e| e.to_string())?;
    let csv_b = std::fs::read(b.join("sweep.csv")).map_err(|e| e.to_string())?;
    let rows = String::from_utf8_lossy(&csv_a).lines().count() - 1;
    let slowest = ta.max(tb);
    let detail = format!(
        "sweep.csv byte-identical across two runs: {}, {rows} rows, slowest run {:.2} s (limit {} s)",
        csv_a == csv_b,
        slowest.as_secs_f64(),
        PIPELINE_TIME_LIMIT.as_secs()
    );
    if csv_a == csv_b && rows == 3 && slowest < PIPELINE_TIME_LIMIT {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn schema_fidelity() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = tmp.path().join("run");
    pipeline(&run)?;
    let mut problems = Vec::new();

    let csv = std::fs::read_to_string(run.join("sweep.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header = lines.next().unwrap_or_default();
    let expected = "buffer,time_sec,chunks,nodes,edges,correctness_mean,correctness_std,similarity_mean,similarity_std,relevancy_mean,relevancy_std";
    if header != expected || SWEEP_COLUMNS.join(",") != expected {
        problems.push(format!("sweep.csv header {header:?}"));
    }
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let numeric = fields.iter().all(|f| f.parse::<f64>().is_ok());
        let three_decimals = fields[5..].iter().chain(std::iter::once(&fields[1])).all(|f| f.split('.').nth(1).map(str::len) == Some(3));
        if fields.len() != 11 || !numeric || !three_decimals {
            problems.push(format!("sweep row {line:?}"));
        }
    }

    let read_json = |name: &str| -> Result<serde_json::Value, String> {
        let text = std::fs::read_to_string(run.join(name)).map_err(|e| format!("{name}: {e}"))?;
        serde_json::from_str(&text).map_err(|e| format!("{name}: {e}"))
    };
    let sweep = read_json("sweep.json")?;
    for row in sweep["rows"].as_array().cloned().unwrap_or_default() {
        for key in ["buffer", "time_sec", "chunks", "nodes", "edges"] {
            if !row[key].is_number() {
                problems.push(format!("sweep.json row lacks {key}"));
            }
        }
        for metric in ["correctness", "similarity", "relevancy"] {
            if !row[metric]["mean"].is_number() || !row[metric]["std"].is_number() {
                problems.push(format!("sweep.json row lacks {metric} mean/std"));
            }
        }
    }

    let report = read_json("eval_local.json")?;
    for metric in ["correctness", "similarity", "relevancy"] {
        if !report["summary"][metric]["mean"].is_number() || !report["summary"][metric]["std"].is_number() {
            problems.push(format!("eval report lacks summary.{metric} mean/std"));
        }
    }
    for key in ["mode", "examples", "failures", "std_convention", "results"] {
        if report.get(key).is_none() {
            problems.push(format!("eval report lacks {key}"));
        }
    }
    let n = report["results"].as_array().map_or(0, Vec::len);
    let eval_csv = std::fs::read_to_string(run.join("eval_local.csv")).map_err(|e| e.to_string())?;
    if !eval_csv.starts_with("index,correctness,similarity,relevancy\n") || eval_csv.lines().count() != n + 1 {
        problems.push("eval_local.csv shape".into());
    }

    if problems.is_empty() {
        Ok(format!(
            "sweep.csv has the 11 buffer-table columns; sweep.json and eval report carry mean and std for all three metrics ({n} examples)"
        ))
    } else {
        Err(problems.join("; "))
    }
}

// [10] ------------------------------------------------------------------

fn live_smoke() -> Option<Result<String, String>> {
    let url = std::env::var("SEMRAG_LIVE_URL").ok().filter(|u| !u.is_empty())?;
    Some((|| {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let cfg = tmp.path().join("live.toml");
        std::fs::write(
            &cfg,
            format!("[embedding]\nkind = \"remote\"\nendpoint_url = \"{url}\"\n[llm]\nkind = \"remote\"\nendpoint_url = \"{url}\"\n"),
        )
        .map_err(|e| e.to_string())?;
        let run = tmp.path().join("run");
        let (cfg, run) = (cfg.to_str().unwrap(), run.to_str().unwrap());
        let corpus = toy("corpus.jsonl");
        run_cli(&["ingest", corpus.to_str().unwrap(), run, "--config", cfg])?;
        run_cli(&["chunk", run, "--config", cfg])?;
        run_cli(&["graph", run, "--config", cfg])?;
        for mode in ["naive", "local", "global"] {
            let out = Command::new(env!("CARGO_BIN_EXE_semrag"))
                .args(["query", run, "Who founded Halvik?", "--mode", mode, "--config", cfg, "--show-context"])
                .output()
                .map_err(|e| e.to_string())?;
            let text = String::from_utf8_lossy(&out.stdout);
            let (answer, context) = text.split_once("\n--- context").unwrap_or((&text, ""));
            if !out.status.success() || answer.trim().is_empty() {
                return Err(format!("{mode}: empty answer or failure"));
            }
            // "--- context: M mode, N items, T/L tokens, ..."
            let budget = context
                .split(", ")
                .find_map(|part| part.strip_suffix(" tokens"))
                .and_then(|t| t.split_once('/'))
                .and_then(|(t, l)| Some((t.parse::<usize>().ok()?, l.parse::<usize>().ok()?)));
            match budget {
                Some((t, l)) if t <= l => {}
                _ => return Err(format!("{mode}: context exceeds window or is unreadable")),
            }
        }
        Ok("non-empty answers within the context window in naive, local and global modes".to_string())
    })())
}

use std::collections::{BTreeSet, HashMap};

use chrono::{DateTime, Duration, Utc};
use pathwise_core::embeddings::DocVector;
use pathwise_core::pathways::{build_graph, cluster_window, mean_vector, PathwayConfig, PathwayGraph, PostPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 8;

fn stream(seed: u64) -> (Vec<PostPoint<f64>>, PathwayConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topics: Vec<Vec<f64>> =
        (0..rng.gen_range(1..7)).map(|_| (0..DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let n = rng.gen_range(0..=500);
    let origin: DateTime<Utc> = "2019-05-01T00:00:00Z".parse().unwrap();
    let span_min = rng.gen_range(60..14 * 24 * 60);
    let mut posts: Vec<PostPoint<f64>> = (0..n)
        .map(|i| {
            let vector = if rng.gen_bool(0.03) {
                DocVector::new(vec![0.0; DIM])
            } else {
                let t = &topics[rng.gen_range(0..topics.len())];
                DocVector::new(t.iter().map(|x| x + rng.gen_range(-0.7..0.7)).collect())
            };
            PostPoint { post_id: format!("p{i}"), timestamp: origin + Duration::minutes(rng.gen_range(0..span_min)), vector }
        })
        .collect();
    posts.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.post_id.cmp(&b.post_id)));
    let cfg = PathwayConfig {
        window_hours: [6.0, 12.0, 24.0, 48.0][rng.gen_range(0..4)],
        tau: rng.gen_range(0.3..0.9),
        tau_link: rng.gen_range(0.3..0.9),
        top_terms: 5,
    };
    (posts, cfg)
}

fn check_partition(posts: &[PostPoint<f64>], g: &PathwayGraph<f64>) {
    for layer in &g.layers {
        let expect: BTreeSet<&str> = posts
            .iter()
            .filter(|p| p.timestamp >= layer.window.start && p.timestamp < layer.window.end)
            .map(|p| p.post_id.as_str())
            .collect();
        let members: Vec<&str> = layer.clusters.iter().flat_map(|c| c.members.iter().map(String::as_str)).collect();
        let uniq: BTreeSet<&str> = members.iter().copied().collect();
        assert_eq!(uniq.len(), members.len(), "post in two clusters");
        assert_eq!(uniq, expect, "layer {} is not a partition of its window", layer.index);
        assert!(layer.clusters.iter().all(|c| !c.members.is_empty()));
    }
    for w in g.layers.windows(2) {
        assert_eq!(w[0].window.end, w[1].window.start);
    }
}

fn check_dag(g: &PathwayGraph<f64>) {
    let layer_of = g.layer_of();
    for e in &g.edges {
        assert_eq!(layer_of[e.from.as_str()] + 1, layer_of[e.to.as_str()], "edge skips a layer");
    }
    // Kahn's algorithm drains every node iff the graph is acyclic
    let mut indeg: HashMap<&str, usize> = g.clusters().map(|c| (c.id.as_str(), 0)).collect();
    for e in &g.edges {
        *indeg.get_mut(e.to.as_str()).unwrap() += 1;
    }
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(&k, _)| k).collect();
    let mut seen = 0;
    while let Some(n) = ready.pop() {
        seen += 1;
        for e in g.edges.iter().filter(|e| e.from == n) {
            let d = indeg.get_mut(e.to.as_str()).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(e.to.as_str());
            }
        }
    }
    assert_eq!(seen, indeg.len(), "cycle");
}

#[test]
fn random_streams_satisfy_graph_invariants() {
    for seed in 0..100 {
        let (posts, cfg) = stream(seed);
        let g = build_graph(&posts, &cfg).unwrap();
        check_partition(&posts, &g);
        check_dag(&g);
        let again = build_graph(&posts, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&g).unwrap(), serde_json::to_string(&again).unwrap());
    }
}

#[test]
fn centroid_recomputation_is_idempotent() {
    for seed in 0..30 {
        let (posts, cfg) = stream(seed);
        let g = build_graph(&posts, &cfg).unwrap();
        let by_id: HashMap<&str, &DocVector<f64>> = posts.iter().map(|p| (p.post_id.as_str(), &p.vector)).collect();
        for c in g.clusters().filter(|c| !c.unassigned) {
            let once = mean_vector(c.members.iter().map(|m| by_id[m.as_str()]));
            assert_eq!(once, c.centroid);
            let twice = mean_vector(c.members.iter().map(|m| by_id[m.as_str()]));
            assert_eq!(once, twice);
        }
    }
}

#[test]
fn higher_threshold_never_yields_fewer_clusters() {
    let taus = [0.3, 0.4, 0.5, 0.55, 0.6, 0.7, 0.8, 0.9];
    let mut violations = Vec::new();
    for seed in 0..100 {
        let (posts, cfg) = stream(seed);
        let g = build_graph(&posts, &cfg).unwrap();
        let by_id: HashMap<&str, &DocVector<f64>> = posts.iter().map(|p| (p.post_id.as_str(), &p.vector)).collect();
        for layer in &g.layers {
            let mut ids: Vec<(&DateTime<Utc>, &str)> = Vec::new();
            for p in &posts {
                if p.timestamp >= layer.window.start && p.timestamp < layer.window.end {
                    ids.push((&p.timestamp, p.post_id.as_str()));
                }
            }
            let vs: Vec<&DocVector<f64>> = ids.iter().map(|(_, id)| by_id[id]).collect();
            let counts: Vec<usize> = taus.iter().map(|&t| cluster_window(&vs, t).clusters.len()).collect();
            for (i, w) in counts.windows(2).enumerate() {
                if w[1] < w[0] {
                    violations.push((seed, layer.index, taus[i], taus[i + 1], w[0], w[1]));
                }
            }
        }
    }
    assert!(violations.is_empty(), "{} violations, first: {:?}", violations.len(), violations.first());
}

#[test]
fn single_pass_rule_admits_a_threshold_counterexample() {
    let vs: Vec<DocVector<f64>> = [[-3.0, 1.0, -1.0], [-2.0, 3.0, 1.0], [-3.0, 3.0, 3.0], [0.0, 1.0, 0.0]]
        .iter()
        .map(|v| DocVector::new(v.to_vec()))
        .collect();
    let refs: Vec<&DocVector<f64>> = vs.iter().collect();
    assert_eq!(cluster_window(&refs, 0.6).clusters.len(), 3);
    assert_eq!(cluster_window(&refs, 0.8).clusters.len(), 2);
}

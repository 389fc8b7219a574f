//! Discussion pathways: topic clusters per time window, linked across
//! consecutive windows into a layered multi-parent DAG.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::embeddings::{DocVector, Idf};
use crate::emotion::Emotion;
use crate::insights::{node_color, sentiment_from_counts, PostAnalysis};
use crate::scalar::{cosine, Scalar};
use crate::sentiment::SentimentLabel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathwayError {
    #[error("posts are not sorted by timestamp (index {0})")]
    UnsortedInput(usize),
    #[error("layers {0} and {1} are not adjacent")]
    NonAdjacentLayers(usize, usize),
    #[error("no analysis for post {0}")]
    MissingAnalysis(String),
    #[error("invalid pathway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathwayConfig {
    pub window_hours: f64,
    /// Cosine threshold for joining a cluster.
    pub tau: f64,
    /// Cosine threshold for linking clusters of adjacent layers.
    pub tau_link: f64,
    pub top_terms: usize,
}

impl Default for PathwayConfig {
    fn default() -> Self {
        Self { window_hours: 24.0, tau: 0.55, tau_link: 0.5, top_terms: 5 }
    }
}

impl PathwayConfig {
    pub fn validate(&self) -> Result<(), PathwayError> {
        if !(self.window_hours > 0.0 && self.window_hours.is_finite()) {
            return Err(PathwayError::Config("window length must be positive".into()));
        }
        for (name, v) in [("tau", self.tau), ("tau_link", self.tau_link)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(PathwayError::Config(format!("{name} must lie in (0, 1)")));
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Duration {
        Duration::milliseconds((self.window_hours * 3_600_000.0).round() as i64)
    }
}

/// A post reduced to what clustering needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PostPoint<T> {
    pub post_id: String,
    pub timestamp: DateTime<Utc>,
    pub vector: DocVector<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub dominant_sentiment: SentimentLabel,
    pub dominant_emotion: Option<Emotion>,
    pub sentiment_counts: BTreeMap<SentimentLabel, usize>,
    pub emotion_counts: BTreeMap<Emotion, usize>,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Cluster<T> {
    pub id: String,
    /// Holds the posts whose document vector is zero.
    #[serde(default)]
    pub unassigned: bool,
    pub centroid: DocVector<T>,
    pub members: Vec<String>,
    #[serde(default)]
    pub top_terms: Vec<String>,
    #[serde(default)]
    pub annotation: Option<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TopicLayer<T> {
    pub index: usize,
    pub window: Window,
    pub clusters: Vec<Cluster<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Edge<T> {
    pub from: String,
    pub to: String,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PathwayGraph<T> {
    pub layers: Vec<TopicLayer<T>>,
    pub edges: Vec<Edge<T>>,
}

/// Result of clustering one window: member indices per cluster in creation
/// order, plus the indices of zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowClusters<T> {
    pub clusters: Vec<Vec<usize>>,
    pub centroids: Vec<DocVector<T>>,
    pub unassigned: Vec<usize>,
}

/// Single-pass leader clustering in input order. Each vector joins the
/// cluster whose leader is most similar (cosine ≥ `tau`, ties to the
/// earliest cluster) or founds a new one; centroids are then the member
/// means.
pub fn cluster_window<T: Scalar>(vectors: &[&DocVector<T>], tau: T) -> WindowClusters<T> {
    let mut leaders: Vec<&DocVector<T>> = Vec::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut unassigned = Vec::new();
    for (i, v) in vectors.iter().enumerate() {
        if v.is_zero() {
            unassigned.push(i);
            continue;
        }
        let mut best: Option<(usize, T)> = None;
        for (k, l) in leaders.iter().enumerate() {
            let c = cosine(&l.values, &v.values);
            if c >= tau && best.is_none_or(|(_, b)| c > b) {
                best = Some((k, c));
            }
        }
        match best {
            Some((k, _)) => clusters[k].push(i),
            None => {
                leaders.push(v);
                clusters.push(vec![i]);
            }
        }
    }
    let centroids = clusters.iter().map(|m| mean_vector(m.iter().map(|&i| vectors[i]))).collect();
    WindowClusters { clusters, centroids, unassigned }
}

/// Component-wise mean; the empty mean is an empty vector.
pub fn mean_vector<'a, T: Scalar, I: IntoIterator<Item = &'a DocVector<T>>>(vs: I) -> DocVector<T> {
    let mut acc: Vec<T> = Vec::new();
    let mut n = 0usize;
    for v in vs {
        if acc.is_empty() {
            acc = vec![T::zero(); v.dim()];
        }
        for (a, b) in acc.iter_mut().zip(&v.values) {
            *a += *b;
        }
        n += 1;
    }
    if n > 0 {
        let nf = T::from_usize_lossy(n);
        acc.iter_mut().for_each(|a| *a /= nf);
    }
    DocVector::new(acc)
}

/// Splits time-sorted posts into half-open windows of `window` starting at
/// the first timestamp and clusters each window. Empty windows are kept.
pub fn build_layers<T: Scalar>(
    posts: &[PostPoint<T>],
    window: Duration,
    tau: T,
) -> Result<Vec<TopicLayer<T>>, PathwayError> {
    if window <= Duration::zero() {
        return Err(PathwayError::Config("window length must be positive".into()));
    }
    if let Some(i) = posts.windows(2).position(|w| w[1].timestamp < w[0].timestamp) {
        return Err(PathwayError::UnsortedInput(i + 1));
    }
    let Some(first) = posts.first() else { return Ok(Vec::new()) };
    let origin = first.timestamp;
    let wms = window.num_milliseconds();
    let slot = |t: DateTime<Utc>| ((t - origin).num_milliseconds() / wms) as usize;
    let n_layers = slot(posts.last().expect("non-empty").timestamp) + 1;
    let mut buckets: Vec<Vec<&PostPoint<T>>> = vec![Vec::new(); n_layers];
    for p in posts {
        buckets[slot(p.timestamp)].push(p);
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (index, members) in buckets.into_iter().enumerate() {
        let start = origin + window * index as i32;
        let vectors: Vec<&DocVector<T>> = members.iter().map(|p| &p.vector).collect();
        let wc = cluster_window(&vectors, tau);
        let mut clusters: Vec<Cluster<T>> = wc
            .clusters
            .iter()
            .zip(wc.centroids)
            .enumerate()
            .map(|(k, (m, centroid))| Cluster {
                id: format!("L{index}C{k}"),
                unassigned: false,
                centroid,
                members: m.iter().map(|&i| members[i].post_id.clone()).collect(),
                top_terms: Vec::new(),
                annotation: None,
            })
            .collect();
        if !wc.unassigned.is_empty() {
            let dim = members.first().map_or(0, |p| p.vector.dim());
            clusters.push(Cluster {
                id: format!("L{index}U"),
                unassigned: true,
                centroid: DocVector::new(vec![T::zero(); dim]),
                members: wc.unassigned.iter().map(|&i| members[i].post_id.clone()).collect(),
                top_terms: Vec::new(),
                annotation: None,
            });
        }
        layers.push(TopicLayer { index, window: Window { start, end: start + window }, clusters });
    }
    Ok(layers)
}

/// An edge for every cluster pair of adjacent layers whose centroids have
/// cosine ≥ `tau_link`.
pub fn link_layers<T: Scalar>(
    prev: &TopicLayer<T>,
    next: &TopicLayer<T>,
    tau_link: T,
) -> Result<Vec<Edge<T>>, PathwayError> {
    if prev.index + 1 != next.index {
        return Err(PathwayError::NonAdjacentLayers(prev.index, next.index));
    }
    let mut edges = Vec::new();
    for p in prev.clusters.iter().filter(|c| !c.unassigned) {
        for c in next.clusters.iter().filter(|c| !c.unassigned) {
            let w = cosine(&p.centroid.values, &c.centroid.values);
            if w >= tau_link {
                edges.push(Edge { from: p.id.clone(), to: c.id.clone(), weight: w });
            }
        }
    }
    Ok(edges)
}

pub fn build_graph<T: Scalar>(posts: &[PostPoint<T>], cfg: &PathwayConfig) -> Result<PathwayGraph<T>, PathwayError> {
    cfg.validate()?;
    let layers = build_layers(posts, cfg.window(), T::lit(cfg.tau))?;
    let mut edges = Vec::new();
    for pair in layers.windows(2) {
        edges.extend(link_layers(&pair[0], &pair[1], T::lit(cfg.tau_link))?);
    }
    Ok(PathwayGraph { layers, edges })
}

/// Fills `top_terms` (by TF-IDF over `tokens`, ties lexicographic) and the
/// sentiment / emotion annotation of every cluster.
pub fn label_and_annotate<T: Scalar>(
    graph: &mut PathwayGraph<T>,
    tokens: &HashMap<String, Vec<String>>,
    analyses: &HashMap<String, PostAnalysis>,
    top_n: usize,
) -> Result<(), PathwayError> {
    let all_members = graph.layers.iter().flat_map(|l| l.clusters.iter()).flat_map(|c| c.members.iter());
    let idf: Idf<f64> = Idf::fit(all_members.map(|id| tokens.get(id).map(Vec::as_slice).unwrap_or_default()));
    for cluster in graph.layers.iter_mut().flat_map(|l| l.clusters.iter_mut()) {
        let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
        let mut sent = [0usize; 3];
        let mut emo: BTreeMap<Emotion, usize> = BTreeMap::new();
        for id in &cluster.members {
            let a = analyses.get(id).ok_or_else(|| PathwayError::MissingAnalysis(id.clone()))?;
            sent[a.sentiment.index()] += 1;
            for &e in &a.emotions.labels {
                *emo.entry(e).or_default() += 1;
            }
            for t in tokens.get(id).into_iter().flatten() {
                *tf.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut scored: Vec<(f64, &str)> = tf.into_iter().map(|(t, c)| (c as f64 * idf.weight(t), t)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        cluster.top_terms = scored.into_iter().take(top_n).map(|(_, t)| t.to_string()).collect();

        let dominant_sentiment = sentiment_from_counts(&sent);
        let dominant_emotion = emo.iter().max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0))).map(|(&e, _)| e);
        cluster.annotation = Some(Annotation {
            dominant_sentiment,
            dominant_emotion,
            sentiment_counts: SentimentLabel::ALL.into_iter().map(|l| (l, sent[l.index()])).collect(),
            emotion_counts: emo,
            color: node_color(dominant_sentiment).to_string(),
        });
    }
    Ok(())
}

impl<T: Scalar> PathwayGraph<T> {
    pub fn clusters(&self) -> impl Iterator<Item = &Cluster<T>> {
        self.layers.iter().flat_map(|l| l.clusters.iter())
    }

    pub fn cluster(&self, id: &str) -> Option<&Cluster<T>> {
        self.clusters().find(|c| c.id == id)
    }

    /// Layer index of every cluster id.
    pub fn layer_of(&self) -> HashMap<&str, usize> {
        self.layers.iter().flat_map(|l| l.clusters.iter().map(move |c| (c.id.as_str(), l.index))).collect()
    }

    /// Graphviz rendering with one same-rank subgraph per layer.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph pathways {\n  rankdir=LR;\n  node [shape=box, style=filled];\n");
        for layer in &self.layers {
            let _ = writeln!(s, "  subgraph layer_{} {{\n    rank=same;", layer.index);
            for c in &layer.clusters {
                let color = c.annotation.as_ref().map_or("gray", |a| a.color.as_str());
                let label = if c.top_terms.is_empty() { c.id.clone() } else { c.top_terms.join(" ") };
                let _ = writeln!(
                    s,
                    "    \"{}\" [label=\"{}\\n({} posts)\", fillcolor={}];",
                    c.id,
                    label.replace('"', "\\\""),
                    c.members.len(),
                    color
                );
            }
            s.push_str("  }\n");
        }
        for e in &self.edges {
            let _ = writeln!(s, "  \"{}\" -> \"{}\" [label=\"{:.3}\"];", e.from, e.to, e.weight.to_f64_lossless());
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::EmotionVector;

    fn dv(v: &[f64]) -> DocVector<f64> {
        DocVector::new(v.to_vec())
    }

    fn at(h: i64) -> DateTime<Utc> {
        "2018-03-07T00:00:00Z".parse::<DateTime<Utc>>().unwrap() + Duration::hours(h)
    }

    fn point(id: &str, h: i64, v: &[f64]) -> PostPoint<f64> {
        PostPoint { post_id: id.into(), timestamp: at(h), vector: dv(v) }
    }

    #[test]
    fn clustering_examples() {
        let u = dv(&[1.0, 2.0]);
        let r = cluster_window(&[&u, &u, &u], 0.55);
        assert_eq!(r.clusters, vec![vec![0, 1, 2]]);

        let (a, b) = (dv(&[1.0, 0.0]), dv(&[0.0, 1.0]));
        assert_eq!(cluster_window(&[&a, &b], 0.5).clusters.len(), 2);

        // cos(u, v) = 0.9
        let u = dv(&[1.0, 0.0]);
        let v = dv(&[0.9, (1.0f64 - 0.81).sqrt()]);
        assert!((cosine(&u.values, &v.values) - 0.9).abs() < 1e-12);
        assert_eq!(cluster_window(&[&u, &u, &v], 0.8).clusters, vec![vec![0, 1, 2]]);

        let z = dv(&[0.0, 0.0]);
        let r = cluster_window(&[&z, &u], 0.5);
        assert_eq!((r.clusters, r.unassigned), (vec![vec![1]], vec![0]));
    }

    #[test]
    fn ties_go_to_the_earliest_cluster() {
        let a = dv(&[1.0, 0.0]);
        let b = dv(&[0.0, 1.0]);
        let mid = dv(&[1.0, 1.0]);
        let r = cluster_window(&[&a, &b, &mid], 0.7);
        assert_eq!(r.clusters, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn centroids_are_member_means_and_stable() {
        let (a, b) = (dv(&[1.0, 0.0]), dv(&[0.8, 0.6]));
        let r = cluster_window(&[&a, &b], 0.5);
        assert_eq!(r.centroids[0].values, vec![0.9, 0.3]);
        let again = mean_vector([&a, &b]);
        assert_eq!(again, r.centroids[0]);
    }

    #[test]
    fn layer_boundaries() {
        assert!(build_layers::<f64>(&[], Duration::hours(24), 0.5).unwrap().is_empty());
        let four: Vec<_> = (0..4).map(|i| point(&i.to_string(), i, &[1.0, 0.0])).collect();
        assert_eq!(build_layers(&four, Duration::hours(24), 0.5).unwrap().len(), 1);
        let edge = vec![point("a", 0, &[1.0, 0.0]), point("b", 24, &[1.0, 0.0])];
        let layers = build_layers(&edge, Duration::hours(24), 0.5).unwrap();
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].window.end, layers[1].window.start);
        let gap = vec![point("a", 0, &[1.0, 0.0]), point("b", 50, &[1.0, 0.0])];
        let layers = build_layers(&gap, Duration::hours(24), 0.5).unwrap();
        assert_eq!(layers.len(), 3);
        assert!(layers[1].clusters.is_empty());
        let unsorted = vec![point("a", 5, &[1.0, 0.0]), point("b", 1, &[1.0, 0.0])];
        assert_eq!(build_layers(&unsorted, Duration::hours(24), 0.5), Err(PathwayError::UnsortedInput(1)));
    }

    fn layer(index: usize, centroids: &[&[f64]]) -> TopicLayer<f64> {
        TopicLayer {
            index,
            window: Window { start: at(0), end: at(24) },
            clusters: centroids
                .iter()
                .enumerate()
                .map(|(k, c)| Cluster {
                    id: format!("L{index}C{k}"),
                    unassigned: false,
                    centroid: dv(c),
                    members: vec![format!("p{index}{k}")],
                    top_terms: vec![],
                    annotation: None,
                })
                .collect(),
        }
    }

    #[test]
    fn linking_examples() {
        let e = link_layers(&layer(0, &[&[1.0, 1.0]]), &layer(1, &[&[1.0, 1.0]]), 0.5).unwrap();
        assert_eq!(e.len(), 1);
        assert!((e[0].weight - 1.0).abs() < 1e-15);
        assert!(link_layers(&layer(0, &[&[1.0, 0.0]]), &layer(1, &[&[0.0, 1.0]]), 0.5).unwrap().is_empty());
        // child at cosine 0.9 from both parents
        let s = (1.0f64 - 0.81).sqrt();
        let prev = layer(0, &[&[0.9, s, 0.0], &[0.9, 0.0, s]]);
        let next = layer(1, &[&[1.0, 0.0, 0.0]]);
        let e = link_layers(&prev, &next, 0.8).unwrap();
        assert_eq!(e.len(), 2);
        assert!(matches!(link_layers(&prev, &layer(2, &[&[1.0, 0.0, 0.0]]), 0.8), Err(PathwayError::NonAdjacentLayers(0, 2))));
    }

    fn analysis(id: &str, s: SentimentLabel, emos: &[Emotion]) -> PostAnalysis {
        let probs = Emotion::ALL.map(|e| if emos.contains(&e) { 0.9 } else { 0.1 });
        PostAnalysis { post_id: id.into(), aspects: vec![], emotions: EmotionVector::from_probs(probs, 0.5), sentiment: s }
    }

    fn annotated(members: &[(&str, SentimentLabel, &[Emotion])]) -> Annotation {
        let mut g = PathwayGraph { layers: vec![layer(0, &[&[1.0]])], edges: vec![] };
        g.layers[0].clusters[0].members = members.iter().map(|m| m.0.to_string()).collect();
        let analyses = members.iter().map(|(id, s, e)| (id.to_string(), analysis(id, *s, e))).collect();
        label_and_annotate(&mut g, &HashMap::new(), &analyses, 5).unwrap();
        g.layers[0].clusters[0].annotation.clone().unwrap()
    }

    #[test]
    fn annotation_rules() {
        use SentimentLabel::*;
        let a = annotated(&[("a", Positive, &[]), ("b", Positive, &[])]);
        assert_eq!((a.dominant_sentiment, a.color.as_str()), (Positive, "green"));
        assert_eq!(annotated(&[("a", Positive, &[]), ("b", Negative, &[])]).dominant_sentiment, Neutral);
        let a = annotated(&[("a", Neutral, &[Emotion::Joy]), ("b", Neutral, &[Emotion::Joy, Emotion::Anger])]);
        assert_eq!(a.dominant_emotion, Some(Emotion::Joy));
        let a = annotated(&[("a", Neutral, &[Emotion::Trust]), ("b", Neutral, &[Emotion::Fear])]);
        assert_eq!(a.dominant_emotion, Some(Emotion::Fear));
        assert_eq!(annotated(&[("a", Neutral, &[])]).dominant_emotion, None);
    }

    #[test]
    fn missing_analysis_is_reported() {
        let mut g = PathwayGraph { layers: vec![layer(0, &[&[1.0]])], edges: vec![] };
        let r = label_and_annotate(&mut g, &HashMap::new(), &HashMap::new(), 5);
        assert_eq!(r, Err(PathwayError::MissingAnalysis("p00".into())));
    }

    #[test]
    fn top_terms_by_tfidf_with_lexicographic_ties() {
        let mut g = PathwayGraph { layers: vec![layer(0, &[&[1.0], &[1.0]])], edges: vec![] };
        g.layers[0].clusters[0].members = vec!["a".into(), "b".into()];
        g.layers[0].clusters[1].members = vec!["c".into()];
        let toks: HashMap<String, Vec<String>> = [
            ("a", "pizza pizza crust view"),
            ("b", "pizza view beer"),
            ("c", "view sunset"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.split(' ').map(String::from).collect()))
        .collect();
        let analyses = ["a", "b", "c"].into_iter().map(|id| (id.to_string(), analysis(id, SentimentLabel::Neutral, &[]))).collect();
        label_and_annotate(&mut g, &toks, &analyses, 3).unwrap();
        // idf: pizza ln(3/2)+1, view 1, crust/beer ln3+1; tf pizza 3, view 2
        assert_eq!(g.layers[0].clusters[0].top_terms, vec!["pizza", "beer", "crust"]);
        assert_eq!(g.layers[0].clusters[1].top_terms, vec!["sunset", "view"]);
    }

    #[test]
    fn json_round_trip_and_dot() {
        let posts = vec![point("a", 0, &[1.0, 0.0]), point("b", 30, &[1.0, 0.1]), point("c", 31, &[0.0, 1.0])];
        let g = build_graph(&posts, &PathwayConfig::default()).unwrap();
        assert_eq!(g.edges.len(), 1);
        let s = serde_json::to_string(&g).unwrap();
        let back: PathwayGraph<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
        let dot = g.to_dot();
        assert!(dot.contains("subgraph layer_1") && dot.contains("\"L0C0\" -> \"L1C0\""));
    }

    #[test]
    fn config_validation() {
        assert!(PathwayConfig { tau: 1.0, ..Default::default() }.validate().is_err());
        assert!(PathwayConfig { window_hours: 0.0, ..Default::default() }.validate().is_err());
        assert!(PathwayConfig::default().validate().is_ok());
    }
}

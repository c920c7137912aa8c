//! Immutable undirected graphs in CSR form, BFS kernels and structural
//! analysis metrics.

use std::collections::VecDeque;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded;
use crate::sparse::CsrMatrix;

/// Distance value for nodes that cannot be reached from the BFS source.
pub const UNREACHABLE: u32 = u32::MAX;

/// Graphs above this many nodes get sampled BFS sources in
/// [`structural_metrics`] callers that follow the default policy.
pub const EXACT_METRICS_NODE_THRESHOLD: usize = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node id {node} out of range for {num_nodes} nodes")]
    NodeOutOfRange { node: usize, num_nodes: usize },
    #[error("node {node} has label {label}, but num_classes is {num_classes}")]
    LabelOutOfRange {
        node: usize,
        label: u32,
        num_classes: usize,
    },
    #[error("num_classes must be at least 2, got {0}")]
    TooFewClasses(usize),
    #[error("node {0} belongs to more than one of train/val/test")]
    OverlappingMasks(usize),
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("sample_sources must be at least 1")]
    NoSources,
}

/// Train/validation/test membership flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            train: vec![false; num_nodes],
            val: vec![false; num_nodes],
            test: vec![false; num_nodes],
        }
    }

    /// Builds masks from node id lists.
    pub fn from_ids(
        num_nodes: usize,
        train: &[usize],
        val: &[usize],
        test: &[usize],
    ) -> Result<Self, GraphError> {
        let mut masks = Self::empty(num_nodes);
        for (ids, mask) in [
            (train, &mut masks.train),
            (val, &mut masks.val),
            (test, &mut masks.test),
        ] {
            for &id in ids {
                if id >= num_nodes {
                    return Err(GraphError::NodeOutOfRange { node: id, num_nodes });
                }
                mask[id] = true;
            }
        }
        Ok(masks)
    }

    pub fn ids(mask: &[bool]) -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    fn select(&self, nodes: &[usize]) -> Self {
        Self {
            train: nodes.iter().map(|&v| self.train[v]).collect(),
            val: nodes.iter().map(|&v| self.val[v]).collect(),
            test: nodes.iter().map(|&v| self.test[v]).collect(),
        }
    }
}

/// What [`build_graph`] discarded from its input edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub self_loops_dropped: usize,
    pub duplicates_dropped: usize,
}

impl BuildReport {
    pub fn dropped(&self) -> usize {
        self.self_loops_dropped + self.duplicates_dropped
    }
}

/// An undirected node-classification graph.
///
/// Every undirected edge is stored in both directions; rows are sorted and
/// contain neither self-loops nor duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_classes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    features: CsrMatrix<f32>,
    labels: Vec<u32>,
    masks: Masks,
}

/// Builds a validated [`Graph`]. The node count is the feature row count.
pub fn build_graph(
    edges: &[(usize, usize)],
    features: CsrMatrix<f32>,
    labels: Vec<u32>,
    num_classes: usize,
    masks: Masks,
) -> Result<(Graph, BuildReport), GraphError> {
    let n = features.rows();
    if n == 0 {
        return Err(GraphError::Empty);
    }
    if num_classes < 2 {
        return Err(GraphError::TooFewClasses(num_classes));
    }
    check_len("labels", n, labels.len())?;
    check_len("train mask", n, masks.train.len())?;
    check_len("val mask", n, masks.val.len())?;
    check_len("test mask", n, masks.test.len())?;
    for (node, &label) in labels.iter().enumerate() {
        if label as usize >= num_classes {
            return Err(GraphError::LabelOutOfRange {
                node,
                label,
                num_classes,
            });
        }
    }
    for node in 0..n {
        let memberships =
            masks.train[node] as u8 + masks.val[node] as u8 + masks.test[node] as u8;
        if memberships > 1 {
            return Err(GraphError::OverlappingMasks(node));
        }
    }

    let mut report = BuildReport::default();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edges {
        for node in [u, v] {
            if node >= n {
                return Err(GraphError::NodeOutOfRange { node, num_nodes: n });
            }
        }
        if u == v {
            report.self_loops_dropped += 1;
            continue;
        }
        adjacency[u].push(v);
        adjacency[v].push(u);
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(edges.len() * 2);
    row_offsets.push(0);
    let mut duplicate_entries = 0;
    for row in &mut adjacency {
        row.sort_unstable();
        let before = row.len();
        row.dedup();
        duplicate_entries += before - row.len();
        col_indices.extend_from_slice(row);
        row_offsets.push(col_indices.len());
    }
    // each duplicate undirected edge shows up once in each endpoint's row
    report.duplicates_dropped = duplicate_entries / 2;

    Ok((
        Graph {
            num_classes,
            row_offsets,
            col_indices,
            features,
            labels,
            masks,
        },
        report,
    ))
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), GraphError> {
    if expected != got {
        return Err(GraphError::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

impl Graph {
    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of undirected edges.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    #[inline]
    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[u]..self.row_offsets[u + 1]]
    }

    #[inline]
    pub fn degree(&self, u: usize) -> usize {
        self.row_offsets[u + 1] - self.row_offsets[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|u| self.degree(u)).collect()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn features(&self) -> &CsrMatrix<f32> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.masks.train
    }

    pub fn val_mask(&self) -> &[bool] {
        &self.masks.val
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.masks.test
    }

    /// Undirected edges as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges().collect()
    }

    /// Same nodes, features, labels and masks with a different edge set.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<(Graph, BuildReport), GraphError> {
        build_graph(
            edges,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            self.masks.clone(),
        )
    }

    /// Same structure with replaced masks.
    pub fn with_masks(&self, masks: Masks) -> Result<Graph, GraphError> {
        check_len("train mask", self.num_nodes(), masks.train.len())?;
        check_len("val mask", self.num_nodes(), masks.val.len())?;
        check_len("test mask", self.num_nodes(), masks.test.len())?;
        for node in 0..self.num_nodes() {
            if masks.train[node] as u8 + masks.val[node] as u8 + masks.test[node] as u8 > 1 {
                return Err(GraphError::OverlappingMasks(node));
            }
        }
        Ok(Graph {
            masks,
            ..self.clone()
        })
    }

    /// The subgraph induced by `nodes`, reindexed densely in the given order.
    /// Returns the graph and the number of undirected edges with exactly one
    /// endpoint inside the node set.
    pub fn induced(&self, nodes: &[usize]) -> (Graph, usize) {
        let mut local = vec![usize::MAX; self.num_nodes()];
        for (i, &v) in nodes.iter().enumerate() {
            local[v] = i;
        }
        let mut row_offsets = Vec::with_capacity(nodes.len() + 1);
        let mut col_indices = Vec::new();
        let mut boundary = 0;
        row_offsets.push(0);
        for &v in nodes {
            let mut row: Vec<usize> = Vec::with_capacity(self.degree(v));
            for &w in self.neighbors(v) {
                match local[w] {
                    usize::MAX => boundary += 1,
                    lw => row.push(lw),
                }
            }
            row.sort_unstable();
            col_indices.extend_from_slice(&row);
            row_offsets.push(col_indices.len());
        }
        let graph = Graph {
            num_classes: self.num_classes,
            row_offsets,
            col_indices,
            features: self.features.select_rows(nodes),
            labels: nodes.iter().map(|&v| self.labels[v]).collect(),
            masks: self.masks.select(nodes),
        };
        (graph, boundary)
    }

    /// Nodes of each class among those selected by `mask`.
    pub fn nodes_by_class(&self, mask: &[bool]) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (v, &m) in mask.iter().enumerate() {
            if m {
                by_class[self.labels[v] as usize].push(v);
            }
        }
        by_class
    }

    /// Node counts per class over the whole graph.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Hop distances from one source node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceRow {
    pub source: usize,
    pub dist: Vec<u32>,
}

impl DistanceRow {
    /// Distance to `v`, or `None` when unreachable.
    #[inline]
    pub fn get(&self, v: usize) -> Option<u32> {
        match self.dist[v] {
            UNREACHABLE => None,
            d => Some(d),
        }
    }
}

/// Unweighted single-source shortest paths.
///
/// # Panics
///
/// If `source` is not a node of `g`.
pub fn bfs_distances(g: &Graph, source: usize) -> DistanceRow {
    assert!(source < g.num_nodes(), "BFS source {source} out of range");
    let mut dist = vec![UNREACHABLE; g.num_nodes()];
    let mut queue = VecDeque::new();
    dist[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = dist[u] + 1;
        for &v in g.neighbors(u) {
            if dist[v] == UNREACHABLE {
                dist[v] = next;
                queue.push_back(v);
            }
        }
    }
    DistanceRow { source, dist }
}

/// Component id per node; ids are assigned in order of each component's
/// smallest node.
pub fn connected_components(g: &Graph) -> Vec<usize> {
    let n = g.num_nodes();
    let mut comp = vec![usize::MAX; n];
    let mut next_id = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next_id;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &v in g.neighbors(u) {
                if comp[v] == usize::MAX {
                    comp[v] = next_id;
                    stack.push(v);
                }
            }
        }
        next_id += 1;
    }
    comp
}

/// Sizes of each component, indexed by component id.
pub fn component_sizes(components: &[usize]) -> Vec<usize> {
    let count = components.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0; count];
    for &c in components {
        sizes[c] += 1;
    }
    sizes
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralMetrics {
    /// Mean hop distance over reachable ordered pairs from the BFS sources.
    pub avg_shortest_path: f64,
    /// Largest component size over node count.
    pub max_component_fraction: f64,
    /// True when every node served as a BFS source.
    pub exact: bool,
    /// Set when no reachable pair exists; `avg_shortest_path` is then 0.
    pub no_reachable_pairs: bool,
}

/// Average shortest-path length and maximum component fraction.
///
/// Exact when `sample_sources >= num_nodes`; otherwise `sample_sources`
/// distinct BFS sources are drawn with `seed`. Unreachable pairs are
/// excluded from the average.
pub fn structural_metrics(
    g: &Graph,
    sample_sources: usize,
    seed: u64,
) -> Result<StructuralMetrics, GraphError> {
    if sample_sources == 0 {
        return Err(GraphError::NoSources);
    }
    let n = g.num_nodes();
    let exact = sample_sources >= n;
    let sources: Vec<usize> = if exact {
        (0..n).collect()
    } else {
        let mut rng = seeded(seed);
        let mut s = index::sample(&mut rng, n, sample_sources).into_vec();
        s.sort_unstable();
        s
    };

    let mut total: u64 = 0;
    let mut pairs: u64 = 0;
    for &s in &sources {
        let row = bfs_distances(g, s);
        for (v, &d) in row.dist.iter().enumerate() {
            if v != s && d != UNREACHABLE {
                total += d as u64;
                pairs += 1;
            }
        }
    }
    let sizes = component_sizes(&connected_components(g));
    let largest = sizes.iter().copied().max().unwrap_or(0);
    Ok(StructuralMetrics {
        avg_shortest_path: if pairs == 0 { 0.0 } else { total as f64 / pairs as f64 },
        max_component_fraction: largest as f64 / n as f64,
        exact,
        no_reachable_pairs: pairs == 0,
    })
}

/// Number of BFS sources used by the default metrics policy.
pub fn default_metric_sources(num_nodes: usize) -> usize {
    if num_nodes <= EXACT_METRICS_NODE_THRESHOLD {
        num_nodes.max(1)
    } else {
        256
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHomophily {
    /// Mean same-label neighbor fraction per class.
    pub ratios: Vec<f64>,
    /// False for classes without any node of positive degree.
    pub defined: Vec<bool>,
}

/// Per-class mean of each node's same-label neighbor fraction. Isolated
/// nodes are skipped.
pub fn class_homophily(g: &Graph) -> ClassHomophily {
    let k = g.num_classes();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let labels = g.labels();
    for u in 0..g.num_nodes() {
        let deg = g.degree(u);
        if deg == 0 {
            continue;
        }
        let same = g
            .neighbors(u)
            .iter()
            .filter(|&&v| labels[v] == labels[u])
            .count();
        let c = labels[u] as usize;
        sums[c] += same as f64 / deg as f64;
        counts[c] += 1;
    }
    ClassHomophily {
        ratios: sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect(),
        defined: counts.iter().map(|&c| c > 0).collect(),
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Graph with all-zero single-column features, given labels and no masks.
    pub fn graph(n: usize, edges: &[(usize, usize)], labels: &[u32], k: usize) -> Graph {
        let labels = if labels.is_empty() { vec![0; n] } else { labels.to_vec() };
        build_graph(edges, CsrMatrix::zeros(n, 1), labels, k, Masks::empty(n))
            .unwrap()
            .0
    }

    pub fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        graph(n, &edges, &[], 2)
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;

    #[test]
    fn single_edge_is_symmetrized() {
        let g = graph(2, &[(0, 1)], &[], 2);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn duplicates_and_self_loops_dropped() {
        let (g, report) = build_graph(
            &[(0, 1), (1, 0), (0, 0)],
            CsrMatrix::zeros(2, 1),
            vec![0, 1],
            2,
            Masks::empty(2),
        )
        .unwrap();
        assert_eq!(g.row_offsets(), &[0, 1, 2]);
        assert_eq!(g.col_indices(), &[1, 0]);
        assert_eq!(report.dropped(), 2);
        assert_eq!(report.self_loops_dropped, 1);
        assert_eq!(report.duplicates_dropped, 1);
    }

    #[test]
    fn path_degrees() {
        assert_eq!(path(5).degrees(), vec![1, 2, 2, 2, 1]);
    }

    #[test]
    fn build_errors() {
        let feats = || CsrMatrix::zeros(2, 1);
        assert_eq!(
            build_graph(&[(0, 2)], feats(), vec![0, 0], 2, Masks::empty(2)).unwrap_err(),
            GraphError::NodeOutOfRange { node: 2, num_nodes: 2 }
        );
        assert!(matches!(
            build_graph(&[], feats(), vec![0, 2], 2, Masks::empty(2)).unwrap_err(),
            GraphError::LabelOutOfRange { node: 1, .. }
        ));
        let masks = Masks::from_ids(2, &[0], &[0], &[]).unwrap();
        assert_eq!(
            build_graph(&[], feats(), vec![0, 0], 2, masks).unwrap_err(),
            GraphError::OverlappingMasks(0)
        );
        assert_eq!(
            build_graph(&[], feats(), vec![0, 0], 1, Masks::empty(2)).unwrap_err(),
            GraphError::TooFewClasses(1)
        );
    }

    #[test]
    fn bfs_examples() {
        assert_eq!(bfs_distances(&path(3), 0).dist, vec![0, 1, 2]);
        let two = graph(4, &[(0, 1), (2, 3)], &[], 2);
        let row = bfs_distances(&two, 0);
        assert_eq!(row.dist, vec![0, 1, UNREACHABLE, UNREACHABLE]);
        assert_eq!(row.get(2), None);
        let cycle = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], &[], 2);
        assert_eq!(bfs_distances(&cycle, 0).dist, vec![0, 1, 2, 1]);
    }

    #[test]
    fn component_examples() {
        assert_eq!(connected_components(&path(3)), vec![0, 0, 0]);
        let two = graph(4, &[(0, 1), (2, 3)], &[], 2);
        assert_eq!(component_sizes(&connected_components(&two)), vec![2, 2]);
        let empty = graph(4, &[], &[], 2);
        assert_eq!(connected_components(&empty), vec![0, 1, 2, 3]);
    }

    #[test]
    fn structural_metric_examples() {
        let m = structural_metrics(&path(3), 3, 0).unwrap();
        assert!((m.avg_shortest_path - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.max_component_fraction, 1.0);
        assert!(m.exact);

        let two = graph(4, &[(0, 1), (2, 3)], &[], 2);
        let m = structural_metrics(&two, 10, 0).unwrap();
        assert_eq!(m.avg_shortest_path, 1.0);
        assert_eq!(m.max_component_fraction, 0.5);

        let m = structural_metrics(&path(2), 2, 0).unwrap();
        assert_eq!((m.avg_shortest_path, m.max_component_fraction), (1.0, 1.0));

        let m = structural_metrics(&graph(3, &[], &[], 2), 3, 0).unwrap();
        assert!(m.no_reachable_pairs);
        assert_eq!(m.avg_shortest_path, 0.0);

        assert_eq!(structural_metrics(&path(3), 0, 0), Err(GraphError::NoSources));
    }

    #[test]
    fn sampled_metrics_are_seeded() {
        let g = path(50);
        let a = structural_metrics(&g, 5, 7).unwrap();
        let b = structural_metrics(&g, 5, 7).unwrap();
        assert_eq!(a, b);
        assert!(!a.exact);
    }

    #[test]
    fn homophily_examples() {
        let g = graph(2, &[(0, 1)], &[0, 0], 2);
        assert_eq!(class_homophily(&g).ratios[0], 1.0);
        let g = graph(2, &[(0, 1)], &[0, 1], 2);
        assert_eq!(class_homophily(&g).ratios, vec![0.0, 0.0]);
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)], &[0, 0, 1], 2);
        let h = class_homophily(&g);
        assert_eq!(h.ratios, vec![0.5, 0.0]);
        assert_eq!(h.defined, vec![true, true]);
        let g = graph(3, &[(0, 1)], &[0, 0, 1], 2);
        assert_eq!(class_homophily(&g).defined, vec![true, false]);
    }

    #[test]
    fn induced_counts_boundary_edges() {
        let g = path(4);
        let (sub, boundary) = g.induced(&[0, 1]);
        assert_eq!(sub.num_edges(), 1);
        assert_eq!(boundary, 1);
    }
}

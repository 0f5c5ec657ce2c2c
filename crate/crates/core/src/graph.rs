//! Directed road network, paths, and the Dijkstra oracle used to turn an edge
//! weight vector into a super-arm.
//!
//! Vertices and edges carry dense integer ids (`0..|V|`, `0..|E|`) so weight
//! vectors are flat slices indexed by edge id. A bidirectional road is two
//! independent directed edges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

/// Physical attributes of one road segment.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeAttributes {
    pub length_m: f64,
    pub incline_rad: f64,
    pub speed_limit_mps: Option<f64>,
    /// Observed mean traffic speed (ground truth in the misspecified scenario).
    pub mean_speed_mps: Option<f64>,
    /// Variance of the traffic speed, (m/s)².
    pub speed_var: Option<f64>,
    /// `(lat1, lon1, lat2, lon2)` in degrees; used for plotting only.
    pub coords: Option<[f64; 4]>,
}

impl EdgeAttributes {
    /// Attribute violations as human-readable messages; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let check = |name: &str, v: f64, out: &mut Vec<String>| {
            if !v.is_finite() || v < 0.0 {
                out.push(format!("{name} = {v} must be finite and >= 0"));
            }
        };
        check("length_m", self.length_m, &mut out);
        for (name, v) in [
            ("speed_limit_mps", self.speed_limit_mps),
            ("mean_speed_mps", self.mean_speed_mps),
            ("speed_var", self.speed_var),
        ] {
            if let Some(v) = v {
                check(name, v, &mut out);
            }
        }
        if !self.incline_rad.is_finite() || self.incline_rad.abs() >= std::f64::consts::FRAC_PI_2 {
            out.push(format!("incline_rad = {} must satisfy |incline| < pi/2", self.incline_rad));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub attrs: EdgeAttributes,
}

/// Immutable directed graph with out/in adjacency indices.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    labels: Vec<String>,
    edges: Vec<Edge>,
    out_edges: Vec<Vec<EdgeId>>,
    in_edges: Vec<Vec<EdgeId>>,
}

impl RoadGraph {
    /// Builds a graph over `n_vertices` vertices labelled `"0".."n-1"`.
    pub fn new(n_vertices: usize, edges: Vec<Edge>) -> Result<Self> {
        let labels = (0..n_vertices).map(|v| v.to_string()).collect();
        Self::with_labels(labels, edges)
    }

    /// Builds a graph whose vertex `i` carries the external id `labels[i]`.
    pub fn with_labels(labels: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        let n = labels.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (id, e) in edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {id} ({} -> {}) references a vertex outside 0..{n}",
                    e.from, e.to
                )));
            }
            if e.from == e.to {
                return Err(Error::InvalidGraph(format!("edge {id} is a self-loop on vertex {}", e.from)));
            }
            out_edges[e.from].push(id);
            in_edges[e.to].push(id);
        }
        Ok(Self {
            labels,
            edges,
            out_edges,
            in_edges,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    /// Outgoing edge ids of `v`, ascending.
    pub fn out_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.out_edges[v]
    }

    pub fn in_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.in_edges[v]
    }

    pub fn label(&self, v: VertexId) -> &str {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Dense id of the vertex with external id `label`.
    pub fn vertex_by_label(&self, label: &str) -> Option<VertexId> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn check_vertex(&self, v: VertexId) -> Result<()> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                vertex: v,
                count: self.vertex_count(),
            })
        }
    }

    /// Vertices reachable from `root` following edge direction (or against
    /// it when `reverse`).
    pub fn reachable(&self, root: VertexId, reverse: bool) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(u) = stack.pop() {
            let adj = if reverse { &self.in_edges[u] } else { &self.out_edges[u] };
            for &e in adj {
                let v = if reverse { self.edges[e].from } else { self.edges[e].to };
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// A connected walk from a source vertex to a target vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Path {
    edges: Vec<EdgeId>,
    vertices: Vec<VertexId>,
}

impl Path {
    /// Zero-length path sitting at `v`.
    pub fn empty(v: VertexId) -> Self {
        Self {
            edges: Vec::new(),
            vertices: vec![v],
        }
    }

    /// Builds a path from `source` along `edges`, checking head-to-tail
    /// connectivity.
    pub fn from_edges(graph: &RoadGraph, source: VertexId, edges: Vec<EdgeId>) -> Result<Self> {
        graph.check_vertex(source)?;
        let mut vertices = Vec::with_capacity(edges.len() + 1);
        vertices.push(source);
        let mut at = source;
        for &e in &edges {
            if e >= graph.edge_count() {
                return Err(Error::EdgeOutOfRange {
                    edge: e,
                    count: graph.edge_count(),
                });
            }
            let edge = graph.edge(e);
            if edge.from != at {
                return Err(Error::Invalid(format!(
                    "edge {e} starts at vertex {} but the path is at vertex {at}",
                    edge.from
                )));
            }
            at = edge.to;
            vertices.push(at);
        }
        Ok(Self { edges, vertices })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn source(&self) -> VertexId {
        self.vertices[0]
    }

    pub fn target(&self) -> VertexId {
        *self.vertices.last().expect("path has at least one vertex")
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// True when no vertex is visited twice.
    pub fn is_simple(&self) -> bool {
        let mut seen = self.vertices.clone();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }

    pub fn contains_edge(&self, e: EdgeId) -> bool {
        self.edges.contains(&e)
    }

    /// Appends `other`, which must start where `self` ends.
    pub fn concat(mut self, other: &Path) -> Result<Self> {
        if other.source() != self.target() {
            return Err(Error::Invalid(format!(
                "cannot join a path ending at {} with one starting at {}",
                self.target(),
                other.source()
            )));
        }
        self.edges.extend_from_slice(&other.edges);
        self.vertices.extend_from_slice(&other.vertices[1..]);
        Ok(self)
    }

    /// Stable 16-hex-digit identifier of the edge sequence.
    pub fn hash_hex(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for &e in &self.edges {
            h.update((e as u64).to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.vertices.iter().map(|v| v.to_string()).collect();
        write!(f, "<{}>", parts.join(","))
    }
}

/// Sum of `weights` over the edges of `path`, in path order.
pub fn path_weight(path: &Path, weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &e in path.edges() {
        let w = weights.get(e).ok_or(Error::EdgeOutOfRange {
            edge: e,
            count: weights.len(),
        })?;
        total += w;
    }
    Ok(total)
}

fn validate_weights(graph: &RoadGraph, weights: &[f64]) -> Result<()> {
    if weights.len() != graph.edge_count() {
        return Err(Error::Invalid(format!(
            "weight vector has {} entries, graph has {} edges",
            weights.len(),
            graph.edge_count()
        )));
    }
    for (edge, &value) in weights.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidWeight { edge, value });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: VertexId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, vertex)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-root shortest-path tree.
///
/// A forward tree holds distances *from* the root; a reverse tree holds
/// distances *to* the root. Among equally short predecessor edges the one
/// with the smallest edge id wins, so results are reproducible.
#[derive(Debug, Clone)]
pub struct ShortestPathTree {
    root: VertexId,
    reverse: bool,
    dist: Vec<f64>,
    via: Vec<Option<EdgeId>>,
}

impl ShortestPathTree {
    pub fn forward(graph: &RoadGraph, weights: &[f64], root: VertexId) -> Result<Self> {
        Self::build(graph, weights, root, false)
    }

    pub fn reverse(graph: &RoadGraph, weights: &[f64], root: VertexId) -> Result<Self> {
        Self::build(graph, weights, root, true)
    }

    fn build(graph: &RoadGraph, weights: &[f64], root: VertexId, reverse: bool) -> Result<Self> {
        graph.check_vertex(root)?;
        validate_weights(graph, weights)?;
        let n = graph.vertex_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut via: Vec<Option<EdgeId>> = vec![None; n];
        let mut settled = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[root] = 0.0;
        heap.push(HeapEntry { dist: 0.0, vertex: root });
        while let Some(HeapEntry { dist: d, vertex: u }) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            let adj = if reverse { graph.in_edges(u) } else { graph.out_edges(u) };
            for &e in adj {
                let edge = graph.edge(e);
                let v = if reverse { edge.from } else { edge.to };
                if settled[v] {
                    continue;
                }
                let nd = d + weights[e];
                let better = nd < dist[v] || (nd == dist[v] && via[v].is_some_and(|cur| e < cur));
                if better {
                    dist[v] = nd;
                    via[v] = Some(e);
                    heap.push(HeapEntry { dist: nd, vertex: v });
                }
            }
        }
        Ok(Self {
            root,
            reverse,
            dist,
            via,
        })
    }

    pub fn root(&self) -> VertexId {
        self.root
    }

    pub fn distance(&self, v: VertexId) -> f64 {
        self.dist[v]
    }

    pub fn is_reachable(&self, v: VertexId) -> bool {
        self.dist[v].is_finite()
    }

    /// Path between the root and `v`: root→v for a forward tree, v→root for
    /// a reverse tree.
    pub fn path(&self, graph: &RoadGraph, v: VertexId) -> Result<Path> {
        if !self.is_reachable(v) {
            let (source_vertex, target) = if self.reverse { (v, self.root) } else { (self.root, v) };
            return Err(Error::NoPath { source_vertex, target });
        }
        let mut edges = Vec::new();
        let mut at = v;
        while let Some(e) = self.via[at] {
            edges.push(e);
            let edge = graph.edge(e);
            at = if self.reverse { edge.to } else { edge.from };
        }
        if self.reverse {
            Path::from_edges(graph, v, edges)
        } else {
            edges.reverse();
            Path::from_edges(graph, self.root, edges)
        }
    }
}

/// Minimum-weight path from `source` to `target` (Dijkstra).
///
/// Weights must be finite and strictly positive.
pub fn shortest_path(graph: &RoadGraph, weights: &[f64], source: VertexId, target: VertexId) -> Result<Path> {
    graph.check_vertex(target)?;
    ShortestPathTree::forward(graph, weights, source)?.path(graph, target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

/// One issue reported by [`validate_graph`].
#[derive(Debug, Clone, PartialEq)]
pub enum Finding {
    /// The target cannot be reached from the source.
    Unreachable { source: VertexId, target: VertexId },
    /// Source or target id does not exist.
    MissingVertex { vertex: VertexId },
    /// Edge that lies on no source→target walk.
    DanglingEdge { edge: EdgeId },
    AttributeViolation { edge: EdgeId, message: String },
}

impl Finding {
    pub fn severity(&self) -> Severity {
        match self {
            Finding::DanglingEdge { .. } => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::Unreachable { source, target } => {
                write!(f, "unreachable: no path from vertex {source} to vertex {target}")
            }
            Finding::MissingVertex { vertex } => write!(f, "missing vertex: {vertex} is not in the graph"),
            Finding::DanglingEdge { edge } => write!(f, "dangling edge {edge}: not on any source-target route"),
            Finding::AttributeViolation { edge, message } => write!(f, "attribute violation on edge {edge}: {message}"),
        }
    }
}

/// Diagnostic report for a graph and a source/target pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub findings: Vec<Finding>,
}

impl Diagnostics {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity() == Severity::Error)
    }
}

pub fn validate_graph(graph: &RoadGraph, source: VertexId, target: VertexId) -> Diagnostics {
    let mut findings = Vec::new();
    for (id, e) in graph.edges().iter().enumerate() {
        for message in e.attrs.violations() {
            findings.push(Finding::AttributeViolation { edge: id, message });
        }
    }
    let mut endpoints_ok = true;
    for v in [source, target] {
        if v >= graph.vertex_count() {
            findings.push(Finding::MissingVertex { vertex: v });
            endpoints_ok = false;
        }
    }
    if endpoints_ok {
        let from_source = graph.reachable(source, false);
        let to_target = graph.reachable(target, true);
        if !from_source[target] {
            findings.push(Finding::Unreachable { source, target });
        } else {
            for (id, e) in graph.edges().iter().enumerate() {
                if !(from_source[e.from] && to_target[e.to]) {
                    findings.push(Finding::DanglingEdge { edge: id });
                }
            }
        }
    }
    Diagnostics { findings }
}

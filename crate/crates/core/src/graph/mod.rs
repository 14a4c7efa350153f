//! Weighted event graph over dynamic event units.
//!
//! Two events are linked when they share at least one normalized entity and,
//! if both carry a date, lie within `delta_t_days` of each other. Edge weight
//! is entity Jaccard similarity times an exponential temporal decay. Each node
//! keeps at most `top_k_neighbors` edges.

mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_graph, save_graph, GraphMetadata, GRAPH_FORMAT_VERSION};

use crate::encoding::EncoderConfig;
use crate::model::{day_distance, DynamicEventUnit, EntitySet};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("event {0} is already in the graph")]
    Duplicate(String),
    #[error("unknown event {0}")]
    UnknownNode(String),
    #[error("graph is frozen")]
    Frozen,
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Jaccard coefficient of two entity sets; 0 when both are empty.
pub fn entity_similarity(a: &EntitySet, b: &EntitySet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `sim * exp(-alpha * gap / 365.25)`, or `sim * static_decay` when a gap
/// does not exist.
pub fn edge_weight(sim: f64, gap_days: Option<u64>, alpha_per_year: f64, static_decay: f64) -> f64 {
    match gap_days {
        Some(g) => sim * (-alpha_per_year * g as f64 / 365.25).exp(),
        None => sim * static_decay,
    }
}

/// Undirected edge with `a < b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub w: f64,
}

impl Edge {
    fn new(x: &str, y: &str, w: f64) -> Self {
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        Edge {
            a: a.to_string(),
            b: b.to_string(),
            w,
        }
    }
}

/// Ordering used everywhere a neighbor list is ranked: heavier first, then
/// lexicographically smaller id.
fn ranks_before(a: (&str, f64), b: (&str, f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

fn sort_neighbors(list: &mut [(String, f64)]) {
    list.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventGraph {
    config: EncoderConfig,
    text_dim: usize,
    nodes: BTreeMap<String, DynamicEventUnit>,
    adjacency: BTreeMap<String, Vec<(String, f64)>>,
    entity_index: BTreeMap<String, BTreeSet<String>>,
    frozen: bool,
}

impl EventGraph {
    pub fn new(config: EncoderConfig, text_dim: usize) -> Self {
        EventGraph {
            config,
            text_dim,
            nodes: BTreeMap::new(),
            adjacency: BTreeMap::new(),
            entity_index: BTreeMap::new(),
            frozen: false,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(Vec::len).sum::<usize>() / 2
    }

    pub fn node(&self, id: &str) -> Option<&DynamicEventUnit> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &DynamicEventUnit> {
        self.nodes.values()
    }

    pub fn entity_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.entity_index
    }

    /// Neighbors by descending weight, then id.
    pub fn neighbors(&self, id: &str) -> Result<&[(String, f64)], GraphError> {
        self.adjacency
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| GraphError::UnknownNode(id.to_string()))
    }

    /// Every edge once, ordered by `(a, b)`.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out: Vec<Edge> = self
            .adjacency
            .iter()
            .flat_map(|(a, list)| {
                list.iter()
                    .filter(move |(b, _)| a < b)
                    .map(move |(b, w)| Edge::new(a, b, *w))
            })
            .collect();
        out.sort_by(|x, y| (&x.a, &x.b).cmp(&(&y.a, &y.b)));
        out
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Weight of the edge `(a, b)` if the pair passes the entity and time gate.
    pub fn gated_weight(&self, a: &DynamicEventUnit, b: &DynamicEventUnit) -> Option<f64> {
        let sim = entity_similarity(&a.entities, &b.entities);
        if sim <= 0.0 {
            return None;
        }
        let gap = day_distance(&a.anchor, &b.anchor);
        if gap.is_some_and(|g| g > self.config.delta_t_days) {
            return None;
        }
        let w = edge_weight(sim, gap, self.config.alpha_per_year, self.config.static_decay);
        (w > 0.0).then_some(w)
    }

    fn candidates(&self, deu: &DynamicEventUnit) -> Vec<(String, f64)> {
        let ids: BTreeSet<&String> = deu
            .entities
            .keys()
            .filter_map(|k| self.entity_index.get(k))
            .flatten()
            .collect();
        let mut out: Vec<(String, f64)> = ids
            .into_iter()
            .filter(|id| **id != deu.event_id)
            .filter_map(|id| {
                let other = &self.nodes[id];
                self.gated_weight(deu, other).map(|w| (id.clone(), w))
            })
            .collect();
        sort_neighbors(&mut out);
        out
    }

    fn add_to_index(&mut self, deu: &DynamicEventUnit) {
        for k in deu.entities.keys() {
            self.entity_index
                .entry(k.to_string())
                .or_default()
                .insert(deu.event_id.clone());
        }
    }

    fn remove_half(&mut self, from: &str, to: &str) {
        if let Some(list) = self.adjacency.get_mut(from) {
            list.retain(|(id, _)| id != to);
        }
    }

    fn push_half(&mut self, from: &str, to: &str, w: f64) {
        let list = self.adjacency.get_mut(from).expect("node present");
        list.push((to.to_string(), w));
        sort_neighbors(list);
    }

    /// Inserts a node and links it to its best gate-passing candidates.
    ///
    /// The new node proposes edges to its `K` best candidates in rank order. A
    /// candidate with a free slot accepts; a full candidate accepts only if the
    /// new edge ranks before its current weakest edge, which it then evicts.
    /// Rejected proposals are dropped. Returns the created edges.
    pub fn insert_node(&mut self, deu: DynamicEventUnit) -> Result<Vec<Edge>, GraphError> {
        if self.frozen {
            return Err(GraphError::Frozen);
        }
        if self.nodes.contains_key(&deu.event_id) {
            return Err(GraphError::Duplicate(deu.event_id));
        }
        let k = self.config.top_k_neighbors;
        let proposals: Vec<(String, f64)> = self.candidates(&deu).into_iter().take(k).collect();
        let id = deu.event_id.clone();
        self.add_to_index(&deu);
        self.nodes.insert(id.clone(), deu);
        self.adjacency.insert(id.clone(), Vec::new());

        let mut created = Vec::new();
        for (other, w) in proposals {
            let list = &self.adjacency[&other];
            if list.len() >= k {
                let (weakest, ww) = list.last().cloned().expect("full list is non-empty");
                if !ranks_before((&id, w), (&weakest, ww)) {
                    continue;
                }
                self.remove_half(&other, &weakest);
                self.remove_half(&weakest, &other);
            }
            self.push_half(&other, &id, w);
            self.push_half(&id, &other, w);
            created.push(Edge::new(&id, &other, w));
        }
        Ok(created)
    }

    /// Order-independent build: every node ranks its gate-passing candidates
    /// and an edge is kept when each endpoint has the other in its top `K`.
    pub fn build(
        config: EncoderConfig,
        text_dim: usize,
        deus: Vec<DynamicEventUnit>,
    ) -> Result<Self, GraphError> {
        let mut g = EventGraph::new(config, text_dim);
        for d in deus {
            if g.nodes.contains_key(&d.event_id) {
                return Err(GraphError::Duplicate(d.event_id));
            }
            g.add_to_index(&d);
            g.adjacency.insert(d.event_id.clone(), Vec::new());
            g.nodes.insert(d.event_id.clone(), d);
        }
        let k = config.top_k_neighbors;
        let top: HashMap<&str, Vec<(String, f64)>> = g
            .nodes
            .values()
            .map(|d| {
                let mut c = g.candidates(d);
                c.truncate(k);
                (d.event_id.as_str(), c)
            })
            .collect();
        let mut kept: Vec<(String, String, f64)> = Vec::new();
        for (a, list) in &top {
            for (b, w) in list {
                if *a < b.as_str() && top[b.as_str()].iter().any(|(x, _)| x == a) {
                    kept.push((a.to_string(), b.clone(), *w));
                }
            }
        }
        for (a, b, w) in kept {
            g.adjacency.get_mut(&a).expect("node").push((b.clone(), w));
            g.adjacency.get_mut(&b).expect("node").push((a, w));
        }
        g.adjacency.values_mut().for_each(|l| sort_neighbors(l));
        Ok(g)
    }

    /// Assembles a graph from stored parts, validating every edge endpoint.
    pub(crate) fn from_parts(
        config: EncoderConfig,
        text_dim: usize,
        nodes: Vec<DynamicEventUnit>,
        edges: Vec<Edge>,
    ) -> Result<Self, String> {
        let mut g = EventGraph::new(config, text_dim);
        for d in nodes {
            if g.nodes.contains_key(&d.event_id) {
                return Err(format!("duplicate node {}", d.event_id));
            }
            g.add_to_index(&d);
            g.adjacency.insert(d.event_id.clone(), Vec::new());
            g.nodes.insert(d.event_id.clone(), d);
        }
        for e in edges {
            if !(e.a < e.b) {
                return Err(format!("edge ({}, {}) is not ordered", e.a, e.b));
            }
            if !(e.w > 0.0 && e.w <= 1.0) {
                return Err(format!("edge ({}, {}) has weight {} outside (0, 1]", e.a, e.b, e.w));
            }
            for (x, y) in [(&e.a, &e.b), (&e.b, &e.a)] {
                let list = g
                    .adjacency
                    .get_mut(x)
                    .ok_or_else(|| format!("edge endpoint {x} is not a node"))?;
                if list.iter().any(|(id, _)| id == y) {
                    return Err(format!("duplicate edge ({}, {})", e.a, e.b));
                }
                list.push((y.clone(), e.w));
            }
        }
        g.adjacency.values_mut().for_each(|l| sort_neighbors(l));
        Ok(g)
    }
}

/// Bidirectional map between vector rows and event ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdMap {
    rows: Vec<String>,
    by_id: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Row of `id`, allocating the next row if unseen.
    pub fn insert(&mut self, id: &str) -> usize {
        if let Some(&r) = self.by_id.get(id) {
            return r;
        }
        let r = self.rows.len();
        self.rows.push(id.to_string());
        self.by_id.insert(id.to_string(), r);
        r
    }

    pub fn row(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn id(&self, row: usize) -> Option<&str> {
        self.rows.get(row).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.rows
    }

    pub fn from_ids(ids: Vec<String>) -> Option<Self> {
        let mut m = IdMap::new();
        for id in &ids {
            if m.row(id).is_some() {
                return None;
            }
            m.insert(id);
        }
        Some(m)
    }
}

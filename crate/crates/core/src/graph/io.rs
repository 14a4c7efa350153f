use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, EventGraph, GraphError};
use crate::encoding::EncoderConfig;
use crate::model::DynamicEventUnit;

pub const GRAPH_FORMAT_VERSION: u32 = 1;

/// First line of a graph file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphMetadata {
    pub version: u32,
    pub d: usize,
    pub d_tau: usize,
    pub delta_t_days: u64,
    pub alpha_per_year: f64,
    pub top_k_neighbors: usize,
    pub static_decay: f64,
    pub node_count: usize,
    pub edge_count: usize,
    pub config_hash: String,
    pub encoder: EncoderConfig,
}

impl GraphMetadata {
    pub fn of(g: &EventGraph) -> Self {
        let c = g.config();
        GraphMetadata {
            version: GRAPH_FORMAT_VERSION,
            d: g.text_dim(),
            d_tau: c.d_tau,
            delta_t_days: c.delta_t_days,
            alpha_per_year: c.alpha_per_year,
            top_k_neighbors: c.top_k_neighbors,
            static_decay: c.static_decay,
            node_count: g.len(),
            edge_count: g.edge_count(),
            config_hash: c.config_hash(),
            encoder: *c,
        }
    }
}

fn edge_line(e: &Edge) -> String {
    let a = serde_json::to_string(&e.a).expect("string");
    let b = serde_json::to_string(&e.b).expect("string");
    // 17 significant digits round-trip every f64 exactly
    format!("{{\"a\":{a},\"b\":{b},\"w\":{:.16e}}}", e.w)
}

/// Writes the graph as JSON lines: metadata, nodes, then edges. The file is
/// written to a sibling temporary and renamed into place.
pub fn save_graph(g: &EventGraph, path: &Path) -> Result<(), GraphError> {
    let io_err = |source| GraphError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = Vec::new();
    serde_json::to_writer(&mut buf, &GraphMetadata::of(g)).expect("metadata serializes");
    buf.push(b'\n');
    for n in g.nodes() {
        serde_json::to_writer(&mut buf, n).expect("node serializes");
        buf.push(b'\n');
    }
    for e in g.edges() {
        buf.extend_from_slice(edge_line(&e).as_bytes());
        buf.push(b'\n');
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(&buf).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Reads a graph file. Any malformed or missing record fails the whole load.
pub fn load_graph(path: &Path) -> Result<EventGraph, GraphError> {
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let perr = |line: usize, message: String| GraphError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, first) = lines.next().ok_or_else(|| perr(1, "empty graph file".into()))?;
    let meta: GraphMetadata = serde_json::from_str(first).map_err(|e| perr(1, e.to_string()))?;
    if meta.version != GRAPH_FORMAT_VERSION {
        return Err(perr(1, format!("unsupported graph format version {}", meta.version)));
    }
    if meta.encoder.config_hash() != meta.config_hash || meta.encoder.d_tau != meta.d_tau {
        return Err(perr(1, "metadata does not match its encoder config".into()));
    }
    meta.encoder.validate().map_err(|e| perr(1, e.to_string()))?;

    let mut last = 1;
    let mut nodes = Vec::with_capacity(meta.node_count);
    let mut edges = Vec::with_capacity(meta.edge_count);
    for (no, line) in lines.by_ref() {
        last = no;
        if nodes.len() < meta.node_count {
            let n: DynamicEventUnit = serde_json::from_str(line).map_err(|e| perr(no, e.to_string()))?;
            n.validate().map_err(|e| perr(no, e.to_string()))?;
            nodes.push(n);
        } else if edges.len() < meta.edge_count {
            let e: Edge = serde_json::from_str(line).map_err(|e| perr(no, e.to_string()))?;
            edges.push(e);
        } else if !line.trim().is_empty() {
            return Err(perr(no, "unexpected record after the declared edges".into()));
        }
    }
    if nodes.len() < meta.node_count || edges.len() < meta.edge_count {
        return Err(perr(
            last + 1,
            format!(
                "truncated file: expected {} nodes and {} edges, found {} and {}",
                meta.node_count,
                meta.edge_count,
                nodes.len(),
                edges.len()
            ),
        ));
    }
    EventGraph::from_parts(meta.encoder, meta.d, nodes, edges).map_err(|m| perr(0, m))
}

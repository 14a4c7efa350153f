//! End-to-end orchestration: indexing a corpus into an output directory,
//! answering questions against it, and running benchmarks.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, GraphBuild, RunConfig};
use crate::encoding::embed_deu;
use crate::evaluation::{evaluate_items, read_qa, EvalReport};
use crate::gateway::{BackendKind, GatewayError, ModelGateway};
use crate::generation::{assemble_prompt, generate_answer, GenerationError};
use crate::graph::{load_graph, save_graph, EventGraph, GraphError};
use crate::index::{IndexError, VectorIndex};
use crate::ingestion::{
    ingest, read_corpus, read_jsonl, write_jsonl, ChunkStatus, IngestError, ManifestRecord, PriorRun,
};
use crate::model::DynamicEventUnit;
use crate::retrieval::{
    build_timeline, parse_query, retrieve_seeds, run_walks, GatewayReranker, RetrievalError, RunReport,
};
use crate::text::WhitespaceTokenizer;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const UNITS_FILE: &str = "deus.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const STATE_FILE: &str = "ingest_state.json";
pub const GRAPH_FILE: &str = "graph.jsonl";
pub const VECTORS_FILE: &str = "vectors.bin";
pub const STATS_FILE: &str = "index_stats.json";

/// Failure classes, each with its process exit code.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("incompatible index: {0}")]
    Compat(String),
    #[error("model gateway: {0}")]
    Gateway(String),
}

impl EngineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::Usage(_) => 2,
            EngineError::Data(_) | EngineError::Compat(_) => 3,
            EngineError::Gateway(_) => 4,
        }
    }
}

impl From<IngestError> for EngineError {
    fn from(e: IngestError) -> Self {
        EngineError::Data(e.to_string())
    }
}

impl From<GraphError> for EngineError {
    fn from(e: GraphError) -> Self {
        EngineError::Data(e.to_string())
    }
}

impl From<IndexError> for EngineError {
    fn from(e: IndexError) -> Self {
        EngineError::Data(e.to_string())
    }
}

impl From<ConfigError> for EngineError {
    fn from(e: ConfigError) -> Self {
        EngineError::Usage(e.to_string())
    }
}

impl From<GatewayError> for EngineError {
    fn from(e: GatewayError) -> Self {
        EngineError::Gateway(e.to_string())
    }
}

impl From<RetrievalError> for EngineError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::EmptyQuestion | RetrievalError::Lambda(_) => EngineError::Usage(e.to_string()),
            other => EngineError::Data(other.to_string()),
        }
    }
}

/// Builds the gateway described by the config.
pub fn gateway_for(cfg: &RunConfig) -> Result<ModelGateway, EngineError> {
    ModelGateway::from_config(&cfg.gateway_config()).map_err(|e| match e {
        GatewayError::Config(m) => EngineError::Usage(m),
        other => EngineError::Gateway(other.to_string()),
    })
}

/// Settings that invalidate cached ingestion output when they change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IngestState {
    chunk_tokens: usize,
    overlap_tokens: usize,
    embedder: String,
}

impl IngestState {
    fn of(cfg: &RunConfig) -> Self {
        let g = &cfg.gateway;
        let embedder = match g.backend {
            BackendKind::Mock => format!("mock:{}", g.mock_embed_dim),
            BackendKind::Remote => format!("remote:{}:{}", g.base_url, g.embed_model),
        };
        IngestState {
            chunk_tokens: cfg.chunk_tokens,
            overlap_tokens: cfg.overlap_tokens,
            embedder,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedEmbedding {
    sentence: String,
    vector: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexSummary {
    pub documents: usize,
    pub reused_documents: usize,
    pub processed_documents: usize,
    pub failed_chunks: usize,
    pub nodes: usize,
    pub edges: usize,
    pub model_calls: u64,
    pub index_time_seconds: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EngineError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| EngineError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_prior(out_dir: &Path, state: &IngestState) -> Result<(PriorRun, HashMap<String, Vec<f64>>), EngineError> {
    let state_path = out_dir.join(STATE_FILE);
    let same_state = std::fs::read_to_string(&state_path)
        .ok()
        .and_then(|t| serde_json::from_str::<IngestState>(&t).ok())
        .is_some_and(|s| s == *state);
    if !same_state {
        return Ok((PriorRun::default(), HashMap::new()));
    }
    let load = |name: &str| out_dir.join(name).exists().then(|| out_dir.join(name));
    let mut prior = PriorRun::default();
    if let (Some(m), Some(u)) = (load(MANIFEST_FILE), load(UNITS_FILE)) {
        prior.manifest = read_jsonl::<ManifestRecord>(&m)?;
        prior.units = read_jsonl::<DynamicEventUnit>(&u)?;
    }
    let mut cache = HashMap::new();
    if let Some(p) = load(EMBEDDINGS_FILE) {
        for c in read_jsonl::<CachedEmbedding>(&p)? {
            cache.insert(c.sentence, c.vector);
        }
    }
    Ok((prior, cache))
}

/// Text embeddings for every unit, reusing cached vectors by sentence.
fn embed_units(
    units: &[DynamicEventUnit],
    gateway: &ModelGateway,
    cache: &mut HashMap<String, Vec<f64>>,
) -> Result<Vec<Vec<f64>>, EngineError> {
    let missing: Vec<String> = units
        .iter()
        .map(|u| u.sentence.clone())
        .filter(|s| !cache.contains_key(s))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for batch in missing.chunks(256) {
        let vecs = gateway.embed(batch)?;
        cache.extend(batch.iter().cloned().zip(vecs));
    }
    Ok(units.iter().map(|u| cache[&u.sentence].clone()).collect())
}

/// Ingests `corpus` and writes the graph, vector index and ingestion state
/// to `out_dir`. Documents completed by an earlier run are reused.
pub fn build_index(
    cfg: &RunConfig,
    gateway: &ModelGateway,
    corpus: &Path,
    out_dir: &Path,
) -> Result<IndexSummary, EngineError> {
    if !corpus.is_file() {
        return Err(EngineError::Usage(format!("corpus file {} does not exist", corpus.display())));
    }
    let start = Instant::now();
    let calls_before = gateway.stats().total();
    let docs = read_corpus(corpus)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| EngineError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    let state = IngestState::of(cfg);
    let (prior, mut cache) = read_prior(out_dir, &state)?;
    let out = ingest(&docs, cfg.ingest(), gateway, &WhitespaceTokenizer, &prior)?;
    write_json(&out_dir.join(STATE_FILE), &state)?;
    write_jsonl(&out_dir.join(MANIFEST_FILE), &out.manifest)?;
    write_jsonl(&out_dir.join(UNITS_FILE), &out.units)?;

    let vectors = embed_units(&out.units, gateway, &mut cache)?;
    let mut cached: Vec<CachedEmbedding> = cache
        .into_iter()
        .map(|(sentence, vector)| CachedEmbedding { sentence, vector })
        .collect();
    cached.sort_by(|a, b| a.sentence.cmp(&b.sentence));
    write_jsonl(&out_dir.join(EMBEDDINGS_FILE), &cached)?;

    let enc = cfg.encoder();
    let text_dim = vectors.first().map_or(cfg.gateway.mock_embed_dim, Vec::len);
    let mut index = VectorIndex::new(text_dim, enc.d_tau, enc.config_hash());
    for (u, v) in out.units.iter().zip(&vectors) {
        let emb = embed_deu(v, &u.anchor, &enc)
            .map_err(|e| EngineError::Data(format!("event {}: {e}", u.event_id)))?;
        index.upsert(&u.event_id, &emb)?;
    }
    let graph = match cfg.graph_build {
        GraphBuild::Batch => EventGraph::build(enc, text_dim, out.units.clone())?,
        GraphBuild::Incremental => {
            let mut g = EventGraph::new(enc, text_dim);
            for u in &out.units {
                g.insert_node(u.clone())?;
            }
            g
        }
    };
    save_graph(&graph, &out_dir.join(GRAPH_FILE))?;
    index.save(&out_dir.join(VECTORS_FILE))?;

    let summary = IndexSummary {
        documents: docs.len(),
        reused_documents: out.reused_documents,
        processed_documents: out.processed_documents,
        failed_chunks: out.manifest.iter().filter(|r| r.status == ChunkStatus::Failed).count(),
        nodes: graph.len(),
        edges: graph.edge_count(),
        model_calls: gateway.stats().total() - calls_before,
        index_time_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join(STATS_FILE), &summary)?;
    info!("indexed {} nodes and {} edges in {:.3} s", summary.nodes, summary.edges, summary.index_time_seconds);
    Ok(summary)
}

/// Frozen graph and vector index loaded from an index directory.
#[derive(Debug)]
pub struct LoadedIndex {
    pub graph: EventGraph,
    pub index: VectorIndex,
    pub dir: PathBuf,
}

/// Loads and cross-checks the graph and vector index in `dir` against each
/// other and against `cfg`.
pub fn load_index(cfg: &RunConfig, dir: &Path) -> Result<LoadedIndex, EngineError> {
    let gpath = dir.join(GRAPH_FILE);
    let vpath = dir.join(VECTORS_FILE);
    for p in [&gpath, &vpath] {
        if !p.is_file() {
            return Err(EngineError::Data(format!("{} is missing; run `index` first", p.display())));
        }
    }
    let mut graph = load_graph(&gpath)?;
    let index = VectorIndex::load(&vpath)?;
    let ghash = graph.config().config_hash();
    if ghash != index.config_hash() {
        return Err(EngineError::Compat("graph and vector index were built with different configs".into()));
    }
    if ghash != cfg.encoder().config_hash() {
        return Err(EngineError::Compat(
            "index was built with different encoder or graph settings than the current config".into(),
        ));
    }
    if graph.text_dim() != index.text_dim() || graph.config().d_tau != index.d_tau() {
        return Err(EngineError::Compat(format!(
            "graph dimensions {}+{} differ from index dimensions {}+{}",
            graph.text_dim(),
            graph.config().d_tau,
            index.text_dim(),
            index.d_tau()
        )));
    }
    let node_ids: BTreeSet<&str> = graph.nodes().map(|n| n.event_id.as_str()).collect();
    let row_ids: BTreeSet<&str> = index.ids().ids().iter().map(String::as_str).collect();
    if node_ids != row_ids {
        return Err(EngineError::Compat("graph nodes and index rows differ".into()));
    }
    graph.freeze();
    Ok(LoadedIndex {
        graph,
        index,
        dir: dir.to_path_buf(),
    })
}

fn question_seed(master: u64, question: &str) -> u64 {
    // FNV-1a over the question, mixed into the master seed
    let h = question.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    master ^ h
}

/// Runs the full query pipeline for one question. Gateway failures after the
/// plan is built are recorded in the report's `error` field; other failures
/// are returned as errors.
pub fn answer_question(
    cfg: &RunConfig,
    gateway: &ModelGateway,
    loaded: &LoadedIndex,
    question: &str,
    lambda: Option<f64>,
) -> Result<RunReport, EngineError> {
    let lambda = lambda.unwrap_or(cfg.lambda);
    let plan = parse_query(question, lambda, gateway)?;
    let mut report = RunReport {
        question: plan.question.clone(),
        t_q: plan.t_q.as_ref().map(|a| a.timestamp_label()),
        lambda,
        question_class: plan.question_class,
        ..Default::default()
    };
    let qvec = match gateway.embed(std::slice::from_ref(&plan.question)) {
        Ok(mut v) => v.remove(0),
        Err(e) => {
            report.error = Some(format!("embedding failed: {e}"));
            return Ok(report);
        }
    };
    let reranker = GatewayReranker::new(gateway);
    let sel = retrieve_seeds(&plan, &qvec, &loaded.index, &loaded.graph, &reranker, &cfg.seed_params())?;
    let paths = run_walks(
        &loaded.graph,
        &sel.seeds,
        cfg.walks_per_seed,
        cfg.walk_length,
        question_seed(cfg.rng_seed, &plan.question),
    )?;
    let mut timeline = build_timeline(&loaded.graph, &paths, cfg.context_cap_tokens, &WhitespaceTokenizer)?;
    let prompt = assemble_prompt(&plan, &mut timeline, cfg.context_cap_tokens, &WhitespaceTokenizer)
        .map_err(|e| EngineError::Usage(e.to_string()))?;
    report.candidates = sel.candidates;
    report.seeds = sel.seeds;
    report.paths = paths;
    report.timeline_event_ids = timeline.event_ids();
    report.rendered_timeline = timeline.rendered.clone();
    report.prompt = Some(prompt.full_text());
    match generate_answer(&prompt, gateway) {
        Ok(a) => {
            report.answer = a.answer;
            report.answer_marker_missing = a.marker_missing;
            report.raw_reasoning = Some(a.raw_reasoning);
        }
        Err(GenerationError::Gateway(e)) => report.error = Some(format!("generation failed: {e}")),
        Err(e) => return Err(EngineError::Usage(e.to_string())),
    }
    Ok(report)
}

/// Evaluates every QA item against the index in `index_dir`, building it
/// from `corpus` first when given. QA input is validated before any model call.
pub fn run_benchmark(
    cfg: &RunConfig,
    gateway: &ModelGateway,
    corpus: Option<&Path>,
    index_dir: &Path,
    qa_path: &Path,
) -> Result<EvalReport, EngineError> {
    if !qa_path.is_file() {
        return Err(EngineError::Usage(format!("QA file {} does not exist", qa_path.display())));
    }
    let items = read_qa(qa_path)?;
    let index_time = match corpus {
        Some(c) => build_index(cfg, gateway, c, index_dir)?.index_time_seconds,
        None => std::fs::read_to_string(index_dir.join(STATS_FILE))
            .ok()
            .and_then(|t| serde_json::from_str::<IndexSummary>(&t).ok())
            .map_or(0.0, |s| s.index_time_seconds),
    };
    let loaded = load_index(cfg, index_dir)?;
    if items.is_empty() {
        warn!("QA file {} has no items", qa_path.display());
    }
    Ok(evaluate_items(&items, cfg.max_concurrency, index_time, |it| {
        let report = answer_question(cfg, gateway, &loaded, &it.question, None).map_err(|e| e.to_string())?;
        match report.error {
            Some(e) => Err(e),
            None => Ok(report.answer),
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(dir: &Path) -> PathBuf {
        let p = dir.join("corpus.jsonl");
        std::fs::write(
            &p,
            concat!(
                r#"{"doc_id":"rossi","title":"Marco Rossi","text":"Marco Rossi joined S.S. Lazio in March 2001. Marco Rossi won the Coppa Italia with S.S. Lazio in May 2004. Marco Rossi moved to AS Roma in July 2006."}"#,
                "\n",
                r#"{"doc_id":"lazio","title":"S.S. Lazio","text":"S.S. Lazio appointed Paolo Bianchi as coach in June 2003. S.S. Lazio finished second in Serie A in 2004."}"#,
                "\n"
            ),
        )
        .unwrap();
        p
    }

    #[test]
    fn index_query_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let gw = gateway_for(&cfg).unwrap();
        let out = dir.path().join("idx");
        let s = build_index(&cfg, &gw, &corpus(dir.path()), &out).unwrap();
        assert_eq!(s.documents, 2);
        assert!(s.nodes >= 4 && s.edges >= 1, "{s:?}");

        let gw2 = gateway_for(&cfg).unwrap();
        let again = build_index(&cfg, &gw2, &corpus(dir.path()), &out).unwrap();
        assert_eq!(again.model_calls, 0);
        assert_eq!(again.reused_documents, 2);
        assert_eq!((again.nodes, again.edges), (s.nodes, s.edges));

        let loaded = load_index(&cfg, &out).unwrap();
        let r = answer_question(&cfg, &gw, &loaded, "Which club did Marco Rossi join in March 2001?", None).unwrap();
        assert_eq!(r.t_q.as_deref(), Some("2001-03"));
        assert!(r.error.is_none());
        assert_eq!(r.answer, "Marco Rossi joined S.S. Lazio in March 2001.");
        assert!(!r.seeds.is_empty());
    }

    #[test]
    fn incompatible_config_and_missing_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let gw = gateway_for(&cfg).unwrap();
        let out = dir.path().join("idx");
        build_index(&cfg, &gw, &corpus(dir.path()), &out).unwrap();
        let other = RunConfig { d_tau: 8, ..RunConfig::default() };
        assert!(matches!(load_index(&other, &out), Err(EngineError::Compat(_))));
        let lambda_only = RunConfig { lambda: 0.9, ..RunConfig::default() };
        assert!(load_index(&lambda_only, &out).is_ok());

        let e = build_index(&cfg, &gw, &dir.path().join("nope.jsonl"), &out).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = load_index(&cfg, &dir.path().join("empty")).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }
}

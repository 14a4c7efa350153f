use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::warn;

use eventrag::config::RunConfig;
use eventrag::engine::{
    answer_question, build_index, gateway_for, load_index, run_benchmark, EngineError, GRAPH_FILE,
};
use eventrag::graph::load_graph;

#[derive(Parser, Debug)]
#[command(name = "eventrag", version, about = "Event timeline retrieval-augmented question answering")]
struct Cli {
    /// TOML config file; DYGRAG_* environment variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master random seed (overrides rng_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract events from a JSONL corpus and build the graph and vector index.
    Index {
        corpus: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Answer one question against a built index.
    Query {
        #[arg(long, short)]
        index: PathBuf,
        question: String,
        /// Time weight in [0, 1].
        #[arg(long)]
        lambda: Option<f64>,
        /// Write the full run report as JSON to this file.
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Run a QA benchmark and write the evaluation report.
    Eval {
        #[arg(long, short)]
        index: PathBuf,
        #[arg(long)]
        qa: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Build the index from this corpus first.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Print graph statistics, a node, its neighbors, or the edge list.
    Inspect {
        index: PathBuf,
        #[arg(long)]
        node: Option<String>,
        #[arg(long)]
        neighbors: Option<String>,
        #[arg(long)]
        edges: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, EngineError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.rng_seed = s;
    }
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), EngineError> {
    std::fs::write(path, text).map_err(|e| EngineError::Data(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn run(cli: &Cli) -> Result<(), EngineError> {
    if let Command::Inspect {
        index,
        node,
        neighbors,
        edges,
    } = &cli.command
    {
        return inspect(index, node.as_deref(), neighbors.as_deref(), *edges);
    }
    let cfg = load_config(cli)?;
    let gateway = gateway_for(&cfg)?;
    match &cli.command {
        Command::Index { corpus, out } => {
            let s = build_index(&cfg, &gateway, corpus, out)?;
            println!(
                "documents {} (reused {}, processed {})  failed chunks {}",
                s.documents, s.reused_documents, s.processed_documents, s.failed_chunks
            );
            println!("nodes {}  edges {}", s.nodes, s.edges);
            println!("model calls {}  index time {:.3} s", s.model_calls, s.index_time_seconds);
        }
        Command::Query {
            index,
            question,
            lambda,
            audit,
        } => {
            let loaded = load_index(&cfg, index)?;
            let report = answer_question(&cfg, &gateway, &loaded, question, *lambda)?;
            if let Some(path) = audit {
                write_file(path, &to_json(&report))?;
            }
            if let Some(e) = &report.error {
                return Err(EngineError::Gateway(e.clone()));
            }
            println!("{}", if report.rendered_timeline.is_empty() { "(no events)" } else { &report.rendered_timeline });
            println!();
            if report.answer_marker_missing {
                warn!("model output had no answer marker; using the last line");
            }
            println!("Answer: {}", report.answer);
        }
        Command::Eval {
            index,
            qa,
            out,
            corpus,
        } => {
            let report = run_benchmark(&cfg, &gateway, corpus.as_deref(), index, qa)?;
            write_file(out, &to_json(&report))?;
            print!("{}", report.summary());
        }
        Command::Inspect { .. } => unreachable!(),
    }
    Ok(())
}

fn inspect(dir: &Path, node: Option<&str>, neighbors: Option<&str>, edges: bool) -> Result<(), EngineError> {
    let path = dir.join(GRAPH_FILE);
    if !path.is_file() {
        return Err(EngineError::Data(format!("{} is missing", path.display())));
    }
    let graph = load_graph(&path)?;
    if let Some(id) = node {
        let n = graph
            .node(id)
            .ok_or_else(|| EngineError::Usage(format!("no node {id:?}")))?;
        print!("{}", to_json(n));
    }
    if let Some(id) = neighbors {
        for (other, w) in graph.neighbors(id)? {
            let label = graph.node(other).map(|n| n.anchor.timestamp_label()).unwrap_or_default();
            println!("{other}\t{w:.6}\t[{label}]");
        }
    }
    if edges {
        for e in graph.edges() {
            println!("{}\t{}\t{:.6}", e.a, e.b, e.w);
        }
    }
    if node.is_none() && neighbors.is_none() && !edges {
        let cfg = graph.config();
        println!("nodes {}  edges {}", graph.len(), graph.edge_count());
        println!("text dim {}  time dim {}", graph.text_dim(), cfg.d_tau);
        println!(
            "delta_t_days {}  alpha_per_year {}  top_k {}  static_decay {}",
            cfg.delta_t_days, cfg.alpha_per_year, cfg.top_k_neighbors, cfg.static_decay
        );
        println!("config hash {}", cfg.config_hash());
        let statics = graph.nodes().filter(|n| n.anchor.is_static()).count();
        println!("static nodes {statics}  entities {}", graph.entity_index().len());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use cnc_advisor::engine::{render_outcome, Engine};
use cnc_advisor::eval::{self, Caller};
use cnc_advisor::gateway::Backend;
use cnc_advisor::kg::{HashEmbedder, TripleStore};
use cnc_advisor::kgbuild::{self, BackendExtractor, ExtractionSource, Transcript};
use cnc_advisor::service::api::{self, AppState};
use cnc_advisor::service::{config::ingest_dir, repl, write_fixture, AppConfig};
use cnc_advisor::session::SessionState;

#[derive(Parser)]
#[command(name = "cnc-advisor", version, about = "Decision support for CNC compensation and machining knowledge")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Backend profile name from the configuration.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Write the synthetic blade fixture and load it into new sessions.
    #[arg(long, global = true)]
    fixture: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive loop.
    Repl {
        /// Persist the audit trail and payloads here.
        #[arg(long)]
        session_dir: Option<PathBuf>,
    },
    /// HTTP API for the operator console.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Run a single query and print the outcome.
    Turn {
        query: Vec<String>,
        /// Print the structured response instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Write the synthetic inspection and pathing files.
    Fixture {
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    #[command(subcommand)]
    Eval(EvalCommand),
    #[command(subcommand)]
    Kg(KgCommand),
}

#[derive(Subcommand)]
enum EvalCommand {
    /// L1/L2/L3 tool-depth benchmark.
    Depth {
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, requires = "queries")]
        reference: Option<PathBuf>,
        /// Use the configured backend instead of the seeded defect script.
        #[arg(long)]
        live: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired critic ablation under hint degradation.
    Critic {
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        live: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired KG / no-KG question answering.
    KgQa {
        #[arg(long)]
        items: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum KgCommand {
    /// Extract triples from text documents and aggregate them.
    Build {
        /// Directory of .txt / .md documents.
        #[arg(long)]
        docs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replay recorded extractor responses instead of calling the backend.
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Save the extractor responses of a live run.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Add five-field TSV files to a store, creating it if needed.
    Ingest {
        #[arg(long)]
        store: PathBuf,
        files: Vec<PathBuf>,
    },
}

type Res<T> = Result<T, Box<dyn std::error::Error>>;

fn emit(out: Option<&Path>, text: &str) -> Res<()> {
    match out {
        Some(p) => {
            std::fs::write(p, text)?;
            eprintln!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn fixture_dir(cfg: &AppConfig) -> PathBuf {
    cfg.engine
        .data_dir
        .clone()
        .unwrap_or_else(|| std::env::temp_dir().join(format!("cnc-advisor-fixture-{}", std::process::id())))
}

struct Ctx {
    cfg: AppConfig,
    backend: Option<String>,
    fixture: bool,
}

impl Ctx {
    fn backend(&self) -> Res<Arc<dyn Backend>> {
        Ok(self.cfg.backend(self.backend.as_deref())?)
    }

    /// Engine plus the paths new sessions should load.
    fn engine(&self) -> Res<(Engine, Vec<String>)> {
        let mut engine = self.cfg.engine(self.backend.as_deref())?;
        let mut autoload = Vec::new();
        if self.fixture {
            let dir = fixture_dir(&self.cfg);
            for p in write_fixture(&dir)? {
                autoload.push(p.display().to_string());
            }
            engine.config.data_dir.get_or_insert(dir);
        }
        Ok((engine, autoload))
    }

    fn session(&self, engine: &Engine, autoload: &[String], dir: Option<&Path>) -> Res<SessionState> {
        let budget = engine.config.critic.budget;
        let mut s = match dir {
            Some(d) => SessionState::persistent("repl", budget, d)?,
            None => SessionState::new("repl", budget),
        };
        for p in autoload {
            engine.load_resource(&mut s, p, None, None)?;
        }
        Ok(s)
    }
}

fn run(cli: Cli) -> Res<()> {
    let cfg = match &cli.config {
        Some(p) => AppConfig::load(p)?,
        None => AppConfig::default(),
    };
    let ctx = Ctx { cfg, backend: cli.backend, fixture: cli.fixture };
    match cli.command {
        Command::Repl { session_dir } => {
            let (engine, autoload) = ctx.engine()?;
            let mut state = ctx.session(&engine, &autoload, session_dir.as_deref())?;
            let stdin = std::io::stdin();
            repl::run(&engine, &mut state, stdin.lock(), std::io::stdout().lock())?;
        }
        Command::Serve { bind } => {
            let (engine, autoload) = ctx.engine()?;
            let bind = bind.unwrap_or_else(|| ctx.cfg.server.bind.clone());
            let app = AppState::new(engine, ctx.cfg.server.audit_dir.clone(), autoload);
            tokio::runtime::Runtime::new()?.block_on(api::serve(app, &bind))?;
        }
        Command::Turn { query, json } => {
            let (engine, autoload) = ctx.engine()?;
            let mut state = ctx.session(&engine, &autoload, None)?;
            let out = engine.run_turn(&mut state, &query.join(" "))?;
            if json {
                println!("{}", serde_json::to_string_pretty(&api::turn_json("cli", 0, &out))?);
            } else {
                print!("{}", render_outcome(&out));
            }
        }
        Command::Fixture { out } => {
            for p in write_fixture(&out)? {
                println!("{}", p.display());
            }
        }
        Command::Eval(e) => run_eval(&ctx, e)?,
        Command::Kg(k) => run_kg(&ctx, k)?,
    }
    Ok(())
}

fn run_eval(ctx: &Ctx, cmd: EvalCommand) -> Res<()> {
    match cmd {
        EvalCommand::Depth { queries, reference, live, out } => {
            let bench = match (queries, reference) {
                (Some(q), Some(r)) => eval::depth::load_bench(&q, &r)?,
                _ => eval::depth::default_bench(),
            };
            let engine = ctx.cfg.engine(ctx.backend.as_deref())?;
            let paths: Vec<String> = write_fixture(&fixture_dir(&ctx.cfg))?.iter().map(|p| p.display().to_string()).collect();
            let state = ctx.session(&engine, &paths, None)?;
            let registry = &engine.registry;
            let (backend, defects): (Arc<dyn Backend>, _) = if live {
                (ctx.backend()?, Default::default())
            } else {
                let d = eval::assign_defects(&bench, &ctx.cfg.eval.depth, registry)?;
                (Arc::new(eval::scripted_planner(&bench, &d, registry)), d)
            };
            let rep = eval::run_depth_benchmark(&bench, &state, backend.as_ref(), registry, &defects, &[Caller::Raw, Caller::Planner])?;
            emit(out.as_deref(), &rep.to_csv())?;
        }
        EvalCommand::Critic { suite, live, out } => {
            let queries = match suite {
                Some(p) => eval::critic_suite::parse_suite(&std::fs::read_to_string(p)?)?,
                None => eval::critic_suite::default_suite(),
            };
            let [ip, pp] = write_fixture(&fixture_dir(&ctx.cfg))?;
            let backend: Arc<dyn Backend> = if live { ctx.backend()? } else { Arc::new(eval::critic_suite::echo_planner()) };
            let rep = eval::run_critic_suite(&queries, &ip, &pp, backend, &ctx.cfg.eval.critic)?;
            emit(out.as_deref(), &rep.to_csv())?;
        }
        EvalCommand::KgQa { items, out } => {
            let items = match items {
                Some(p) => eval::qa::parse_items(&std::fs::read_to_string(p)?)?,
                None => eval::qa::default_items(),
            };
            let kg = match ctx.cfg.kg_context()? {
                Some(k) => k,
                None => eval::fixture_context(ctx.cfg.retrieval.clone()),
            };
            let rep = eval::run_kg_qa(&items, ctx.cfg.eval.qa_seed, ctx.backend()?.as_ref(), &kg);
            emit(out.as_deref(), &rep.to_csv())?;
        }
    }
    Ok(())
}

fn run_kg(ctx: &Ctx, cmd: KgCommand) -> Res<()> {
    match cmd {
        KgCommand::Build { docs, out, transcript, record } => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&docs)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "txt" || x == "md"))
                .collect();
            files.sort();
            let mut inputs = Vec::new();
            for f in files {
                let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string();
                inputs.push((id, std::fs::read_to_string(&f)?));
            }
            let backend = ctx.backend()?;
            let replay = match &transcript {
                Some(p) => Some(Transcript::from_jsonl(&std::fs::read_to_string(p)?)?),
                None => None,
            };
            let live = BackendExtractor(backend.as_ref());
            let source: &dyn ExtractionSource = match &replay {
                Some(t) => t,
                None => &live,
            };
            let (outputs, responses) = kgbuild::build_corpus(&inputs, source)?;
            if let Some(p) = record {
                std::fs::write(p, responses.to_jsonl())?;
            }
            let summary = kgbuild::aggregate(&outputs, &out)?;
            let embedder = HashEmbedder::new(ctx.cfg.kg.embed_dim);
            let mut store = TripleStore::default();
            ingest_dir(&mut store, &out.join("docs"), &embedder)?;
            store.save(out.join("store"))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        KgCommand::Ingest { store, files } => {
            let embedder = HashEmbedder::new(ctx.cfg.kg.embed_dim);
            let mut s = if store.join("meta.json").is_file() { TripleStore::load(&store)? } else { TripleStore::default() };
            for f in files {
                let doc = f.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string();
                let rep = s.ingest_triples(&std::fs::read_to_string(&f)?, &doc, &embedder)?;
                println!(
                    "{}: {} added, {} repaired, {} rejected, {} already present",
                    f.display(),
                    rep.added.len(),
                    rep.repaired,
                    rep.rejects.len(),
                    rep.already_present
                );
            }
            s.save(&store)?;
            let (t, e, r) = s.summary();
            println!("store {}: {t} triples, {e} entities, {r} relations", store.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::FAILURE
        }
    }
}

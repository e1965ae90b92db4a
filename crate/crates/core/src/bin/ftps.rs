use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ftps::bench::{run_benchmark, to_csv, BenchConfig, BenchError};
use ftps::engine::{Engine, EngineConfig, EngineStats, IndexMode};
use ftps::rdf::ntriples::{parse_documents, parse_documents_by_subject};
use ftps::rdf::Document;
use ftps::reorg::{ReorgPolicy, ScoreVariant};
use ftps::subscription::{split_subscription_blocks, DEFAULT_DNF_CAP, DEFAULT_NAMESPACE};
use ftps::workload::{generate_documents, generate_subscriptions, WorkloadSpec};
use ftps::SubId;

#[derive(Parser)]
#[command(name = "ftps", version, about = "Full-text publish/subscribe over RDF documents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Freq,
    Hits,
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Index mode: det, metrics or reorg.
    #[arg(long, default_value = "metrics")]
    mode: IndexMode,
    /// Reorganise after this many clause insertions; 0 means only on request.
    #[arg(long, default_value_t = 10_000)]
    reorg_every: u64,
    #[arg(long, value_enum, default_value = "freq")]
    reorg_score: ScoreArg,
    /// Namespace for bare names in subscriptions.
    #[arg(long, env = "FTPS_DEFAULT_NS", default_value = DEFAULT_NAMESPACE)]
    default_ns: String,
    /// Largest number of DNF clauses one filter may expand to.
    #[arg(long, default_value_t = DEFAULT_DNF_CAP)]
    dnf_cap: usize,
}

impl EngineArgs {
    fn config(&self) -> EngineConfig {
        EngineConfig {
            mode: self.mode,
            reorg_policy: match self.reorg_every {
                0 => ReorgPolicy::ExplicitOnly,
                k => ReorgPolicy::EveryK(k),
            },
            score: match self.reorg_score {
                ScoreArg::Freq => ScoreVariant::ClauseFreq,
                ScoreArg::Hits => ScoreVariant::ProbeHits,
            },
            default_namespace: self.default_ns.clone(),
            dnf_cap: self.dnf_cap,
        }
    }
}

#[derive(Args, Clone)]
struct GenArgs {
    /// Number of items to generate.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 20_000)]
    vocab: usize,
    #[arg(long, default_value_t = 0.8)]
    zipf: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long)]
    o: PathBuf,
}

impl GenArgs {
    fn spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            num_subscriptions: self.n,
            vocabulary_size: self.vocab,
            zipf_skew: self.zipf,
            seed: self.seed,
            ..WorkloadSpec::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Index a subscription file and publish a document file against it.
    Run {
        #[arg(long)]
        subs: PathBuf,
        #[arg(long)]
        docs: PathBuf,
        /// Notification JSON Lines output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Engine statistics as CSV.
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Documents are plain N-Triples grouped by subject.
        #[arg(long)]
        by_subject: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Validate and index subscriptions, printing their ids.
    Subscribe {
        #[arg(short, long)]
        f: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Publish documents against a subscription file; notifications go to stdout.
    Publish {
        #[arg(short, long)]
        f: PathBuf,
        #[arg(long)]
        subs: PathBuf,
        #[arg(long)]
        by_subject: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Index subscriptions in reorg mode and reorganise once.
    Reorg {
        /// Must be `now`.
        when: String,
        #[arg(long)]
        subs: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Interactive session reading commands from stdin or a script.
    Shell {
        #[arg(long)]
        script: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Generate a synthetic subscription file.
    GenSubs(GenArgs),
    /// Generate a synthetic document file.
    GenDocs(GenArgs),
    /// Compare filtering time across modes and database sizes.
    Bench {
        #[arg(long)]
        subs: PathBuf,
        #[arg(long, required_unless_present = "dbpedia_abstracts")]
        docs: Option<PathBuf>,
        /// Real abstract dump in N-Triples, grouped into documents by subject.
        #[arg(long)]
        dbpedia_abstracts: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "det,metrics,reorg")]
        modes: Vec<IndexMode>,
        #[arg(long, value_delimiter = ',', default_value = "10000,50000,100000,500000")]
        sizes: Vec<usize>,
        #[arg(short, long)]
        o: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

enum Failure {
    Input(String),
    Invariant(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_docs(path: &Path, by_subject: bool) -> Result<Vec<Document>, Failure> {
    let text = read(path)?;
    let parsed = if by_subject {
        parse_documents_by_subject(&text)
    } else {
        parse_documents(&text)
    };
    parsed.map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn subscription_blocks(path: &Path) -> Result<Vec<(usize, String)>, Failure> {
    Ok(split_subscription_blocks(&read(path)?))
}

fn load_subs(engine: &mut Engine, path: &Path) -> Result<Vec<(usize, SubId)>, Failure> {
    let mut ids = Vec::new();
    for (line, block) in subscription_blocks(path)? {
        let id = engine
            .subscribe(&block)
            .map_err(|e| Failure::Input(format!("{}:{line}: {e}", path.display())))?;
        ids.push((line, id));
    }
    Ok(ids)
}

fn check_audit(engine: &Engine) -> CmdResult {
    let report = engine.audit();
    if report.is_clean() {
        Ok(())
    } else {
        Err(Failure::Invariant(report.violations.join("\n")))
    }
}

fn stats_csv(s: &EngineStats) -> String {
    let mut out = String::from("metric,value\n");
    let rows = [
        ("subscriptions", s.subscriptions.to_string()),
        ("clauses", s.clauses.to_string()),
        ("predicates", s.predicates.to_string()),
        ("trie_nodes", s.trie_nodes.to_string()),
        ("publishes", s.publishes.to_string()),
        ("total_filter_ms", format!("{:.3}", s.total_filter_ms)),
        ("last_filter_ms", format!("{:.3}", s.last_filter_ms)),
    ];
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    for (p, n) in &s.nodes_per_predicate {
        out.push_str(&format!("nodes:{p},{n}\n"));
    }
    out
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn publish_all(engine: &Engine, docs: &[Document], out: &mut dyn Write) -> io::Result<usize> {
    let mut n = 0;
    for d in docs {
        for note in engine.publish(d) {
            writeln!(out, "{}", note.to_json())?;
            n += 1;
        }
    }
    out.flush()?;
    Ok(n)
}

fn run_shell(engine: &mut Engine, input: &mut dyn BufRead) -> CmdResult {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Ok(());
        }
        lineno += 1;
        let cmd = line.trim();
        if cmd.is_empty() || cmd.starts_with('#') {
            continue;
        }
        let (verb, rest) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
        let rest = rest.trim();
        let result: Result<(), String> = match verb {
            "subscribe" => engine
                .subscribe(rest)
                .map(|id| {
                    let _ = writeln!(out, "subscribed {id}");
                })
                .map_err(|e| e.to_string()),
            "subscribe-file" => match load_subs(engine, Path::new(rest)) {
                Ok(ids) => {
                    for (l, id) in ids {
                        let _ = writeln!(out, "subscribed {id} (line {l})");
                    }
                    Ok(())
                }
                Err(Failure::Input(e) | Failure::Invariant(e)) => Err(e),
            },
            "unsubscribe" => rest
                .parse::<u64>()
                .map_err(|e| e.to_string())
                .and_then(|n| engine.unsubscribe(SubId(n)).map_err(|e| e.to_string()))
                .map(|()| {
                    let _ = writeln!(out, "unsubscribed {rest}");
                }),
            "publish" => match load_docs(Path::new(rest), false) {
                Ok(docs) => publish_all(engine, &docs, &mut out)
                    .map(|_| ())
                    .map_err(|e| e.to_string()),
                Err(Failure::Input(e) | Failure::Invariant(e)) => Err(e),
            },
            "reorg" if rest == "now" => engine.reorg_now().map_err(|e| e.to_string()).map(|s| {
                let _ = writeln!(
                    out,
                    "reorganised {} forests, {} clauses, nodes {} -> {}",
                    s.forests, s.replayed, s.nodes_before, s.nodes_after
                );
            }),
            "stats" => {
                let _ = writeln!(out, "{}", serde_json::to_string(&engine.stats()).expect("stats"));
                Ok(())
            }
            "audit" => {
                let r = engine.audit();
                if !r.is_clean() {
                    return Err(Failure::Invariant(r.violations.join("\n")));
                }
                let _ = writeln!(out, "audit ok");
                Ok(())
            }
            "quit" | "exit" => return Ok(()),
            other => Err(format!("unknown command {other:?}")),
        };
        if let Err(e) = result {
            eprintln!("line {lineno}: {e}");
        }
    }
}

fn execute(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Run {
            subs,
            docs,
            out,
            stats,
            by_subject,
            engine,
        } => {
            let mut e = Engine::new(engine.config());
            load_subs(&mut e, &subs)?;
            let docs = load_docs(&docs, by_subject)?;
            let mut w = output(out.as_deref())?;
            let n = publish_all(&e, &docs, &mut *w)?;
            if let Some(p) = stats {
                fs::write(p, stats_csv(&e.stats()))?;
            }
            eprintln!("{} subscriptions, {} documents, {n} notifications", e.len(), docs.len());
            check_audit(&e)
        }
        Command::Subscribe { f, engine } => {
            let mut e = Engine::new(engine.config());
            let mut failed = 0;
            for (line, block) in subscription_blocks(&f)? {
                match e.subscribe(&block) {
                    Ok(id) => println!("{id}\tline {line}"),
                    Err(err) => {
                        failed += 1;
                        eprintln!("{}:{line}: {err}", f.display());
                    }
                }
            }
            println!("{}", serde_json::to_string(&e.stats()).expect("stats"));
            check_audit(&e)?;
            if failed > 0 {
                return Err(Failure::Input(format!("{failed} subscriptions rejected")));
            }
            Ok(())
        }
        Command::Publish {
            f,
            subs,
            by_subject,
            engine,
        } => {
            let mut e = Engine::new(engine.config());
            load_subs(&mut e, &subs)?;
            let docs = load_docs(&f, by_subject)?;
            publish_all(&e, &docs, &mut *output(None)?)?;
            Ok(())
        }
        Command::Reorg { when, subs, engine } => {
            if when != "now" {
                return Err(Failure::Input(format!("expected `reorg now`, got `reorg {when}`")));
            }
            let mut cfg = engine.config();
            cfg.mode = IndexMode::MetricsReorg;
            cfg.reorg_policy = ReorgPolicy::ExplicitOnly;
            let mut e = Engine::new(cfg);
            load_subs(&mut e, &subs)?;
            let s = e.reorg_now().map_err(|err| Failure::Input(err.to_string()))?;
            println!(
                "reorganised {} forests, {} clauses, nodes {} -> {}",
                s.forests, s.replayed, s.nodes_before, s.nodes_after
            );
            check_audit(&e)
        }
        Command::Shell { script, engine } => {
            let mut e = Engine::new(engine.config());
            match script {
                Some(p) => {
                    let file = fs::File::open(&p)
                        .map_err(|err| Failure::Input(format!("{}: {err}", p.display())))?;
                    run_shell(&mut e, &mut io::BufReader::new(file))
                }
                None => run_shell(&mut e, &mut io::stdin().lock()),
            }
        }
        Command::GenSubs(g) => {
            fs::write(&g.o, generate_subscriptions(&validated(g.spec())?))?;
            Ok(())
        }
        Command::GenDocs(g) => {
            fs::write(&g.o, generate_documents(g.n, &validated(g.spec())?))?;
            Ok(())
        }
        Command::Bench {
            subs,
            docs,
            dbpedia_abstracts,
            modes,
            sizes,
            o,
            engine,
        } => {
            let texts: Vec<String> = subscription_blocks(&subs)?.into_iter().map(|(_, b)| b).collect();
            let docs = match (dbpedia_abstracts, docs) {
                (Some(p), _) => load_docs(&p, true)?,
                (None, Some(p)) => load_docs(&p, false)?,
                (None, None) => unreachable!("clap requires one document source"),
            };
            let cfg = BenchConfig {
                modes,
                sizes,
                engine: engine.config(),
            };
            let rows = run_benchmark(&texts, &docs, &cfg).map_err(|err| match err {
                BenchError::OracleMismatch { .. } => Failure::Invariant(err.to_string()),
                other => Failure::Input(other.to_string()),
            })?;
            let csv = to_csv(&rows);
            match o {
                Some(p) => fs::write(p, csv)?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn validated(spec: WorkloadSpec) -> Result<WorkloadSpec, Failure> {
    spec.validate().map_err(|e| Failure::Input(e.to_string()))?;
    Ok(spec)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(e)) => {
            eprintln!("invariant violation: {e}");
            ExitCode::from(2)
        }
    }
}

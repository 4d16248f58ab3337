use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use legalbot::fulfillment::{Fulfillment, LeadSinkKind, SinkConfig};
use legalbot::harness::{self, HttpDriver, InProcessDriver, ReportFormat};
use legalbot::ingest;
use legalbot::nlu::{ModelCache, Router};
use legalbot::service::{self, ServiceConfig};
use legalbot::{load_manifest, Engine, HierarchyManifest, ResponseTable};

#[derive(Parser)]
#[command(name = "legalbot", version, about = "Retrieval-based legal enquiry bot")]
struct Cli {
    /// Bot manifest (JSON).
    #[arg(long, global = true, default_value = "fixture/legal_firm.json")]
    manifest: PathBuf,
    /// Response table (CSV).
    #[arg(long, global = true, default_value = "fixture/responses.csv")]
    responses: PathBuf,
    /// Report format for test commands.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::TextTable)]
    format: ReportFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the manifest and the response table.
    Validate,
    /// Compile the hierarchy and write one cached model per bot.
    Build {
        #[arg(long, default_value = "build/models")]
        out: PathBuf,
    },
    /// Show how an utterance resolves through the bot tree.
    Classify { text: String },
    /// Talk to the bot in the terminal.
    Chat {
        #[command(flatten)]
        sinks: SinkArgs,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Idle session lifetime in seconds.
        #[arg(long, default_value_t = 1800)]
        session_ttl: u64,
        /// Shared secret required by the admin endpoints.
        #[arg(long, env = "LEGALBOT_ADMIN_SECRET")]
        admin_secret: Option<String>,
        #[command(flatten)]
        sinks: SinkArgs,
    },
    /// Run regression or conversation tests
    #[command(subcommand)]
    Test(TestCommand),
    /// Turn enquiry emails into labelled training and regression data
    #[command(subcommand)]
    Ingest(IngestCommand),
}

#[derive(Subcommand)]
enum TestCommand {
    /// Classify each case of a regression CSV and report accuracy.
    Regression { csv: PathBuf },
    /// Play every script in a directory.
    Conversation {
        dir: PathBuf,
        /// Drive a running service at this base URL instead of an in-process engine.
        #[arg(long)]
        http: Option<String>,
    },
}

#[derive(Subcommand)]
enum IngestCommand {
    /// Group enquiry message bodies into one file per service.
    Extract {
        dir: PathBuf,
        #[arg(long, default_value = "ingest/extracted")]
        out: PathBuf,
        /// Also write a review file with one pending row per body.
        #[arg(long)]
        review: Option<PathBuf>,
    },
    /// Split a reviewed curation file into training and regression sets.
    Split {
        curation: PathBuf,
        #[arg(long, default_value = "ingest/split")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct SinkArgs {
    #[arg(long, value_enum, default_value_t = SinkKind::File)]
    lead_sink: SinkKind,
    /// Lead file (file sink) or outbox directory (smtp-stub sink).
    #[arg(long, default_value = "data/leads.jsonl")]
    leads: PathBuf,
    #[arg(long, default_value = "data/transcripts.jsonl")]
    transcripts: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SinkKind {
    File,
    SmtpStub,
    Stdout,
}

impl SinkArgs {
    fn fulfillment(&self) -> Result<Fulfillment> {
        let lead_sink = match self.lead_sink {
            SinkKind::File => LeadSinkKind::File,
            SinkKind::SmtpStub => LeadSinkKind::SmtpStub,
            SinkKind::Stdout => LeadSinkKind::Stdout,
        };
        let config = SinkConfig {
            lead_sink,
            lead_path: Some(self.leads.clone()),
            transcript_path: self.transcripts.clone(),
            smtp: None,
        };
        Ok(Fulfillment::from_config(&config)?)
    }
}

fn manifest(cli: &Cli) -> Result<HierarchyManifest> {
    load_manifest(&cli.manifest).with_context(|| format!("loading {}", cli.manifest.display()))
}

fn engine(cli: &Cli) -> Result<Engine> {
    let responses =
        ResponseTable::load(&cli.responses).with_context(|| format!("loading {}", cli.responses.display()))?;
    Ok(Engine::new(manifest(cli)?, responses)?)
}

fn in_memory_engine(cli: &Cli) -> Result<Arc<Engine>> {
    let (sinks, _mem) = Fulfillment::in_memory();
    Ok(Arc::new(engine(cli)?.with_sinks(Arc::new(sinks))))
}

fn report_exit(report: &harness::TestReport, format: ReportFormat) -> ExitCode {
    print!("{}", harness::render_report(report, format));
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn chat(engine: &Engine) -> Result<()> {
    let mut state = engine.start_session();
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    write!(out, "> ")?;
    out.flush()?;
    for line in stdin.lock().lines() {
        let line = line?;
        let text = line.trim();
        if matches!(text, "/quit" | "/exit") {
            break;
        }
        if !text.is_empty() {
            let turn = engine.handle_turn(&mut state, text)?;
            for m in &turn.response.messages {
                writeln!(out, "bot: {m}")?;
            }
            if let Some(buttons) = &turn.response.buttons {
                let labels: Vec<&str> = buttons.iter().map(|b| b.label.as_str()).collect();
                writeln!(out, "     [{}]", labels.join("] ["))?;
            }
        }
        write!(out, "> ")?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(())
}

fn extract(dir: &Path, out: &Path, review: Option<&Path>) -> Result<ExitCode> {
    let report = ingest::extract_enquiries(dir, out)?;
    for (service, n) in &report.per_service {
        println!("{service}: {n}");
    }
    for e in &report.errors {
        eprintln!("skipped: {e}");
    }
    println!(
        "extracted {} enquiries, skipped {}",
        report.records.len(),
        report.errors.len()
    );
    if let Some(path) = review {
        std::fs::write(path, ingest::curation_csv(&ingest::review_items(&report.records)))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Validate => {
            let engine = engine(&cli)?;
            let m = engine.manifest();
            let utterances: usize = m.bots.iter().map(|b| b.effective_utterances().len()).sum();
            println!(
                "ok: {} bots, {} intents, {} training utterances, {} responses",
                m.bots.len(),
                m.bots.iter().map(|b| b.intents.len()).sum::<usize>(),
                utterances,
                engine.responses().len()
            );
        }
        Command::Build { out } => {
            let router = Router::new(manifest(&cli)?)?;
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let cache = ModelCache::new(out);
            for bot in &router.manifest().bots {
                let model = cache.get_or_build(bot)?;
                println!(
                    "{}: {} exemplars, {} terms",
                    bot.name,
                    model.exemplars.len(),
                    model.vocabulary.len()
                );
            }
        }
        Command::Classify { text } => {
            let router = Router::new(manifest(&cli)?)?;
            let r = router.resolve(text);
            for (bot, c) in &r.path {
                let top: Vec<String> = c
                    .ranking
                    .iter()
                    .take(3)
                    .map(|(i, s)| format!("{i}={s:.4}"))
                    .collect();
                println!("{bot}: {}", top.join(" "));
            }
            println!(
                "=> {} ({:.4}){}",
                r.intent,
                r.confidence,
                if r.fallback { " fallback" } else { "" }
            );
        }
        Command::Chat { sinks } => {
            let engine = engine(&cli)?.with_sinks(Arc::new(sinks.fulfillment()?));
            chat(&engine)?;
        }
        Command::Serve {
            port,
            host,
            session_ttl,
            admin_secret,
            sinks,
        } => {
            let engine = Arc::new(engine(&cli)?.with_sinks(Arc::new(sinks.fulfillment()?)));
            let addr: SocketAddr = format!("{host}:{port}").parse().context("bad listen address")?;
            let config = ServiceConfig {
                session_ttl: Duration::from_secs(*session_ttl),
                admin_secret: admin_secret.clone(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(engine, config, addr))?;
        }
        Command::Test(TestCommand::Regression { csv }) => {
            let router = Router::new(manifest(&cli)?)?;
            let cases = harness::load_regression(csv)?;
            let report = harness::run_regression(&router, &cases);
            return Ok(report_exit(&report, cli.format));
        }
        Command::Test(TestCommand::Conversation { dir, http }) => {
            let scripts = harness::load_scripts(dir)?;
            let report = match http {
                Some(url) => harness::run_conversation(&HttpDriver::new(url.clone()), &scripts),
                None => harness::run_conversation(&InProcessDriver::new(in_memory_engine(&cli)?), &scripts),
            };
            return Ok(report_exit(&report, cli.format));
        }
        Command::Ingest(IngestCommand::Extract { dir, out, review }) => {
            return extract(dir, out, review.as_deref());
        }
        Command::Ingest(IngestCommand::Split { curation, out }) => {
            let router = Router::new(manifest(&cli)?)?;
            let items = ingest::load_curation(curation)?;
            let split = ingest::split_by_baseline(&items, &router)?;
            ingest::write_split(&split, out)?;
            println!(
                "collected {} = discarded {} + regression {} + training {}",
                split.collected,
                split.discarded,
                split.regression.len(),
                split.training.len()
            );
            if split.collected != split.discarded + split.regression.len() + split.training.len() {
                bail!("split lost items");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,legalbot=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

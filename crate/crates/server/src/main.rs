use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use forge_core::corpus::load_corpus;
use forge_core::pipeline::Stage;
use forge_server::state::new_id;
use forge_server::{jobs, router, AppState, Config};

#[derive(Parser)]
#[command(name = "forge", version, about = "Audience persona engine")]
struct Cli {
    /// TOML config file; FORGE_* environment variables override it.
    #[arg(long, global = true, env = "FORGE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus file and register it as a new project.
    Ingest { file: PathBuf },
    /// Run the pipeline to completion. Defaults to the newest project.
    Run {
        #[arg(long)]
        project: Option<String>,
    },
    /// Write a project's personas as a JSON array.
    ExportPersonas {
        #[arg(long)]
        project: Option<String>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
    },
}

fn open(config: Config) -> anyhow::Result<AppState> {
    let gateway = config.gateway();
    Ok(AppState::open(config, gateway)?)
}

fn pick_project(state: &AppState, project: Option<String>) -> anyhow::Result<String> {
    if let Some(p) = project {
        return Ok(p);
    }
    match state.store().list_projects()?.pop() {
        Some(p) => Ok(p.project_id),
        None => bail!("no projects; run `forge ingest <file>` first"),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest { file } => {
            let corpus = load_corpus(&file).with_context(|| format!("loading {}", file.display()))?;
            let state = open(config)?;
            let id = new_id("project");
            state.store().create_project(&id, &corpus.name, &corpus.to_json_string())?;
            println!("{id}");
        }
        Command::Run { project } => {
            let state = open(config)?;
            let project = pick_project(&state, project)?;
            let (job, handle) = jobs::start_pipeline(&state, &project, None)?;
            handle.join().map_err(|_| anyhow::anyhow!("pipeline thread panicked"))?;
            let job = state.store().job(&job.job_id)?;
            if job.stage != Stage::Done {
                bail!("job {} failed: {}", job.job_id, job.error.unwrap_or_default());
            }
            let personas = state.store().personas(&project)?;
            println!("{} DONE: {} personas", job.job_id, personas.len());
            for p in personas {
                println!("  {}  {} ({})", p.persona_id, p.name, p.job);
            }
        }
        Command::ExportPersonas { project, out } => {
            let state = open(config)?;
            let project = pick_project(&state, project)?;
            let personas = state.store().personas(&project)?;
            let text = serde_json::to_string_pretty(&personas)?;
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => {
                    let mut stdout = std::io::stdout().lock();
                    match writeln!(stdout, "{text}") {
                        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                        _ => {}
                    }
                }
            }
        }
        Command::Serve { port } => {
            if let Some(port) = port {
                config.server.port = port;
            }
            let addr = format!("{}:{}", config.server.host, config.server.port);
            let state = open(config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                tracing::info!(%addr, "listening");
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use colloquy_core::domain::TopicId;
use colloquy_core::fixtures::{bundled_fixtures, load_fixtures, FixtureDocument};
use colloquy_core::simulator::{simulate, RespondentModel};
use colloquy_server::{load_fixture, serve, AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "colloquy", version, about = "Rule-based interview chatbot server")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve(ServeArgs),
    /// Run simulated participants through a topic's active interview and
    /// print the report as JSON.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct CatalogArgs {
    /// Directory for the catalog, sessions and topic-model runs. Without
    /// it everything is kept in memory.
    #[arg(long, env = "COLLOQUY_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Fixture files to import at startup (repeatable).
    #[arg(long = "fixtures", env = "COLLOQUY_FIXTURES", value_delimiter = ',')]
    fixtures: Vec<PathBuf>,
    /// Import the bundled COVID-19 and brain-organoid fixtures.
    #[arg(long)]
    bundled_fixtures: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "COLLOQUY_BIND", default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, env = "COLLOQUY_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "COLLOQUY_ADMIN_TOKEN", hide_env_values = true)]
    admin_token: String,
    /// Seed for the generic-reflection rotation.
    #[arg(long, env = "COLLOQUY_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    catalog: CatalogArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    topic: u64,
    #[arg(long, default_value_t = 100)]
    sessions: u32,
    /// Overrides the seed in the model file.
    #[arg(long)]
    seed: Option<u64>,
    /// Respondent model as JSON.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    catalog: CatalogArgs,
}

fn fixture_documents(args: &CatalogArgs) -> Result<Vec<FixtureDocument>, String> {
    let mut docs = if args.bundled_fixtures { bundled_fixtures() } else { Vec::new() };
    for path in &args.fixtures {
        docs.push(load_fixtures(path).map_err(|e| format!("{}: {e}", path.display()))?);
    }
    Ok(docs)
}

fn prepare(args: &CatalogArgs, token: String, seed: u64) -> Result<AppState, String> {
    let mut config = ServerConfig::new(token);
    config.seed = seed;
    config.data_dir = args.data_dir.clone();
    let state = AppState::new(config).map_err(|e| e.to_string())?;
    for doc in fixture_documents(args)? {
        let names: Vec<String> = doc.topics.iter().map(|t| t.name.clone()).collect();
        match load_fixture(&state, doc) {
            Ok(true) => tracing::info!(?names, "imported fixture"),
            Ok(false) => tracing::info!(?names, "fixture topics already present, skipped"),
            Err(e) => return Err(format!("cannot import fixture {names:?}: {e}")),
        }
    }
    Ok(state)
}

async fn run_server(args: ServeArgs) -> Result<(), String> {
    let state = prepare(&args.catalog, args.admin_token, args.seed)?;
    let addr = SocketAddr::new(args.bind, args.port);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| format!("cannot bind {addr}: {e}"))?;
    tracing::info!("listening on http://{}", listener.local_addr().map_err(|e| e.to_string())?);
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    serve(listener, state, shutdown).await.map_err(|e| e.to_string())
}

fn run_simulation(args: SimulateArgs) -> Result<(), String> {
    if args.catalog.data_dir.is_none() && args.catalog.fixtures.is_empty() && !args.catalog.bundled_fixtures {
        return Err("nothing to simulate: pass --data-dir, --fixtures or --bundled-fixtures".into());
    }
    // the token only guards HTTP routes, which this command never opens
    let state = prepare(&args.catalog, "unused".into(), 0)?;
    let text = std::fs::read_to_string(&args.model).map_err(|e| format!("{}: {e}", args.model.display()))?;
    let mut model: RespondentModel = colloquy_server::extract::parse_json(text.as_bytes())
        .map_err(|e| match &e.body.field_path {
            Some(at) => format!("{}: {} (at {at})", args.model.display(), e.body.message),
            None => format!("{}: {}", args.model.display(), e.body.message),
        })?;
    if let Some(seed) = args.seed {
        model.seed = seed;
    }
    let catalog = state.store.snapshot();
    let interview = catalog
        .active_interview(TopicId(args.topic))
        .ok_or_else(|| format!("topic {} does not exist or has no active interview", args.topic))?;
    let report = simulate(&catalog, interview.id, &model, args.sessions).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Serve(args) => match tokio::runtime::Runtime::new() {
            Ok(rt) => rt.block_on(run_server(args)),
            Err(e) => Err(e.to_string()),
        },
        Command::Simulate(args) => run_simulation(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

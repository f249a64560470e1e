use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use irecon_core::agents::{agent_study, AgentBudget, AgentKind, StudyArm};
use irecon_core::analytics::StudyTable;
use irecon_core::datasets::{dsprites_load_or_generate, mnist_load, sinelines_split, DatasetKind, DatasetSplit, DspritesGrid, DspritesSource};
use irecon_core::disentanglement::{code_factor_matrix, evaluate, BoostingConfig, DEFAULT_BINS};
use irecon_core::models::{load_model, representation_spec, save_model, train, Family, LossConfig};
use irecon_core::task::{replay, EventLog, TaskParams};
use irecon_study::server::{serve, AppState};
use irecon_study::{simulate_session, Bundle, Client, Registry, StudyConfig, StudyError, Store};

#[derive(Parser)]
#[command(name = "irecon", version, about = "Interactive reconstruction studies: models, service, agents and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct DataArgs {
    #[arg(long)]
    dataset: DatasetKind,
    /// Items to sample for synthetic timeseries.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// dSprites NPZ archive; the procedural grid is used without it.
    #[arg(long)]
    dsprites_npz: Option<PathBuf>,
    /// Directory holding the MNIST IDX files.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<DatasetSplit, Box<dyn std::error::Error>> {
        Ok(match self.dataset {
            DatasetKind::Sinelines => sinelines_split(self.samples, self.data_seed),
            DatasetKind::Dsprites => {
                let source = match &self.dsprites_npz {
                    Some(path) => DspritesSource::File {
                        path: path.clone(),
                        max_items: None,
                    },
                    None => DspritesSource::Procedural(DspritesGrid::default()),
                };
                dsprites_load_or_generate(&source, self.data_seed)?
            }
            DatasetKind::Mnist => {
                let dir = self.mnist_dir.as_ref().ok_or("MNIST needs --mnist-dir")?;
                mnist_load(
                    &dir.join("train-images-idx3-ubyte"),
                    &dir.join("train-labels-idx1-ubyte"),
                    self.data_seed,
                )?
            }
            DatasetKind::Circles => return Err("circles is a practice dataset without a training split".into()),
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    LongCsv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (or build the closed form for `gt`) and save it with its slider spec.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        family: Family,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heldout reconstruction error and MIG/DCI of a saved model.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        id: String,
    },
    /// Run the study service.
    Serve {
        #[arg(long)]
        models: PathBuf,
        /// Study configuration file; repeatable.
        #[arg(long = "study")]
        studies: Vec<PathBuf>,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Send simulated participants through a running service.
    Simulate {
        #[arg(long)]
        url: String,
        #[arg(long)]
        study: String,
        #[arg(long, default_value = "coordinate_ascent")]
        agent: AgentKind,
        #[arg(long, default_value_t = 3)]
        sessions: usize,
        #[arg(long, default_value = "agent")]
        token_prefix: String,
        #[arg(long, default_value_t = 60)]
        budget: usize,
    },
    /// Download a study's config, index and logs, plus its tables.
    Export {
        #[arg(long)]
        url: String,
        #[arg(long)]
        study: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the study table from an export directory.
    Analyze {
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Validate a stage log against its model and print per-question outcomes.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        models: PathBuf,
    },
    /// Offline agent study over saved models, one arm per model.
    Agents {
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ids: Vec<String>,
        #[arg(long, default_value = "coordinate_ascent")]
        agent: AgentKind,
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        #[arg(long, default_value_t = 60)]
        budget: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn print_table(t: &StudyTable, format: Format) -> Result<(), StudyError> {
    let text = match format {
        Format::Csv => t.to_csv()?,
        Format::LongCsv => t.to_long_csv()?,
        Format::Json => t.to_json()?,
    };
    print!("{text}");
    Ok(())
}

fn budget(max_actions: usize) -> AgentBudget {
    AgentBudget {
        max_actions,
        ..AgentBudget::default()
    }
}

fn write_tables(dir: &Path, t: &StudyTable) -> Result<(), StudyError> {
    std::fs::write(dir.join("table.csv"), t.to_csv()?)?;
    std::fs::write(dir.join("table.json"), t.to_json()?)?;
    std::fs::write(dir.join("long.csv"), t.to_long_csv()?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Train {
            data,
            family,
            seed,
            iterations,
            id,
            out,
        } => {
            let split = data.load()?;
            let mut cfg = LossConfig::for_dataset(split.kind, family).with_seed(seed);
            if let Some(n) = iterations {
                cfg = cfg.with_iterations(n);
            }
            let (model, history) = train(&split, &cfg)?;
            let id = id.unwrap_or_else(|| match family {
                Family::Gt => format!("gt-{}", split.kind),
                _ => format!("{}-{}-s{seed}", family.as_str(), split.kind),
            });
            let model = model.with_id(id);
            let spec = representation_spec(&model, &split.heldout)?;
            let manifest = save_model(&out, &model, spec)?;
            let mse = model.reconstruction_error(&split.heldout)?;
            println!(
                "{}",
                serde_json::json!({ "id": manifest.id, "heldout_mse": mse, "iterations": history.losses.len() })
            );
        }
        Command::Evaluate { data, models, id } => {
            let split = data.load()?;
            let (model, _) = load_model(&models, &id)?;
            let mse = model.reconstruction_error(&split.heldout)?;
            let mut out = serde_json::json!({ "id": id, "heldout_mse": mse });
            if split.has_factors() {
                let m = code_factor_matrix(&model, &split.heldout)?;
                let r = evaluate(&id, &m, DEFAULT_BINS, &BoostingConfig::default())?;
                out["mig"] = r.mig.into();
                out["dci"] = r.dci.into();
                out["warnings"] = serde_json::to_value(&r.warnings)?;
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Serve {
            models,
            studies,
            store,
            addr,
        } => {
            let registry = Registry::from_dir(&models)?;
            let studies = studies
                .iter()
                .map(|p| StudyConfig::from_file(p))
                .collect::<Result<Vec<_>, _>>()?;
            if studies.is_empty() {
                tracing::warn!("no study loaded; /manifest answers 503");
            }
            let state = AppState::new(registry, studies, Store::open(&store)?)?;
            tokio::runtime::Runtime::new()?.block_on(serve(state, addr))?;
        }
        Command::Simulate {
            url,
            study,
            agent,
            sessions,
            token_prefix,
            budget: actions,
        } => {
            let client = Client::new(url)?;
            for i in 0..sessions {
                let rec = simulate_session(&client, &study, &format!("{token_prefix}-{i}"), agent, &budget(actions))?;
                println!("{} {} {}", rec.session_id, rec.condition, rec.participant);
            }
        }
        Command::Export { url, study, out } => {
            let res = Client::new(url)?.results(&study)?;
            res.bundle.write_dir(&out)?;
            write_tables(&out, &res.table)?;
            println!("{} logs from {} sessions written to {}", res.bundle.logs.len(), res.bundle.sessions.len(), out.display());
        }
        Command::Analyze { export, models, format } => {
            let bundle = Bundle::read_dir(&export)?;
            let table = bundle.table(&Registry::from_dir(&models)?)?;
            print_table(&table, format)?;
        }
        Command::Replay { log, models } => {
            let log = EventLog::from_jsonl(&std::fs::read_to_string(log)?)?;
            let (model, _) = load_model(&models, &log.header.model_id)?;
            for o in replay(&log, &model)?.outcomes {
                println!("{}", serde_json::to_string(&o)?);
            }
        }
        Command::Agents {
            models,
            ids,
            agent,
            seeds,
            budget: actions,
            format,
        } => {
            let loaded = ids
                .iter()
                .map(|id| load_model(&models, id))
                .collect::<Result<Vec<_>, _>>()?;
            let dataset = loaded[0].0.dataset;
            if loaded.iter().any(|(m, _)| m.dataset != dataset) {
                return Err("all models of an agent study must share a dataset".into());
            }
            let arms: Vec<StudyArm<_>> = loaded
                .iter()
                .map(|(m, man)| StudyArm {
                    condition: man.id.clone(),
                    decoder: m,
                    spec: &man.spec,
                })
                .collect();
            let seeds: Vec<u64> = (0..seeds).collect();
            let study = agent_study(&arms, agent, &TaskParams::for_dataset(dataset), &budget(actions), &seeds)?;
            print_table(&study.table, format)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

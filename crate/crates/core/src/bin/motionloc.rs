use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use motionloc::datagen::{generate_corpus, load_corpus, save_corpus, Corpus, CorpusSpec};
use motionloc::motiongraph::{build_graph, write_adjacency_csv, GraphMode, Projections};
use motionloc::network::load_checkpoint;
use motionloc::objective::{loss_surface, open_unit_grid, write_surface_csv};
use motionloc::runner::{
    ablate, default_output_root, evaluate, save_evaluation, save_training, train, AblationMatrix, ExperimentConfig,
};
use motionloc::{Error, Result};

/// Motion-guided temporal action localization on synthetic two-stream videos.
#[derive(Parser)]
#[command(name = "motionloc", version)]
struct Cli {
    /// Root seed (corpus seed for `generate`, training seed otherwise).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path; defaults under $MOTIONLOC_OUT (or ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment config JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<ExperimentConfig> {
        match &self.config {
            Some(p) => ExperimentConfig::load(p),
            None => Ok(ExperimentConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus directory.
    Generate {
        /// Corpus spec JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint plus loss curve.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Existing corpus directory; generated from the config otherwise.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Run an ablation matrix (defaults to the loss and graph tables).
    Ablate {
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Override the epoch count of every cell.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Tabulate the motion-guided loss over an (p, mu) grid.
    LossSurface {
        #[arg(long, default_value_t = 50)]
        grid: usize,
    },
    /// Write one video's guidance adjacency as CSV.
    DumpGraph {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Video id, e.g. `test-0003`.
        #[arg(long)]
        video: String,
        /// Overrides the graph mode of the config.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<GraphMode>,
        /// Use the projections stored in this checkpoint instead of identity.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<GraphMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown graph mode {s:?} (sparse, dense, mlp)"))
}

fn out_or(out: &Option<PathBuf>, default: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| default_output_root().join(default))
}

fn corpus_for(cfg: &ExperimentConfig, dir: &Option<PathBuf>) -> Result<Corpus> {
    match dir {
        Some(d) => load_corpus(d),
        None => generate_corpus(&cfg.corpus),
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { spec } => {
            let mut spec: CorpusSpec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                    serde_json::from_str(&text)?
                }
                None => CorpusSpec::default(),
            };
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let out = out_or(&cli.out, "corpus");
            let corpus = generate_corpus(&spec)?;
            save_corpus(&out, &corpus)?;
            println!("wrote {} videos to {}", corpus.train.len() + corpus.test.len(), out.display());
        }
        Command::Train {
            config,
            corpus,
            epochs,
            lr,
        } => {
            let mut cfg = config.load()?;
            if let Some(seed) = cli.seed {
                cfg.training.seed = seed;
            }
            if let Some(e) = epochs {
                cfg.training.epochs = e;
            }
            if let Some(lr) = lr {
                cfg.training.learning_rate = lr;
            }
            let corpus = corpus_for(&cfg, &corpus)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.resolved_output_dir().join("train"));
            let outcome = train(&cfg, &corpus)?;
            save_training(&out, &cfg, &outcome)?;
            if let Some((epoch, loss)) = outcome.loss_curve.last() {
                println!("epoch {epoch}: mean loss {loss:.6}");
            }
            println!("checkpoint written to {}", out.join("checkpoint").display());
        }
        Command::Eval {
            config,
            checkpoint,
            corpus,
        } => {
            let cfg = config.load()?;
            let (params, net) = load_checkpoint(&checkpoint)?;
            let corpus = corpus_for(&cfg, &corpus)?;
            let eval = evaluate(&params, &net, &corpus.test, &cfg)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.resolved_output_dir().join("eval"));
            save_evaluation(&out, &eval)?;
            println!("{}", eval.report.to_json()?);
        }
        Command::Ablate { matrix, epochs } => {
            let mut matrix = match matrix {
                Some(p) => AblationMatrix::load(p)?,
                None => AblationMatrix::standard(ExperimentConfig::default()),
            };
            if let Some(seed) = cli.seed {
                matrix.base.training.seed = seed;
            }
            if let Some(e) = epochs {
                matrix.base.training.epochs = e;
            }
            let out = out_or(&cli.out, "ablation");
            let results = ablate(&matrix, Some(&out))?;
            let failed = results.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} cells, {failed} failed; tables in {}", results.len(), out.display());
        }
        Command::LossSurface { grid } => {
            if grid == 0 {
                return Err(Error::Config("--grid must be >= 1".into()));
            }
            let axis = open_unit_grid(grid);
            let points = loss_surface(&axis, &axis)?;
            let out = out_or(&cli.out, "surface.csv");
            ensure_parent(&out)?;
            write_surface_csv(&out, &points)?;
            println!("wrote {} points to {}", points.len(), out.display());
        }
        Command::DumpGraph {
            config,
            corpus,
            video,
            mode,
            checkpoint,
        } => {
            let mut cfg = config.load()?;
            if let Some(m) = mode {
                cfg.graph.mode = m;
            }
            let corpus = corpus_for(&cfg, &corpus)?;
            let v = corpus
                .videos()
                .find(|v| v.id == video)
                .ok_or_else(|| Error::Config(format!("no video with id {video}")))?;
            let proj = match checkpoint {
                Some(dir) => load_checkpoint(dir)?.0.projections,
                None => Projections::identity(v.feature_dim()),
            };
            let features = cfg.guidance.select(v)?;
            let graph = build_graph(&features, &proj, &cfg.graph)?;
            let out = out_or(&cli.out, &format!("{video}_adjacency.csv"));
            ensure_parent(&out)?;
            write_adjacency_csv(&out, &graph.adjacency)?;
            println!(
                "{} positional and {} semantic edges; adjacency written to {}",
                graph.pos_edges.len(),
                graph.smt_edges.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

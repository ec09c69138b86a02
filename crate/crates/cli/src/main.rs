use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use lrqa_core::annotation::{AnnotationStore, KappaMode};
use lrqa_core::assembly::{self, Check};
use lrqa_core::benchmark::format_accuracy;
use lrqa_core::par::Exec;
use lrqa_core::pipeline::{Pipeline, PipelineError, RunConfig, Stage, DIVERSITY_JSON};

/// Exit status for command-line usage errors.
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "lrqa", version, about = "Build and evaluate synthetic multiple-choice QA datasets")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "SYNDARIN_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured workspace directory.
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    /// Run even if upstream files changed since they were recorded.
    #[arg(long, global = true)]
    force: bool,
    /// Process items one at a time.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the first members of a wiki category, one title per line.
    SampleTitles {
        #[arg(long)]
        category: String,
        #[arg(long, default_value_t = 100)]
        limit: usize,
    },
    /// Fetch and gate parallel paragraphs.
    Mine,
    /// Generate English QA items.
    Generate,
    /// Translate generated items.
    Translate,
    /// Score translations and keep those passing both gates.
    Validate,
    /// Balance answer positions and write the train/test split.
    Assemble,
    #[command(subcommand)]
    Report(ReportCmd),
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Register the annotation batch and serve the annotation API.
    AnnotateServe {
        /// Address to bind; defaults to the configured one.
        #[arg(long)]
        bind: Option<SocketAddr>,
    },
    /// Print the agreement report of the configured batch.
    AnnotateReport {
        #[arg(long, value_parser = parse_mode)]
        mode: Option<KappaMode>,
    },
    #[command(subcommand)]
    Dataset(DatasetCmd),
    /// Run mine through report.
    RunAll,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Question-type frequency table.
    Diversity {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Evaluate one configured model.
    Run {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the three bias-probe variants of the split.
    Probes,
    /// Score a predictions JSONL file against the test split.
    Score { predictions: PathBuf },
    /// Every configured model at every shot count, plus probes.
    All,
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Re-check hashes and invariants of an emitted dataset.
    Verify {
        /// Dataset directory; defaults to the workspace dataset plus its stage manifest.
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<KappaMode, String> {
    match s {
        "five_way" | "five-way" => Ok(KappaMode::FiveWay),
        "binary" => Ok(KappaMode::Binary),
        _ => Err(format!("unknown kappa mode {s:?} (five_way or binary)")),
    }
}

fn pipeline(cli: &Cli) -> Result<Pipeline, PipelineError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| PipelineError::ConfigInvalid("no config given (use --config or SYNDARIN_CONFIG)".into()))?;
    let mut cfg = RunConfig::load(path).map_err(PipelineError::ConfigInvalid)?;
    if let Some(w) = &cli.workspace {
        cfg.rebase_workspace(w);
    }
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    Ok(Pipeline::new(cfg, exec).force(cli.force))
}

fn print_lines(stage: Stage, lines: &[String]) {
    for l in lines {
        println!("{stage}: {l}");
    }
}

fn print_checks(checks: &[Check]) -> Result<(), PipelineError> {
    for c in checks {
        println!("{} {} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(PipelineError::VerifyFailed(failed.join(", ")))
    }
}

fn run_stage(cli: &Cli, stage: Stage) -> Result<(), PipelineError> {
    let s = pipeline(cli)?.run(stage)?;
    print_lines(s.stage, &s.lines);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::SampleTitles { category, limit } => {
            for t in pipeline(cli)?.sample_titles(category, *limit)? {
                println!("{t}");
            }
            Ok(())
        }
        Command::Mine => run_stage(cli, Stage::Mine),
        Command::Generate => run_stage(cli, Stage::Generate),
        Command::Translate => run_stage(cli, Stage::Translate),
        Command::Validate => run_stage(cli, Stage::Validate),
        Command::Assemble => run_stage(cli, Stage::Assemble),
        Command::Report(ReportCmd::Diversity { json }) => {
            let p = pipeline(cli)?;
            let s = p.run(Stage::Report)?;
            if *json {
                let text = std::fs::read_to_string(p.workspace().join(DIVERSITY_JSON)).map_err(|e| PipelineError::Other(e.to_string()))?;
                println!("{text}");
            } else {
                println!("{}", s.lines.join("\n"));
            }
            Ok(())
        }
        Command::Bench(cmd) => {
            let p = pipeline(cli)?;
            match cmd {
                BenchCmd::Run { model, shots, seed } => {
                    let r = p.bench_run(model, *shots, *seed)?;
                    println!(
                        "{model} k={shots}: {} ({}/{}, {} unparseable, {} provider failures)",
                        format_accuracy(r.accuracy),
                        r.correct,
                        r.total,
                        r.unparseable_count,
                        r.provider_failures
                    );
                }
                BenchCmd::Probes => p.bench_probes()?.iter().for_each(|f| println!("{f}")),
                BenchCmd::Score { predictions } => {
                    let s = p.bench_score(predictions)?;
                    println!("{} ({}/{}, {} unparseable)", format_accuracy(s.accuracy), s.correct, s.total, s.unparseable);
                }
                BenchCmd::All => print_lines(Stage::Bench, &p.run(Stage::Bench)?.lines),
            }
            Ok(())
        }
        Command::AnnotateServe { bind } => {
            let p = pipeline(cli)?;
            let tasks = p.prepare_annotation()?;
            let a = &p.config().annotation;
            let addr: SocketAddr = match bind {
                Some(b) => *b,
                None => a.bind.parse().map_err(|e| PipelineError::ConfigInvalid(format!("annotation.bind {:?}: {e}", a.bind)))?,
            };
            let store = AnnotationStore::open(&a.data_dir).map_err(|e| PipelineError::Other(e.to_string()))?;
            println!("batch {} with {} tasks; serving on http://{addr}", a.batch_id, tasks.len());
            let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Other(e.to_string()))?;
            rt.block_on(lrqa_annotate::serve(Arc::new(store), a.kappa_mode, addr)).map_err(|e| PipelineError::Other(e.to_string()))
        }
        Command::AnnotateReport { mode } => {
            let p = pipeline(cli)?;
            let a = &p.config().annotation;
            let store = AnnotationStore::open(&a.data_dir).map_err(|e| PipelineError::Other(e.to_string()))?;
            let report = store.report(&a.batch_id, mode.unwrap_or(a.kappa_mode)).map_err(|e| PipelineError::Other(e.to_string()))?;
            println!("kappa ({:?}): {:.3}", report.kappa_mode, report.kappa);
            println!("flagged unanswerable rate: {:.3}", report.flagged_unanswerable_rate);
            println!("kept correct rate: {:.3}", report.kept_correct_rate);
            println!("{}", report.reason_breakdown.to_text());
            Ok(())
        }
        Command::Dataset(DatasetCmd::Verify { dir: Some(dir) }) => print_checks(&assembly::verify_dataset(dir)?),
        Command::Dataset(DatasetCmd::Verify { dir: None }) => print_checks(&pipeline(cli)?.verify()?),
        Command::RunAll => {
            for s in pipeline(cli)?.run_all()? {
                print_lines(s.stage, &s.lines);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

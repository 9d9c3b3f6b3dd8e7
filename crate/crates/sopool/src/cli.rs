//! The `sopool` command line.
//!
//! Subcommands: `train` (cross-validated training on a TUDataset directory),
//! `gradcheck` (finite-difference verification of the autodiff engine),
//! `distinguish` (pooling collision fixtures and multiset sweeps), `params`
//! (classifier parameter-count table), and `inspect-data` (dataset summary).
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 data error, 4 numeric divergence. Given identical flags (including
//! `--seed`), stdout is byte-stable; diagnostics go to stderr.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::autograd::gradcheck;
use crate::data::{build_features, default_feature_mode, load_dataset, parse_tu_dataset};
use crate::distinguish;
use crate::error::{Error, Result};
use crate::layers::GnnVariant;
use crate::pooling::{count_classifier_params, PoolKind};
use crate::trainer::{persist_result, result_csv, train_cv, EpochSelect, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "sopool",
    version,
    about = "Second-order graph pooling: training, verification, and inspection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train with 10-fold cross-validation and print the mean±std row.
    Train(TrainArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
    /// Reproduce the pooling collision fixtures or sweep multiset pairs.
    Distinguish(DistinguishArgs),
    /// Print the pooling + classifier parameter-count table.
    Params(ParamsArgs),
    /// Summarize a TUDataset directory.
    InspectData(InspectArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset name (directory <dataset-dir>/<DATASET> with <DATASET>_*.txt files).
    #[arg(long)]
    dataset: String,
    /// Root directory holding dataset folders; defaults to $SOPOOL_DATA_DIR or "data".
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
    /// GNN variant: gin0, gin-eps, sum-1-layer, mean-mlp, gcn, max-mlp, sage.
    #[arg(long, default_value = "gin0")]
    gnn: String,
    /// Pooling: sum, avg, max, sopool, sopool-bimap, sopool-attn,
    /// sopool-mattn, covpool, attnpool, or auto (sum with node labels, avg otherwise).
    #[arg(long, default_value = "auto")]
    pool: String,
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Reduced dimension f' for sopool-bimap / covpool.
    #[arg(long)]
    fprime: Option<usize>,
    /// Number of hierarchical blocks; selects the hierarchical model.
    #[arg(long)]
    blocks: Option<usize>,
    /// Pooled nodes per hierarchical block (default halves the average size per block).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Epoch selection rule: mean or per-fold.
    #[arg(long, default_value = "mean")]
    epoch_select: String,
    /// Base path for results; writes <out>.json and <out>.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cap on parallel fold workers (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Seeds per check.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
}

#[derive(Args)]
struct DistinguishArgs {
    /// Run the repeated-representation fixture table.
    #[arg(long)]
    figure2: bool,
    /// Run the exhaustive multiset sweep.
    #[arg(long)]
    sweep: bool,
    /// Largest multiset size in the sweep.
    #[arg(long, default_value_t = 3)]
    max_n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write the sweep CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ParamsArgs {
    /// Node representation width f.
    #[arg(long, default_value_t = 160)]
    f: u64,
    /// Reduced dimension f'.
    #[arg(long, default_value_t = 32)]
    fprime: u64,
    /// Number of classes; defaults to 2 with a note.
    #[arg(long)]
    c: Option<u64>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    dataset_dir: Option<PathBuf>,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Label { .. }
        | Error::Budget(_)
        | Error::Shape { .. }
        | Error::Contract(_)
        | Error::DegenerateBatch(_)
        | Error::EmptyInput(_) => 2,
        Error::Parse { .. }
        | Error::Integrity(_)
        | Error::Io { .. }
        | Error::Stratification { .. }
        | Error::Schema { .. } => 3,
        Error::Divergence(_) => 4,
    }
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Distinguish(args) => cmd_distinguish(args),
        Command::Params(args) => cmd_params(args),
        Command::InspectData(args) => cmd_inspect(args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

fn data_dir(cli_value: Option<PathBuf>) -> PathBuf {
    cli_value
        .or_else(|| std::env::var_os("SOPOOL_DATA_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        // ignore the error if a pool already exists (tests, repeated calls)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    let dir = data_dir(args.dataset_dir).join(&args.dataset);
    if !dir.is_dir() {
        return Err(Error::Parse {
            file: dir.display().to_string(),
            reason: "dataset directory does not exist".into(),
        });
    }
    let dataset = load_dataset(&dir, &args.dataset, None)?;

    let gnn = GnnVariant::from_str(&args.gnn)?;
    let pool = match args.pool.as_str() {
        // summation for label-carrying (bioinformatics) datasets, averaging otherwise
        "auto" => {
            if dataset.feature_mode == crate::data::FeatureMode::NodeLabelOneHot {
                PoolKind::Sum
            } else {
                PoolKind::Avg
            }
        }
        other => PoolKind::from_str(other)?,
    };

    let mut config = ExperimentConfig::new(&args.dataset, gnn, pool);
    config.hidden = args.hidden;
    config.batch_size = args.batch;
    config.reduced_dim = args.fprime;
    config.blocks = args.blocks;
    config.head_count = args.k;
    config.epochs = args.epochs;
    config.seed = args.seed;
    config.epoch_select = EpochSelect::from_str(&args.epoch_select)?;
    // CLI values are explicit overrides of the tuning grid
    config.allow_off_grid = true;
    config.validate()?;

    eprintln!(
        "training {} on {} ({} graphs, {} classes, features {})",
        config.model_name(),
        dataset.name,
        dataset.len(),
        dataset.num_classes,
        dataset.feature_mode
    );
    let (result, _trace) = train_cv(&config, &dataset)?;
    println!("{}", result.summary_line());

    if let Some(out) = args.out {
        let json_path = out.with_extension("json");
        let csv_path = out.with_extension("csv");
        persist_result(&result, &json_path)?;
        std::fs::write(&csv_path, result_csv(&result))
            .map_err(|e| Error::io(csv_path.display().to_string(), e))?;
        eprintln!("wrote {} and {}", json_path.display(), csv_path.display());
    }
    Ok(0)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<i32> {
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()));
    }
    let outcomes = gradcheck::run_suite(args.seeds, gradcheck::DEFAULT_TOLERANCE, None)?;
    for o in &outcomes {
        println!(
            "{:<20} worst rel err {:>12.3e}  {}",
            o.name,
            o.worst_rel_err,
            if o.pass { "pass" } else { "FAIL" }
        );
    }
    let worst = outcomes
        .iter()
        .max_by(|a, b| {
            a.worst_rel_err
                .partial_cmp(&b.worst_rel_err)
                .expect("finite")
        })
        .expect("non-empty suite");
    println!(
        "worst offender: {} at {:.3e}",
        worst.name, worst.worst_rel_err
    );
    Ok(if outcomes.iter().all(|o| o.pass) {
        0
    } else {
        1
    })
}

fn cmd_distinguish(args: DistinguishArgs) -> Result<i32> {
    if !args.figure2 && !args.sweep {
        return Err(Error::Config(
            "pass --figure2 and/or --sweep to select a distinguish mode".into(),
        ));
    }
    let mut failed = false;

    if args.figure2 {
        println!("pooling       verdict        expected       distance");
        for (report, expected) in distinguish::fixture_reports(args.seed)? {
            let ok = report.verdict == expected;
            failed |= !ok;
            println!(
                "{:<13} {:<14} {:<14} {:.3e}{}",
                report.pooling.to_string(),
                report.verdict.to_string(),
                expected.to_string(),
                report.distance,
                if ok { "" } else { "  MISMATCH" }
            );
        }
    }

    if args.sweep {
        let alphabet = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let reports = distinguish::sweep_multisets(
            &alphabet,
            args.max_n,
            &PoolKind::ALL,
            args.seed,
            distinguish::FIXTURE_TOLERANCE,
        )?;
        let csv = distinguish::reports_to_csv(&reports);
        match &args.out {
            Some(path) => {
                std::fs::write(path, csv).map_err(|e| Error::io(path.display().to_string(), e))?;
                eprintln!(
                    "wrote {} collision rows to {}",
                    reports.len(),
                    path.display()
                );
            }
            None => print!("{csv}"),
        }
    }

    Ok(if failed { 1 } else { 0 })
}

fn cmd_params(args: ParamsArgs) -> Result<i32> {
    if args.f == 0 || args.fprime == 0 {
        return Err(Error::Config("dimensions must be positive".into()));
    }
    let classes = match args.c {
        Some(0) => return Err(Error::Config("c must be positive".into())),
        Some(c) => c,
        None => {
            println!("note: --c not given, defaulting to 2 classes");
            2
        }
    };
    println!(
        "pooling + 1-layer classifier parameters (f={}, f'={}, c={})",
        args.f, args.fprime, classes
    );
    let rows = [
        (
            "sopool (flatten)",
            count_classifier_params(PoolKind::Sopool, args.f, None, classes),
        ),
        (
            "sopool_bimap",
            count_classifier_params(PoolKind::SopoolBimap, args.f, Some(args.fprime), classes),
        ),
        (
            "sopool_attn",
            count_classifier_params(PoolKind::SopoolAttn, args.f, None, classes),
        ),
    ];
    for (name, count) in rows {
        println!(
            "{:<18} {:>12}",
            name,
            count.expect("counts defined for these kinds")
        );
    }
    Ok(0)
}

fn cmd_inspect(args: InspectArgs) -> Result<i32> {
    let dir = data_dir(args.dataset_dir).join(&args.dataset);
    if !dir.is_dir() {
        return Err(Error::Parse {
            file: dir.display().to_string(),
            reason: "dataset directory does not exist".into(),
        });
    }
    let raw = parse_tu_dataset(&dir, &args.dataset)?;
    let mode = default_feature_mode(&raw);
    let dataset = build_features(&raw, mode)?;
    let max_nodes = dataset
        .graphs
        .iter()
        .map(|g| g.node_count)
        .max()
        .unwrap_or(0);
    let edge_total: usize = dataset.graphs.iter().map(|g| g.edges.len()).sum();
    println!("dataset        {}", dataset.name);
    println!("graphs         {}", dataset.len());
    println!("classes        {}", dataset.num_classes);
    println!("nodes (avg)    {:.2}", dataset.average_node_count());
    println!("nodes (max)    {max_nodes}");
    println!("edges (total)  {edge_total}");
    println!(
        "features       {} (dim {})",
        dataset.feature_mode, dataset.feature_dim
    );
    Ok(0)
}

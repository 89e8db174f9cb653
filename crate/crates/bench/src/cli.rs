//! Command-line front end: run or resume campaigns, render tables, compare
//! method slices, and inspect the hardware descriptor.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use crate::campaign::run_campaign;
use crate::config::CampaignConfig;
use crate::hardware::{capture_hardware, HardwareOverrides};
use crate::store::{compare_methods, Metric, ResultStore, Selector};
use crate::tables::{emit_table, write_table, TableFormat, TableKind};

#[derive(Debug, Parser)]
#[command(
    name = "flowbench",
    version,
    about = "Systematic assessment campaigns for flow-based intrusion detectors"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a campaign from a config file, or resume an interrupted one.
    Run {
        /// Campaign configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Store directory of an interrupted run to continue.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured worker pool size.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Render one result table from a finished store.
    Report {
        /// Store directory holding the campaign records.
        #[arg(long)]
        store: PathBuf,
        #[arg(long, value_enum)]
        table: TableKindArg,
        #[arg(long, value_enum)]
        format: FormatArg,
    },
    /// Compare one metric between two record selections (Welch test).
    Compare {
        /// Store directory holding the campaign records.
        #[arg(long)]
        store: PathBuf,
        /// First selection, e.g. "pipeline=bmd,algorithm=hgb,scenario=closed".
        #[arg(long)]
        a: String,
        /// Second selection, same syntax.
        #[arg(long)]
        b: String,
        #[arg(long, value_enum)]
        metric: MetricArg,
        /// Significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Print the hardware descriptor a campaign would record here.
    Hardware {
        /// Override a probed field, e.g. --set "cpu_model_exact=Intel Core i5-12600KF".
        #[arg(long = "set", value_name = "FIELD=VALUE")]
        set: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableKindArg {
    #[value(name = "baseline")]
    Baseline,
    #[value(name = "open_world")]
    OpenWorld,
    #[value(name = "multiclass")]
    Multiclass,
    #[value(name = "train_runtime")]
    TrainRuntime,
    #[value(name = "test_runtime")]
    TestRuntime,
}

impl From<TableKindArg> for TableKind {
    fn from(a: TableKindArg) -> TableKind {
        match a {
            TableKindArg::Baseline => TableKind::Baseline,
            TableKindArg::OpenWorld => TableKind::OpenWorld,
            TableKindArg::Multiclass => TableKind::Multiclass,
            TableKindArg::TrainRuntime => TableKind::TrainRuntime,
            TableKindArg::TestRuntime => TableKind::TestRuntime,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Md,
}

impl From<FormatArg> for TableFormat {
    fn from(a: FormatArg) -> TableFormat {
        match a {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Md => TableFormat::Markdown,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricArg {
    Tpr,
    Fpr,
    Acc,
}

impl From<MetricArg> for Metric {
    fn from(a: MetricArg) -> Metric {
        match a {
            MetricArg::Tpr => Metric::Tpr,
            MetricArg::Fpr => Metric::Fpr,
            MetricArg::Acc => Metric::Acc,
        }
    }
}

pub fn run() -> anyhow::Result<()> {
    execute(Cli::parse())
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, resume, seed, workers } => {
            cmd_run(&config, resume.as_deref(), seed, workers)
        }
        Command::Report { store, table, format } => cmd_report(&store, table.into(), format.into()),
        Command::Compare { store, a, b, metric, alpha } => {
            cmd_compare(&store, &a, &b, metric.into(), alpha)
        }
        Command::Hardware { set } => cmd_hardware(&set),
    }
}

fn cmd_run(
    config_path: &Path,
    resume: Option<&Path>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let mut config = CampaignConfig::load(config_path)
        .with_context(|| format!("reading campaign config {config_path:?}"))?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    if let Some(workers) = workers {
        config.worker_pool_size = workers;
    }

    let summary = run_campaign(&config, resume)?;
    println!(
        "campaign complete: {executed} trial(s) executed, {resumed} resumed, {records} records \
         ({skipped} skipped) in {wall:.1}s",
        executed = summary.executed_trials,
        resumed = summary.resumed_trials,
        records = summary.records,
        skipped = summary.skipped_records,
        wall = summary.wall_seconds,
    );
    println!("store: {}", summary.store_dir.display());
    println!("content hash: {}", summary.manifest.content_hash);
    Ok(())
}

fn cmd_report(store_dir: &Path, kind: TableKind, format: TableFormat) -> anyhow::Result<()> {
    let store = ResultStore::open(store_dir)?;
    print!("{}", emit_table(&store, kind, format));
    let path = write_table(&store, kind, format)?;
    eprintln!("written to {}", path.display());
    Ok(())
}

fn cmd_compare(store_dir: &Path, a: &str, b: &str, metric: Metric, alpha: f64) -> anyhow::Result<()> {
    let store = ResultStore::open(store_dir)?;
    let sel_a = Selector::parse(a)?;
    let sel_b = Selector::parse(b)?;
    let result = compare_methods(&store, &sel_a, &sel_b, metric, alpha)?;
    let verdict = match result.verdict {
        flowbench_core::stats::Verdict::ABetter => format!("A ({a}) scores higher"),
        flowbench_core::stats::Verdict::BBetter => format!("B ({b}) scores higher"),
        flowbench_core::stats::Verdict::Inconclusive => "no significant difference".to_string(),
    };
    println!(
        "welch t = {t:.4}, df = {df:.2}, p = {p:.6}, alpha = {alpha}",
        t = result.t_statistic,
        df = result.degrees_of_freedom,
        p = result.p_value,
    );
    println!("verdict on {}: {}", metric.name(), verdict);
    Ok(())
}

fn cmd_hardware(assignments: &[String]) -> anyhow::Result<()> {
    let mut overrides = HardwareOverrides::default();
    for assignment in assignments {
        overrides.apply_assignment(assignment)?;
    }
    let descriptor = capture_hardware(&overrides)?;
    print!("{}", toml::to_string(&descriptor).expect("descriptor serializes"));
    Ok(())
}

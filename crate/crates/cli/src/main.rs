//! `chimera`: command line driver for the coherence pipeline.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chimera_core::market_data::{FactorBlock, MarketModel, PanelLayout, Population};
use chimera_core::pipeline::{self, PipelineConfig, StageRecord};
use chimera_core::{Error, ErrorClass, Result};
use chrono::NaiveDate;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "chimera",
    version,
    about = "Coherent and incoherent stock groups from coupled phase oscillators"
)]
struct Cli {
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load a price file and write the canonical price table.
    Ingest(PipelineArgs),
    /// Write a seeded synthetic factor-model price panel.
    Synth(SynthArgs),
    /// Build per-window coupling matrices and simulate each window.
    Simulate(PipelineArgs),
    /// Find the coherent set of every window; write χ and the size series.
    Detect(PipelineArgs),
    /// Embed coherence histories and split stocks into low, middle and high groups.
    Cluster(PipelineArgs),
    /// Render the coherent-size series, group summary and sector table.
    Report(PipelineArgs),
    /// Run every stage in order.
    Run(PipelineArgs),
    /// Print the effective configuration as TOML.
    Config(PipelineArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LayoutArg {
    Auto,
    Long,
    Wide,
}

impl From<LayoutArg> for PanelLayout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Auto => PanelLayout::Auto,
            LayoutArg::Long => PanelLayout::Long,
            LayoutArg::Wide => PanelLayout::Wide,
        }
    }
}

/// Flags mirror the configuration file keys; flags win over the file.
#[derive(Debug, Args)]
struct PipelineArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long)]
    start_date: Option<NaiveDate>,
    #[arg(long)]
    end_date: Option<NaiveDate>,
    /// Window width in return days.
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    step: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    transient_steps: Option<usize>,
    #[arg(long)]
    measure_steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    neighbor_k: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// First window position used for clustering.
    #[arg(long)]
    window_start: Option<usize>,
    /// One past the last window position used for clustering.
    #[arg(long)]
    window_end: Option<usize>,
    /// CSV of ticker,sector[,classification].
    #[arg(long)]
    sectors: Option<PathBuf>,
    #[arg(long)]
    histogram_bins: Option<usize>,
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Worker threads for per-window work (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    dump_matrices: Option<bool>,
    /// Keep per-window summaries that are already on disk.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    resume: Option<bool>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone().into();
                }
            )*};
        }
        set!(
            width, step, omega, alpha, dt, transient_steps, measure_steps, seed, epsilon,
            neighbor_k, clusters, restarts, histogram_bins, threads, dump_matrices, resume
        );
        if let Some(l) = self.layout {
            c.layout = l.into();
        }
        if let Some(o) = &self.output_dir {
            c.output_dir = o.clone();
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    c.$field = self.$field.clone();
                }
            )*};
        }
        set_opt!(input, start_date, end_date, window_start, window_end, sectors);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Factor block `SIZE:LOADING`, or `SIZE:LOADING:DAY:LOADING` to switch loading on return day DAY.
    #[arg(long = "block", value_parser = parse_block, default_value = "20:0.85")]
    blocks: Vec<FactorBlock>,
    /// Independent noise stocks.
    #[arg(long, default_value_t = 30)]
    noise: usize,
    /// Number of price dates.
    #[arg(long, default_value_t = 500)]
    days: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Give every block its own factor instead of one shared market factor.
    #[arg(long)]
    separate_factors: bool,
    /// Output price file (wide layout).
    #[arg(long)]
    out: PathBuf,
    /// Also write the generator population of every ticker.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Also write a sector map with one sector per population.
    #[arg(long)]
    sector_map: Option<PathBuf>,
}

fn parse_block(spec: &str) -> std::result::Result<FactorBlock, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    let size = |s: &str| s.parse::<usize>().map_err(|_| format!("bad size {s:?}"));
    let loading = |s: &str| s.parse::<f64>().map_err(|_| format!("bad loading {s:?}"));
    match parts.as_slice() {
        [n, l] => Ok(FactorBlock::new(size(n)?, loading(l)?)),
        [n, l, day, after] => Ok(FactorBlock::new(size(n)?, loading(l)?)
            .with_switch(size(day)?, loading(after)?)),
        _ => Err("expected SIZE:LOADING or SIZE:LOADING:DAY:LOADING".into()),
    }
}

fn population_name(p: Population) -> String {
    match p {
        Population::Block(b) => format!("block{b}"),
        Population::Noise => "noise".into(),
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let blocks = args
        .blocks
        .iter()
        .enumerate()
        .map(|(b, block)| {
            if args.separate_factors {
                block.on_factor(b)
            } else {
                *block
            }
        })
        .collect();
    let model = MarketModel {
        blocks,
        n_noise: args.noise,
        days: args.days,
        seed: args.seed,
    };
    let panel = model.generate()?;
    panel.write_wide_csv(&args.out)?;
    let rows: Vec<(String, String)> = model
        .tickers()
        .into_iter()
        .zip(model.populations().into_iter().map(population_name))
        .collect();
    let write_pairs = |path: &PathBuf, header: &str| -> Result<()> {
        let mut text = format!("{header}\n");
        for (t, p) in &rows {
            text.push_str(&format!("{t},{p}\n"));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    };
    if let Some(path) = &args.truth {
        write_pairs(path, "ticker,population")?;
    }
    if let Some(path) = &args.sector_map {
        write_pairs(path, "ticker,sector")?;
    }
    log::info!(
        "wrote {} tickers over {} dates to {}",
        panel.n_tickers(),
        panel.n_dates(),
        args.out.display()
    );
    Ok(())
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_record(record: &StageRecord) {
    for (artifact, hash) in &record.artifacts {
        emit(&format!("{:<9} {artifact:<28} {}\n", record.stage, &hash[..16]));
    }
}

fn execute(command: &Command) -> Result<()> {
    let stage: fn(&PipelineConfig) -> Result<StageRecord> = match command {
        Command::Synth(args) => return synth(args),
        Command::Config(args) => {
            emit(&args.resolve()?.to_toml()?);
            return Ok(());
        }
        Command::Run(args) => {
            let manifest = pipeline::run_pipeline(&args.resolve()?)?;
            manifest.stages.iter().for_each(print_record);
            return Ok(());
        }
        Command::Ingest(_) => pipeline::ingest,
        Command::Simulate(_) => pipeline::simulate_windows,
        Command::Detect(_) => pipeline::detect,
        Command::Cluster(_) => pipeline::cluster,
        Command::Report(_) => pipeline::report,
    };
    let args = match command {
        Command::Ingest(a)
        | Command::Simulate(a)
        | Command::Detect(a)
        | Command::Cluster(a)
        | Command::Report(a) => a,
        _ => unreachable!("handled above"),
    };
    let cfg = args.resolve()?;
    print_record(&stage(&cfg)?);
    if matches!(command, Command::Report(_)) {
        let report = cfg.output_dir.join(pipeline::REPORT);
        let text = fs::read_to_string(&report).map_err(|e| Error::io(&report, e))?;
        emit(&text);
    }
    Ok(())
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

//! Staged end-to-end run: ingest → simulate → detect → cluster → report.
//!
//! Every stage reads its inputs from the output directory and writes its own artifacts,
//! so stages can be rerun in isolation. Each stage also records the SHA-256 of what it
//! wrote in `manifest.json`.

mod config;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::PipelineConfig;

use crate::clustering::{
    involvement_histogram, kmeans, label_groups, laplacian_eigenmaps, sector_breakdown,
    GroupLabel, SectorMap,
};
use crate::coherence::{
    characteristic_matrix, coupling_strengths, detect_coherent_set, CoherenceMatrix,
    CoherencePartition,
};
use crate::error::{Error, Result};
use crate::market_data::{
    correlation_matrix, coupling_matrix, load_prices, log_returns, write_matrix_csv, DateRange,
    PanelLayout, PricePanel, ReturnMatrix,
};
use crate::oscillator_sim::{derive_seed, simulate, SimulationSummary};

pub const PRICES: &str = "prices.csv";
pub const WINDOWS: &str = "windows.csv";
pub const SUMMARY_DIR: &str = "summaries";
pub const MATRIX_DIR: &str = "matrices";
pub const PARTITIONS: &str = "partitions.jsonl";
pub const COHERENT_SIZES: &str = "coherent_sizes.csv";
pub const CHI: &str = "chi.csv";
pub const EMBEDDING: &str = "embedding.csv";
pub const CLUSTERS: &str = "clusters.csv";
pub const HISTOGRAM: &str = "involvement_histogram.csv";
pub const SECTOR_TABLE_CSV: &str = "sector_table.csv";
pub const SECTOR_TABLE_TXT: &str = "sector_table.txt";
pub const REPORT: &str = "report.txt";
pub const MANIFEST: &str = "manifest.json";

/// Stage names in execution order.
pub const STAGES: [&str; 5] = ["ingest", "simulate", "detect", "cluster", "report"];

/// Content hashes of the artifacts one stage wrote, keyed by path relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: PipelineConfig,
    pub windows: Option<usize>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }
}

/// One line of `partitions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub window_index: usize,
    pub start_date: String,
    pub epsilon: f64,
    pub size: usize,
    /// Coherent tickers in descending coupling-strength order.
    pub coherent: Vec<String>,
}

/// Runs every stage in order and returns the final manifest.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest> {
    cfg.validate()?;
    ingest(cfg)?;
    simulate_windows(cfg)?;
    detect(cfg)?;
    cluster(cfg)?;
    report(cfg)?;
    Manifest::load(&cfg.output_dir.join(MANIFEST))
}

/// Loads the configured input and writes the canonical wide price table.
pub fn ingest(cfg: &PipelineConfig) -> Result<StageRecord> {
    const STAGE: &str = "ingest";
    cfg.validate()?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input price file configured".into()))?;
    let wrap = |e: Error| e.in_stage(STAGE, None);
    prepare_dir(&cfg.output_dir).map_err(wrap)?;
    let (panel, report) = load_prices(input, cfg.layout, cfg.date_range()).map_err(wrap)?;
    if !report.dropped.is_empty() {
        log::warn!(
            "dropped {} ticker(s) without full history: {}",
            report.dropped.len(),
            report.dropped.join(" ")
        );
    }
    log::info!(
        "ingested {} tickers over {} dates",
        panel.n_tickers(),
        panel.n_dates()
    );
    panel.write_wide_csv(&cfg.output_dir.join(PRICES)).map_err(wrap)?;
    finish(cfg, STAGE, &[PRICES], None)
}

/// Builds every window's coupling matrix and writes its simulation summary.
pub fn simulate_windows(cfg: &PipelineConfig) -> Result<StageRecord> {
    const STAGE: &str = "simulate";
    cfg.validate()?;
    let panel = read_prices(cfg).map_err(|e| e.in_stage(STAGE, None))?;
    let (returns, ranges) = window_plan(cfg, &panel)?;
    write_windows(cfg, &panel, &ranges).map_err(|e| e.in_stage("windows", None))?;

    let summaries = cfg.output_dir.join(SUMMARY_DIR);
    prepare_dir(&summaries).map_err(|e| e.in_stage(STAGE, None))?;
    let matrices = cfg.output_dir.join(MATRIX_DIR);
    if cfg.dump_matrices {
        prepare_dir(&matrices).map_err(|e| e.in_stage(STAGE, None))?;
    }
    let tickers = returns.tickers();

    let run_one = |w: usize| -> Result<bool> {
        let path = summary_path(cfg, w);
        if cfg.resume && path.exists() {
            match read_summary(&path, tickers, w) {
                Ok(_) => return Ok(false),
                Err(e) => log::warn!("recomputing window {w}: {e}"),
            }
        }
        let corr = correlation_matrix(&returns, ranges[w].clone(), w)?;
        if !corr.degenerate().is_empty() {
            let names: Vec<&str> = corr.degenerate().iter().map(|&i| tickers[i].as_str()).collect();
            log::warn!("window {w}: zero-variance returns for {}", names.join(" "));
        }
        let coupling = coupling_matrix(&corr);
        if cfg.dump_matrices {
            write_matrix_csv(&matrices.join(format!("corr_{w}.csv")), tickers, corr.values())?;
            write_matrix_csv(&matrices.join(format!("coupling_{w}.csv")), tickers, coupling.values())?;
        }
        let params = cfg.sim_params().with_seed(derive_seed(cfg.seed, w as u64));
        let summary = simulate(&coupling, &params)?;
        write_summary(&path, tickers, &summary)?;
        log::debug!("window {w} simulated");
        Ok(true)
    };
    let outcomes = par_map(cfg.threads, ranges.len(), |w| {
        run_one(w).map_err(|e| e.in_stage(STAGE, Some(w)))
    })?;
    let computed = outcomes.into_iter().collect::<Result<Vec<bool>>>()?;
    let fresh = computed.iter().filter(|&&c| c).count();
    log::info!(
        "simulated {fresh} window(s), reused {}",
        computed.len() - fresh
    );

    let mut record = StageRecord {
        stage: STAGE.into(),
        artifacts: BTreeMap::new(),
    };
    record
        .artifacts
        .insert(WINDOWS.into(), sha256_file(&cfg.output_dir.join(WINDOWS))?);
    let summary_files: Vec<PathBuf> = (0..ranges.len()).map(|w| summary_path(cfg, w)).collect();
    record
        .artifacts
        .insert(format!("{SUMMARY_DIR}/"), sha256_files(&summary_files)?);
    if cfg.dump_matrices {
        let files: Vec<PathBuf> = (0..ranges.len())
            .flat_map(|w| {
                [
                    matrices.join(format!("corr_{w}.csv")),
                    matrices.join(format!("coupling_{w}.csv")),
                ]
            })
            .collect();
        record.artifacts.insert(format!("{MATRIX_DIR}/"), sha256_files(&files)?);
    }
    upsert_manifest(cfg, record, Some(ranges.len()))
}

/// Scans every window's summary for its coherent set and writes the coherence time structures.
pub fn detect(cfg: &PipelineConfig) -> Result<StageRecord> {
    const STAGE: &str = "detect";
    cfg.validate()?;
    let panel = read_prices(cfg).map_err(|e| e.in_stage(STAGE, None))?;
    let (returns, ranges) = window_plan(cfg, &panel)?;
    let tickers = returns.tickers();

    let detect_one = |w: usize| -> Result<CoherencePartition> {
        let summary = read_summary(&summary_path(cfg, w), tickers, w)?;
        let coupling = coupling_matrix(&correlation_matrix(&returns, ranges[w].clone(), w)?);
        detect_coherent_set(&summary, &coupling_strengths(&coupling), cfg.epsilon)
    };
    let partitions = par_map(cfg.threads, ranges.len(), |w| {
        detect_one(w).map_err(|e| e.in_stage(STAGE, Some(w)))
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let chi = characteristic_matrix(&partitions, tickers.len()).map_err(|e| e.in_stage(STAGE, None))?;

    let start = |w: usize| panel.dates()[ranges[w].start].to_string();
    let write = || -> Result<()> {
        let mut lines = String::new();
        for p in &partitions {
            let record = PartitionRecord {
                window_index: p.window_index,
                start_date: start(p.window_index),
                epsilon: p.epsilon,
                size: p.size(),
                coherent: p.coherent.iter().map(|&i| tickers[i].clone()).collect(),
            };
            lines.push_str(&serde_json::to_string(&record)?);
            lines.push('\n');
        }
        write_text(&cfg.output_dir.join(PARTITIONS), &lines)?;

        let path = cfg.output_dir.join(COHERENT_SIZES);
        let mut out = csv_writer(&path)?;
        out.write_record(["window_index", "start_date", "size"])?;
        for p in &partitions {
            out.write_record([
                p.window_index.to_string(),
                start(p.window_index),
                p.size().to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        write_chi(&cfg.output_dir.join(CHI), tickers, &chi)
    };
    write().map_err(|e| e.in_stage(STAGE, None))?;
    let mean_size =
        partitions.iter().map(|p| p.size()).sum::<usize>() as f64 / partitions.len() as f64;
    log::info!(
        "detected coherent sets in {} windows (mean size {mean_size:.2})",
        partitions.len()
    );
    finish(cfg, STAGE, &[PARTITIONS, COHERENT_SIZES, CHI], None)
}

/// Embeds the coherence histories, clusters them and names the groups.
pub fn cluster(cfg: &PipelineConfig) -> Result<StageRecord> {
    const STAGE: &str = "cluster";
    cfg.validate()?;
    let wrap = |e: Error| e.in_stage(STAGE, None);
    let (tickers, full) = read_chi(&cfg.output_dir.join(CHI)).map_err(wrap)?;
    let range = window_selection(cfg, full.n_windows());
    let chi = if range == (0..full.n_windows()) {
        full
    } else {
        log::info!("clustering window positions {range:?}");
        full.select_rows(range).map_err(wrap)?
    };
    let embedding = laplacian_eigenmaps(&chi, cfg.neighbor_k).map_err(wrap)?;
    let raw = kmeans(&embedding.coords, cfg.clusters, cfg.seed, cfg.restarts).map_err(wrap)?;
    let assignment = label_groups(&raw, chi.counts()).map_err(wrap)?;
    let histogram =
        involvement_histogram(chi.counts(), chi.n_windows(), cfg.histogram_bins).map_err(wrap)?;
    log::info!(
        "involvement histogram has {} local maxima",
        histogram.local_maxima().len()
    );

    let write = || -> Result<()> {
        let path = cfg.output_dir.join(EMBEDDING);
        let mut out = csv_writer(&path)?;
        out.write_record(["ticker", "x", "y"])?;
        for (i, t) in tickers.iter().enumerate() {
            out.write_record([
                t.clone(),
                embedding.coords[[i, 0]].to_string(),
                embedding.coords[[i, 1]].to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;

        let path = cfg.output_dir.join(CLUSTERS);
        let mut out = csv_writer(&path)?;
        out.write_record(["ticker", "label", "N_T"])?;
        for (i, t) in tickers.iter().enumerate() {
            out.write_record([
                t.clone(),
                assignment.labels[i].to_string(),
                chi.counts()[i].to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;

        let path = cfg.output_dir.join(HISTOGRAM);
        let mut out = csv_writer(&path)?;
        out.write_record(["bin_start", "bin_end", "count"])?;
        for (b, count) in histogram.counts.iter().enumerate() {
            out.write_record([
                histogram.edges[b].to_string(),
                histogram.edges[b + 1].to_string(),
                count.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io(&path, e))
    };
    write().map_err(wrap)?;
    finish(cfg, STAGE, &[EMBEDDING, CLUSTERS, HISTOGRAM], None)
}

/// Renders the coherent-size series, the group summary and, given a sector map, the sector table.
pub fn report(cfg: &PipelineConfig) -> Result<StageRecord> {
    const STAGE: &str = "report";
    cfg.validate()?;
    let wrap = |e: Error| e.in_stage(STAGE, None);
    let clusters = read_clusters(&cfg.output_dir.join(CLUSTERS)).map_err(wrap)?;
    let sizes = read_sizes(&cfg.output_dir.join(COHERENT_SIZES)).map_err(wrap)?;
    let n = clusters.len();

    let mut text = String::from("Coherent set size per window\n");
    const BAR: usize = 50;
    for (w, date, size) in &sizes {
        let bar = (size * BAR).div_ceil(n.max(1));
        text.push_str(&format!("{w:>6}  {date}  {size:>5}  {}\n", "#".repeat(bar)));
    }
    text.push_str("\nGroups\n");
    for label in GroupLabel::ALL.iter().rev() {
        let members: Vec<usize> = clusters
            .iter()
            .filter(|(_, l, _)| l == label)
            .map(|(_, _, c)| *c)
            .collect();
        let mean = if members.is_empty() {
            0.0
        } else {
            members.iter().sum::<usize>() as f64 / members.len() as f64
        };
        text.push_str(&format!(
            "{:<7} {:>5} stocks, mean N_T {mean:.2}\n",
            label.as_str(),
            members.len()
        ));
    }

    let mut written = vec![REPORT];
    if let Some(map_path) = &cfg.sectors {
        let map = SectorMap::load(map_path).map_err(wrap)?;
        let tickers: Vec<String> = clusters.iter().map(|(t, _, _)| t.clone()).collect();
        let labels: Vec<GroupLabel> = clusters.iter().map(|(_, l, _)| *l).collect();
        let table = sector_breakdown(&tickers, &labels, &map).map_err(wrap)?;
        let rendered = table.render();
        table
            .write_csv(&cfg.output_dir.join(SECTOR_TABLE_CSV))
            .map_err(wrap)?;
        write_text(&cfg.output_dir.join(SECTOR_TABLE_TXT), &rendered).map_err(wrap)?;
        text.push_str("\nSector breakdown\n");
        text.push_str(&rendered);
        written.extend([SECTOR_TABLE_CSV, SECTOR_TABLE_TXT]);
    } else {
        log::info!("no sector map configured; skipping the sector table");
    }
    write_text(&cfg.output_dir.join(REPORT), &text).map_err(wrap)?;
    finish(cfg, STAGE, &written, None)
}

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    require(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Reader::from_reader(file))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

fn read_prices(cfg: &PipelineConfig) -> Result<PricePanel> {
    let path = cfg.output_dir.join(PRICES);
    require(&path)?;
    let (panel, _) = load_prices(&path, PanelLayout::Wide, DateRange::default())?;
    Ok(panel)
}

fn window_plan(cfg: &PipelineConfig, panel: &PricePanel) -> Result<(ReturnMatrix, Vec<Range<usize>>)> {
    let plan = || -> Result<_> {
        let returns = log_returns(panel)?;
        let ranges = cfg.window_spec()?.ranges(returns.n_cols())?;
        Ok((returns, ranges))
    };
    plan().map_err(|e| e.in_stage("windows", None))
}

fn write_windows(cfg: &PipelineConfig, panel: &PricePanel, ranges: &[Range<usize>]) -> Result<()> {
    let path = cfg.output_dir.join(WINDOWS);
    let mut out = csv_writer(&path)?;
    out.write_record(["window_index", "start_date", "end_date"])?;
    for (w, r) in ranges.iter().enumerate() {
        // return column c spans price dates c and c + 1
        out.write_record([
            w.to_string(),
            panel.dates()[r.start].to_string(),
            panel.dates()[r.end].to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io(&path, e))
}

fn summary_path(cfg: &PipelineConfig, w: usize) -> PathBuf {
    cfg.output_dir.join(SUMMARY_DIR).join(format!("summary_{w}.csv"))
}

fn write_summary(path: &Path, tickers: &[String], s: &SimulationSummary) -> Result<()> {
    let mut out = csv_writer(path)?;
    out.write_record(["ticker", "mean_velocity", "velocity_std", "final_phase"])?;
    for (i, t) in tickers.iter().enumerate() {
        out.write_record([
            t.clone(),
            s.mean_velocity[i].to_string(),
            s.velocity_std[i].to_string(),
            s.final_phases[i].to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_summary(path: &Path, tickers: &[String], window_index: usize) -> Result<SimulationSummary> {
    let mut reader = csv_reader(path)?;
    let mut summary = SimulationSummary {
        mean_velocity: Vec::with_capacity(tickers.len()),
        velocity_std: Vec::with_capacity(tickers.len()),
        final_phases: Vec::with_capacity(tickers.len()),
        window_index,
    };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 4 || tickers.get(i).map(String::as_str) != Some(&record[0]) {
            return Err(Error::malformed(path, format!("unexpected row {}", i + 2)));
        }
        let num = |k: usize| -> Result<f64> {
            record[k]
                .parse()
                .map_err(|_| Error::malformed(path, format!("bad number {:?}", &record[k])))
        };
        summary.mean_velocity.push(num(1)?);
        summary.velocity_std.push(num(2)?);
        summary.final_phases.push(num(3)?);
    }
    if summary.len() != tickers.len() {
        return Err(Error::malformed(
            path,
            format!("{} rows for {} tickers", summary.len(), tickers.len()),
        ));
    }
    Ok(summary)
}

fn write_chi(path: &Path, tickers: &[String], chi: &CoherenceMatrix) -> Result<()> {
    let mut out = csv_writer(path)?;
    out.write_record(tickers)?;
    for row in chi.rows() {
        out.write_record(row.iter().map(|&x| if x { "1" } else { "0" }))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_chi(path: &Path) -> Result<(Vec<String>, CoherenceMatrix)> {
    let mut reader = csv_reader(path)?;
    let tickers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|v| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::malformed(path, format!("χ entry {other:?} is not 0/1"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::malformed(path, "no windows"));
    }
    let chi = CoherenceMatrix::from_rows(rows)?;
    if chi.n_stocks() != tickers.len() {
        return Err(Error::malformed(path, "row width differs from the header"));
    }
    Ok((tickers, chi))
}

fn read_clusters(path: &Path) -> Result<Vec<(String, GroupLabel, usize)>> {
    let mut reader = csv_reader(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let bad = || Error::malformed(path, format!("bad row {:?}", record.iter().collect::<Vec<_>>()));
        if record.len() != 3 {
            return Err(bad());
        }
        let label = GroupLabel::parse(&record[1]).ok_or_else(bad)?;
        let count = record[2].parse().map_err(|_| bad())?;
        out.push((record[0].to_string(), label, count));
    }
    Ok(out)
}

fn read_sizes(path: &Path) -> Result<Vec<(usize, String, usize)>> {
    let mut reader = csv_reader(path)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let bad = || Error::malformed(path, "bad coherent size row");
        if record.len() != 3 {
            return Err(bad());
        }
        out.push((
            record[0].parse().map_err(|_| bad())?,
            record[1].to_string(),
            record[2].parse().map_err(|_| bad())?,
        ));
    }
    Ok(out)
}

fn window_selection(cfg: &PipelineConfig, m: usize) -> Range<usize> {
    cfg.window_start.unwrap_or(0)..cfg.window_end.unwrap_or(m)
}

/// Maps `f` over `0..n`, in order, on `threads` workers (1 = the calling thread, 0 = all cores).
fn par_map<T, F>(threads: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if threads == 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// One digest over several files, in the given order.
fn sha256_files(paths: &[PathBuf]) -> Result<String> {
    let mut hasher = Sha256::new();
    for path in paths {
        hasher.update(sha256_file(path)?.as_bytes());
    }
    Ok(hex::encode(hasher.finalize()))
}

fn finish(
    cfg: &PipelineConfig,
    stage: &str,
    files: &[&str],
    windows: Option<usize>,
) -> Result<StageRecord> {
    let mut artifacts = BTreeMap::new();
    for f in files {
        artifacts.insert(f.to_string(), sha256_file(&cfg.output_dir.join(f))?);
    }
    upsert_manifest(
        cfg,
        StageRecord {
            stage: stage.into(),
            artifacts,
        },
        windows,
    )
}

fn upsert_manifest(
    cfg: &PipelineConfig,
    record: StageRecord,
    windows: Option<usize>,
) -> Result<StageRecord> {
    let path = cfg.output_dir.join(MANIFEST);
    let mut manifest = match Manifest::load(&path) {
        Ok(m) => m,
        Err(_) => Manifest {
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            windows: None,
            stages: Vec::new(),
        },
    };
    manifest.config = cfg.clone();
    if windows.is_some() {
        manifest.windows = windows;
    }
    manifest.stages.retain(|s| s.stage != record.stage);
    manifest.stages.push(record.clone());
    manifest
        .stages
        .sort_by_key(|s| STAGES.iter().position(|&n| n == s.stage));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_text(&path, &text)?;
    Ok(record)
}

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::KMeansResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupLabel {
    Low,
    Middle,
    High,
}

impl GroupLabel {
    pub const ALL: [GroupLabel; 3] = [GroupLabel::Low, GroupLabel::Middle, GroupLabel::High];

    pub fn as_str(&self) -> &'static str {
        match self {
            GroupLabel::Low => "low",
            GroupLabel::Middle => "middle",
            GroupLabel::High => "high",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "low" => Some(GroupLabel::Low),
            "middle" => Some(GroupLabel::Middle),
            "high" => Some(GroupLabel::High),
            _ => None,
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<GroupLabel>,
    /// Rows in low, middle, high order.
    pub centroids: Array2<f64>,
    pub inertia: f64,
    pub warnings: Vec<String>,
}

/// Names the three raw clusters low/middle/high by ascending mean involvement count.
///
/// Equal means are ordered by the first centroid coordinate, with a warning.
pub fn label_groups(raw: &KMeansResult, counts: &[usize]) -> Result<ClusterAssignment> {
    let k = raw.centroids.nrows();
    if k != 3 {
        return Err(Error::InvalidArgument(format!("need exactly 3 clusters, got {k}")));
    }
    if raw.labels.len() != counts.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} involvement counts",
            raw.labels.len(),
            counts.len()
        )));
    }
    if let Some(&bad) = raw.labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!("raw label {bad} out of range")));
    }

    let mut sums = [0.0f64; 3];
    let mut sizes = [0usize; 3];
    for (&l, &c) in raw.labels.iter().zip(counts) {
        sums[l] += c as f64;
        sizes[l] += 1;
    }
    let means: Vec<f64> = (0..3)
        .map(|c| if sizes[c] > 0 { sums[c] / sizes[c] as f64 } else { 0.0 })
        .collect();

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        means[a]
            .total_cmp(&means[b])
            .then(raw.centroids[[a, 0]].total_cmp(&raw.centroids[[b, 0]]))
            .then(a.cmp(&b))
    });
    let mut warnings = Vec::new();
    for w in order.windows(2) {
        if means[w[0]] == means[w[1]] {
            let msg = format!(
                "clusters {} and {} share mean involvement {}; ordered by centroid x",
                w[0], w[1], means[w[0]]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut rank = [GroupLabel::Low; 3];
    for (pos, &c) in order.iter().enumerate() {
        rank[c] = GroupLabel::ALL[pos];
    }
    let mut centroids = Array2::zeros(raw.centroids.dim());
    for (pos, &c) in order.iter().enumerate() {
        centroids.row_mut(pos).assign(&raw.centroids.row(c));
    }
    Ok(ClusterAssignment {
        labels: raw.labels.iter().map(|&l| rank[l]).collect(),
        centroids,
        inertia: raw.inertia,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorEntry {
    pub sector: String,
    pub classification: Option<String>,
}

/// Ticker → sector map in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SectorMap {
    entries: Vec<(String, SectorEntry)>,
}

impl SectorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ticker: &str, sector: &str, classification: Option<&str>) {
        self.entries.push((
            ticker.to_string(),
            SectorEntry {
                sector: sector.to_string(),
                classification: classification.map(str::to_string),
            },
        ));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Reads `ticker,sector[,classification]` rows; a header row is optional.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut map = SectorMap::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::malformed(path, e.to_string()))?;
            if line == 0 && record.get(0).is_some_and(|h| h.eq_ignore_ascii_case("ticker")) {
                continue;
            }
            if !(2..=3).contains(&record.len()) || record[0].is_empty() || record[1].is_empty() {
                return Err(Error::malformed(
                    path,
                    format!("line {} must be ticker,sector[,classification]", line + 1),
                ));
            }
            let class = record.get(2).filter(|c| !c.is_empty());
            map.insert(&record[0], &record[1], class);
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorRow {
    pub sector: String,
    pub members: usize,
    pub high: f64,
    pub middle: f64,
    pub low: f64,
    pub classification: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorTable {
    pub rows: Vec<SectorRow>,
    /// Clustered tickers absent from the sector map.
    pub unmapped: Vec<String>,
}

pub const SECTOR_HEADERS: [&str; 5] = [
    "GICS sector",
    "High coherent",
    "Middle coherent",
    "Low coherent",
    "Cyclical or Defensive",
];

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Per-sector percentage of members in each coherence group, rounded to two decimals.
pub fn sector_breakdown(
    tickers: &[String],
    labels: &[GroupLabel],
    sectors: &SectorMap,
) -> Result<SectorTable> {
    if sectors.is_empty() {
        return Err(Error::InvalidArgument("sector map is empty".into()));
    }
    if tickers.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} tickers for {} labels",
            tickers.len(),
            labels.len()
        )));
    }
    let lookup: HashMap<&str, &SectorEntry> = sectors
        .entries
        .iter()
        .rev()
        .map(|(t, e)| (t.as_str(), e))
        .collect();
    let mut sector_order: Vec<&str> = Vec::new();
    let mut class: BTreeMap<&str, Option<&str>> = BTreeMap::new();
    for (_, e) in &sectors.entries {
        if !class.contains_key(e.sector.as_str()) {
            sector_order.push(&e.sector);
            class.insert(&e.sector, e.classification.as_deref());
        } else if class[e.sector.as_str()].is_none() {
            class.insert(&e.sector, e.classification.as_deref());
        }
    }

    let mut tallies: HashMap<&str, [usize; 3]> = HashMap::new();
    let mut unmapped = Vec::new();
    for (ticker, label) in tickers.iter().zip(labels) {
        match lookup.get(ticker.as_str()) {
            Some(entry) => {
                let slot = match label {
                    GroupLabel::High => 0,
                    GroupLabel::Middle => 1,
                    GroupLabel::Low => 2,
                };
                tallies.entry(entry.sector.as_str()).or_default()[slot] += 1;
            }
            None => unmapped.push(ticker.clone()),
        }
    }
    if !unmapped.is_empty() {
        log::warn!("{} clustered ticker(s) have no sector", unmapped.len());
    }

    let rows = sector_order
        .into_iter()
        .filter_map(|sector| {
            let t = tallies.get(sector)?;
            let total = t.iter().sum::<usize>() as f64;
            Some(SectorRow {
                sector: sector.to_string(),
                members: t.iter().sum(),
                high: round2(100.0 * t[0] as f64 / total),
                middle: round2(100.0 * t[1] as f64 / total),
                low: round2(100.0 * t[2] as f64 / total),
                classification: class[sector].map(str::to_string),
            })
        })
        .collect();
    Ok(SectorTable { rows, unmapped })
}

impl SectorTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = csv::Writer::from_writer(file);
        out.write_record(SECTOR_HEADERS)?;
        for row in &self.rows {
            out.write_record([
                row.sector.clone(),
                format!("{:.2}", row.high),
                format!("{:.2}", row.middle),
                format!("{:.2}", row.low),
                row.classification.clone().unwrap_or_default(),
            ])?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Plain-text table with the five sector-table columns.
    pub fn render(&self) -> String {
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.sector.clone(),
                    format!("{:.2}%", r.high),
                    format!("{:.2}%", r.middle),
                    format!("{:.2}%", r.low),
                    r.classification.clone().unwrap_or_else(|| "-".into()),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = SECTOR_HEADERS.iter().map(|h| h.chars().count()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let rule: String = {
            let parts: Vec<String> = widths.iter().map(|w| "-".repeat(w + 2)).collect();
            format!("+{}+\n", parts.join("+"))
        };
        let line = |row: &[String]| {
            let parts: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i == 0 {
                        format!(" {c:<w$} ")
                    } else {
                        format!(" {c:>w$} ")
                    }
                })
                .collect();
            format!("|{}|\n", parts.join("|"))
        };
        let header: Vec<String> = SECTOR_HEADERS.iter().map(|h| h.to_string()).collect();
        let mut out = String::new();
        out.push_str(&rule);
        out.push_str(&line(&header));
        out.push_str(&rule);
        for row in &cells {
            out.push_str(&line(row));
        }
        out.push_str(&rule);
        if !self.unmapped.is_empty() {
            out.push_str(&format!("unmapped tickers: {}\n", self.unmapped.join(" ")));
        }
        out
    }
}

/// Distribution of involvement counts over `[0, windows]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Bins strictly greater than their neighbours; plateaus count once, at their left edge.
    pub fn local_maxima(&self) -> Vec<usize> {
        let c = &self.counts;
        let mut peaks = Vec::new();
        let mut i = 0;
        while i < c.len() {
            let mut j = i;
            while j + 1 < c.len() && c[j + 1] == c[i] {
                j += 1;
            }
            let left_ok = i == 0 || c[i - 1] < c[i];
            let right_ok = j + 1 == c.len() || c[j + 1] < c[i];
            if c[i] > 0 && left_ok && right_ok {
                peaks.push(i);
            }
            i = j + 1;
        }
        peaks
    }
}

/// Equal-width histogram of `counts` over `[0, windows]`; the last bin includes `windows`.
pub fn involvement_histogram(counts: &[usize], windows: usize, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    if let Some(&c) = counts.iter().find(|&&c| c > windows) {
        return Err(Error::InvalidArgument(format!("count {c} exceeds {windows} windows")));
    }
    let edges = (0..=bins)
        .map(|b| windows as f64 * b as f64 / bins as f64)
        .collect();
    let mut hist = vec![0usize; bins];
    for &c in counts {
        let bin = if windows == 0 { 0 } else { (c * bins / windows).min(bins - 1) };
        hist[bin] += 1;
    }
    Ok(Histogram {
        edges,
        counts: hist,
    })
}

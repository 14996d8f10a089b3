use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular date × ticker panel of daily close prices.
///
/// `prices` is stored ticker-major: row `i` is the history of `tickers[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: Array2<f64>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: Array2<f64>) -> Result<Self> {
        if tickers.is_empty() || dates.is_empty() {
            return Err(Error::EmptyPanel);
        }
        if prices.dim() != (tickers.len(), dates.len()) {
            return Err(Error::Dimension(format!(
                "price matrix is {:?}, expected ({}, {})",
                prices.dim(),
                tickers.len(),
                dates.len()
            )));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "dates must be strictly increasing".into(),
            ));
        }
        let unique: BTreeSet<&str> = tickers.iter().map(String::as_str).collect();
        if unique.len() != tickers.len() {
            return Err(Error::InvalidArgument("tickers must be unique".into()));
        }
        for ((i, t), &p) in prices.indexed_iter() {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::NonPositivePrice {
                    ticker: tickers[i].clone(),
                    date: dates[t].to_string(),
                    price: p,
                });
            }
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    /// N×D matrix, one row per ticker.
    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    /// Writes the canonical wide layout: a `date` column followed by one column per ticker.
    pub fn write_wide_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = csv::Writer::from_writer(file);
        let mut header = Vec::with_capacity(self.tickers.len() + 1);
        header.push("date".to_string());
        header.extend(self.tickers.iter().cloned());
        out.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            let mut row = Vec::with_capacity(header.len());
            row.push(date.to_string());
            row.extend(self.prices.column(t).iter().map(|p| p.to_string()));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// On-disk layout of a price file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PanelLayout {
    /// `date,ticker,close` rows.
    Long,
    /// `date` column plus one column per ticker.
    Wide,
    /// Long when the header is exactly `date,ticker,close`, wide otherwise.
    #[default]
    Auto,
}

/// Inclusive date bounds applied while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DateRange {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl DateRange {
    fn contains(&self, d: NaiveDate) -> bool {
        self.start.is_none_or(|s| d >= s) && self.end.is_none_or(|e| d <= e)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    /// Tickers dropped because they lack a price on at least one panel date.
    pub dropped: Vec<String>,
}

/// Loads a close-price table and keeps only tickers with full history over `range`.
pub fn load_prices(
    path: &Path,
    layout: PanelLayout,
    range: DateRange,
) -> Result<(PricePanel, IngestReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::malformed(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();

    let is_long = {
        let lower: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
        lower == ["date", "ticker", "close"]
    };
    let layout = match layout {
        PanelLayout::Auto if is_long => PanelLayout::Long,
        PanelLayout::Auto => PanelLayout::Wide,
        other => other,
    };

    // ticker -> date -> price, tickers in first-seen order
    let mut order: Vec<String> = Vec::new();
    let mut series: HashMap<String, BTreeMap<NaiveDate, f64>> = HashMap::new();

    match layout {
        PanelLayout::Long => {
            if !is_long {
                return Err(Error::malformed(
                    path,
                    "long layout needs the header date,ticker,close",
                ));
            }
            for (line, record) in reader.records().enumerate() {
                let record = record.map_err(|e| Error::malformed(path, e.to_string()))?;
                let date = parse_date(path, &record[0], line + 2)?;
                let ticker = record[1].to_string();
                if ticker.is_empty() {
                    return Err(Error::malformed(path, format!("empty ticker on line {}", line + 2)));
                }
                let Some(price) = parse_price(path, &record[2], line + 2)? else {
                    continue;
                };
                if !range.contains(date) {
                    continue;
                }
                let entry = series.entry(ticker.clone()).or_insert_with(|| {
                    order.push(ticker.clone());
                    BTreeMap::new()
                });
                if entry.insert(date, price).is_some() {
                    return Err(Error::malformed(
                        path,
                        format!("duplicate row for {ticker} on {date}"),
                    ));
                }
            }
        }
        PanelLayout::Wide | PanelLayout::Auto => {
            if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
                return Err(Error::malformed(
                    path,
                    "wide layout needs a leading date column and at least one ticker",
                ));
            }
            let tickers = &header[1..];
            let unique: BTreeSet<&String> = tickers.iter().collect();
            if unique.len() != tickers.len() || tickers.iter().any(String::is_empty) {
                return Err(Error::malformed(path, "ticker columns must be unique and named"));
            }
            for t in tickers {
                order.push(t.clone());
                series.insert(t.clone(), BTreeMap::new());
            }
            let mut seen = BTreeSet::new();
            for (line, record) in reader.records().enumerate() {
                let record = record.map_err(|e| Error::malformed(path, e.to_string()))?;
                let date = parse_date(path, &record[0], line + 2)?;
                if !seen.insert(date) {
                    return Err(Error::malformed(path, format!("duplicate date {date}")));
                }
                if !range.contains(date) {
                    continue;
                }
                for (ticker, cell) in tickers.iter().zip(record.iter().skip(1)) {
                    if let Some(price) = parse_price(path, cell, line + 2)? {
                        series.get_mut(ticker).expect("ticker column").insert(date, price);
                    }
                }
            }
        }
    }

    for ticker in &order {
        for (date, &price) in &series[ticker] {
            if price <= 0.0 {
                return Err(Error::NonPositivePrice {
                    ticker: ticker.clone(),
                    date: date.to_string(),
                    price,
                });
            }
        }
    }

    let dates: Vec<NaiveDate> = series
        .values()
        .flat_map(|s| s.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut report = IngestReport::default();
    let mut kept = Vec::new();
    for ticker in order {
        if series[&ticker].len() == dates.len() && !dates.is_empty() {
            kept.push(ticker);
        } else {
            report.dropped.push(ticker);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyPanel);
    }
    if !report.dropped.is_empty() {
        log::warn!(
            "dropped {} ticker(s) without full history: {}",
            report.dropped.len(),
            report.dropped.join(", ")
        );
    }

    let mut prices = Array2::zeros((kept.len(), dates.len()));
    for (i, ticker) in kept.iter().enumerate() {
        for (t, &p) in series[ticker].values().enumerate() {
            prices[[i, t]] = p;
        }
    }
    Ok((PricePanel::new(dates, kept, prices)?, report))
}

fn parse_date(path: &Path, raw: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map_err(|_| Error::malformed(path, format!("bad ISO-8601 date {raw:?} on line {line}")))
}

fn parse_price(path: &Path, raw: &str, line: usize) -> Result<Option<f64>> {
    if raw.is_empty() || ["na", "nan", "null"].contains(&raw.to_ascii_lowercase().as_str()) {
        return Ok(None);
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| Error::malformed(path, format!("bad price {raw:?} on line {line}")))?;
    if !value.is_finite() {
        return Err(Error::malformed(path, format!("non-finite price on line {line}")));
    }
    Ok(Some(value))
}

/// Writes a labelled square matrix: a `ticker` column, then one column per label.
pub(crate) fn write_matrix_csv(path: &Path, labels: &[String], values: &Array2<f64>) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    out.push_str("ticker");
    for l in labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for (i, row) in values.rows().into_iter().enumerate() {
        out.push_str(&labels[i]);
        for v in row {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn complete_wide_file() {
        let f = write_tmp(
            "date,AAA,BBB,CCC\n\
             2004-01-02,10,20,30\n\
             2004-01-05,11,21,31\n\
             2004-01-06,12,22,32\n\
             2004-01-07,13,23,33\n",
        );
        let (panel, report) = load_prices(f.path(), PanelLayout::Auto, DateRange::default()).unwrap();
        assert_eq!(panel.n_tickers(), 3);
        assert_eq!(panel.n_dates(), 4);
        assert!(report.dropped.is_empty());
        assert_eq!(panel.prices()[[1, 2]], 22.0);
    }

    #[test]
    fn long_file_drops_incomplete_ticker() {
        let f = write_tmp(
            "date,ticker,close\n\
             2004-01-02,AAA,10\n2004-01-02,XXX,5\n2004-01-02,BBB,20\n\
             2004-01-05,AAA,11\n2004-01-05,BBB,21\n\
             2004-01-06,AAA,12\n2004-01-06,XXX,6\n2004-01-06,BBB,22\n",
        );
        let (panel, report) = load_prices(f.path(), PanelLayout::Auto, DateRange::default()).unwrap();
        assert_eq!(panel.tickers(), ["AAA", "BBB"]);
        assert_eq!(panel.n_dates(), 3);
        assert_eq!(report.dropped, ["XXX"]);
    }

    #[test]
    fn wide_missing_cell_drops_ticker() {
        let f = write_tmp("date,A,X\n2004-01-02,1,2\n2004-01-05,1.5,\n2004-01-06,2,NA\n");
        let (panel, report) = load_prices(f.path(), PanelLayout::Wide, DateRange::default()).unwrap();
        assert_eq!(panel.tickers(), ["A"]);
        assert_eq!(report.dropped, ["X"]);
    }

    #[test]
    fn date_range_limits_history() {
        let f = write_tmp("date,A,X\n2004-01-02,1,\n2004-01-05,1.5,3\n2004-01-06,2,4\n");
        let range = DateRange {
            start: NaiveDate::from_ymd_opt(2004, 1, 5),
            end: None,
        };
        let (panel, report) = load_prices(f.path(), PanelLayout::Wide, range).unwrap();
        assert_eq!(panel.tickers(), ["A", "X"]);
        assert_eq!(panel.n_dates(), 2);
        assert!(report.dropped.is_empty());
    }

    #[test]
    fn rejects_non_positive_price() {
        let f = write_tmp("date,A\n2004-01-02,1\n2004-01-05,0\n");
        let err = load_prices(f.path(), PanelLayout::Wide, DateRange::default()).unwrap_err();
        assert!(matches!(err, Error::NonPositivePrice { .. }), "{err}");
    }

    #[test]
    fn rejects_malformed_and_empty() {
        let f = write_tmp("date,A\n2004-13-02,1\n");
        assert!(matches!(
            load_prices(f.path(), PanelLayout::Wide, DateRange::default()),
            Err(Error::Malformed { .. })
        ));
        let f = write_tmp("date,A\n2004-01-02,abc\n");
        assert!(matches!(
            load_prices(f.path(), PanelLayout::Wide, DateRange::default()),
            Err(Error::Malformed { .. })
        ));
        let f = write_tmp("date,A,B\n2004-01-02,1,\n2004-01-03,,2\n");
        assert!(matches!(
            load_prices(f.path(), PanelLayout::Wide, DateRange::default()),
            Err(Error::EmptyPanel)
        ));
    }

    #[test]
    fn wide_round_trip() {
        let f = write_tmp("date,ticker,close\n2004-01-05,B,2.5\n2004-01-02,B,2\n2004-01-02,A,1\n2004-01-05,A,1.25\n");
        let (panel, _) = load_prices(f.path(), PanelLayout::Long, DateRange::default()).unwrap();
        // long rows arrive unsorted; the panel is date ordered
        assert_eq!(panel.prices()[[0, 0]], 2.0);
        let out = tempfile::NamedTempFile::new().unwrap();
        panel.write_wide_csv(out.path()).unwrap();
        let (again, _) = load_prices(out.path(), PanelLayout::Auto, DateRange::default()).unwrap();
        assert_eq!(panel, again);
    }
}

//! Loading and cleaning of OHLC exchange-rate exports.
//!
//! The expected layout is the Yahoo Finance daily export:
//!
//! ```text
//! Date,Open,High,Low,Close,Adj Close,Volume
//! 2018-01-02,82.9,83.1,82.8,83.0,83.0,0
//! ```
//!
//! Numeric cells may be the literal `null` or empty; those become `None` and
//! are resolved by [`forward_fill`].

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One daily quote. `None` marks a cell that was missing in the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub open: Option<f64>,
    pub high: Option<f64>,
    pub low: Option<f64>,
    pub close: Option<f64>,
    pub volume: Option<f64>,
}

impl OhlcBar {
    fn prices(&self) -> [Option<f64>; 4] {
        [self.open, self.high, self.low, self.close]
    }

    /// True when every price cell is present.
    pub fn is_complete(&self) -> bool {
        self.prices().iter().all(Option::is_some)
    }
}

/// Which way round a series is quoted.
///
/// Variants follow the currency-pair naming used by quote feeds: the raw
/// `USD/BDT` feed quotes taka per dollar (about 83 to 110), the inverted
/// `BDT/USD` series quotes dollars per taka (about 0.012 down to 0.009).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Orientation {
    UsdBdt,
    BdtUsd,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::UsdBdt => Orientation::BdtUsd,
            Orientation::BdtUsd => Orientation::UsdBdt,
        }
    }
}

/// A cleaned close-rate series with strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    dates: Vec<NaiveDate>,
    values: Vec<f64>,
    orientation: Orientation,
}

impl RateSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Vec<f64>, orientation: Orientation) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} dates but {} values",
                dates.len(),
                values.len()
            )));
        }
        if values.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: values.len(),
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSeries(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        for (date, &value) in dates.iter().zip(&values) {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Domain { date: *date, value });
            }
        }
        Ok(Self {
            dates,
            values,
            orientation,
        })
    }

    /// Builds a close-price series from filled bars.
    pub fn from_bars(bars: &[OhlcBar], orientation: Orientation) -> Result<Self> {
        let mut dates = Vec::with_capacity(bars.len());
        let mut values = Vec::with_capacity(bars.len());
        for bar in bars {
            let close = bar.close.ok_or_else(|| {
                Error::UnrecoverableData(format!("close missing on {} after fill", bar.date))
            })?;
            dates.push(bar.date);
            values.push(close);
        }
        Self::new(dates, values, orientation)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes the series as `date,value` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("date,value\n");
        for (d, v) in self.dates.iter().zip(&self.values) {
            out.push_str(&format!("{},{}\n", d.format("%Y-%m-%d"), v));
        }
        out
    }

    /// Reads the `date,value` layout written by [`RateSeries::to_csv`].
    pub fn from_csv(text: &str, orientation: Orientation) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let mut dates = Vec::new();
        let mut values = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let date = parse_date(record.get(0).unwrap_or(""), line)?;
            let value = record
                .get(1)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Row {
                    line,
                    message: "unparseable value".into(),
                })?;
            dates.push(date);
            values.push(value);
        }
        Self::new(dates, values, orientation)
    }
}

/// Replaces every value by its reciprocal and flips the orientation.
pub fn invert_rates(series: &RateSeries) -> Result<RateSeries> {
    let mut values = Vec::with_capacity(series.len());
    for (date, &value) in series.dates.iter().zip(&series.values) {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Domain { date: *date, value });
        }
        values.push(1.0 / value);
    }
    Ok(RateSeries {
        dates: series.dates.clone(),
        values,
        orientation: series.orientation.flipped(),
    })
}

fn parse_date(raw: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|e| Error::Row {
        line,
        message: format!("unparseable date {raw:?}: {e}"),
    })
}

fn parse_cell(raw: Option<&str>, column: &str, line: usize) -> Result<Option<f64>> {
    let Some(raw) = raw.map(str::trim) else {
        return Ok(None);
    };
    if raw.is_empty() || raw.eq_ignore_ascii_case("null") {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| Error::Row {
        line,
        message: format!("unparseable {column} value {raw:?}"),
    })
}

/// Parses a daily OHLC CSV export into bars in file order.
///
/// `Adj Close` is preferred over `Close` per row whenever the column exists
/// and the cell is present.
pub fn parse_ohlc_csv(text: &str) -> Result<Vec<OhlcBar>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let date_col = column("Date").ok_or_else(|| Error::Format("missing header row".into()))?;
    let required = |name: &str| {
        column(name).ok_or_else(|| Error::Format(format!("header lacks column {name:?}")))
    };
    let open_col = required("Open")?;
    let high_col = required("High")?;
    let low_col = required("Low")?;
    let close_col = required("Close")?;
    let adj_col = column("Adj Close");
    let volume_col = column("Volume");

    let mut bars = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 2, |p| p.line() as usize);
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let date = parse_date(record.get(date_col).unwrap_or(""), line)?;
        let cell = |col: usize, name: &str| parse_cell(record.get(col), name, line);
        let close = cell(close_col, "Close")?;
        let adj = match adj_col {
            Some(col) => cell(col, "Adj Close")?,
            None => None,
        };
        bars.push(OhlcBar {
            date,
            open: cell(open_col, "Open")?,
            high: cell(high_col, "High")?,
            low: cell(low_col, "Low")?,
            close: adj.or(close),
            volume: match volume_col {
                Some(col) => cell(col, "Volume")?,
                None => None,
            },
        });
    }
    if bars.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(bars)
}

/// What [`forward_fill`] changed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FillReport {
    /// Rows dropped because a price had no earlier value to copy.
    pub dropped_leading: Vec<NaiveDate>,
    /// Dates that appeared more than once; the last occurrence was kept.
    pub duplicate_dates: Vec<NaiveDate>,
    /// Number of cells replaced by an earlier value.
    pub filled_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filled {
    pub bars: Vec<OhlcBar>,
    pub report: FillReport,
}

/// Sorts by date, collapses duplicate dates (last wins) and forward-fills
/// missing cells from the most recent earlier value of the same field.
pub fn forward_fill(bars: &[OhlcBar]) -> Result<Filled> {
    if bars.iter().all(|b| b.close.is_none()) {
        return Err(Error::UnrecoverableData("every close is missing".into()));
    }
    let mut report = FillReport::default();

    // BTreeMap insertion keeps the last occurrence of each date, in date order.
    let mut by_date: BTreeMap<NaiveDate, OhlcBar> = BTreeMap::new();
    for bar in bars {
        if by_date.insert(bar.date, bar.clone()).is_some() {
            report.duplicate_dates.push(bar.date);
            log::warn!("duplicate date {}; keeping the last row", bar.date);
        }
    }
    report.duplicate_dates.sort();
    report.duplicate_dates.dedup();

    let mut last = [None::<f64>; 5];
    let mut out = Vec::with_capacity(by_date.len());
    for (_, mut bar) in by_date {
        let fields = [
            &mut bar.open,
            &mut bar.high,
            &mut bar.low,
            &mut bar.close,
            &mut bar.volume,
        ];
        for (slot, prev) in fields.into_iter().zip(last.iter_mut()) {
            match *slot {
                Some(v) => *prev = Some(v),
                None => {
                    if prev.is_some() {
                        *slot = *prev;
                        report.filled_cells += 1;
                    }
                }
            }
        }
        if bar.is_complete() {
            out.push(bar);
        } else {
            report.dropped_leading.push(bar.date);
        }
    }
    if out.is_empty() {
        return Err(Error::UnrecoverableData(
            "no row survives forward fill".into(),
        ));
    }
    Ok(Filled { bars: out, report })
}

/// Rows whose high/low do not bracket open and close. Reported, never rejected.
pub fn ohlc_violations(bars: &[OhlcBar]) -> Vec<NaiveDate> {
    bars.iter()
        .filter(|b| match (b.open, b.high, b.low, b.close) {
            (Some(o), Some(h), Some(l), Some(c)) => l > o.min(c) || h < o.max(c),
            _ => false,
        })
        .map(|b| b.date)
        .collect()
}

/// Result of [`fetch_remote`].
#[derive(Debug, Clone)]
pub struct Fetched {
    pub body: String,
    pub from_cache: bool,
    pub warnings: Vec<String>,
}

/// Cache file location for `url`: `<cache_dir>/<sha256-hex>.csv`.
pub fn cache_path(url: &str, cache_dir: &Path) -> PathBuf {
    let digest = Sha256::digest(url.as_bytes());
    cache_dir.join(format!("{}.csv", hex::encode(digest)))
}

/// Downloads `url`, writing the body through to the cache. When the network
/// is unavailable a cached copy is returned with a staleness warning.
pub fn fetch_remote(url: &str, cache_dir: &Path) -> Result<Fetched> {
    let path = cache_path(url, cache_dir);
    match download(url) {
        Ok((body, content_type)) => {
            let mut warnings = Vec::new();
            if let Some(ct) = content_type.filter(|ct| !looks_like_csv(ct)) {
                let msg = format!("unexpected content type {ct:?} for {url}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
            write_atomic(&path, body.as_bytes())?;
            Ok(Fetched {
                body,
                from_cache: false,
                warnings,
            })
        }
        Err(message) => match fs::read_to_string(&path) {
            Ok(body) => {
                let msg = format!("network fetch failed ({message}); using cached copy {}", path.display());
                log::warn!("{msg}");
                Ok(Fetched {
                    body,
                    from_cache: true,
                    warnings: vec![msg],
                })
            }
            Err(_) => Err(Error::Fetch {
                url: url.to_string(),
                message,
            }),
        },
    }
}

fn looks_like_csv(content_type: &str) -> bool {
    let ct = content_type.to_ascii_lowercase();
    ct.contains("csv") || ct.starts_with("text/plain") || ct.contains("octet-stream")
}

fn download(url: &str) -> std::result::Result<(String, Option<String>), String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(std::time::Duration::from_secs(30)))
        .build()
        .into();
    let mut response = agent.get(url).call().map_err(|e| e.to_string())?;
    let content_type = response
        .headers()
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    Ok((body, content_type))
}

/// Writes via a temporary file in the same directory, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| Error::io(format!("creating temp file in {}", dir.display()), e))?;
    tmp.write_all(bytes)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(format!("renaming into {}", path.display()), e.error))?;
    Ok(())
}

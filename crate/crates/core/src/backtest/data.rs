//! Price/constituency ingestion, missing-data repair, and universe filtering.

use std::collections::HashMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;

use crate::error::{Error, Result};

/// Wide panel of adjusted close prices; `NaN` marks a missing observation.
#[derive(Debug, Clone)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    tickers: Vec<String>,
    prices: Array2<f64>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, prices: Array2<f64>) -> Result<Self> {
        let (n, d) = prices.dim();
        if dates.len() != n || tickers.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "{} dates x {} tickers for a {n}x{d} price matrix",
                dates.len(),
                tickers.len()
            )));
        }
        if let Some(pos) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::NonMonotoneDates(pos + 2));
        }
        if prices.iter().any(|p| !p.is_nan() && *p <= 0.0) {
            return Err(Error::InvalidConfig("prices must be positive".into()));
        }
        Ok(Self {
            dates,
            tickers,
            prices,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn n_tickers(&self) -> usize {
        self.tickers.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn prices(&self) -> &Array2<f64> {
        &self.prices
    }

    pub fn ticker_index(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Raw price column (may contain NaN).
    pub fn series(&self, ticker_idx: usize) -> Vec<f64> {
        self.prices.column(ticker_idx).to_vec()
    }

    /// Index of the first observed (non-missing) price, if any.
    pub fn first_observed(&self, ticker_idx: usize) -> Option<usize> {
        self.prices.column(ticker_idx).iter().position(|p| !p.is_nan())
    }
}

/// Wide CSV: first column `date` (ISO-8601), one column per ticker, empty
/// cells mark missing prices.
pub fn load_prices(path: &Path) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::ParseError {
            line: 1,
            message: "missing header row".into(),
        });
    }
    let tickers: Vec<String> = headers.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() != tickers.len() + 1 {
            return Err(Error::ParseError {
                line,
                message: format!("expected {} fields, found {}", tickers.len() + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(record[0].trim(), "%Y-%m-%d").map_err(|e| {
            Error::ParseError {
                line,
                message: format!("bad date {:?}: {e}", &record[0]),
            }
        })?;
        if let Some(&last) = dates.last() {
            if date <= last {
                return Err(Error::NonMonotoneDates(line));
            }
        }
        dates.push(date);
        let mut row = Vec::with_capacity(tickers.len());
        for (c, field) in record.iter().skip(1).enumerate() {
            let field = field.trim();
            if field.is_empty() {
                row.push(f64::NAN);
            } else {
                let v: f64 = field.parse().map_err(|e| Error::ParseError {
                    line,
                    message: format!("bad price for {}: {e}", tickers[c]),
                })?;
                row.push(v);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::ParseError {
            line: 2,
            message: "no data rows".into(),
        });
    }
    let n = rows.len();
    let d = tickers.len();
    let mut prices = Array2::from_elem((n, d), f64::NAN);
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row.into_iter().enumerate() {
            prices[[r, c]] = v;
        }
    }
    PricePanel::new(dates, tickers, prices)
}

/// Two-column CSV `date,price`.
pub fn load_benchmark(path: &Path) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let date = NaiveDate::parse_from_str(record[0].trim(), "%Y-%m-%d").map_err(|e| {
            Error::ParseError {
                line,
                message: format!("bad date: {e}"),
            }
        })?;
        let price: f64 = record[1].trim().parse().map_err(|e| Error::ParseError {
            line,
            message: format!("bad price: {e}"),
        })?;
        if let Some(&last) = dates.last() {
            if date <= last {
                return Err(Error::NonMonotoneDates(line));
            }
        }
        dates.push(date);
        prices.push(price);
    }
    if dates.is_empty() {
        return Err(Error::ParseError {
            line: 2,
            message: "no benchmark rows".into(),
        });
    }
    Ok((dates, prices))
}

/// One index-membership interval (inclusive on both ends).
#[derive(Debug, Clone, Copy)]
pub struct Membership {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// Per-ticker membership intervals, optional share-class group, and optional
/// listing date.
#[derive(Debug, Clone, Default)]
pub struct ConstituencyTable {
    intervals: HashMap<String, Vec<Membership>>,
    class_group: HashMap<String, String>,
    listing: HashMap<String, NaiveDate>,
}

impl ConstituencyTable {
    /// Everyone a member for the whole span; used by synthetic markets.
    pub fn full_membership(tickers: &[String], start: NaiveDate, end: NaiveDate) -> Self {
        let mut t = Self::default();
        for ticker in tickers {
            t.intervals
                .insert(ticker.clone(), vec![Membership { start, end }]);
        }
        t
    }

    pub fn insert(
        &mut self,
        ticker: &str,
        member: Membership,
        class_group: Option<String>,
        listing: Option<NaiveDate>,
    ) {
        self.intervals.entry(ticker.to_string()).or_default().push(member);
        if let Some(g) = class_group {
            self.class_group.insert(ticker.to_string(), g);
        }
        if let Some(l) = listing {
            self.listing.insert(ticker.to_string(), l);
        }
    }

    pub fn is_member(&self, ticker: &str, date: NaiveDate) -> bool {
        self.intervals
            .get(ticker)
            .map(|iv| iv.iter().any(|m| m.start <= date && date <= m.end))
            .unwrap_or(false)
    }

    pub fn class_group(&self, ticker: &str) -> Option<&str> {
        self.class_group.get(ticker).map(|s| s.as_str())
    }

    pub fn listing_date(&self, ticker: &str) -> Option<NaiveDate> {
        self.listing.get(ticker).copied()
    }
}

/// CSV `ticker,start_date,end_date,class_group,listing_date`; the last two
/// columns may be empty.
pub fn load_constituents(path: &Path) -> Result<ConstituencyTable> {
    let mut reader = csv::ReaderBuilder::new().from_path(path)?;
    let mut table = ConstituencyTable::default();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() < 3 {
            return Err(Error::ParseError {
                line,
                message: "need at least ticker,start_date,end_date".into(),
            });
        }
        let parse_date = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| Error::ParseError {
                line,
                message: format!("bad date {s:?}: {e}"),
            })
        };
        let ticker = record[0].trim().to_string();
        let start = parse_date(&record[1])?;
        let end = parse_date(&record[2])?;
        let group = record
            .get(3)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from);
        let listing = match record.get(4).map(str::trim).filter(|s| !s.is_empty()) {
            Some(s) => Some(parse_date(s)?),
            None => None,
        };
        table.insert(&ticker, Membership { start, end }, group, listing);
    }
    Ok(table)
}

/// Fills gaps in a price series: interior gaps linearly interpolated between
/// the surrounding observations, leading/trailing gaps filled with the
/// nearest observed value.
pub fn repair_missing(series: &[f64]) -> Result<Vec<f64>> {
    let observed: Vec<usize> = series
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .map(|(i, _)| i)
        .collect();
    if observed.is_empty() {
        return Err(Error::AllMissing("series".into()));
    }
    let mut out = series.to_vec();
    let first = observed[0];
    let last = *observed.last().expect("non-empty");
    for v in out.iter_mut().take(first) {
        *v = series[first];
    }
    for v in out.iter_mut().skip(last + 1) {
        *v = series[last];
    }
    for w in observed.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a + 1 {
            let step = (series[b] - series[a]) / (b - a) as f64;
            for i in (a + 1)..b {
                out[i] = series[a] + step * (i - a) as f64;
            }
        }
    }
    Ok(out)
}

/// Minimum trading days of history for universe inclusion (five years).
pub const MIN_HISTORY_DAYS: usize = 5 * 252;

/// Maximum fraction of missing prices in the trailing window.
pub const MAX_MISSING_FRAC: f64 = 0.05;

/// Tickers eligible at `as_of`: index members with at least five years of
/// history, at most 5% missing data in the trailing `window` days, and only
/// the longest-history class per share-class group.
pub fn filter_universe(
    panel: &PricePanel,
    constituents: &ConstituencyTable,
    as_of: NaiveDate,
    window: usize,
) -> Vec<String> {
    filter_universe_with(panel, constituents, as_of, window, MIN_HISTORY_DAYS)
}

/// [`filter_universe`] with a configurable history requirement.
pub fn filter_universe_with(
    panel: &PricePanel,
    constituents: &ConstituencyTable,
    as_of: NaiveDate,
    window: usize,
    min_history: usize,
) -> Vec<String> {
    let Some(t) = panel.date_index(as_of) else {
        return Vec::new();
    };
    let win_start = (t + 1).saturating_sub(window);
    let mut passing: Vec<usize> = Vec::new();
    for (idx, ticker) in panel.tickers().iter().enumerate() {
        if !constituents.is_member(ticker, as_of) {
            continue;
        }
        let Some(first) = panel.first_observed(idx) else {
            continue;
        };
        if first > t || t - first + 1 < min_history {
            continue;
        }
        let missing = panel
            .prices()
            .column(idx)
            .iter()
            .take(t + 1)
            .skip(win_start)
            .filter(|p| p.is_nan())
            .count();
        if missing as f64 > MAX_MISSING_FRAC * (t + 1 - win_start) as f64 {
            continue;
        }
        passing.push(idx);
    }

    // among surviving share classes of one company, keep the longest history
    let mut best_of_group: HashMap<&str, usize> = HashMap::new();
    let history_key = |idx: usize| -> (NaiveDate, &str) {
        let ticker = &panel.tickers()[idx];
        let listed = constituents
            .listing_date(ticker)
            .unwrap_or_else(|| panel.dates()[panel.first_observed(idx).expect("checked")]);
        (listed, ticker.as_str())
    };
    for &idx in &passing {
        let ticker = &panel.tickers()[idx];
        let Some(group) = constituents.class_group(ticker) else {
            continue;
        };
        best_of_group
            .entry(group)
            .and_modify(|cur| {
                if history_key(idx) < history_key(*cur) {
                    *cur = idx;
                }
            })
            .or_insert(idx);
    }
    passing
        .into_iter()
        .filter(|&idx| {
            let ticker = &panel.tickers()[idx];
            match constituents.class_group(ticker) {
                Some(group) => best_of_group[group] == idx,
                None => true,
            }
        })
        .map(|idx| panel.tickers()[idx].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn load_prices_happy_path_and_missing_cells() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,AAA,BBB").unwrap();
        writeln!(f, "2020-01-02,10.0,").unwrap();
        writeln!(f, "2020-01-03,10.5,20.0").unwrap();
        let panel = load_prices(f.path()).unwrap();
        assert_eq!(panel.n_dates(), 2);
        assert_eq!(panel.tickers(), &["AAA".to_string(), "BBB".to_string()]);
        assert!(panel.prices()[[0, 1]].is_nan());
        assert_eq!(panel.prices()[[1, 1]], 20.0);
    }

    #[test]
    fn load_prices_rejects_descending_dates() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "date,AAA").unwrap();
        writeln!(f, "2020-01-03,10.0").unwrap();
        writeln!(f, "2020-01-02,10.5").unwrap();
        assert!(matches!(
            load_prices(f.path()),
            Err(Error::NonMonotoneDates(3))
        ));
    }

    #[test]
    fn load_constituents_parses_optional_columns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "ticker,start_date,end_date,class_group,listing_date").unwrap();
        writeln!(f, "AAA,2000-01-03,2010-12-31,,").unwrap();
        writeln!(f, "BBB,2005-06-01,2010-12-31,ALPHA,2004-01-02").unwrap();
        let table = load_constituents(f.path()).unwrap();
        assert!(table.is_member("AAA", d("2003-05-05")));
        assert!(!table.is_member("BBB", d("2003-05-05")));
        assert!(table.is_member("BBB", d("2006-01-05")));
        assert_eq!(table.class_group("BBB"), Some("ALPHA"));
        assert_eq!(table.class_group("AAA"), None);
        assert_eq!(table.listing_date("BBB"), Some(d("2004-01-02")));
    }

    #[test]
    fn repair_fills_interior_and_edges() {
        let repaired = repair_missing(&[1.0, f64::NAN, 3.0]).unwrap();
        assert_eq!(repaired, vec![1.0, 2.0, 3.0]);

        let repaired = repair_missing(&[1.0, f64::NAN, f64::NAN, 4.0]).unwrap();
        assert_eq!(repaired, vec![1.0, 2.0, 3.0, 4.0]);

        let repaired = repair_missing(&[f64::NAN, 2.0, 3.0]).unwrap();
        assert_eq!(repaired, vec![2.0, 2.0, 3.0]);

        let repaired = repair_missing(&[1.0, 2.0, f64::NAN]).unwrap();
        assert_eq!(repaired, vec![1.0, 2.0, 2.0]);

        assert!(matches!(
            repair_missing(&[f64::NAN, f64::NAN]),
            Err(Error::AllMissing(_))
        ));
    }

    fn panel_with(
        n: usize,
        specs: &[(&str, usize, f64)], // (ticker, first observed index, missing_frac_in_tail)
    ) -> PricePanel {
        let start = d("2000-01-03");
        let dates: Vec<NaiveDate> = crate::blocksim::trading_days(start, n);
        let tickers: Vec<String> = specs.iter().map(|(t, _, _)| t.to_string()).collect();
        let mut prices = Array2::from_elem((n, specs.len()), f64::NAN);
        for (c, &(_, first, miss_frac)) in specs.iter().enumerate() {
            let gap = if miss_frac > 0.0 {
                (1.0 / miss_frac).round() as usize
            } else {
                usize::MAX
            };
            for r in first..n {
                // drop every gap-th price within the last 500 days
                if gap != usize::MAX && r + 500 >= n && (r % gap) == 0 {
                    continue;
                }
                prices[[r, c]] = 100.0 + r as f64 * 0.01 + c as f64;
            }
        }
        PricePanel::new(dates, tickers, prices).unwrap()
    }

    #[test]
    fn universe_filter_applies_all_rules() {
        let n = 1600;
        let panel = panel_with(
            n,
            &[
                ("GOOD", 0, 0.0),
                ("YOUNG", 1300, 0.0), // only ~300 days of history
                ("HOLEY", 0, 0.08),   // 8% missing in the trailing window
                ("CLS.A", 0, 0.0),
                ("CLS.B", 100, 0.0), // same company, listed later
                ("GONE", 0, 0.0),    // not a member at as_of
            ],
        );
        let as_of = panel.dates()[n - 1];
        let span = (panel.dates()[0], as_of);
        let mut table = ConstituencyTable::default();
        for t in ["GOOD", "YOUNG", "HOLEY", "CLS.A", "CLS.B"] {
            table.insert(
                t,
                Membership {
                    start: span.0,
                    end: span.1,
                },
                None,
                None,
            );
        }
        table.class_group.insert("CLS.A".into(), "CLS".into());
        table.class_group.insert("CLS.B".into(), "CLS".into());
        table.insert(
            "GONE",
            Membership {
                start: span.0,
                end: panel.dates()[100],
            },
            None,
            None,
        );

        let eligible = filter_universe(&panel, &table, as_of, 500);
        assert_eq!(eligible, vec!["GOOD".to_string(), "CLS.A".to_string()]);
    }
}

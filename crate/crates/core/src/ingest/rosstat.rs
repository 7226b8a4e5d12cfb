//! Statistics-office yearly CSV: one firm per row.
//!
//! Header: `inn,year,form,unit` followed by line-code columns. Prior-period
//! columns carry a `_p1` / `_p2` suffix and appear only for the sections the
//! file provides. This provider writes zeros for unfilled cells, so every zero
//! is read as missing.

use std::io::Read;

use chrono::NaiveDate;

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{Form, LineCode, Period, Provider, RawFiling, Unit};
use crate::par::Workers;

const FIXED_COLUMNS: [&str; 4] = ["inn", "year", "form", "unit"];

#[derive(Debug, Clone)]
struct Column {
    code: LineCode,
    period: Period,
}

fn parse_header(header: &csv::StringRecord) -> Result<Vec<Column>> {
    for (i, want) in FIXED_COLUMNS.iter().enumerate() {
        if header.get(i) != Some(*want) {
            return Err(Error::MalformedDocument(format!(
                "expected column {i} to be {want:?}"
            )));
        }
    }
    header
        .iter()
        .skip(FIXED_COLUMNS.len())
        .map(|name| {
            let (code, period) = match name.rsplit_once('_') {
                Some((code, "p1")) => (code, Period::Prior1),
                Some((code, "p2")) => (code, Period::Prior2),
                _ => (name, Period::Current),
            };
            let code = LineCode::parse(code)?;
            if period == Period::Prior2 && !code.is_balance() {
                return Err(Error::MalformedDocument(format!(
                    "{name}: two-years-prior column outside balance sheet"
                )));
            }
            Ok(Column { code, period })
        })
        .collect()
}

/// The provider publishes no submission dates; all rows for a year share one.
pub fn nominal_submission_date(year: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(year + 1, 12, 31).expect("valid date")
}

fn parse_row(record: &csv::StringRecord, columns: &[Column], year: i32) -> Result<RawFiling> {
    let expected = FIXED_COLUMNS.len() + columns.len();
    if record.len() != expected {
        return Err(Error::Parse(format!(
            "expected {expected} fields, found {}",
            record.len()
        )));
    }
    let inn = record[0].trim();
    let row_year: i32 = record[1]
        .trim()
        .parse()
        .map_err(|_| Error::Parse("bad year".into()))?;
    if row_year != year {
        return Err(Error::Parse(format!(
            "row year {row_year} in file for {year}"
        )));
    }
    let mut filing = RawFiling::new(inn, year, Provider::Rosstat, nominal_submission_date(year));
    filing.form = record[2].parse::<Form>()?;
    filing.unit = record[3].parse::<Unit>()?;
    for (col, cell) in columns.iter().zip(record.iter().skip(FIXED_COLUMNS.len())) {
        let cell = cell.trim();
        if cell.is_empty() {
            continue;
        }
        let value: i64 = cell
            .parse()
            .map_err(|_| Error::Parse(format!("non-integer cell {cell:?} for {}", col.code)))?;
        if value != 0 {
            filing.period_mut(col.period).insert(col.code, value);
        }
    }
    Ok(filing)
}

/// Parse one year's CSV. Malformed rows are skipped with a diagnostic.
pub fn parse_rosstat_csv<R: Read>(
    input: R,
    year: i32,
    workers: &Workers,
) -> Result<(Vec<RawFiling>, Diagnostics)> {
    if !(2012..=crate::model::ROSSTAT_LAST_YEAR).contains(&year) {
        return Err(Error::Parse(format!(
            "statistics-office CSV year {year} outside 2012-2018"
        )));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let columns = parse_header(reader.headers()?)?;
    let mut records = Vec::new();
    let mut diags = Diagnostics::new();
    for (i, rec) in reader.records().enumerate() {
        match rec {
            Ok(r) => records.push(r),
            Err(e) => diags.push(Diagnostic::warn(
                DiagCode::MalformedRow,
                "",
                Some(year),
                format!("row {}: {e}", i + 2),
            )),
        }
    }
    let parsed = workers.map(&records, |r| parse_row(r, &columns, year));
    let mut filings = Vec::with_capacity(parsed.len());
    for (i, (res, rec)) in parsed.into_iter().zip(&records).enumerate() {
        match res {
            Ok(f) => filings.push(f),
            Err(e) => diags.push(Diagnostic::warn(
                DiagCode::MalformedRow,
                rec.get(0).unwrap_or(""),
                Some(year),
                format!("row {}: {e}", i + 2),
            )),
        }
    }
    Ok((filings, diags))
}

/// Column layout for writing: which prior-period columns to emit.
#[derive(Debug, Clone)]
pub struct CsvLayout {
    pub current: Vec<LineCode>,
    pub prior1: Vec<LineCode>,
    pub prior2: Vec<LineCode>,
}

impl CsvLayout {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        h.extend(self.current.iter().map(|c| c.to_string()));
        h.extend(self.prior1.iter().map(|c| format!("{c}_p1")));
        h.extend(self.prior2.iter().map(|c| format!("{c}_p2")));
        h
    }

    /// Cells for one filing; missing values are written as `0` like the real files.
    pub fn row(&self, f: &RawFiling) -> Vec<String> {
        let mut r = vec![
            f.inn.clone(),
            f.year.to_string(),
            f.form.to_string(),
            f.unit.to_string(),
        ];
        for (codes, lines) in [
            (&self.current, &f.current),
            (&self.prior1, &f.prior1),
            (&self.prior2, &f.prior2),
        ] {
            r.extend(
                codes
                    .iter()
                    .map(|c| lines.get(c).copied().unwrap_or(0).to_string()),
            );
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> (Vec<RawFiling>, Diagnostics) {
        parse_rosstat_csv(text.as_bytes(), 2015, &Workers::sequential()).unwrap()
    }

    #[test]
    fn zero_cells_become_missing() {
        let (f, d) = parse("inn,year,form,unit,2110,2120\n7736050003,2015,FULL,THOUSANDS,0,500\n");
        assert!(d.is_empty());
        assert_eq!(f[0].current.get(&LineCode::of("2110")), None);
        assert_eq!(f[0].current.get(&LineCode::of("2120")), Some(&500));
    }

    #[test]
    fn wrong_column_count_is_malformed_row() {
        let (f, d) = parse("inn,year,form,unit,2110\n7736050003,2015,FULL,THOUSANDS,1,2\n7736050004,2015,FULL,THOUSANDS,5\n");
        assert_eq!(f.len(), 1);
        assert_eq!(d.count(DiagCode::MalformedRow), 1);
    }

    #[test]
    fn prior_columns_parsed() {
        let (f, _) = parse("inn,year,form,unit,1600,1600_p1,1600_p2,2110_p1\n7736050003,2015,FULL,MILLIONS,3,2,1,0\n");
        assert_eq!(f[0].prior1[&LineCode::of("1600")], 2);
        assert_eq!(f[0].prior2[&LineCode::of("1600")], 1);
        assert!(!f[0].prior1.contains_key(&LineCode::of("2110")));
        assert_eq!(f[0].unit, Unit::Millions);
    }

    #[test]
    fn bad_header_and_year_rejected() {
        assert!(parse_rosstat_csv(
            "inn,year,form,unit,2110_p2\n".as_bytes(),
            2015,
            &Workers::sequential()
        )
        .is_err());
        assert!(parse_rosstat_csv(
            "inn,year,form,unit\n".as_bytes(),
            2019,
            &Workers::sequential()
        )
        .is_err());
    }
}

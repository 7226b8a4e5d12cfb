//! CSV persistence of the artifacts passed between pipeline stages.
//!
//! Statements and filings are stored as a metadata file plus a long-format
//! lines file (`inn,year[,period],code,value`); a line that is not listed is
//! missing. Every writer sorts its rows so files are byte-stable.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::eligibility::EligibilityRow;
use crate::error::{Error, Result};
use crate::model::{
    Address, EligibilityDecision, ExemptCriterion, FirmRecord, Form, GeoLocation,
    HarmonizedStatement, LineCode, Lines, Period, Provider, RawFiling, Unit,
};

fn writer(path: &Path) -> Result<csv::Writer<std::io::BufWriter<std::fs::File>>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(std::io::BufWriter::new(file)))
}

fn reader(path: &Path) -> Result<csv::Reader<std::io::BufReader<std::fs::File>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    Ok(csv::Reader::from_reader(std::io::BufReader::new(file)))
}

fn finish<W: std::io::Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn parse_text<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T> {
    s.parse()
}

#[derive(Serialize, Deserialize)]
struct FirmRow {
    inn: String,
    ogrn: String,
    year: i32,
    name: String,
    region: String,
    region_taxcode: String,
    creation_date: NaiveDate,
    dissolution_date: Option<NaiveDate>,
    age: i32,
    okved: String,
    okopf: String,
    okfs: String,
    okogu: String,
    okpo: String,
    oktmo: String,
    address_region: String,
    address_city: String,
    address_street: String,
    address_house: String,
    unmapped_code: bool,
}

pub fn write_universe(path: &Path, universe: &[FirmRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let mut sorted: Vec<&FirmRecord> = universe.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    for f in sorted {
        w.serialize(FirmRow {
            inn: f.inn.clone(),
            ogrn: f.ogrn.clone(),
            year: f.year,
            name: f.name.clone(),
            region: f.region.clone(),
            region_taxcode: f.region_taxcode.clone(),
            creation_date: f.creation_date,
            dissolution_date: f.dissolution_date,
            age: f.age,
            okved: f.okved.clone(),
            okopf: f.okopf.clone(),
            okfs: f.okfs.clone(),
            okogu: f.okogu.clone(),
            okpo: f.okpo.clone(),
            oktmo: f.oktmo.clone(),
            address_region: f.address.region.clone(),
            address_city: f.address.city.clone(),
            address_street: f.address.street.clone(),
            address_house: f.address.house.clone(),
            unmapped_code: f.unmapped_code,
        })?;
    }
    finish(w, path)
}

pub fn read_universe(path: &Path) -> Result<Vec<FirmRecord>> {
    let mut out = Vec::new();
    for row in reader(path)?.deserialize::<FirmRow>() {
        let r = row?;
        out.push(FirmRecord {
            inn: r.inn,
            ogrn: r.ogrn,
            year: r.year,
            name: r.name,
            region: r.region,
            region_taxcode: r.region_taxcode,
            creation_date: r.creation_date,
            dissolution_date: r.dissolution_date,
            age: r.age,
            okved: r.okved,
            okopf: r.okopf,
            okfs: r.okfs,
            okogu: r.okogu,
            okpo: r.okpo,
            oktmo: r.oktmo,
            address: Address {
                region: r.address_region,
                city: r.address_city,
                street: r.address_street,
                house: r.address_house,
            },
            unmapped_code: r.unmapped_code,
        });
    }
    Ok(out)
}

pub fn write_eligibility(path: &Path, rows: &[EligibilityRow]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["inn", "year", "eligible", "exempt_criteria", "financial"])?;
    let mut sorted: Vec<&EligibilityRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.inn, a.year).cmp(&(&b.inn, b.year)));
    for r in sorted {
        w.write_record([
            r.inn.as_str(),
            &r.year.to_string(),
            &r.decision.eligible().to_string(),
            r.decision.exempt_criteria().map_or("", |c| c.as_str()),
            &r.financial.to_string(),
        ])?;
    }
    finish(w, path)
}

fn parse_bool(s: &str) -> Result<bool> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad boolean {s:?}")))
}

fn parse_int<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer {s:?}")))
}

pub fn read_eligibility(path: &Path) -> Result<Vec<EligibilityRow>> {
    let mut out = Vec::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let criterion = match &rec[3] {
            "" => None,
            c => Some(parse_text::<ExemptCriterion>(c)?),
        };
        out.push(EligibilityRow {
            inn: rec[0].to_string(),
            year: parse_int(&rec[1])?,
            decision: EligibilityDecision::from_criterion(criterion),
            financial: parse_bool(&rec[4])?,
        });
    }
    Ok(out)
}

/// Filings: `<stem>.csv` holds one metadata row per filing, `<stem>_lines.csv`
/// the values of all three periods.
pub fn write_filings(meta_path: &Path, lines_path: &Path, filings: &[RawFiling]) -> Result<()> {
    let mut sorted: Vec<&RawFiling> = filings.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    let mut meta = writer(meta_path)?;
    meta.write_record(["inn", "year", "provider", "form", "unit", "submission_date"])?;
    let mut lines = writer(lines_path)?;
    lines.write_record(["inn", "year", "period", "code", "value"])?;
    for f in sorted {
        let year = f.year.to_string();
        meta.write_record([
            f.inn.as_str(),
            &year,
            f.provider.as_str(),
            f.form.as_str(),
            f.unit.as_str(),
            &f.submission_date.to_string(),
        ])?;
        for period in [Period::Current, Period::Prior1, Period::Prior2] {
            for (code, v) in f.period(period) {
                lines.write_record([
                    f.inn.as_str(),
                    &year,
                    period.as_str(),
                    code.as_str(),
                    &v.to_string(),
                ])?;
            }
        }
    }
    finish(meta, meta_path)?;
    finish(lines, lines_path)
}

pub fn read_filings(meta_path: &Path, lines_path: &Path) -> Result<Vec<RawFiling>> {
    let mut by_key: BTreeMap<(String, i32), RawFiling> = BTreeMap::new();
    for rec in reader(meta_path)?.records() {
        let rec = rec?;
        let year = parse_int(&rec[1])?;
        let date = NaiveDate::parse_from_str(&rec[5], "%Y-%m-%d")
            .map_err(|_| Error::Parse(format!("bad date {:?}", &rec[5])))?;
        let mut f = RawFiling::new(&rec[0], year, parse_text::<Provider>(&rec[2])?, date);
        f.form = parse_text::<Form>(&rec[3])?;
        f.unit = parse_text::<Unit>(&rec[4])?;
        by_key.insert((f.inn.clone(), year), f);
    }
    for rec in reader(lines_path)?.records() {
        let rec = rec?;
        let key = (rec[0].to_string(), parse_int(&rec[1])?);
        let f = by_key.get_mut(&key).ok_or_else(|| {
            Error::Parse(format!(
                "{}: line for unknown filing {key:?}",
                lines_path.display()
            ))
        })?;
        let period = parse_text::<Period>(&rec[2])?;
        f.period_mut(period)
            .insert(LineCode::parse(&rec[3])?, parse_int(&rec[4])?);
    }
    Ok(by_key.into_values().collect())
}

fn opt_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

pub fn write_statements(
    meta_path: &Path,
    lines_path: &Path,
    statements: &[HarmonizedStatement],
) -> Result<()> {
    let mut sorted: Vec<&HarmonizedStatement> = statements.iter().collect();
    sorted.sort_by(|a, b| (&a.inn, a.year).cmp(&(&b.inn, b.year)));
    let mut meta = writer(meta_path)?;
    meta.write_record([
        "inn",
        "year",
        "form",
        "imputed",
        "imputation_source_year",
        "simplified",
        "totals_adjustment",
        "articulated",
    ])?;
    let mut lines = writer(lines_path)?;
    lines.write_record(["inn", "year", "code", "value"])?;
    for s in sorted {
        let year = s.year.to_string();
        meta.write_record([
            s.inn.as_str(),
            &year,
            s.form.as_str(),
            opt_bool(s.imputed),
            &s.imputation_source_year
                .map_or(String::new(), |y| y.to_string()),
            opt_bool(s.simplified),
            opt_bool(s.totals_adjustment),
            opt_bool(s.articulated),
        ])?;
        for (code, v) in &s.lines {
            lines.write_record([s.inn.as_str(), &year, code.as_str(), &v.to_string()])?;
        }
    }
    finish(meta, meta_path)?;
    finish(lines, lines_path)
}

pub fn read_statements(meta_path: &Path, lines_path: &Path) -> Result<Vec<HarmonizedStatement>> {
    let mut by_key: BTreeMap<(String, i32), HarmonizedStatement> = BTreeMap::new();
    for rec in reader(meta_path)?.records() {
        let rec = rec?;
        let s = HarmonizedStatement {
            inn: rec[0].to_string(),
            year: parse_int(&rec[1])?,
            form: parse_text::<Form>(&rec[2])?,
            lines: Lines::new(),
            imputed: parse_bool(&rec[3])?,
            imputation_source_year: match &rec[4] {
                "" => None,
                y => Some(parse_int(y)?),
            },
            simplified: parse_bool(&rec[5])?,
            totals_adjustment: parse_bool(&rec[6])?,
            articulated: parse_bool(&rec[7])?,
        };
        by_key.insert((s.inn.clone(), s.year), s);
    }
    for rec in reader(lines_path)?.records() {
        let rec = rec?;
        let key = (rec[0].to_string(), parse_int(&rec[1])?);
        let s = by_key.get_mut(&key).ok_or_else(|| {
            Error::Parse(format!(
                "{}: line for unknown statement {key:?}",
                lines_path.display()
            ))
        })?;
        s.lines
            .insert(LineCode::parse(&rec[2])?, parse_int(&rec[3])?);
    }
    Ok(by_key.into_values().collect())
}

/// Geocoding results per firm-year; firm-years without a location are omitted.
pub fn write_geo(path: &Path, geo: &BTreeMap<(String, i32), GeoLocation>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["inn", "year", "lon", "lat", "address_rank"])?;
    for ((inn, year), g) in geo {
        w.write_record([
            inn.as_str(),
            &year.to_string(),
            &g.lon.to_string(),
            &g.lat.to_string(),
            &g.address_rank.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn read_geo(path: &Path) -> Result<HashMap<(String, i32), GeoLocation>> {
    let mut out = HashMap::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        let bad = || Error::Parse(format!("{}: bad row {:?}", path.display(), rec));
        let g = GeoLocation {
            lon: rec[2].parse().map_err(|_| bad())?,
            lat: rec[3].parse().map_err(|_| bad())?,
            address_rank: rec[4].parse().map_err(|_| bad())?,
        };
        out.insert((rec[0].to_string(), parse_int(&rec[1])?), g);
    }
    Ok(out)
}

/// Firm-years flagged anomalous, with the reason from the exclusion list.
pub fn write_flags(path: &Path, flags: &BTreeMap<(String, i32), String>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["inn", "year", "reason"])?;
    for ((inn, year), reason) in flags {
        w.write_record([inn.as_str(), &year.to_string(), reason])?;
    }
    finish(w, path)
}

pub fn read_flags(path: &Path) -> Result<BTreeMap<(String, i32), String>> {
    let mut out = BTreeMap::new();
    for rec in reader(path)?.records() {
        let rec = rec?;
        out.insert(
            (rec[0].to_string(), parse_int(&rec[1])?),
            rec[2].to_string(),
        );
    }
    Ok(out)
}

/// Serialize rows with a header taken from the struct's field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{date, firm};

    #[test]
    fn universe_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        let mut a = firm("7736050003", 2020);
        a.dissolution_date = Some(date(2022, 1, 5));
        a.address.house.clear();
        let b = firm("1000000001", 2021);
        write_universe(&p, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_universe(&p).unwrap(), vec![b, a]);
    }

    #[test]
    fn filings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (m, l) = (dir.path().join("f.csv"), dir.path().join("f_lines.csv"));
        let mut f = RawFiling::new("7736050003", 2020, Provider::Fns, date(2021, 3, 1));
        f.form = Form::Simplified;
        f.current.insert(LineCode::of("1600"), 0);
        f.prior1.insert(LineCode::of("2110"), -5);
        f.prior2.insert(LineCode::of("1600"), 7);
        let g = RawFiling::new("7736050003", 2021, Provider::Fns, date(2022, 3, 1));
        write_filings(&m, &l, &[g.clone(), f.clone()]).unwrap();
        assert_eq!(read_filings(&m, &l).unwrap(), vec![f, g]);
    }

    #[test]
    fn statements_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (m, l) = (dir.path().join("s.csv"), dir.path().join("s_lines.csv"));
        let mut f = RawFiling::new("7736050003", 2020, Provider::Fns, date(2021, 3, 1));
        f.current.insert(LineCode::of("411x"), 3);
        let mut s = HarmonizedStatement::from_filing(&f);
        s.imputed = true;
        s.imputation_source_year = Some(2021);
        s.articulated = true;
        write_statements(&m, &l, &[s.clone()]).unwrap();
        assert_eq!(read_statements(&m, &l).unwrap(), vec![s]);
    }

    #[test]
    fn eligibility_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let rows = vec![
            EligibilityRow {
                inn: "1".into(),
                year: 2020,
                decision: EligibilityDecision::ELIGIBLE,
                financial: false,
            },
            EligibilityRow {
                inn: "2".into(),
                year: 2020,
                decision: EligibilityDecision::exempt(ExemptCriterion::Financial),
                financial: true,
            },
        ];
        write_eligibility(&p, &rows).unwrap();
        assert_eq!(read_eligibility(&p).unwrap(), rows);
    }

    #[test]
    fn geo_and_flags_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let mut geo = BTreeMap::new();
        geo.insert(
            ("1".to_string(), 2020),
            GeoLocation {
                lon: 37.617_123_456,
                lat: 55.755_1,
                address_rank: 30,
            },
        );
        write_geo(&p, &geo).unwrap();
        let back = read_geo(&p).unwrap();
        assert_eq!(
            back[&("1".to_string(), 2020)],
            geo[&("1".to_string(), 2020)]
        );

        let p = dir.path().join("flags.csv");
        let mut flags = BTreeMap::new();
        flags.insert(("1".to_string(), 2020), "scale, error".to_string());
        write_flags(&p, &flags).unwrap();
        assert_eq!(read_flags(&p).unwrap(), flags);
    }
}

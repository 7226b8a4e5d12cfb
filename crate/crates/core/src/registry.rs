//! Registry snapshots → firm-year universe.
//!
//! Snapshot fixture: one `<firm>` element per firm, either many inside a
//! `<snapshot as_of_year="2016">` file or one per file in a directory named by
//! year.
//!
//! ```xml
//! <firm>
//!   <inn>7736050003</inn><ogrn>1027700070518</ogrn><name>...</name>
//!   <creation_date>2002-08-09</creation_date><dissolution_date></dissolution_date>
//!   <okved legacy="true">51.51</okved><okopf>12267</okopf><okfs>16</okfs>
//!   <okogu>4210014</okogu><okpo>00040778</okpo><oktmo>45000000</oktmo>
//!   <address region="Moscow" city="Moscow" street="Nametkina" house="16"/>
//! </firm>
//! ```
//!
//! `legacy="true"` marks a code from the classifier edition in force before
//! the 2013 (legal form) / 2014 (industry) revisions.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{is_valid_inn, is_valid_ogrn, Address, FirmRecord, MAX_YEAR, MIN_YEAR};
use crate::par::Workers;

/// One firm as described by one snapshot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FirmFragment {
    pub as_of_year: i32,
    pub inn: String,
    pub ogrn: String,
    pub name: String,
    pub creation_date: NaiveDate,
    pub dissolution_date: Option<NaiveDate>,
    pub okved: String,
    pub okved_legacy: bool,
    pub okopf: String,
    pub okopf_legacy: bool,
    pub okfs: String,
    pub okogu: String,
    pub okpo: String,
    pub oktmo: String,
    pub address: Address,
}

#[derive(Debug, Clone, Default)]
pub struct RegistrySnapshot {
    pub as_of_year: i32,
    pub fragments: Vec<FirmFragment>,
}

fn attr(e: &BytesStart<'_>, name: &str) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| Error::MalformedDocument(err.to_string()))?;
        if a.key.as_ref() == name.as_bytes() {
            let v = a
                .unescape_value()
                .map_err(|err| Error::MalformedDocument(err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

fn parse_date(text: &str, what: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
        .map_err(|_| Error::MalformedDocument(format!("bad {what} {text:?}")))
}

/// Parse one `<firm>` document.
pub fn parse_firm(document: &str, as_of_year: i32) -> Result<FirmFragment> {
    let mut reader = Reader::from_str(document);
    reader.config_mut().trim_text(true);
    let mut fields: HashMap<String, String> = HashMap::new();
    let mut legacy: HashMap<String, bool> = HashMap::new();
    let mut address = Address::default();
    let mut in_firm = false;
    loop {
        match reader.read_event()? {
            Event::Start(e) if e.name().as_ref() == b"firm" => in_firm = true,
            Event::End(e) if e.name().as_ref() == b"firm" => break,
            Event::Start(e) if in_firm => {
                let e = e.into_owned();
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let raw = reader.read_text(e.name())?;
                let text = quick_xml::escape::unescape(&raw)
                    .map_err(|err| Error::MalformedDocument(err.to_string()))?
                    .trim()
                    .to_string();
                if attr(&e, "legacy")?.as_deref() == Some("true") {
                    legacy.insert(name.clone(), true);
                }
                fields.insert(name, text);
            }
            Event::Empty(e) if in_firm && e.name().as_ref() == b"address" => {
                address = Address {
                    region: attr(&e, "region")?.unwrap_or_default(),
                    city: attr(&e, "city")?.unwrap_or_default(),
                    street: attr(&e, "street")?.unwrap_or_default(),
                    house: attr(&e, "house")?.unwrap_or_default(),
                };
            }
            Event::Empty(e) if in_firm => {
                fields.insert(
                    String::from_utf8_lossy(e.name().as_ref()).into_owned(),
                    String::new(),
                );
            }
            Event::Eof => {
                return Err(Error::MalformedDocument(if in_firm {
                    "unterminated <firm>".into()
                } else {
                    "no <firm> element".into()
                }))
            }
            _ => {}
        }
    }
    let take = |k: &str| fields.get(k).cloned().unwrap_or_default();
    let inn = take("inn");
    let ogrn = take("ogrn");
    if !is_valid_inn(&inn) {
        return Err(Error::MalformedDocument(format!(
            "invalid or missing inn {inn:?}"
        )));
    }
    if !is_valid_ogrn(&ogrn) {
        return Err(Error::MalformedDocument(format!(
            "invalid or missing ogrn {ogrn:?} for inn {inn}"
        )));
    }
    let creation = take("creation_date");
    if creation.is_empty() {
        return Err(Error::MalformedDocument(format!(
            "missing creation_date for inn {inn}"
        )));
    }
    let dissolution = take("dissolution_date");
    Ok(FirmFragment {
        as_of_year,
        inn,
        ogrn,
        name: take("name"),
        creation_date: parse_date(&creation, "creation_date")?,
        dissolution_date: if dissolution.is_empty() {
            None
        } else {
            Some(parse_date(&dissolution, "dissolution_date")?)
        },
        okved: take("okved"),
        okved_legacy: legacy.contains_key("okved"),
        okopf: take("okopf"),
        okopf_legacy: legacy.contains_key("okopf"),
        okfs: take("okfs"),
        okogu: take("okogu"),
        okpo: take("okpo"),
        oktmo: take("oktmo"),
        address,
    })
}

/// Top-level `<firm>...</firm>` chunks of a snapshot file.
fn split_firms(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(off) = text[pos..].find("<firm") {
        let start = pos + off;
        if !matches!(
            text.as_bytes().get(start + 5),
            Some(b'>') | Some(b' ') | Some(b'\n') | Some(b'\r') | Some(b'\t')
        ) {
            pos = start + 5;
            continue;
        }
        match text[start..].find("</firm>") {
            Some(e) => {
                let end = start + e + "</firm>".len();
                out.push(&text[start..end]);
                pos = end;
            }
            None => {
                out.push(&text[start..]);
                break;
            }
        }
    }
    out
}

/// Parse a snapshot's documents. Malformed documents are skipped; a repeated
/// inn keeps the later document.
pub fn parse_snapshot(
    documents: &[&str],
    as_of_year: i32,
    workers: &Workers,
) -> (RegistrySnapshot, Diagnostics) {
    let parsed = workers.map(documents, |d| parse_firm(d, as_of_year));
    let mut diags = Diagnostics::new();
    let mut by_inn: BTreeMap<String, FirmFragment> = BTreeMap::new();
    for (i, res) in parsed.into_iter().enumerate() {
        match res {
            Ok(frag) => {
                if let Some(prev) = by_inn.insert(frag.inn.clone(), frag) {
                    diags.push(Diagnostic::warn(
                        DiagCode::DuplicateIdentifier,
                        prev.inn.clone(),
                        Some(as_of_year),
                        format!("inn repeated in snapshot {as_of_year}; later document kept"),
                    ));
                }
            }
            Err(e) => diags.push(Diagnostic::warn(
                DiagCode::MalformedDocument,
                "",
                Some(as_of_year),
                format!("document {}: {e}", i + 1),
            )),
        }
    }
    (
        RegistrySnapshot {
            as_of_year,
            fragments: by_inn.into_values().collect(),
        },
        diags,
    )
}

fn year_of(path: &Path) -> Option<i32> {
    let name = path.file_stem()?.to_str()?;
    (0..name.len().saturating_sub(3)).rev().find_map(|i| {
        let w = name.get(i..i + 4)?;
        (w.starts_with("20") && w.bytes().all(|b| b.is_ascii_digit()))
            .then(|| w.parse().ok())
            .flatten()
    })
}

fn snapshot_year_attr(text: &str) -> Option<i32> {
    let start = text.find("<snapshot")?;
    let rest = &text[start..];
    let key = rest.find("as_of_year=\"")? + "as_of_year=\"".len();
    let end = rest[key..].find('"')?;
    rest[key..key + end].parse().ok()
}

/// Load every snapshot under `dir`: `*.xml` files holding a `<snapshot>`, and
/// sub-directories named by year holding one `<firm>` file each.
pub fn load_snapshots(
    dir: &Path,
    workers: &Workers,
) -> Result<(Vec<RegistrySnapshot>, Diagnostics)> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    let mut snapshots = Vec::new();
    let mut diags = Diagnostics::new();
    for path in entries {
        if path.is_dir() {
            let Some(year) = year_of(&path) else { continue };
            let mut files: Vec<PathBuf> = std::fs::read_dir(&path)
                .map_err(|e| Error::io(&path, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("xml"))
                .collect();
            files.sort();
            let texts = files
                .iter()
                .map(|p| std::fs::read_to_string(p).map_err(|e| Error::io(p, e)))
                .collect::<Result<Vec<_>>>()?;
            let docs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let (snap, d) = parse_snapshot(&docs, year, workers);
            snapshots.push(snap);
            diags.extend(d);
        } else if path.extension().and_then(|e| e.to_str()) == Some("xml") {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let year = snapshot_year_attr(&text)
                .or_else(|| year_of(&path))
                .ok_or_else(|| {
                    Error::MissingInput(format!("{}: snapshot year not found", path.display()))
                })?;
            let docs = split_firms(&text);
            let (snap, d) = parse_snapshot(&docs, year, workers);
            snapshots.push(snap);
            diags.extend(d);
        }
    }
    Ok((snapshots, diags))
}

pub fn check_span(span: (i32, i32)) -> Result<()> {
    if span.0 > span.1 || span.0 < MIN_YEAR || span.1 > MAX_YEAR {
        return Err(Error::ConfigInvalid(format!(
            "span {}-{} must lie within {MIN_YEAR}-{MAX_YEAR}",
            span.0, span.1
        )));
    }
    Ok(())
}

fn record_from(
    frag: &FirmFragment,
    lifespan: &FirmFragment,
    year: i32,
) -> (FirmRecord, bool, bool) {
    let record = FirmRecord {
        inn: frag.inn.clone(),
        ogrn: frag.ogrn.clone(),
        year,
        name: frag.name.clone(),
        region: frag.address.region.clone(),
        region_taxcode: frag.inn[..2].to_string(),
        creation_date: lifespan.creation_date,
        dissolution_date: lifespan.dissolution_date,
        age: FirmRecord::age_in(lifespan.creation_date, year),
        okved: frag.okved.clone(),
        okopf: frag.okopf.clone(),
        okfs: frag.okfs.clone(),
        okogu: frag.okogu.clone(),
        okpo: frag.okpo.clone(),
        oktmo: frag.oktmo.clone(),
        address: frag.address.clone(),
        unmapped_code: false,
    };
    (record, frag.okved_legacy, frag.okopf_legacy)
}

/// A universe row plus whether its industry / legal-form codes are from the legacy editions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniverseRow {
    pub record: FirmRecord,
    pub okved_legacy: bool,
    pub okopf_legacy: bool,
}

/// Expand snapshots into one row per firm per active year within `span`.
///
/// Lifespan dates come from the most recent snapshot describing the firm;
/// year-t attributes from the nearest snapshot at or after t, else the nearest
/// before. Output is sorted by (inn, year) and independent of snapshot order.
pub fn build_universe(
    snapshots: &[RegistrySnapshot],
    span: (i32, i32),
    workers: &Workers,
) -> Result<Vec<UniverseRow>> {
    check_span(span)?;
    let mut by_inn: BTreeMap<&str, Vec<&FirmFragment>> = BTreeMap::new();
    for s in snapshots {
        for f in &s.fragments {
            by_inn.entry(f.inn.as_str()).or_default().push(f);
        }
    }
    if by_inn.is_empty() {
        return Err(Error::EmptyInput("no firms in registry snapshots".into()));
    }
    let groups: Vec<Vec<&FirmFragment>> = by_inn
        .into_values()
        .map(|mut v| {
            v.sort();
            // same-year duplicates across files: keep the greatest fragment
            v.dedup_by(|later, earlier| {
                if later.as_of_year == earlier.as_of_year {
                    *earlier = *later;
                    true
                } else {
                    false
                }
            });
            v
        })
        .collect();
    let rows = workers.map(&groups, |frags| {
        let latest = *frags.last().expect("non-empty group");
        let first = latest.creation_date.year().max(span.0);
        let last = latest
            .dissolution_date
            .map_or(span.1, |d| d.year())
            .min(span.1);
        (first..=last)
            .map(|year| {
                let src = frags
                    .iter()
                    .find(|f| f.as_of_year >= year)
                    .or_else(|| frags.last())
                    .expect("non-empty group");
                let (record, okved_legacy, okopf_legacy) = record_from(src, latest, year);
                UniverseRow {
                    record,
                    okved_legacy,
                    okopf_legacy,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows.into_iter().flatten().collect())
}

/// Old-to-new code tables for the industry and legal-form classifiers.
#[derive(Debug, Clone, Default)]
pub struct Correspondence {
    pub okved: HashMap<String, String>,
    pub okopf: HashMap<String, String>,
}

/// Read an `old_code,new_code` CSV.
pub fn load_correspondence_table(path: &Path) -> Result<HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::MissingInput(format!("{}: {e}", path.display())),
        _ => Error::Csv(e),
    })?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("old_code") || headers.get(1) != Some("new_code") {
        return Err(Error::Parse(format!(
            "{}: expected columns old_code,new_code",
            path.display()
        )));
    }
    let mut map = HashMap::new();
    for rec in reader.records() {
        let rec = rec?;
        map.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
    }
    Ok(map)
}

/// Express legacy industry / legal-form codes in the current classifiers.
/// Codes without a table entry are kept and the record is flagged.
pub fn harmonize_codes(row: UniverseRow, correspondence: &Correspondence) -> UniverseRow {
    let UniverseRow {
        mut record,
        okved_legacy,
        okopf_legacy,
    } = row;
    let mut still_okved = false;
    let mut still_okopf = false;
    if okved_legacy && !record.okved.is_empty() {
        match correspondence.okved.get(&record.okved) {
            Some(new) => record.okved = new.clone(),
            None => still_okved = true,
        }
    }
    if okopf_legacy && !record.okopf.is_empty() {
        match correspondence.okopf.get(&record.okopf) {
            Some(new) => record.okopf = new.clone(),
            None => still_okopf = true,
        }
    }
    record.unmapped_code = still_okved || still_okopf;
    UniverseRow {
        record,
        okved_legacy: still_okved,
        okopf_legacy: still_okopf,
    }
}

/// Fill missing industry, legal-form and ownership codes from the same firm's
/// other years: nearest later year first, then nearest earlier year.
/// `universe` must be sorted by (inn, year).
pub fn impute_missing_codes(mut universe: Vec<FirmRecord>) -> Vec<FirmRecord> {
    fn fill(group: &mut [FirmRecord], get: fn(&mut FirmRecord) -> &mut String) {
        let original: Vec<String> = group.iter_mut().map(|r| get(r).clone()).collect();
        for i in 0..group.len() {
            if !original[i].is_empty() {
                continue;
            }
            let donor = original[i + 1..]
                .iter()
                .find(|v| !v.is_empty())
                .or_else(|| original[..i].iter().rev().find(|v| !v.is_empty()));
            if let Some(v) = donor {
                *get(&mut group[i]) = v.clone();
            }
        }
    }
    let mut start = 0;
    while start < universe.len() {
        let end = start
            + universe[start..]
                .iter()
                .take_while(|r| r.inn == universe[start].inn)
                .count();
        let group = &mut universe[start..end];
        fill(group, |r| &mut r.okved);
        fill(group, |r| &mut r.okopf);
        fill(group, |r| &mut r.okfs);
        start = end;
    }
    universe
}

/// Parse the snapshot text of a single-file snapshot (used by tests and tools).
pub fn parse_snapshot_text(
    text: &str,
    as_of_year: i32,
    workers: &Workers,
) -> (RegistrySnapshot, Diagnostics) {
    let docs = split_firms(text);
    parse_snapshot(&docs, as_of_year, workers)
}

fn esc(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Serialize a fragment in the fixture schema.
pub fn write_firm_xml(f: &FirmFragment) -> String {
    let legacy = |b: bool| if b { " legacy=\"true\"" } else { "" };
    format!(
        "<firm><inn>{}</inn><ogrn>{}</ogrn><name>{}</name><creation_date>{}</creation_date><dissolution_date>{}</dissolution_date>\
<okved{}>{}</okved><okopf{}>{}</okopf><okfs>{}</okfs><okogu>{}</okogu><okpo>{}</okpo><oktmo>{}</oktmo>\
<address region=\"{}\" city=\"{}\" street=\"{}\" house=\"{}\"/></firm>\n",
        f.inn,
        f.ogrn,
        esc(&f.name),
        f.creation_date.format("%Y-%m-%d"),
        f.dissolution_date.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default(),
        legacy(f.okved_legacy),
        esc(&f.okved),
        legacy(f.okopf_legacy),
        esc(&f.okopf),
        esc(&f.okfs),
        esc(&f.okogu),
        esc(&f.okpo),
        esc(&f.oktmo),
        esc(&f.address.region),
        esc(&f.address.city),
        esc(&f.address.street),
        esc(&f.address.house),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::date;

    fn fragment(
        inn: &str,
        as_of: i32,
        created: NaiveDate,
        dissolved: Option<NaiveDate>,
    ) -> FirmFragment {
        FirmFragment {
            as_of_year: as_of,
            inn: inn.into(),
            ogrn: format!("102{inn}"),
            name: "OOO Test".into(),
            creation_date: created,
            dissolution_date: dissolved,
            okved: "46.90".into(),
            okved_legacy: false,
            okopf: "12300".into(),
            okopf_legacy: false,
            okfs: "16".into(),
            okogu: "4210014".into(),
            okpo: "12345678".into(),
            oktmo: "45000000".into(),
            address: Address {
                region: "Moscow".into(),
                city: "Moscow".into(),
                street: "Lenina".into(),
                house: "1".into(),
            },
        }
    }

    fn snap(year: i32, frags: Vec<FirmFragment>) -> RegistrySnapshot {
        RegistrySnapshot {
            as_of_year: year,
            fragments: frags,
        }
    }

    #[test]
    fn parse_well_formed_firm() {
        let f = fragment("7736050003", 2016, date(2002, 8, 9), None);
        let parsed = parse_firm(&write_firm_xml(&f), 2016).unwrap();
        assert_eq!(parsed, f);
    }

    #[test]
    fn missing_ogrn_is_malformed() {
        let (snap, d) = parse_snapshot_text(
            "<snapshot as_of_year=\"2016\"><firm><inn>7736050003</inn><creation_date>2002-08-09</creation_date></firm></snapshot>",
            2016,
            &Workers::sequential(),
        );
        assert!(snap.fragments.is_empty());
        assert_eq!(d.count(DiagCode::MalformedDocument), 1);
    }

    #[test]
    fn duplicate_inn_later_wins() {
        let mut a = fragment("7736050003", 2016, date(2002, 8, 9), None);
        a.name = "First".into();
        let mut b = a.clone();
        b.name = "Second".into();
        let text = format!(
            "<snapshot as_of_year=\"2016\">{}{}</snapshot>",
            write_firm_xml(&a),
            write_firm_xml(&b)
        );
        let (snap, d) = parse_snapshot_text(&text, 2016, &Workers::sequential());
        assert_eq!(snap.fragments.len(), 1);
        assert_eq!(snap.fragments[0].name, "Second");
        assert_eq!(d.count(DiagCode::DuplicateIdentifier), 1);
    }

    #[test]
    fn lifespan_rows() {
        let f = fragment(
            "7736050003",
            2019,
            date(2015, 3, 1),
            Some(date(2018, 6, 30)),
        );
        let u =
            build_universe(&[snap(2019, vec![f])], (2011, 2023), &Workers::sequential()).unwrap();
        let years: Vec<i32> = u.iter().map(|r| r.record.year).collect();
        assert_eq!(years, vec![2015, 2016, 2017, 2018]);
        assert_eq!(u[0].record.age, 0);
        assert_eq!(u[3].record.age, 3);
    }

    #[test]
    fn q4_creation_still_gets_first_row() {
        let f = fragment("7736050003", 2021, date(2020, 11, 15), None);
        let u =
            build_universe(&[snap(2021, vec![f])], (2011, 2023), &Workers::sequential()).unwrap();
        assert_eq!(u[0].record.year, 2020);
    }

    #[test]
    fn nearest_snapshot_at_or_after() {
        let a = fragment("7736050003", 2016, date(2010, 1, 1), None);
        let mut b = a.clone();
        b.as_of_year = 2018;
        b.okved = "62.01".into();
        let snaps = vec![snap(2016, vec![a.clone()]), snap(2018, vec![b.clone()])];
        let u = build_universe(&snaps, (2011, 2020), &Workers::sequential()).unwrap();
        let okved = |y: i32| {
            u.iter()
                .find(|r| r.record.year == y)
                .unwrap()
                .record
                .okved
                .clone()
        };
        assert_eq!(okved(2016), "46.90");
        assert_eq!(okved(2017), "62.01");
        assert_eq!(okved(2018), "62.01");
        assert_eq!(okved(2020), "62.01");
        assert_eq!(okved(2011), "46.90");

        let reversed = vec![snap(2018, vec![b]), snap(2016, vec![a])];
        assert_eq!(
            build_universe(&reversed, (2011, 2020), &Workers::sequential()).unwrap(),
            u
        );
    }

    #[test]
    fn empty_and_bad_span() {
        assert!(matches!(
            build_universe(&[], (2011, 2023), &Workers::sequential()),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            build_universe(&[], (2010, 2023), &Workers::sequential()),
            Err(Error::ConfigInvalid(_))
        ));
    }

    fn row(okved: &str, okved_legacy: bool, okopf: &str, okopf_legacy: bool) -> UniverseRow {
        let mut record = crate::testutil::firm("7736050003", 2012);
        record.okved = okved.into();
        record.okopf = okopf.into();
        UniverseRow {
            record,
            okved_legacy,
            okopf_legacy,
        }
    }

    #[test]
    fn code_harmonization() {
        let mut c = Correspondence::default();
        c.okved.insert("51.51".into(), "46.71".into());
        c.okopf.insert("65".into(), "12300".into());

        let r = harmonize_codes(row("51.51", true, "12300", false), &c);
        assert_eq!(r.record.okved, "46.71");
        assert!(!r.record.unmapped_code);

        let r = harmonize_codes(row("46.71", false, "12300", false), &c);
        assert_eq!(r.record.okved, "46.71");

        let r = harmonize_codes(row("46.71", false, "47", true), &c);
        assert_eq!(r.record.okopf, "47");
        assert!(r.record.unmapped_code);
    }

    fn years(codes: &[&str]) -> Vec<FirmRecord> {
        codes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut r = crate::testutil::firm("7736050003", 2015 + i as i32);
                r.okved = c.to_string();
                r
            })
            .collect()
    }

    #[test]
    fn code_imputation_precedence() {
        let out = impute_missing_codes(years(&["46.90", "", "62.01"]));
        assert_eq!(out[1].okved, "62.01");
        let out = impute_missing_codes(years(&["46.90", "", ""]));
        assert_eq!(out[1].okved, "46.90");
        assert_eq!(out[2].okved, "46.90");
        let out = impute_missing_codes(years(&["", "", ""]));
        assert!(out.iter().all(|r| r.okved.is_empty()));
    }
}

//! Tax-service XML filings.
//!
//! One `<filing>` element per firm-year; a file holds one filing or a
//! `<filings>` wrapper with many:
//!
//! ```xml
//! <filing inn="7736050003" year="2021" form="FULL" unit="THOUSANDS" submission_date="2022-03-30">
//!   <line_2110>500</line_2110>
//!   <prior1_line_2110>400</prior1_line_2110>
//!   <prior2_line_1600>900</prior2_line_1600>
//!   <decoding parent="4110" label="gas sales">30</decoding>
//!   <decoding parent="4110" label="gas sales" period="prior1">25</decoding>
//! </filing>
//! ```
//!
//! Absent elements are missing values; a present `0` is a filed zero.

use std::fmt::Write as _;

use chrono::NaiveDate;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{Decoding, Form, LineCode, Period, Provider, RawFiling, Unit};

/// Parse a single `<filing>` document.
pub fn parse_fns_xml(document: &str) -> Result<(RawFiling, Diagnostics)> {
    let mut reader = Reader::from_str(document);
    reader.config_mut().trim_text(true);
    loop {
        match reader.read_event()? {
            Event::Start(e) if e.name().as_ref() == b"filing" => {
                let start = e.into_owned();
                return parse_filing_body(&mut reader, &start);
            }
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Eof => return Err(Error::MalformedDocument("no <filing> element".into())),
            Event::Start(e) | Event::Empty(e) => {
                return Err(Error::MalformedDocument(format!(
                    "unexpected root element <{}>",
                    String::from_utf8_lossy(e.name().as_ref())
                )))
            }
            _ => {}
        }
    }
}

/// Byte ranges of each top-level `<filing>...</filing>` chunk in a file, so the
/// documents can be parsed independently (and in parallel).
pub fn split_documents(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut pos = 0;
    while let Some(off) = text[pos..].find("<filing") {
        let start = pos + off;
        let next = text.as_bytes().get(start + 7).copied();
        // skip `<filings>` wrapper
        if !matches!(
            next,
            Some(b' ') | Some(b'>') | Some(b'\n') | Some(b'\t') | Some(b'\r')
        ) {
            pos = start + 7;
            continue;
        }
        match text[start..].find("</filing>") {
            Some(end_off) => {
                let end = start + end_off + "</filing>".len();
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

fn required_attr(e: &BytesStart<'_>, name: &str) -> Result<String> {
    attr(e, name)?.ok_or_else(|| Error::MalformedDocument(format!("missing attribute {name}")))
}

fn parse_value(text: &str, what: &str) -> Result<i64> {
    text.trim()
        .parse::<i64>()
        .map_err(|_| Error::MalformedDocument(format!("non-integer value {text:?} for {what}")))
}

fn parse_filing_body(
    reader: &mut Reader<&[u8]>,
    start: &BytesStart<'_>,
) -> Result<(RawFiling, Diagnostics)> {
    let inn = required_attr(start, "inn")?;
    let year: i32 = required_attr(start, "year")?
        .parse()
        .map_err(|_| Error::MalformedDocument("bad year".into()))?;
    let form: Form = attr(start, "form")?.as_deref().unwrap_or("FULL").parse()?;
    let unit: Unit = attr(start, "unit")?
        .as_deref()
        .unwrap_or("THOUSANDS")
        .parse()?;
    let provider: Provider = match attr(start, "provider")? {
        Some(p) => p.parse()?,
        None => Provider::Fns,
    };
    let date_text = required_attr(start, "submission_date")?;
    let submission_date = NaiveDate::parse_from_str(&date_text, "%Y-%m-%d")
        .map_err(|_| Error::MalformedDocument(format!("bad submission_date {date_text:?}")))?;
    let mut filing = RawFiling::new(inn, year, provider, submission_date);
    filing.form = form;
    filing.unit = unit;
    let mut diags = Diagnostics::new();

    loop {
        match reader.read_event()? {
            Event::Start(e) => {
                let e = e.into_owned();
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                let text = reader.read_text(e.name())?.into_owned();
                let text = quick_xml::escape::unescape(&text)
                    .map_err(|err| Error::MalformedDocument(err.to_string()))?
                    .into_owned();
                if name == "decoding" {
                    let parent = LineCode::parse(&required_attr(&e, "parent")?)?;
                    let label = attr(&e, "label")?.unwrap_or_default();
                    let period: Period = attr(&e, "period")?
                        .as_deref()
                        .unwrap_or("CURRENT")
                        .parse()?;
                    let value = parse_value(&text, "decoding")?;
                    filing.decodings.push(Decoding {
                        parent,
                        label,
                        period,
                        value,
                    });
                } else {
                    let (period, code_text) = split_element_name(&name).ok_or_else(|| {
                        Error::MalformedDocument(format!("unexpected element <{name}>"))
                    })?;
                    let value = parse_value(&text, &name)?;
                    match LineCode::parse(code_text) {
                        Ok(code) => {
                            if period == Period::Prior2 && !code.is_balance() {
                                return Err(Error::MalformedDocument(format!(
                                    "two-years-prior column for non-balance line {code}"
                                )));
                            }
                            filing.period_mut(period).insert(code, value);
                        }
                        Err(_) => match decodable_parent_of(code_text) {
                            Some(parent) => filing.decodings.push(Decoding {
                                parent,
                                label: name.clone(),
                                period,
                                value,
                            }),
                            None => diags.push(Diagnostic::warn(
                                DiagCode::UnknownLineCode,
                                filing.inn.clone(),
                                Some(year),
                                format!("unknown line element <{name}> ignored"),
                            )),
                        },
                    }
                }
            }
            Event::Empty(_) => {}
            Event::End(e) if e.name().as_ref() == b"filing" => break,
            Event::Eof => return Err(Error::MalformedDocument("unterminated <filing>".into())),
            _ => {}
        }
    }
    Ok((filing, diags))
}

/// `line_2110` → (Current, "2110"); `prior1_line_2110` → (Prior1, "2110").
fn split_element_name(name: &str) -> Option<(Period, &str)> {
    if let Some(rest) = name.strip_prefix("prior1_line_") {
        Some((Period::Prior1, rest))
    } else if let Some(rest) = name.strip_prefix("prior2_line_") {
        Some((Period::Prior2, rest))
    } else {
        name.strip_prefix("line_")
            .map(|rest| (Period::Current, rest))
    }
}

/// An unregistered numeric code under a decodable parent (e.g. `4115` under `4110`).
fn decodable_parent_of(code: &str) -> Option<LineCode> {
    if code.len() != 4 || !code.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let parent = LineCode::parse(&format!("{}0", &code[..3])).ok()?;
    parent.decoding_sum_line().map(|_| parent)
}

fn escape_attr(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

/// Serialize a filing in the fixture schema. `parse_fns_xml` inverts this exactly.
pub fn write_fns_xml(filing: &RawFiling) -> String {
    let mut s = String::with_capacity(64 + 32 * (filing.current.len() + filing.prior1.len()));
    let _ = write!(
        s,
        "<filing inn=\"{}\" year=\"{}\" provider=\"{}\" form=\"{}\" unit=\"{}\" submission_date=\"{}\">",
        escape_attr(&filing.inn),
        filing.year,
        filing.provider,
        filing.form,
        filing.unit,
        filing.submission_date.format("%Y-%m-%d"),
    );
    for (prefix, lines) in [
        ("", &filing.current),
        ("prior1_", &filing.prior1),
        ("prior2_", &filing.prior2),
    ] {
        for (code, v) in lines {
            let _ = write!(s, "<{prefix}line_{code}>{v}</{prefix}line_{code}>");
        }
    }
    for d in &filing.decodings {
        let _ = write!(
            s,
            "<decoding parent=\"{}\" label=\"{}\"",
            d.parent,
            escape_attr(&d.label)
        );
        if d.period != Period::Current {
            let _ = write!(s, " period=\"{}\"", d.period.as_str().to_ascii_lowercase());
        }
        let _ = write!(s, ">{}</decoding>", d.value);
    }
    s.push_str("</filing>\n");
    s
}

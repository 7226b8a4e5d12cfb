//! Statement ingest: provider parsers, unit normalization, decoding sums,
//! tax-line consolidation and adjusted-filing deduplication.

pub mod fns;
pub mod rosstat;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{LineCode, Lines, Period, Provider, RawFiling, Section, Unit};
use crate::par::Workers;

pub use fns::{parse_fns_xml, write_fns_xml};
pub use rosstat::parse_rosstat_csv;

/// First year filed on the new profit-and-loss form.
pub const NEW_TAX_FORM_YEAR: i32 = 2020;

/// Divide by 1000 rounding half away from zero.
pub fn rubles_to_thousands(v: i64) -> i64 {
    if v >= 0 {
        (v + 500) / 1000
    } else {
        -((-v + 500) / 1000)
    }
}

/// Express every value in thousands of rubles.
pub fn normalize_units(mut filing: RawFiling) -> RawFiling {
    let convert: fn(i64) -> i64 = match filing.unit {
        Unit::Thousands => return filing,
        Unit::Rubles => rubles_to_thousands,
        Unit::Millions => |v| v.saturating_mul(1000),
    };
    for period in [Period::Current, Period::Prior1, Period::Prior2] {
        for v in filing.period_mut(period).values_mut() {
            *v = convert(*v);
        }
    }
    for d in &mut filing.decodings {
        d.value = convert(d.value);
    }
    filing.unit = Unit::Thousands;
    filing
}

/// Sum cash-flow and equity decodings into their x-lines; drop the rest.
pub fn aggregate_decodings(mut filing: RawFiling) -> RawFiling {
    filing
        .decodings
        .retain(|d| d.parent.decoding_sum_line().is_some());
    let mut sums: BTreeMap<(Period, LineCode), i64> = BTreeMap::new();
    for d in &filing.decodings {
        let x = d.parent.decoding_sum_line().expect("retained above");
        *sums.entry((d.period, x)).or_insert(0) += d.value;
    }
    for ((period, x), total) in sums {
        filing.period_mut(period).insert(x, total);
    }
    filing
}

fn consolidate(lines: &mut Lines) {
    let current = lines.get(&LineCode::of("2411")).copied();
    let deferred = lines.get(&LineCode::of("2412")).copied();
    if current.is_some() || deferred.is_some() {
        lines.insert(
            LineCode::of("2410"),
            current.unwrap_or(0) + deferred.unwrap_or(0),
        );
    }
}

/// From 2020 on, income tax 2410 is the sum of current (2411) and deferred (2412)
/// tax. 2019 filings may use either form and are left alone; so are earlier years.
pub fn consolidate_tax_lines(mut filing: RawFiling) -> RawFiling {
    if filing.year >= NEW_TAX_FORM_YEAR {
        consolidate(&mut filing.current);
    }
    if filing.year > NEW_TAX_FORM_YEAR {
        consolidate(&mut filing.prior1);
    }
    filing
}

/// Stable digest of a filing's content, used to break submission-date ties.
pub fn content_hash(f: &RawFiling) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(fns::write_fns_xml(f).as_bytes());
    h.finalize().into()
}

/// Keep the most recent filing of a firm-year; equal dates go to the larger content hash.
pub fn dedupe_filings(group: Vec<RawFiling>) -> Result<RawFiling> {
    group
        .into_iter()
        .map(|f| {
            let h = content_hash(&f);
            (f, h)
        })
        .max_by(|(a, ha), (b, hb)| {
            a.submission_date
                .cmp(&b.submission_date)
                .then_with(|| ha.cmp(hb))
        })
        .map(|(f, _)| f)
        .ok_or(Error::EmptyGroup)
}

/// The per-filing transformation chain applied after parsing.
pub fn harmonize_filing(filing: RawFiling) -> RawFiling {
    consolidate_tax_lines(aggregate_decodings(normalize_units(filing)))
}

#[derive(Debug, Default)]
pub struct IngestOutput {
    /// One filing per (inn, year), sorted by key.
    pub filings: Vec<RawFiling>,
    pub diagnostics: Diagnostics,
    pub files_read: usize,
    pub documents_parsed: usize,
    pub duplicates_dropped: usize,
}

fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().and_then(|e| e.to_str()) == Some(ext) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reporting year embedded in a file name such as `rosstat_2015.csv`.
fn year_from_file_name(path: &Path) -> Option<i32> {
    let stem = path.file_stem()?.to_str()?;
    let bytes = stem.as_bytes();
    (0..bytes.len().saturating_sub(3)).rev().find_map(|i| {
        let w = &stem[i..i + 4];
        if w.bytes().all(|b| b.is_ascii_digit()) && w.starts_with("20") {
            w.parse().ok()
        } else {
            None
        }
    })
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parse every provider file, harmonize, keep years in `span`, and deduplicate.
pub fn ingest_dirs(
    rosstat_dir: Option<&Path>,
    fns_dir: Option<&Path>,
    span: (i32, i32),
    workers: &Workers,
) -> Result<IngestOutput> {
    let mut out = IngestOutput::default();
    let mut raw: Vec<RawFiling> = Vec::new();

    let rosstat_files = match rosstat_dir {
        Some(d) => list_files(d, "csv")?,
        None => Vec::new(),
    };
    let fns_files = match fns_dir {
        Some(d) => list_files(d, "xml")?,
        None => Vec::new(),
    };
    if rosstat_files.is_empty() && fns_files.is_empty() {
        return Err(Error::MissingInput("no statement files found".into()));
    }

    for path in &rosstat_files {
        let year = year_from_file_name(path).ok_or_else(|| {
            Error::MissingInput(format!("{}: no year in file name", path.display()))
        })?;
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        match parse_rosstat_csv(std::io::BufReader::new(file), year, workers) {
            Ok((filings, diags)) => {
                out.documents_parsed += filings.len();
                raw.extend(filings);
                out.diagnostics.extend(diags);
            }
            Err(e) => out.diagnostics.push(Diagnostic::warn(
                DiagCode::MalformedDocument,
                "",
                Some(year),
                format!("{}: {e}", path.display()),
            )),
        }
        out.files_read += 1;
    }

    for path in &fns_files {
        let text = read_to_string(path)?;
        let docs = fns::split_documents(&text);
        if docs.is_empty() {
            out.diagnostics.push(Diagnostic::warn(
                DiagCode::MalformedDocument,
                "",
                None,
                format!("{}: no <filing> documents", path.display()),
            ));
        }
        let parsed = workers.map(&docs, |d| parse_fns_xml(d));
        for (i, res) in parsed.into_iter().enumerate() {
            match res {
                Ok((filing, diags)) => {
                    out.diagnostics.extend(diags);
                    let (lo, hi) = Provider::Fns.year_range();
                    if filing.provider == Provider::Fns && !(lo..=hi).contains(&filing.year) {
                        out.diagnostics.push(Diagnostic::warn(
                            DiagCode::MalformedDocument,
                            filing.inn.clone(),
                            Some(filing.year),
                            format!("tax-service filing for year outside {lo}-{hi}"),
                        ));
                        continue;
                    }
                    out.documents_parsed += 1;
                    raw.push(filing);
                }
                Err(e) => out.diagnostics.push(Diagnostic::warn(
                    DiagCode::MalformedDocument,
                    "",
                    None,
                    format!("{} document {}: {e}", path.display(), i + 1),
                )),
            }
        }
        out.files_read += 1;
    }

    raw.retain(|f| (span.0..=span.1).contains(&f.year));
    let mut harmonized = workers.map_owned(raw, harmonize_filing);
    harmonized.sort_by(|a, b| a.key().cmp(&b.key()));

    let mut groups: Vec<Vec<RawFiling>> = Vec::new();
    for f in harmonized {
        match groups.last_mut() {
            Some(g) if g[0].key() == f.key() => g.push(f),
            _ => groups.push(vec![f]),
        }
    }
    out.duplicates_dropped = groups.iter().map(|g| g.len() - 1).sum();
    out.filings = workers
        .map_owned(groups, dedupe_filings)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

/// Lines of a filing restricted to one statement section.
pub fn section_lines(lines: &Lines, section: Section) -> Lines {
    lines
        .iter()
        .filter(|(c, _)| c.section() == section)
        .map(|(c, v)| (*c, *v))
        .collect()
}

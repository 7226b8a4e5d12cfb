//! Year-partitioned export in Parquet or CSV with the published variable
//! schema. Files are written to a temporary name and renamed, so a failed
//! export leaves no partial partition behind.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::NaiveDate;
use parquet::basic::Compression;
use parquet::data_type::{BoolType, ByteArray, ByteArrayType, DoubleType, Int32Type, Int64Type};
use parquet::file::properties::WriterProperties;
use parquet::file::writer::SerializedFileWriter;
use parquet::schema::parser::parse_message_type;

use crate::error::{Error, Result};
use crate::model::{LineCode, PanelRow, PANEL_LINE_CODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Parquet,
    Csv,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Parquet => "parquet",
            OutputFormat::Csv => "csv",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parquet" => Ok(OutputFormat::Parquet),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::ConfigInvalid(format!(
                "unknown output format {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Text,
    Int32,
    Date,
    Bool,
    Double,
    Int64,
}

/// Firm, eligibility, statement-flag, classifier and location columns, in
/// published order, before the `line_*` columns.
pub const BASE_COLUMNS: [(&str, Kind); 26] = [
    ("year", Kind::Int32),
    ("inn", Kind::Text),
    ("ogrn", Kind::Text),
    ("region", Kind::Text),
    ("region_taxcode", Kind::Text),
    ("creation_date", Kind::Date),
    ("dissolution_date", Kind::Date),
    ("age", Kind::Int32),
    ("eligible", Kind::Bool),
    ("exempt_criteria", Kind::Text),
    ("financial", Kind::Bool),
    ("filed", Kind::Bool),
    ("imputed", Kind::Bool),
    ("simplified", Kind::Bool),
    ("articulated", Kind::Bool),
    ("totals_adjustment", Kind::Bool),
    ("okved", Kind::Text),
    ("okved_section", Kind::Text),
    ("okpo", Kind::Text),
    ("okopf", Kind::Text),
    ("okogu", Kind::Text),
    ("okfc", Kind::Text),
    ("oktmo", Kind::Text),
    ("lon", Kind::Double),
    ("lat", Kind::Double),
    ("geocoding_quality", Kind::Int32),
];

/// Every output column name in order.
pub fn column_names() -> Vec<String> {
    BASE_COLUMNS
        .iter()
        .map(|(n, _)| n.to_string())
        .chain(
            PANEL_LINE_CODES
                .iter()
                .map(|c| LineCode::of(c).column_name()),
        )
        .collect()
}

fn columns() -> Vec<(String, Kind)> {
    BASE_COLUMNS
        .iter()
        .map(|(n, k)| (n.to_string(), *k))
        .chain(
            PANEL_LINE_CODES
                .iter()
                .map(|c| (LineCode::of(c).column_name(), Kind::Int64)),
        )
        .collect()
}

/// Section letter of a two-digit industry division.
pub fn okved_section(division: &str) -> Option<char> {
    let d: u32 = division.parse().ok().filter(|_| division.len() == 2)?;
    let s = match d {
        1..=3 => 'A',
        5..=9 => 'B',
        10..=33 => 'C',
        35 => 'D',
        36..=39 => 'E',
        41..=43 => 'F',
        45..=47 => 'G',
        49..=53 => 'H',
        55..=56 => 'I',
        58..=63 => 'J',
        64..=66 => 'K',
        68 => 'L',
        69..=75 => 'M',
        77..=82 => 'N',
        84 => 'O',
        85 => 'P',
        86..=88 => 'Q',
        90..=93 => 'R',
        94..=96 => 'S',
        97..=98 => 'T',
        99 => 'U',
        _ => return None,
    };
    Some(s)
}

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Null,
    Text(String),
    Int32(i32),
    Date(NaiveDate),
    Bool(bool),
    Double(f64),
    Int64(i64),
}

fn text(s: &str) -> Cell {
    if s.is_empty() {
        Cell::Null
    } else {
        Cell::Text(s.to_string())
    }
}

fn row_cells(r: &PanelRow) -> Vec<Cell> {
    let f = &r.firm;
    let s = r.statement.as_ref();
    let flag = |get: fn(&crate::model::HarmonizedStatement) -> bool| {
        s.map_or(Cell::Null, |s| Cell::Bool(get(s)))
    };
    let mut cells = vec![
        Cell::Int32(f.year),
        Cell::Text(f.inn.clone()),
        text(&f.ogrn),
        text(&f.region),
        text(&f.region_taxcode),
        Cell::Date(f.creation_date),
        f.dissolution_date.map_or(Cell::Null, Cell::Date),
        Cell::Int32(f.age),
        Cell::Bool(r.eligibility.eligible()),
        r.eligibility
            .exempt_criteria()
            .map_or(Cell::Null, |c| Cell::Text(c.as_str().into())),
        Cell::Bool(r.financial),
        Cell::Bool(r.filed),
        Cell::Bool(s.is_some_and(|s| s.imputed)),
        flag(|s| s.simplified),
        flag(|s| s.articulated),
        flag(|s| s.totals_adjustment),
        text(&f.okved),
        okved_section(f.okved_division()).map_or(Cell::Null, |c| Cell::Text(c.to_string())),
        text(&f.okpo),
        text(&f.okopf),
        text(&f.okogu),
        text(&f.okfs),
        text(&f.oktmo),
        r.geo.map_or(Cell::Null, |g| Cell::Double(g.lon)),
        r.geo.map_or(Cell::Null, |g| Cell::Double(g.lat)),
        r.geo
            .map_or(Cell::Null, |g| Cell::Int32(g.address_rank as i32)),
    ];
    cells.extend(
        PANEL_LINE_CODES
            .iter()
            .map(|c| r.line(LineCode::of(c)).map_or(Cell::Null, Cell::Int64)),
    );
    cells
}

fn csv_text(c: &Cell) -> String {
    match c {
        Cell::Null => String::new(),
        Cell::Text(s) => s.clone(),
        Cell::Int32(v) => v.to_string(),
        Cell::Date(d) => d.to_string(),
        Cell::Bool(b) => b.to_string(),
        Cell::Double(v) => v.to_string(),
        Cell::Int64(v) => v.to_string(),
    }
}

fn write_csv(path: &Path, rows: &[&PanelRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(column_names())?;
    for r in rows {
        w.write_record(row_cells(r).iter().map(csv_text))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn parquet_schema() -> String {
    let mut msg = String::from("message panel {\n");
    for (name, kind) in columns() {
        let ty = match kind {
            Kind::Text => "BYTE_ARRAY",
            Kind::Int32 | Kind::Date => "INT32",
            Kind::Bool => "BOOLEAN",
            Kind::Double => "DOUBLE",
            Kind::Int64 => "INT64",
        };
        let annotation = match kind {
            Kind::Text => " (UTF8)",
            Kind::Date => " (DATE)",
            _ => "",
        };
        msg.push_str(&format!("  OPTIONAL {ty} {name}{annotation};\n"));
    }
    msg.push('}');
    msg
}

fn days_since_epoch(d: NaiveDate) -> i32 {
    (d - NaiveDate::from_ymd_opt(1970, 1, 1).expect("epoch")).num_days() as i32
}

fn write_parquet(path: &Path, rows: &[&PanelRow]) -> Result<()> {
    let schema = Arc::new(parse_message_type(&parquet_schema())?);
    let props = Arc::new(
        WriterProperties::builder()
            .set_compression(Compression::SNAPPY)
            .build(),
    );
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = SerializedFileWriter::new(file, schema, props)?;
    if !rows.is_empty() {
        let cells: Vec<Vec<Cell>> = rows.iter().map(|r| row_cells(r)).collect();
        let kinds = columns();
        let mut group = writer.next_row_group()?;
        let mut j = 0;
        while let Some(mut col) = group.next_column()? {
            let defs: Vec<i16> = cells.iter().map(|c| (c[j] != Cell::Null) as i16).collect();
            let present = || {
                cells
                    .iter()
                    .map(move |c| &c[j])
                    .filter(|c| **c != Cell::Null)
            };
            match kinds[j].1 {
                Kind::Text => {
                    let v: Vec<ByteArray> = present()
                        .map(|c| match c {
                            Cell::Text(s) => ByteArray::from(s.as_bytes().to_vec()),
                            _ => unreachable!("text column"),
                        })
                        .collect();
                    col.typed::<ByteArrayType>()
                        .write_batch(&v, Some(&defs), None)?;
                }
                Kind::Int32 | Kind::Date => {
                    let v: Vec<i32> = present()
                        .map(|c| match c {
                            Cell::Int32(v) => *v,
                            Cell::Date(d) => days_since_epoch(*d),
                            _ => unreachable!("int32 column"),
                        })
                        .collect();
                    col.typed::<Int32Type>()
                        .write_batch(&v, Some(&defs), None)?;
                }
                Kind::Bool => {
                    let v: Vec<bool> = present()
                        .map(|c| match c {
                            Cell::Bool(b) => *b,
                            _ => unreachable!("bool column"),
                        })
                        .collect();
                    col.typed::<BoolType>().write_batch(&v, Some(&defs), None)?;
                }
                Kind::Double => {
                    let v: Vec<f64> = present()
                        .map(|c| match c {
                            Cell::Double(v) => *v,
                            _ => unreachable!("double column"),
                        })
                        .collect();
                    col.typed::<DoubleType>()
                        .write_batch(&v, Some(&defs), None)?;
                }
                Kind::Int64 => {
                    let v: Vec<i64> = present()
                        .map(|c| match c {
                            Cell::Int64(v) => *v,
                            _ => unreachable!("int64 column"),
                        })
                        .collect();
                    col.typed::<Int64Type>()
                        .write_batch(&v, Some(&defs), None)?;
                }
            }
            col.close()?;
            j += 1;
        }
        group.close()?;
    }
    writer.close()?;
    Ok(())
}

pub fn partition_path(dir: &Path, year: i32, format: OutputFormat) -> PathBuf {
    dir.join(format!("panel_{year}.{}", format.extension()))
}

/// Write one file per year in `years`, rows sorted by inn. Years without rows
/// get an empty file with the full schema.
pub fn export(
    rows: &[PanelRow],
    dir: &Path,
    years: (i32, i32),
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for year in years.0..=years.1 {
        let mut part: Vec<&PanelRow> = rows.iter().filter(|r| r.year() == year).collect();
        part.sort_by(|a, b| a.firm.inn.cmp(&b.firm.inn));
        let path = partition_path(dir, year, format);
        let tmp = path.with_extension(format!("{}.tmp", format.extension()));
        let res = match format {
            OutputFormat::Parquet => write_parquet(&tmp, &part),
            OutputFormat::Csv => write_csv(&tmp, &part),
        }
        .and_then(|_| std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e)));
        if let Err(e) = res {
            let _ = std::fs::remove_file(&tmp);
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            return Err(e);
        }
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeoLocation;
    use crate::testutil::panel_row;
    use parquet::file::reader::{FileReader, SerializedFileReader};

    #[test]
    fn sections() {
        assert_eq!(okved_section("01"), Some('A'));
        assert_eq!(okved_section("46"), Some('G'));
        assert_eq!(okved_section("64"), Some('K'));
        assert_eq!(okved_section("04"), None);
        assert_eq!(okved_section("4"), None);
    }

    #[test]
    fn column_count() {
        assert_eq!(column_names().len(), 26 + 187);
        assert_eq!(column_names()[26], "line_1100");
    }

    fn sample() -> Vec<PanelRow> {
        let mut a = panel_row("2000000000", 2020, "46.90", Some(10), Some(0));
        a.geo = Some(GeoLocation {
            lon: 37.5,
            lat: 55.25,
            address_rank: 30,
        });
        let mut b = panel_row("1000000000", 2020, "01.11", None, None);
        b.statement = None;
        b.filed = false;
        vec![a, b]
    }

    #[test]
    fn parquet_partitions_and_schema() {
        let dir = tempfile::tempdir().unwrap();
        let paths = export(&sample(), dir.path(), (2019, 2020), OutputFormat::Parquet).unwrap();
        assert_eq!(paths.len(), 2);
        let r = SerializedFileReader::new(std::fs::File::open(&paths[1]).unwrap()).unwrap();
        let meta = r.metadata().file_metadata();
        assert_eq!(meta.num_rows(), 2);
        let names: Vec<String> = meta
            .schema_descr()
            .columns()
            .iter()
            .map(|c| c.name().to_string())
            .collect();
        assert_eq!(names, column_names());
        let empty = SerializedFileReader::new(std::fs::File::open(&paths[0]).unwrap()).unwrap();
        assert_eq!(empty.metadata().file_metadata().num_rows(), 0);
        assert_eq!(
            empty
                .metadata()
                .file_metadata()
                .schema_descr()
                .num_columns(),
            213
        );

        let rows: Vec<String> = r
            .get_row_iter(None)
            .unwrap()
            .map(|row| row.unwrap().to_string())
            .collect();
        assert!(rows[0].contains("inn: \"1000000000\""));
        assert!(rows[1].contains("line_2110: 10"));
        assert!(rows[1].contains("line_1600: 0"));
        assert!(rows[0].contains("line_2110: null"));
    }

    #[test]
    fn export_is_byte_stable_under_permutation() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut rows = sample();
        for format in [OutputFormat::Parquet, OutputFormat::Csv] {
            let a = export(&rows, d1.path(), (2020, 2020), format).unwrap();
            rows.reverse();
            let b = export(&rows, d2.path(), (2020, 2020), format).unwrap();
            assert_eq!(std::fs::read(&a[0]).unwrap(), std::fs::read(&b[0]).unwrap());
        }
    }

    #[test]
    fn csv_fallback_has_same_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = export(&sample(), dir.path(), (2020, 2020), OutputFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&p[0]).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(header, column_names());
        assert!(text.lines().nth(1).unwrap().starts_with("2020,1000000000,"));
    }
}

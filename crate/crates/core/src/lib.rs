//! Firm-year financial statement panel construction.
//!
//! The pipeline reads registry snapshots and statement filings from two
//! providers, classifies filing eligibility, deduplicates adjusted filings,
//! imputes missing statements from next-year prior-period columns, repairs and
//! checks statement articulation, geocodes addresses and assembles a
//! partitioned firm-year panel with validation reports.
//!
//! Modules:
//! - [`model`]: line codes, statements, firm records, panel rows
//! - [`registry`]: snapshot parsing, firm-year universe, classifier harmonization
//! - [`eligibility`]: exemption rules
//! - [`ingest`]: provider parsers, units, decodings, tax lines, dedup
//! - [`impute`]: reconstruction from t+1 / t+2 filings
//! - [`articulate`]: equation suite, totals repair, articulated verdict
//! - [`anomaly`]: review queue and exclusion flags
//! - [`geocode`]: fallback cascade, cache, grid aggregation
//! - [`panel`]: join, reports, partitioned export
//! - [`synth`]: synthetic corpus with planted ground truth
//! - [`pipeline`]: stage orchestration used by the CLI

pub mod anomaly;
pub mod articulate;
pub mod config;
pub mod diagnostics;
pub mod eligibility;
pub mod error;
pub mod geocode;
pub mod impute;
pub mod ingest;
pub mod model;
pub mod panel;
pub mod par;
pub mod pipeline;
pub mod registry;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use par::Workers;

#[cfg(test)]
pub(crate) mod testutil {
    use chrono::NaiveDate;

    use crate::model::{
        Address, EligibilityDecision, FirmRecord, Form, HarmonizedStatement, LineCode, Lines,
        PanelRow,
    };

    pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    pub fn firm(inn: &str, year: i32) -> FirmRecord {
        FirmRecord {
            inn: inn.into(),
            ogrn: format!("1{inn}00"),
            year,
            name: format!("Firm {inn}"),
            region: "Moscow".into(),
            region_taxcode: "77".into(),
            creation_date: date(2010, 5, 1),
            dissolution_date: None,
            age: year - 2010,
            okved: "46.90".into(),
            okopf: "12300".into(),
            okfs: "16".into(),
            okogu: "4210014".into(),
            okpo: "12345678".into(),
            oktmo: "45000000".into(),
            address: Address {
                region: "Moscow".into(),
                city: "Moscow".into(),
                street: "Tverskaya".into(),
                house: "1".into(),
            },
            unmapped_code: false,
        }
    }

    pub fn panel_row(
        inn: &str,
        year: i32,
        okved: &str,
        revenue: Option<i64>,
        assets: Option<i64>,
    ) -> PanelRow {
        let mut f = firm(inn, year);
        f.okved = okved.into();
        let mut lines = Lines::new();
        if let Some(v) = revenue {
            lines.insert(LineCode::of("2110"), v);
        }
        if let Some(v) = assets {
            lines.insert(LineCode::of("1600"), v);
        }
        PanelRow {
            firm: f,
            eligibility: EligibilityDecision::ELIGIBLE,
            financial: false,
            filed: true,
            statement: Some(HarmonizedStatement {
                inn: inn.into(),
                year,
                form: Form::Full,
                lines,
                imputed: false,
                imputation_source_year: None,
                simplified: false,
                totals_adjustment: false,
                articulated: true,
            }),
            geo: None,
            anomalous: false,
        }
    }
}

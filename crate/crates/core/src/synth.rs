//! Synthetic fixture corpus with planted ground truth.
//!
//! Statements are built from drawn components with computed totals, so every
//! unperturbed statement articulates exactly. Prior-period columns carry the
//! true values of earlier years, which makes imputation exactly checkable. The
//! manifest records every planted fact per universe firm-year.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::articulate::adjust_lines;
use crate::error::{Error, Result};
use crate::geocode::{GazetteerClient, StructuredAddress};
use crate::ingest::rosstat::{nominal_submission_date, CsvLayout};
use crate::ingest::write_fns_xml;
use crate::model::{
    Address, Decoding, ExemptCriterion, Form, GeoLocation, GeoQuality, LineCode, Lines, Period,
    Provider, RawFiling, Section, Unit, MAX_YEAR, MIN_YEAR,
};
use crate::registry::{write_firm_xml, FirmFragment};

/// Snapshot years of the synthetic registry.
pub const SNAPSHOT_YEARS: [i32; 5] = [2011, 2014, 2017, 2020, 2023];

/// Industry classifier edition changes after this snapshot year.
const OKVED_LEGACY_BEFORE: i32 = 2014;
/// Legal-form classifier edition changes after this snapshot year.
const OKOPF_LEGACY_BEFORE: i32 = 2013;
/// First year for which true statements exist (feeds prior-period columns).
const FIRST_TRUTH_YEAR: i32 = MIN_YEAR - 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusPlan {
    pub n_firms: usize,
    pub seed: u64,
    /// Probability that an eligible firm-year files.
    pub filing_rate: f64,
    /// Probability that an exempt firm-year files anyway.
    pub non_eligible_filing_rate: f64,
    pub articulation_error_rate: f64,
    /// Probability that a filing has an earlier-dated superseded version.
    pub duplicate_rate: f64,
    /// Probability that a filing is scaled by 1000 (a unit mistake).
    pub anomaly_rate: f64,
    /// Probability that a post-2018 statement carries a filed zero.
    pub zero_rate: f64,
    pub simplified_share: f64,
    /// Share of non-round firms' filings reported in rubles.
    pub rubles_share: f64,
    /// Share of firms whose values are whole millions; half their filings use millions.
    pub round_share: f64,
    pub government_share: f64,
    pub religious_share: f64,
    pub financial_share: f64,
    pub dissolution_share: f64,
    pub okved_change_share: f64,
}

impl Default for CorpusPlan {
    fn default() -> Self {
        CorpusPlan {
            n_firms: 1000,
            seed: 42,
            filing_rate: 0.7,
            non_eligible_filing_rate: 0.3,
            articulation_error_rate: 0.05,
            duplicate_rate: 0.05,
            anomaly_rate: 0.002,
            zero_rate: 0.1,
            simplified_share: 0.3,
            rubles_share: 0.3,
            round_share: 0.1,
            government_share: 0.03,
            religious_share: 0.02,
            financial_share: 0.03,
            dissolution_share: 0.15,
            okved_change_share: 0.1,
        }
    }
}

impl CorpusPlan {
    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("filing_rate", self.filing_rate),
            ("non_eligible_filing_rate", self.non_eligible_filing_rate),
            ("articulation_error_rate", self.articulation_error_rate),
            ("duplicate_rate", self.duplicate_rate),
            ("anomaly_rate", self.anomaly_rate),
            ("zero_rate", self.zero_rate),
            ("simplified_share", self.simplified_share),
            ("rubles_share", self.rubles_share),
            ("round_share", self.round_share),
            ("government_share", self.government_share),
            ("religious_share", self.religious_share),
            ("financial_share", self.financial_share),
            ("dissolution_share", self.dissolution_share),
            ("okved_change_share", self.okved_change_share),
        ];
        for (name, r) in rates {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::ConfigInvalid(format!(
                    "{name} must lie in [0, 1], got {r}"
                )));
            }
        }
        if self.government_share + self.religious_share + self.financial_share > 1.0 {
            return Err(Error::ConfigInvalid(
                "exempt firm shares sum above 1".into(),
            ));
        }
        if self.n_firms == 0 || self.n_firms >= 100_000_000 {
            return Err(Error::ConfigInvalid(
                "n_firms must lie in 1..100000000".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirmKind {
    Regular,
    Government,
    Religious,
    Financial,
}

/// Which later filing a gapped firm-year can be rebuilt from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationSource {
    /// Prior-year column of the t+1 filing.
    T1,
    /// Two-years-prior balance column of the t+2 filing.
    T2,
}

/// Planted facts for one universe firm-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub inn: String,
    pub year: i32,
    pub region: String,
    pub kind: FirmKind,
    pub form: Form,
    pub eligible: bool,
    pub exempt_criteria: Option<ExemptCriterion>,
    pub filed: bool,
    pub provider: Option<Provider>,
    pub unit: Option<Unit>,
    /// Submission date of the surviving filing.
    pub submission_date: Option<NaiveDate>,
    /// Earlier-dated superseded versions of the filing.
    pub duplicates: usize,
    pub perturbed_line: Option<String>,
    pub perturbation: Option<i64>,
    pub anomalous: bool,
    /// Line carrying a filed zero in the true statement.
    pub zero_line: Option<String>,
    /// Eligible firm-year without a filing.
    pub gap: bool,
    pub imputable: Option<ImputationSource>,
    pub imputation_source_year: Option<i32>,
    pub imputation_source_provider: Option<Provider>,
    /// True revenue and materials payments, thousands of rubles.
    pub revenue: Option<i64>,
    pub materials: Option<i64>,
    pub geo_quality: GeoQuality,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthLine {
    pub inn: String,
    pub year: i32,
    pub code: String,
    pub value: i64,
}

/// Paths of a generated corpus, relative layout fixed.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub config: PathBuf,
    pub manifest: PathBuf,
    pub truth_lines: PathBuf,
    pub rows: Vec<ManifestRow>,
}

struct Region {
    name: &'static str,
    taxcode: &'static str,
    city: &'static str,
    lat: f64,
    lon: f64,
    oktmo: &'static str,
}

const REGIONS: [Region; 8] = [
    Region {
        name: "Moscow",
        taxcode: "77",
        city: "Moscow",
        lat: 55.7558,
        lon: 37.6173,
        oktmo: "45",
    },
    Region {
        name: "Saint Petersburg",
        taxcode: "78",
        city: "Saint Petersburg",
        lat: 59.9386,
        lon: 30.3141,
        oktmo: "40",
    },
    Region {
        name: "Sverdlovsk Oblast",
        taxcode: "66",
        city: "Yekaterinburg",
        lat: 56.8389,
        lon: 60.6057,
        oktmo: "65",
    },
    Region {
        name: "Novosibirsk Oblast",
        taxcode: "54",
        city: "Novosibirsk",
        lat: 55.0084,
        lon: 82.9357,
        oktmo: "50",
    },
    Region {
        name: "Republic of Tatarstan",
        taxcode: "16",
        city: "Kazan",
        lat: 55.7963,
        lon: 49.1088,
        oktmo: "92",
    },
    Region {
        name: "Krasnodar Krai",
        taxcode: "23",
        city: "Krasnodar",
        lat: 45.0355,
        lon: 38.9753,
        oktmo: "03",
    },
    Region {
        name: "Primorsky Krai",
        taxcode: "25",
        city: "Vladivostok",
        lat: 43.1155,
        lon: 131.8855,
        oktmo: "05",
    },
    Region {
        name: "Samara Oblast",
        taxcode: "63",
        city: "Samara",
        lat: 53.1959,
        lon: 50.1002,
        oktmo: "36",
    },
];

/// Streets present in the gazetteer.
const STREETS: [&str; 6] = [
    "Lenina",
    "Mira",
    "Sovetskaya",
    "Gagarina",
    "Pushkina",
    "Sadovaya",
];
/// Streets the gazetteer does not know.
const UNKNOWN_STREETS: [&str; 3] = ["Novaya", "Lesnaya", "Zarechnaya"];

/// (current code, legacy code) pairs.
const REGULAR_OKVED: [(&str, &str); 8] = [
    ("47.11", "52.11"),
    ("62.01", "72.20"),
    ("10.11", "15.11"),
    ("41.20", "45.21"),
    ("46.90", "51.70"),
    ("49.41", "60.24"),
    ("68.20", "70.20"),
    ("25.11", "28.11"),
];
const GOVERNMENT_OKVED: (&str, &str) = ("84.11", "75.11");
const RELIGIOUS_OKVED: (&str, &str) = ("94.91", "91.31");
const FINANCIAL_OKVED: (&str, &str) = ("64.19", "65.12");

const OKOPF_LLC: (&str, &str) = ("12300", "65");
const OKOPF_JSC: (&str, &str) = ("12267", "47");
const OKOPF_MUNICIPAL: (&str, &str) = ("75404", "81");
const OKOPF_RELIGIOUS: (&str, &str) = ("71400", "84");

const OKFS_PRIVATE: &str = "16";
const OKFS_MUNICIPAL: &str = "14";

struct SynthFirm {
    inn: String,
    ogrn: String,
    name: String,
    region: &'static Region,
    kind: FirmKind,
    form: Form,
    creation: NaiveDate,
    dissolution: Option<NaiveDate>,
    okved: (&'static str, &'static str),
    /// Industry after a reclassification visible from the given snapshot on.
    okved_change: Option<(i32, (&'static str, &'static str))>,
    okopf: (&'static str, &'static str),
    okfs: &'static str,
    okogu: &'static str,
    okpo: String,
    oktmo: String,
    address: Address,
    geo_quality: GeoQuality,
    /// Values are whole millions (thousands divisible by 1000).
    round: bool,
    scale: f64,
    growth: f64,
}

impl SynthFirm {
    fn first_year(&self) -> i32 {
        self.creation.year().max(MIN_YEAR)
    }

    fn last_year(&self) -> i32 {
        self.dissolution
            .map_or(MAX_YEAR, |d| d.year())
            .min(MAX_YEAR)
    }

    fn universe_years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year()..=self.last_year()
    }

    fn exemption(&self, year: i32) -> Option<ExemptCriterion> {
        match self.kind {
            FirmKind::Government => Some(ExemptCriterion::Government),
            FirmKind::Religious => Some(ExemptCriterion::Religious),
            FirmKind::Financial => Some(ExemptCriterion::Financial),
            FirmKind::Regular if self.creation.year() == year && self.creation.month() >= 10 => {
                Some(ExemptCriterion::NewlyIncorporatedQ4)
            }
            FirmKind::Regular => None,
        }
    }

    fn quantum(&self) -> i64 {
        if self.round {
            1000
        } else {
            1
        }
    }

    fn fragment(&self, as_of: i32) -> FirmFragment {
        let okved = match self.okved_change {
            Some((from, codes)) if as_of >= from => codes,
            _ => self.okved,
        };
        let okved_legacy = as_of < OKVED_LEGACY_BEFORE;
        let okopf_legacy = as_of < OKOPF_LEGACY_BEFORE;
        FirmFragment {
            as_of_year: as_of,
            inn: self.inn.clone(),
            ogrn: self.ogrn.clone(),
            name: self.name.clone(),
            creation_date: self.creation,
            dissolution_date: self.dissolution.filter(|d| d.year() <= as_of),
            okved: if okved_legacy { okved.1 } else { okved.0 }.to_string(),
            okved_legacy,
            okopf: if okopf_legacy {
                self.okopf.1
            } else {
                self.okopf.0
            }
            .to_string(),
            okopf_legacy,
            okfs: self.okfs.to_string(),
            okogu: self.okogu.to_string(),
            okpo: self.okpo.clone(),
            oktmo: self.oktmo.clone(),
            address: self.address.clone(),
        }
    }
}

/// A true statement plus the decomposition of its x-lines into decodings.
#[derive(Debug, Clone, Default)]
struct Truth {
    lines: Lines,
    /// (parent, value) for every decoding; their sums are the x-lines in `lines`.
    decodings: Vec<(LineCode, i64)>,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

fn random_date(rng: &mut ChaCha8Rng, year: i32) -> NaiveDate {
    date(year, rng.gen_range(1..=12), rng.gen_range(1..=28))
}

/// Positive multiple of `q` of order `scale`.
fn amount(rng: &mut ChaCha8Rng, scale: f64, q: i64) -> i64 {
    let units = (scale * rng.gen_range(0.05..1.0) / q as f64).round() as i64;
    units.max(1) * q
}

fn put(lines: &mut Lines, code: &str, v: i64) {
    lines.insert(LineCode::of(code), v);
}

/// Draw each `(code, probability, sign)` term; returns the signed sum of the
/// drawn terms, or `None` when none was drawn.
fn add_terms(
    rng: &mut ChaCha8Rng,
    lines: &mut Lines,
    terms: &[(&str, f64, i64)],
    scale: f64,
    q: i64,
) -> Option<i64> {
    let mut sum = None;
    for (code, p, sign) in terms {
        if rng.gen_bool(*p) {
            let v = amount(rng, scale, q);
            put(lines, code, v);
            *sum.get_or_insert(0) += sign * v;
        }
    }
    sum
}

/// Split an x-line into one to three decodings of `parent`.
fn add_decodings(
    rng: &mut ChaCha8Rng,
    t: &mut Truth,
    parent: &str,
    p: f64,
    scale: f64,
    q: i64,
) -> i64 {
    if !rng.gen_bool(p) {
        return 0;
    }
    let parent = LineCode::of(parent);
    let x = parent.decoding_sum_line().expect("decodable parent");
    let mut sum = 0;
    for _ in 0..rng.gen_range(1..=3) {
        let v = amount(rng, scale, q);
        t.decodings.push((parent, v));
        sum += v;
    }
    t.lines.insert(x, sum);
    sum
}

fn borrowed(v: &[(String, f64, i64)]) -> Vec<(&str, f64, i64)> {
    v.iter().map(|(c, p, s)| (c.as_str(), *p, *s)).collect()
}

fn full_statement(rng: &mut ChaCha8Rng, scale: f64, q: i64, year: i32) -> Truth {
    loop {
        let mut t = Truth::default();
        let l = &mut t.lines;
        let plus = 1;
        let minus = -1;

        let s1100 = add_terms(
            rng,
            l,
            &[
                ("1110", 0.2, plus),
                ("1120", 0.1, plus),
                ("1130", 0.1, plus),
                ("1140", 0.1, plus),
                ("1150", 1.0, plus),
                ("1160", 0.1, plus),
                ("1170", 0.2, plus),
                ("1180", 0.1, plus),
                ("1190", 0.2, plus),
            ],
            scale,
            q,
        )
        .expect("fixed assets always drawn");
        let s1200 = add_terms(
            rng,
            l,
            &[
                ("1210", 1.0, plus),
                ("1220", 0.3, plus),
                ("1230", 1.0, plus),
                ("1240", 0.2, plus),
                ("1250", 1.0, plus),
                ("1260", 0.2, plus),
            ],
            scale,
            q,
        )
        .expect("current assets always drawn");
        put(l, "1100", s1100);
        put(l, "1200", s1200);
        let s1600 = s1100 + s1200;
        put(l, "1600", s1600);
        put(l, "1700", s1600);
        let s1400 = add_terms(
            rng,
            l,
            &[
                ("1410", 0.4, plus),
                ("1420", 0.15, plus),
                ("1430", 0.05, plus),
                ("1450", 0.15, plus),
            ],
            scale * 0.5,
            q,
        );
        let s1500 = add_terms(
            rng,
            l,
            &[
                ("1510", 0.3, plus),
                ("1520", 1.0, plus),
                ("1530", 0.1, plus),
                ("1540", 0.1, plus),
                ("1550", 0.2, plus),
            ],
            scale * 0.5,
            q,
        )
        .expect("payables always drawn");
        if let Some(v) = s1400 {
            put(l, "1400", v);
        }
        put(l, "1500", s1500);
        let s1300 = s1600 - s1400.unwrap_or(0) - s1500;
        let capital = amount(rng, scale * 0.02, q);
        put(l, "1310", capital);
        let reserves = add_terms(
            rng,
            l,
            &[
                ("1340", 0.1, plus),
                ("1350", 0.15, plus),
                ("1360", 0.1, plus),
            ],
            scale * 0.05,
            q,
        );
        put(l, "1370", s1300 - capital - reserves.unwrap_or(0));
        put(l, "1300", s1300);

        let revenue = amount(rng, scale * 1.5, q);
        let cost = ((revenue as f64 * rng.gen_range(0.55..0.92)) / q as f64).round() as i64 * q;
        put(l, "2110", revenue);
        put(l, "2120", cost);
        let s2100 = revenue - cost;
        put(l, "2100", s2100);
        let s2200 = s2100
            + add_terms(
                rng,
                l,
                &[("2210", 0.6, minus), ("2220", 0.5, minus)],
                scale * 0.1,
                q,
            )
            .unwrap_or(0);
        put(l, "2200", s2200);
        let s2300 = s2200
            + add_terms(
                rng,
                l,
                &[
                    ("2310", 0.15, minus),
                    ("2320", 0.3, plus),
                    ("2330", 0.4, minus),
                    ("2340", 0.4, plus),
                    ("2350", 0.4, minus),
                ],
                scale * 0.05,
                q,
            )
            .unwrap_or(0);
        put(l, "2300", s2300);
        let tax = if year >= crate::ingest::NEW_TAX_FORM_YEAR {
            let current = amount(rng, scale * 0.02, q);
            let deferred = amount(rng, scale * 0.005, q) * if rng.gen_bool(0.5) { 1 } else { -1 };
            put(l, "2411", current);
            put(l, "2412", deferred);
            current + deferred
        } else {
            amount(rng, scale * 0.02, q)
        };
        put(l, "2410", tax);
        put(l, "2400", s2300 - tax);

        let s4110 = add_terms(
            rng,
            l,
            &[
                ("4111", 1.0, plus),
                ("4112", 0.2, plus),
                ("4113", 0.1, plus),
                ("4119", 0.3, plus),
            ],
            scale * 1.5,
            q,
        )
        .expect("sales receipts always drawn")
            + add_decodings(rng, &mut t, "4110", 0.25, scale * 0.05, q);
        let l = &mut t.lines;
        let s4120 = add_terms(
            rng,
            l,
            &[
                ("4121", 1.0, plus),
                ("4122", 1.0, plus),
                ("4123", 0.2, plus),
                ("4124", 0.5, plus),
                ("4129", 0.3, plus),
            ],
            scale * 0.6,
            q,
        )
        .expect("supplier and wage payments always drawn")
            + add_decodings(rng, &mut t, "4120", 0.2, scale * 0.05, q);
        let l = &mut t.lines;
        put(l, "4110", s4110);
        put(l, "4120", s4120);
        let s4100 = s4110 - s4120;
        put(l, "4100", s4100);
        let mut s4400 = s4100;
        for (prefix, p) in [("42", 0.5), ("43", 0.4)] {
            if !rng.gen_bool(p) {
                continue;
            }
            let terms = |flow: char, probs: [f64; 5]| -> Vec<(String, f64, i64)> {
                ["1", "2", "3", "4", "9"]
                    .iter()
                    .zip(probs)
                    .map(|(d, p)| (format!("{prefix}{flow}{d}"), p, 1))
                    .collect()
            };
            let inflow = terms('1', [0.3, 0.2, 0.2, 0.2, 0.3]);
            let outflow = terms('2', [0.6, 0.2, 0.2, 0.2, 0.3]);
            let received = add_terms(rng, l, &borrowed(&inflow), scale * 0.2, q);
            let paid = add_terms(rng, l, &borrowed(&outflow), scale * 0.2, q);
            if let Some(v) = received {
                put(l, &format!("{prefix}10"), v);
            }
            if let Some(v) = paid {
                put(l, &format!("{prefix}20"), v);
            }
            if received.is_some() || paid.is_some() {
                let net = received.unwrap_or(0) - paid.unwrap_or(0);
                put(l, &format!("{prefix}00"), net);
                s4400 += net;
            }
        }
        put(l, "4400", s4400);
        let opening = amount(rng, scale * 0.1, q);
        put(l, "4450", opening);
        let fx = if rng.gen_bool(0.15) {
            amount(rng, scale * 0.01, q) * if rng.gen_bool(0.5) { 1 } else { -1 }
        } else {
            0
        };
        if fx != 0 {
            put(l, "4490", fx);
        }
        put(l, "4500", s4400 + opening + fx);

        if t.lines.values().all(|v| *v != 0) {
            return t;
        }
    }
}

fn simplified_statement(rng: &mut ChaCha8Rng, scale: f64, q: i64) -> Truth {
    loop {
        let mut t = Truth::default();
        let l = &mut t.lines;
        let s1600 = add_terms(
            rng,
            l,
            &[
                ("1150", 0.6, 1),
                ("1170", 0.2, 1),
                ("1210", 1.0, 1),
                ("1230", 1.0, 1),
                ("1250", 1.0, 1),
            ],
            scale,
            q,
        )
        .expect("current assets always drawn");
        put(l, "1600", s1600);
        put(l, "1700", s1600);
        let liabilities = add_terms(
            rng,
            l,
            &[
                ("1410", 0.3, 1),
                ("1450", 0.2, 1),
                ("1510", 0.3, 1),
                ("1520", 1.0, 1),
                ("1550", 0.2, 1),
            ],
            scale * 0.5,
            q,
        )
        .expect("payables always drawn");
        put(l, "1300", s1600 - liabilities);
        let revenue = amount(rng, scale * 1.5, q);
        let cost = ((revenue as f64 * rng.gen_range(0.55..0.92)) / q as f64).round() as i64 * q;
        put(l, "2110", revenue);
        put(l, "2120", cost);
        let other = add_terms(
            rng,
            l,
            &[("2330", 0.3, -1), ("2340", 0.4, 1), ("2350", 0.5, -1)],
            scale * 0.05,
            q,
        );
        let tax = amount(rng, scale * 0.02, q);
        put(l, "2410", tax);
        put(l, "2400", revenue - cost + other.unwrap_or(0) - tax);

        // totals the pipeline derives for simplified forms must not vanish either
        let mut derived = t.lines.clone();
        adjust_lines(&mut derived, Form::Simplified);
        if derived.values().all(|v| *v != 0) {
            return t;
        }
    }
}

const FULL_ZERO_CANDIDATES: [&str; 5] = ["1190", "1260", "1540", "2220", "4119"];
const SIMPLIFIED_ZERO_CANDIDATES: [&str; 3] = ["1170", "1450", "2340"];
const FULL_PERTURBABLE: [&str; 16] = [
    "1100", "1200", "1300", "1400", "1500", "1600", "1700", "2100", "2200", "2300", "4100", "4110",
    "4120", "4200", "4400", "4500",
];
const SIMPLIFIED_PERTURBABLE: [&str; 3] = ["1600", "1700", "2400"];

/// Express a thousands value in `unit`. Ruble values get sub-thousand noise
/// that rounds away.
fn encode(rng: &mut ChaCha8Rng, v: i64, unit: Unit) -> i64 {
    match unit {
        Unit::Thousands => v,
        Unit::Millions => {
            debug_assert_eq!(v % 1000, 0);
            v / 1000
        }
        Unit::Rubles if v == 0 => 0,
        Unit::Rubles => v * 1000 + rng.gen_range(-499..=499),
    }
}

fn encode_lines(rng: &mut ChaCha8Rng, lines: &Lines, unit: Unit) -> Lines {
    lines
        .iter()
        .map(|(c, v)| (*c, encode(rng, *v, unit)))
        .collect()
}

/// Split a true statement into lines and decodings for one filing period.
/// Statistics-office rows have no decodings: the x-lines are columns.
fn period_content(
    t: &Truth,
    provider: Provider,
    keep: impl Fn(LineCode) -> bool,
) -> (Lines, Vec<(LineCode, i64)>) {
    let decoded = provider == Provider::Fns;
    let lines = t
        .lines
        .iter()
        .filter(|(c, _)| keep(**c) && !(decoded && c.is_optional_sum()))
        .map(|(c, v)| (*c, *v))
        .collect();
    let decodings = if decoded {
        t.decodings
            .iter()
            .copied()
            .filter(|(p, _)| keep(*p))
            .collect()
    } else {
        Vec::new()
    };
    (lines, decodings)
}

struct FilingPlan {
    unit: Unit,
    submission: NaiveDate,
    /// Current-period values (thousands) after any planted perturbation or scaling.
    current: Truth,
    early: Option<(NaiveDate, Truth)>,
}

#[allow(clippy::too_many_arguments)]
fn build_filing(
    rng: &mut ChaCha8Rng,
    inn: &str,
    year: i32,
    form: Form,
    plan_unit: Unit,
    submission: NaiveDate,
    current: &Truth,
    truths: &BTreeMap<i32, Truth>,
) -> RawFiling {
    let provider = Provider::for_year(year);
    let mut f = RawFiling::new(inn, year, provider, submission);
    f.form = form;
    f.unit = plan_unit;
    let tax_split = provider == Provider::Fns;
    let mut decodings = Vec::new();

    let (mut cur, dec) = period_content(current, provider, |_| true);
    if tax_split
        && year >= crate::ingest::NEW_TAX_FORM_YEAR
        && cur.contains_key(&LineCode::of("2411"))
        && rng.gen_bool(0.5)
    {
        cur.remove(&LineCode::of("2410"));
    }
    f.current = encode_lines(rng, &cur, plan_unit);
    decodings.extend(dec.into_iter().map(|d| (Period::Current, d)));

    if let Some(prev) = truths.get(&(year - 1)) {
        let (mut p1, dec) = match provider {
            Provider::Rosstat => period_content(prev, provider, |c| {
                matches!(c.section(), Section::Balance | Section::ProfitLoss)
            }),
            Provider::Fns => period_content(prev, provider, |_| true),
        };
        if tax_split
            && year > crate::ingest::NEW_TAX_FORM_YEAR
            && p1.contains_key(&LineCode::of("2411"))
            && rng.gen_bool(0.5)
        {
            p1.remove(&LineCode::of("2410"));
        }
        f.prior1 = encode_lines(rng, &p1, plan_unit);
        decodings.extend(dec.into_iter().map(|d| (Period::Prior1, d)));
    }
    if let Some(prev2) = truths.get(&(year - 2)) {
        let (p2, _) = period_content(prev2, provider, |c| c.section() == Section::Balance);
        f.prior2 = encode_lines(rng, &p2, plan_unit);
    }
    let mut counters: BTreeMap<(Period, LineCode), usize> = BTreeMap::new();
    for (period, (parent, value)) in decodings {
        let n = counters.entry((period, parent)).or_default();
        *n += 1;
        f.decodings.push(Decoding {
            parent,
            label: format!("other item {n}"),
            period,
            value: encode(rng, value, plan_unit),
        });
    }
    f
}

fn make_firm(rng: &mut ChaCha8Rng, plan: &CorpusPlan, index: usize) -> SynthFirm {
    let region = &REGIONS[rng.gen_range(0..REGIONS.len())];
    let inn = format!("{}{:08}", region.taxcode, index + 1);
    let kind = {
        let u: f64 = rng.gen();
        if u < plan.government_share {
            FirmKind::Government
        } else if u < plan.government_share + plan.religious_share {
            FirmKind::Religious
        } else if u < plan.government_share + plan.religious_share + plan.financial_share {
            FirmKind::Financial
        } else {
            FirmKind::Regular
        }
    };
    let creation = if rng.gen_bool(0.6) {
        let year = rng.gen_range(1995..=2010);
        random_date(rng, year)
    } else {
        let year = rng.gen_range(MIN_YEAR..=MAX_YEAR);
        random_date(rng, year)
    };
    let dissolution =
        (creation.year() < MAX_YEAR && rng.gen_bool(plan.dissolution_share)).then(|| {
            let year = rng.gen_range(creation.year() + 1..=MAX_YEAR);
            random_date(rng, year)
        });
    let (okved, okopf, okfs, okogu) = match kind {
        FirmKind::Regular => (
            REGULAR_OKVED[rng.gen_range(0..REGULAR_OKVED.len())],
            if rng.gen_bool(0.8) {
                OKOPF_LLC
            } else {
                OKOPF_JSC
            },
            OKFS_PRIVATE,
            "4210014",
        ),
        FirmKind::Government => (GOVERNMENT_OKVED, OKOPF_MUNICIPAL, OKFS_MUNICIPAL, "3300500"),
        FirmKind::Religious => (RELIGIOUS_OKVED, OKOPF_RELIGIOUS, OKFS_PRIVATE, "4100000"),
        FirmKind::Financial => (FINANCIAL_OKVED, OKOPF_JSC, OKFS_PRIVATE, "4210014"),
    };
    let okved_change = (kind == FirmKind::Regular && rng.gen_bool(plan.okved_change_share))
        .then(|| (2020, REGULAR_OKVED[rng.gen_range(0..REGULAR_OKVED.len())]));

    let geo_quality = {
        let u: f64 = rng.gen();
        if u < 0.70 {
            GeoQuality::House
        } else if u < 0.85 {
            GeoQuality::Street
        } else if u < 0.95 {
            GeoQuality::City
        } else {
            GeoQuality::None
        }
    };
    let address = match geo_quality {
        GeoQuality::House => Address {
            region: region.name.into(),
            city: region.city.into(),
            street: STREETS[rng.gen_range(0..STREETS.len())].into(),
            house: rng.gen_range(1..=200).to_string(),
        },
        // house numbers above 1000 are never listed, only their street
        GeoQuality::Street => Address {
            region: region.name.into(),
            city: region.city.into(),
            street: STREETS[rng.gen_range(0..STREETS.len())].into(),
            house: rng.gen_range(1001..=1200).to_string(),
        },
        GeoQuality::City => Address {
            region: region.name.into(),
            city: region.city.into(),
            street: UNKNOWN_STREETS[rng.gen_range(0..UNKNOWN_STREETS.len())].into(),
            house: rng.gen_range(1..=50).to_string(),
        },
        GeoQuality::None => Address {
            region: region.name.into(),
            city: format!("Posyolok {}", rng.gen_range(1..=99)),
            street: STREETS[rng.gen_range(0..STREETS.len())].into(),
            house: rng.gen_range(1..=50).to_string(),
        },
    };
    let round = rng.gen_bool(plan.round_share);
    let scale = 10f64.powf(if round {
        rng.gen_range(4.5..6.5)
    } else {
        rng.gen_range(2.0..6.0)
    });
    let name_prefix = match kind {
        FirmKind::Regular | FirmKind::Financial => "OOO",
        FirmKind::Government => "MKU",
        FirmKind::Religious => "RO",
    };
    SynthFirm {
        ogrn: format!(
            "1{:02}{}{:08}",
            creation.year() % 100,
            region.taxcode,
            index + 1
        ),
        name: format!("{name_prefix} Sintez {}", index + 1),
        inn,
        region,
        kind,
        form: if rng.gen_bool(plan.simplified_share) {
            Form::Simplified
        } else {
            Form::Full
        },
        creation,
        dissolution,
        okved,
        okved_change,
        okopf,
        okfs,
        okogu,
        okpo: format!("{:08}", 10_000_000 + index),
        oktmo: format!("{}{:06}", region.oktmo, rng.gen_range(0..1_000_000)),
        address,
        geo_quality,
        round,
        scale,
        growth: rng.gen_range(-0.05..0.15),
    }
}

fn street_index(street: &str) -> usize {
    STREETS.iter().position(|s| *s == street).unwrap_or(0)
}

/// Gazetteer entries the corpus needs: every city, every listed street, and
/// the house of every house-level firm.
fn gazetteer(firms: &[SynthFirm]) -> Vec<(StructuredAddress, GeoLocation)> {
    let mut places: BTreeMap<String, (StructuredAddress, GeoLocation)> = BTreeMap::new();
    let mut add = |q: StructuredAddress, loc: GeoLocation| {
        places.entry(q.normalized()).or_insert((q, loc));
    };
    for (ri, r) in REGIONS.iter().enumerate() {
        let city = StructuredAddress {
            region: r.name.into(),
            city: r.city.into(),
            street: None,
            house: None,
        };
        add(
            city,
            GeoLocation {
                lat: r.lat,
                lon: r.lon,
                address_rank: 16 + (ri % 8) as u8,
            },
        );
        for (si, s) in STREETS.iter().enumerate() {
            let q = StructuredAddress {
                region: r.name.into(),
                city: r.city.into(),
                street: Some((*s).into()),
                house: None,
            };
            let k = (si + 1) as f64;
            add(
                q,
                GeoLocation {
                    lat: r.lat + 0.011 * k,
                    lon: r.lon - 0.017 * k,
                    address_rank: 26 + (si % 4) as u8,
                },
            );
        }
    }
    for f in firms.iter().filter(|f| f.geo_quality == GeoQuality::House) {
        let r = f.region;
        let si = street_index(&f.address.street) as f64 + 1.0;
        let h: f64 = f.address.house.parse().expect("numeric house");
        let q = StructuredAddress::from_address(&f.address).expect("complete address");
        add(
            q,
            GeoLocation {
                lat: r.lat + 0.011 * si + 0.0004 * h,
                lon: r.lon - 0.017 * si + 0.0003 * h,
                address_rank: 30,
            },
        );
    }
    places.into_values().collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

const CONFIG_TEXT: &str = "\
registry_dir = registry
rosstat_dir = statements/rosstat
fns_dir = statements/fns
okved_correspondence = tables/okved_correspondence.csv
okopf_correspondence = tables/okopf_correspondence.csv
exemption_sets = tables/exemption_sets.csv
financial_register = tables/financial_register.csv
exclusion_list = tables/exclusions.csv
external_aggregates = tables/national_accounts.csv
geocoder_url = gazetteer:tables/gazetteer.csv
span = 2011-2023
format = parquet
output_dir = out
";

/// Write a complete fixture under `dir` and return its manifest.
pub fn generate(plan: &CorpusPlan, dir: &Path) -> Result<Corpus> {
    plan.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let firms: Vec<SynthFirm> = (0..plan.n_firms)
        .map(|i| make_firm(&mut rng, plan, i))
        .collect();

    let mut manifest: Vec<ManifestRow> = Vec::new();
    let mut truth_rows: Vec<TruthLine> = Vec::new();
    let mut filings: BTreeMap<i32, Vec<RawFiling>> = BTreeMap::new();
    let mut early_filings: BTreeMap<i32, Vec<RawFiling>> = BTreeMap::new();
    let mut exclusions: Vec<(String, i32)> = Vec::new();
    let mut financial_register: Vec<(i32, String)> = Vec::new();
    let mut totals: BTreeMap<i32, (i128, i128)> = BTreeMap::new();

    for firm in &firms {
        let q = firm.quantum();
        let truths: BTreeMap<i32, Truth> = (firm.creation.year().max(FIRST_TRUTH_YEAR)
            ..=firm.last_year())
            .map(|year| {
                let scale = firm.scale * (1.0 + firm.growth).powi(year - FIRST_TRUTH_YEAR);
                let mut t = match firm.form {
                    Form::Full => full_statement(&mut rng, scale, q, year),
                    Form::Simplified => simplified_statement(&mut rng, scale, q),
                };
                if year > crate::model::ROSSTAT_LAST_YEAR && rng.gen_bool(plan.zero_rate) {
                    let candidates: &[&str] = match firm.form {
                        Form::Full => &FULL_ZERO_CANDIDATES,
                        Form::Simplified => &SIMPLIFIED_ZERO_CANDIDATES,
                    };
                    if let Some(code) = candidates
                        .iter()
                        .map(|c| LineCode::of(c))
                        .find(|c| !t.lines.contains_key(c))
                    {
                        t.lines.insert(code, 0);
                    }
                }
                (year, t)
            })
            .collect();

        let mut rows: Vec<ManifestRow> = Vec::new();
        let mut filed_years: BTreeMap<i32, FilingPlan> = BTreeMap::new();
        for year in firm.universe_years() {
            let exempt = firm.exemption(year);
            if firm.kind == FirmKind::Financial {
                financial_register.push((year, firm.inn.clone()));
            }
            let truth = &truths[&year];
            let p = if exempt.is_some() {
                plan.non_eligible_filing_rate
            } else {
                plan.filing_rate
            };
            let provider = Provider::for_year(year);
            let files = year >= provider.year_range().0 && rng.gen_bool(p);
            let zero_line = truth
                .lines
                .iter()
                .find(|(_, v)| **v == 0)
                .map(|(c, _)| c.to_string());
            let mut row = ManifestRow {
                inn: firm.inn.clone(),
                year,
                region: firm.region.name.into(),
                kind: firm.kind,
                form: firm.form,
                eligible: exempt.is_none(),
                exempt_criteria: exempt,
                filed: files,
                provider: None,
                unit: None,
                submission_date: None,
                duplicates: 0,
                perturbed_line: None,
                perturbation: None,
                anomalous: false,
                zero_line,
                gap: exempt.is_none() && !files,
                imputable: None,
                imputation_source_year: None,
                imputation_source_provider: None,
                revenue: truth.lines.get(&LineCode::of("2110")).copied(),
                materials: truth.lines.get(&LineCode::of("4121")).copied(),
                geo_quality: firm.geo_quality,
            };
            if files {
                let unit = if firm.round {
                    if rng.gen_bool(0.5) {
                        Unit::Millions
                    } else {
                        Unit::Thousands
                    }
                } else if rng.gen_bool(plan.rubles_share) {
                    Unit::Rubles
                } else {
                    Unit::Thousands
                };
                let submission = match provider {
                    Provider::Rosstat => nominal_submission_date(year),
                    Provider::Fns => date(year + 1, 3, rng.gen_range(1..=31)),
                };
                let mut current = truth.clone();
                if rng.gen_bool(plan.anomaly_rate) {
                    for v in current.lines.values_mut() {
                        *v *= 1000;
                    }
                    for d in &mut current.decodings {
                        d.1 *= 1000;
                    }
                    row.anomalous = true;
                    exclusions.push((firm.inn.clone(), year));
                } else if rng.gen_bool(plan.articulation_error_rate) {
                    let candidates: Vec<LineCode> = match firm.form {
                        Form::Full => &FULL_PERTURBABLE[..],
                        Form::Simplified => &SIMPLIFIED_PERTURBABLE[..],
                    }
                    .iter()
                    .map(|c| LineCode::of(c))
                    .filter(|c| current.lines.contains_key(c))
                    .collect();
                    let code = *candidates.choose(&mut rng).expect("totals present");
                    let magnitude = if firm.round {
                        1000 * rng.gen_range(1..=20)
                    } else {
                        rng.gen_range(5..=500)
                    };
                    let mut delta = if rng.gen_bool(0.5) {
                        magnitude
                    } else {
                        -magnitude
                    };
                    let stated = current.lines[&code];
                    if stated + delta == 0 {
                        delta = -delta;
                    }
                    current.lines.insert(code, stated + delta);
                    row.perturbed_line = Some(code.to_string());
                    row.perturbation = Some(delta);
                }
                let early =
                    (provider == Provider::Fns && rng.gen_bool(plan.duplicate_rate)).then(|| {
                        let mut e = current.clone();
                        let rev = LineCode::of("2110");
                        let bump = q * rng.gen_range(1..=50);
                        *e.lines.get_mut(&rev).expect("revenue present") += bump;
                        (submission - Duration::days(rng.gen_range(10..=60)), e)
                    });
                row.provider = Some(provider);
                row.unit = Some(unit);
                row.submission_date = Some(submission);
                row.duplicates = usize::from(early.is_some());
                filed_years.insert(
                    year,
                    FilingPlan {
                        unit,
                        submission,
                        current,
                        early,
                    },
                );
            }
            rows.push(row);
        }

        for row in &mut rows {
            if !row.gap {
                continue;
            }
            let source = [
                (row.year + 1, ImputationSource::T1),
                (row.year + 2, ImputationSource::T2),
            ]
            .into_iter()
            .find(|(y, _)| filed_years.contains_key(y));
            if let Some((y, src)) = source {
                row.imputable = Some(src);
                row.imputation_source_year = Some(y);
                row.imputation_source_provider = Some(Provider::for_year(y));
                for (code, value) in &truths[&row.year].lines {
                    truth_rows.push(TruthLine {
                        inn: row.inn.clone(),
                        year: row.year,
                        code: code.to_string(),
                        value: *value,
                    });
                }
            }
        }

        for row in &rows {
            if row.eligible {
                let e = totals.entry(row.year).or_default();
                e.0 += i128::from(row.revenue.unwrap_or(0));
                e.1 += i128::from(row.materials.unwrap_or(0));
            }
        }

        for (year, fp) in filed_years {
            let f = build_filing(
                &mut rng,
                &firm.inn,
                year,
                firm.form,
                fp.unit,
                fp.submission,
                &fp.current,
                &truths,
            );
            if let Some((when, e)) = fp.early {
                let early = build_filing(
                    &mut rng, &firm.inn, year, firm.form, fp.unit, when, &e, &truths,
                );
                early_filings.entry(year).or_default().push(early);
            }
            filings.entry(year).or_default().push(f);
        }
        manifest.extend(rows);
    }

    // registry
    for as_of in SNAPSHOT_YEARS {
        let mut text = format!("<snapshot as_of_year=\"{as_of}\">\n");
        for f in firms.iter().filter(|f| f.creation.year() <= as_of) {
            text.push_str(&write_firm_xml(&f.fragment(as_of)));
        }
        text.push_str("</snapshot>\n");
        write_text(&dir.join(format!("registry/snapshot_{as_of}.xml")), &text)?;
    }

    // statements
    for (year, mut group) in filings {
        group.shuffle(&mut rng);
        match Provider::for_year(year) {
            Provider::Rosstat => write_rosstat(
                &dir.join(format!("statements/rosstat/rosstat_{year}.csv")),
                &group,
            )?,
            Provider::Fns => {
                write_fns_batch(&dir.join(format!("statements/fns/fns_{year}.xml")), &group)?
            }
        }
    }
    for (year, mut group) in early_filings {
        group.shuffle(&mut rng);
        write_fns_batch(
            &dir.join(format!("statements/fns/fns_{year}_superseded.xml")),
            &group,
        )?;
    }

    // tables
    let mut w = csv_writer(&dir.join("tables/okved_correspondence.csv"))?;
    w.write_record(["old_code", "new_code"])?;
    let mut okved: Vec<(&str, &str)> = REGULAR_OKVED.to_vec();
    okved.extend([GOVERNMENT_OKVED, RELIGIOUS_OKVED, FINANCIAL_OKVED]);
    okved.sort_by_key(|(_, old)| *old);
    for (new, old) in okved {
        w.write_record([old, new])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("tables/okopf_correspondence.csv"))?;
    w.write_record(["old_code", "new_code"])?;
    for (new, old) in [OKOPF_JSC, OKOPF_LLC, OKOPF_MUNICIPAL, OKOPF_RELIGIOUS] {
        w.write_record([old, new])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("tables/exemption_sets.csv"))?;
    w.write_record(["criterion", "code_kind", "code"])?;
    for row in [
        ["GOVERNMENT", "okfs", "12"],
        ["GOVERNMENT", "okfs", "13"],
        ["GOVERNMENT", "okfs", "14"],
        ["GOVERNMENT", "okopf", OKOPF_MUNICIPAL.0],
        ["RELIGIOUS", "okopf", OKOPF_RELIGIOUS.0],
    ] {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("tables/financial_register.csv"))?;
    w.write_record(["year", "inn"])?;
    financial_register.sort();
    for (year, inn) in &financial_register {
        w.write_record([year.to_string(), inn.clone()])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("tables/exclusions.csv"))?;
    w.write_record(["inn", "year", "reason"])?;
    exclusions.sort();
    for (inn, year) in &exclusions {
        w.write_record([
            inn.clone(),
            year.to_string(),
            "values scaled by 1000".into(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    let mut w = csv_writer(&dir.join("tables/national_accounts.csv"))?;
    w.write_record(["year", "gross_output", "intermediate_consumption", "gdp"])?;
    for (year, (revenue, materials)) in &totals {
        let go = revenue * 8 / 5;
        let ic = materials * 17 / 10;
        w.write_record([
            year.to_string(),
            go.to_string(),
            ic.to_string(),
            (go - ic).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(dir, e))?;

    GazetteerClient::write(&dir.join("tables/gazetteer.csv"), &gazetteer(&firms))?;

    // ground truth
    let manifest_path = dir.join("manifest.csv");
    let mut w = csv_writer(&manifest_path)?;
    for row in &manifest {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(&manifest_path, e))?;
    let truth_path = dir.join("truth_lines.csv");
    let mut w = csv_writer(&truth_path)?;
    for row in &truth_rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(&truth_path, e))?;

    let config = dir.join("firmpanel.conf");
    write_text(&config, CONFIG_TEXT)?;
    Ok(Corpus {
        root: dir.to_path_buf(),
        config,
        manifest: manifest_path,
        truth_lines: truth_path,
        rows: manifest,
    })
}

fn write_rosstat(path: &Path, group: &[RawFiling]) -> Result<()> {
    let collect = |get: fn(&RawFiling) -> &Lines| -> Vec<LineCode> {
        let set: BTreeSet<LineCode> = group.iter().flat_map(|f| get(f).keys().copied()).collect();
        set.into_iter().collect()
    };
    let layout = CsvLayout {
        current: collect(|f| &f.current),
        prior1: collect(|f| &f.prior1),
        prior2: collect(|f| &f.prior2),
    };
    let mut w = csv_writer(path)?;
    w.write_record(layout.header())?;
    for f in group {
        w.write_record(layout.row(f))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_fns_batch(path: &Path, group: &[RawFiling]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    w.write_all(b"<filings>\n").map_err(io)?;
    for f in group {
        w.write_all(write_fns_xml(f).as_bytes()).map_err(io)?;
    }
    w.write_all(b"</filings>\n").map_err(io)?;
    w.flush().map_err(io)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// True statements of imputable gaps, keyed by (inn, year).
pub fn read_truth_lines(path: &Path) -> Result<BTreeMap<(String, i32), Lines>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: BTreeMap<(String, i32), Lines> = BTreeMap::new();
    for row in r.deserialize() {
        let row: TruthLine = row?;
        out.entry((row.inn, row.year))
            .or_default()
            .insert(LineCode::parse(&row.code)?, row.value);
    }
    Ok(out)
}

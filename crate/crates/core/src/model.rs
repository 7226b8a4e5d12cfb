//! Shared domain types: line codes, statements, firm records and panel rows.
//!
//! Monetary amounts are `i64` thousands of rubles. A line that is absent from
//! a [`Lines`] map is *missing*; a line present with value `0` is a filed zero.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First and last reporting years the pipeline knows about.
pub const MIN_YEAR: i32 = 2011;
pub const MAX_YEAR: i32 = 2023;

/// Last year served by the statistics-office CSV provider.
pub const ROSSTAT_LAST_YEAR: i32 = 2018;

/// Discrepancy (thousands of rubles) tolerated between a stated and a computed total.
pub const ARTICULATION_THRESHOLD: i64 = 4;

/// Statement section a line belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    Balance,
    ProfitLoss,
    Equity,
    CashFlow,
    ProperUse,
}

/// An official statement line code: four digits, or three digits and a literal `x`
/// for the summed optional (decoding) lines of the cash-flow and equity sections.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LineCode([u8; 4]);

impl LineCode {
    /// Parse and check membership in the closed registry.
    pub fn parse(s: &str) -> Result<Self> {
        let code = Self::parse_shape(s).ok_or_else(|| Error::UnknownLineCode(s.to_string()))?;
        if line_registry().contains_key(&code) {
            Ok(code)
        } else {
            Err(Error::UnknownLineCode(s.to_string()))
        }
    }

    /// Syntactic check only (four digits or three digits plus `x`).
    fn parse_shape(s: &str) -> Option<Self> {
        let b = s.as_bytes();
        if b.len() != 4 || !b[..3].iter().all(u8::is_ascii_digit) {
            return None;
        }
        if !(b[3].is_ascii_digit() || b[3] == b'x') {
            return None;
        }
        Some(LineCode([b[0], b[1], b[2], b[3]]))
    }

    /// Registry constant for a code known at compile time. Panics on unknown codes.
    pub fn of(s: &str) -> Self {
        Self::parse(s).unwrap_or_else(|_| panic!("line code {s} is not in the registry"))
    }

    pub fn as_str(&self) -> &str {
        // Constructed only from ASCII.
        std::str::from_utf8(&self.0).expect("ascii line code")
    }

    pub fn is_optional_sum(&self) -> bool {
        self.0[3] == b'x'
    }

    pub fn section(&self) -> Section {
        line_registry()[self]
    }

    pub fn is_balance(&self) -> bool {
        self.section() == Section::Balance
    }

    /// For a decodable parent such as `4110`, the x-line that carries the sum of its
    /// decodings (`411x`). Only cash-flow and changes-in-equity parents qualify.
    pub fn decoding_sum_line(&self) -> Option<LineCode> {
        let candidate = LineCode([self.0[0], self.0[1], self.0[2], b'x']);
        if self.0[3] == b'0' && DECODABLE_PARENTS.contains(&self.as_str()) {
            Some(candidate)
        } else {
            None
        }
    }

    /// Panel column name, e.g. `line_1100`.
    pub fn column_name(&self) -> String {
        format!("line_{}", self.as_str())
    }
}

impl fmt::Debug for LineCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LineCode({})", self.as_str())
    }
}

impl fmt::Display for LineCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LineCode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl Serialize for LineCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for LineCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        LineCode::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Parents whose firm-named decoding lines are summed into an x-line.
const DECODABLE_PARENTS: [&str; 10] = [
    "3210", "3220", "3310", "3320", "4110", "4120", "4210", "4220", "4310", "4320",
];

/// Panel line columns, in published variable-table order.
pub const PANEL_LINE_CODES: [&str; 187] = [
    "1100", "1110", "1120", "1130", "1140", "1150", "1160", "1170", "1180", "1190", "1200", "1210",
    "1220", "1230", "1240", "1250", "1260", "1300", "1310", "1320", "1340", "1350", "1360", "1370",
    "1400", "1410", "1420", "1430", "1450", "1500", "1510", "1520", "1530", "1540", "1550", "1600",
    "1700", "2110", "2120", "2100", "2210", "2220", "2200", "2310", "2320", "2330", "2340", "2350",
    "2300", "2410", "2411", "2412", "2421", "2430", "2450", "2460", "2400", "2510", "2520", "2530",
    "2500", "2900", "2910", "3100", "3210", "3211", "3212", "3213", "3214", "3215", "3216", "321x",
    "3220", "3221", "3222", "3223", "3224", "3225", "3226", "3227", "322x", "3230", "3240", "3200",
    "3310", "3311", "3312", "3313", "3314", "3315", "3316", "331x", "3320", "3321", "3322", "3323",
    "3324", "3325", "3326", "3327", "332x", "3330", "3340", "3300", "3400", "3410", "3420", "3500",
    "3401", "3411", "3421", "3501", "3402", "3412", "3422", "3502", "3600", "4110", "4111", "4112",
    "4113", "411x", "4119", "4120", "4121", "4122", "4123", "4124", "412x", "4129", "4100", "4210",
    "4211", "4212", "4213", "4214", "421x", "4219", "4220", "4221", "4222", "4223", "4224", "422x",
    "4229", "4200", "4310", "4311", "4312", "4313", "4314", "431x", "4319", "4320", "4321", "4322",
    "4323", "432x", "4329", "4300", "4400", "4450", "4500", "4490", "6100", "6210", "6215", "6220",
    "6230", "6240", "6250", "6200", "6310", "6311", "6312", "6313", "6320", "6321", "6322", "6323",
    "6324", "6325", "6326", "6330", "6350", "6300", "6400",
];

/// Lines referenced by the articulation equations but absent from the variable table.
pub const EQUATION_ONLY_CODES: [&str; 9] = [
    "1330", "4114", "4116", "4126", "4216", "4226", "4316", "4324", "4326",
];

fn section_of(code: &str) -> Section {
    match code.as_bytes()[0] {
        b'1' => Section::Balance,
        b'2' => Section::ProfitLoss,
        b'3' => Section::Equity,
        b'4' => Section::CashFlow,
        _ => Section::ProperUse,
    }
}

/// The closed registry of line codes with their section tags.
pub fn line_registry() -> &'static BTreeMap<LineCode, Section> {
    static REGISTRY: OnceLock<BTreeMap<LineCode, Section>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        PANEL_LINE_CODES
            .iter()
            .chain(EQUATION_ONLY_CODES.iter())
            .map(|c| {
                (
                    LineCode::parse_shape(c).expect("well-formed"),
                    section_of(c),
                )
            })
            .collect()
    })
}

/// Present values keyed by line code; absence means missing.
pub type Lines = BTreeMap<LineCode, i64>;

/// Which provider delivered a filing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provider {
    Rosstat,
    Fns,
}

impl Provider {
    pub fn for_year(year: i32) -> Self {
        if year <= ROSSTAT_LAST_YEAR {
            Provider::Rosstat
        } else {
            Provider::Fns
        }
    }

    pub fn year_range(&self) -> (i32, i32) {
        match self {
            Provider::Rosstat => (2012, ROSSTAT_LAST_YEAR),
            Provider::Fns => (ROSSTAT_LAST_YEAR + 1, MAX_YEAR),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Form {
    Full,
    Simplified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Unit {
    Rubles,
    Thousands,
    Millions,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:path => $text:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($variant => $text),+ }
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_uppercase().as_str() {
                    $($text => Ok($variant),)+
                    other => Err(Error::Parse(format!(
                        "unknown {} value {other:?}", stringify!($ty)
                    ))),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

text_enum!(Provider { Provider::Rosstat => "ROSSTAT", Provider::Fns => "FNS" });
text_enum!(Form { Form::Full => "FULL", Form::Simplified => "SIMPLIFIED" });
text_enum!(Unit { Unit::Rubles => "RUBLES", Unit::Thousands => "THOUSANDS", Unit::Millions => "MILLIONS" });

/// Reporting period a value column refers to inside one filing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Period {
    Current,
    Prior1,
    Prior2,
}

text_enum!(Period { Period::Current => "CURRENT", Period::Prior1 => "PRIOR1", Period::Prior2 => "PRIOR2" });

/// One firm-named optional line detailing a regular line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Decoding {
    pub parent: LineCode,
    pub label: String,
    pub period: Period,
    pub value: i64,
}

/// A parsed statement document for one firm-year from one provider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFiling {
    pub inn: String,
    pub year: i32,
    pub provider: Provider,
    pub form: Form,
    pub unit: Unit,
    pub submission_date: NaiveDate,
    pub current: Lines,
    pub prior1: Lines,
    pub prior2: Lines,
    pub decodings: Vec<Decoding>,
}

impl RawFiling {
    pub fn new(
        inn: impl Into<String>,
        year: i32,
        provider: Provider,
        submission_date: NaiveDate,
    ) -> Self {
        RawFiling {
            inn: inn.into(),
            year,
            provider,
            form: Form::Full,
            unit: Unit::Thousands,
            submission_date,
            current: Lines::new(),
            prior1: Lines::new(),
            prior2: Lines::new(),
            decodings: Vec::new(),
        }
    }

    pub fn key(&self) -> (&str, i32) {
        (&self.inn, self.year)
    }

    pub fn period(&self, period: Period) -> &Lines {
        match period {
            Period::Current => &self.current,
            Period::Prior1 => &self.prior1,
            Period::Prior2 => &self.prior2,
        }
    }

    pub fn period_mut(&mut self, period: Period) -> &mut Lines {
        match period {
            Period::Current => &mut self.current,
            Period::Prior1 => &mut self.prior1,
            Period::Prior2 => &mut self.prior2,
        }
    }
}

/// Canonical statement for one firm-year in thousands of rubles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarmonizedStatement {
    pub inn: String,
    pub year: i32,
    pub form: Form,
    pub lines: Lines,
    pub imputed: bool,
    pub imputation_source_year: Option<i32>,
    pub simplified: bool,
    pub totals_adjustment: bool,
    pub articulated: bool,
}

impl HarmonizedStatement {
    /// Statement built from the current-period columns of a filed (normalized) filing.
    pub fn from_filing(filing: &RawFiling) -> Self {
        HarmonizedStatement {
            inn: filing.inn.clone(),
            year: filing.year,
            form: filing.form,
            lines: filing.current.clone(),
            imputed: false,
            imputation_source_year: None,
            simplified: filing.form == Form::Simplified,
            totals_adjustment: false,
            articulated: false,
        }
    }

    pub fn get(&self, code: LineCode) -> Option<i64> {
        self.lines.get(&code).copied()
    }
}

/// Structured address of incorporation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    pub region: String,
    pub city: String,
    pub street: String,
    pub house: String,
}

/// One firm-year row of registry attributes. Empty strings mean "missing" for codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmRecord {
    pub inn: String,
    pub ogrn: String,
    pub year: i32,
    pub name: String,
    pub region: String,
    pub region_taxcode: String,
    pub creation_date: NaiveDate,
    pub dissolution_date: Option<NaiveDate>,
    pub age: i32,
    pub okved: String,
    pub okopf: String,
    pub okfs: String,
    pub okogu: String,
    pub okpo: String,
    pub oktmo: String,
    pub address: Address,
    /// Set when an old-classifier code had no correspondence entry.
    pub unmapped_code: bool,
}

impl FirmRecord {
    pub fn key(&self) -> (&str, i32) {
        (&self.inn, self.year)
    }

    /// Two-digit industry division, e.g. `"46"` for `"46.90"`.
    pub fn okved_division(&self) -> &str {
        let head = self.okved.split('.').next().unwrap_or("");
        if head.len() >= 2 {
            &head[..2]
        } else {
            head
        }
    }

    /// Calendar-year age for `year`.
    pub fn age_in(creation: NaiveDate, year: i32) -> i32 {
        year - creation.year()
    }
}

/// Reason a firm-year is exempt from filing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExemptCriterion {
    Government,
    Religious,
    Financial,
    NewlyIncorporatedQ4,
}

text_enum!(ExemptCriterion {
    ExemptCriterion::Government => "GOVERNMENT",
    ExemptCriterion::Religious => "RELIGIOUS",
    ExemptCriterion::Financial => "FINANCIAL",
    ExemptCriterion::NewlyIncorporatedQ4 => "NEWLY_INCORPORATED_Q4",
});

/// Eligible iff no exemption criterion applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EligibilityDecision {
    exempt: Option<ExemptCriterion>,
}

impl EligibilityDecision {
    pub const ELIGIBLE: Self = EligibilityDecision { exempt: None };

    pub fn exempt(criterion: ExemptCriterion) -> Self {
        EligibilityDecision {
            exempt: Some(criterion),
        }
    }

    pub fn from_criterion(criterion: Option<ExemptCriterion>) -> Self {
        EligibilityDecision { exempt: criterion }
    }

    pub fn eligible(&self) -> bool {
        self.exempt.is_none()
    }

    pub fn exempt_criteria(&self) -> Option<ExemptCriterion> {
        self.exempt
    }
}

/// Geocoding precision tier derived from the geocoder's address rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeoQuality {
    House,
    Street,
    City,
    None,
}

text_enum!(GeoQuality {
    GeoQuality::House => "HOUSE",
    GeoQuality::Street => "STREET",
    GeoQuality::City => "CITY",
    GeoQuality::None => "NONE",
});

impl GeoQuality {
    pub fn from_rank(rank: u8) -> Self {
        match rank {
            30 => GeoQuality::House,
            26..=29 => GeoQuality::Street,
            12..=25 => GeoQuality::City,
            _ => GeoQuality::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoLocation {
    pub lon: f64,
    pub lat: f64,
    pub address_rank: u8,
}

impl GeoLocation {
    pub fn quality(&self) -> GeoQuality {
        GeoQuality::from_rank(self.address_rank)
    }
}

/// Assembled output record for one firm-year.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRow {
    pub firm: FirmRecord,
    pub eligibility: EligibilityDecision,
    pub financial: bool,
    pub filed: bool,
    pub statement: Option<HarmonizedStatement>,
    pub geo: Option<GeoLocation>,
    pub anomalous: bool,
}

impl PanelRow {
    pub fn key(&self) -> (&str, i32) {
        self.firm.key()
    }

    pub fn year(&self) -> i32 {
        self.firm.year
    }

    pub fn line(&self, code: LineCode) -> Option<i64> {
        self.statement.as_ref().and_then(|s| s.get(code))
    }

    pub fn geo_quality(&self) -> GeoQuality {
        self.geo.map_or(GeoQuality::None, |g| g.quality())
    }
}

/// Well-known lines used across modules.
pub mod lines {
    use super::LineCode;

    pub fn revenue() -> LineCode {
        LineCode::of("2110")
    }
    pub fn total_assets() -> LineCode {
        LineCode::of("1600")
    }
    pub fn materials_payments() -> LineCode {
        LineCode::of("4121")
    }
    pub fn cost_of_sales() -> LineCode {
        LineCode::of("2120")
    }
}

pub fn is_valid_inn(s: &str) -> bool {
    s.len() == 10 && s.bytes().all(|b| b.is_ascii_digit())
}

pub fn is_valid_ogrn(s: &str) -> bool {
    s.len() == 13 && s.bytes().all(|b| b.is_ascii_digit())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_membership() {
        let reg = line_registry();
        assert_eq!(reg.get(&LineCode::of("1100")), Some(&Section::Balance));
        assert_eq!(reg.get(&LineCode::of("411x")), Some(&Section::CashFlow));
        assert!(LineCode::parse("9999").is_err());
        assert_eq!(reg.len(), 187 + 9);
    }

    #[test]
    fn registry_is_stable() {
        assert!(std::ptr::eq(line_registry(), line_registry()));
    }

    #[test]
    fn x_lines_only_in_cash_flow_and_equity() {
        for code in line_registry().keys().filter(|c| c.is_optional_sum()) {
            assert!(
                matches!(code.section(), Section::CashFlow | Section::Equity),
                "{code}"
            );
        }
        assert!(LineCode::parse("123x").is_err());
    }

    #[test]
    fn decoding_sum_line_for_parents() {
        assert_eq!(
            LineCode::of("4110").decoding_sum_line(),
            Some(LineCode::of("411x"))
        );
        assert_eq!(
            LineCode::of("3320").decoding_sum_line(),
            Some(LineCode::of("332x"))
        );
        assert_eq!(LineCode::of("1230").decoding_sum_line(), None);
        assert_eq!(LineCode::of("2110").decoding_sum_line(), None);
    }

    #[test]
    fn rank_tiers() {
        assert_eq!(GeoQuality::from_rank(30), GeoQuality::House);
        assert_eq!(GeoQuality::from_rank(29), GeoQuality::Street);
        assert_eq!(GeoQuality::from_rank(26), GeoQuality::Street);
        assert_eq!(GeoQuality::from_rank(25), GeoQuality::City);
        assert_eq!(GeoQuality::from_rank(12), GeoQuality::City);
        assert_eq!(GeoQuality::from_rank(11), GeoQuality::None);
        assert_eq!(GeoQuality::from_rank(4), GeoQuality::None);
    }

    #[test]
    fn eligibility_xor() {
        assert!(EligibilityDecision::ELIGIBLE.eligible());
        let d = EligibilityDecision::exempt(ExemptCriterion::Religious);
        assert!(!d.eligible());
        assert_eq!(d.exempt_criteria(), Some(ExemptCriterion::Religious));
    }

    #[test]
    fn okved_division() {
        let mut r = crate::testutil::firm("7736050003", 2020);
        r.okved = "46.90".into();
        assert_eq!(r.okved_division(), "46");
        r.okved = "01".into();
        assert_eq!(r.okved_division(), "01");
    }
}

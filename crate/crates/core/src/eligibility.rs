//! Filing-obligation rules. The first matching exemption wins, in the fixed
//! order government, religious, financial, newly incorporated in Q4.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use chrono::Datelike;

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{EligibilityDecision, ExemptCriterion, FirmRecord};
use crate::par::Workers;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CodeKind {
    Okopf,
    Okfs,
    Okogu,
}

/// Code sets identifying government and religious organizations, plus the
/// financial-market register (inn by year).
#[derive(Debug, Clone, Default)]
pub struct ExemptionRules {
    government: HashSet<(CodeKind, String)>,
    religious: HashSet<(CodeKind, String)>,
    financial: HashSet<(i32, String)>,
}

impl ExemptionRules {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_code(
        &mut self,
        criterion: ExemptCriterion,
        kind: CodeKind,
        code: impl Into<String>,
    ) -> Result<()> {
        let set = match criterion {
            ExemptCriterion::Government => &mut self.government,
            ExemptCriterion::Religious => &mut self.religious,
            other => {
                return Err(Error::ConfigInvalid(format!(
                    "{other} is not defined by classifier codes"
                )));
            }
        };
        set.insert((kind, code.into()));
        Ok(())
    }

    pub fn add_financial(&mut self, year: i32, inn: impl Into<String>) {
        self.financial.insert((year, inn.into()));
    }

    pub fn is_financial(&self, inn: &str, year: i32) -> bool {
        self.financial.contains(&(year, inn.to_string()))
    }

    fn matches(set: &HashSet<(CodeKind, String)>, record: &FirmRecord) -> bool {
        [
            (CodeKind::Okopf, &record.okopf),
            (CodeKind::Okfs, &record.okfs),
            (CodeKind::Okogu, &record.okogu),
        ]
        .into_iter()
        .any(|(k, v)| !v.is_empty() && set.contains(&(k, v.clone())))
    }

    /// Load `criterion,code_kind,code` and `year,inn` CSV files.
    pub fn load(exemption_sets: &Path, financial_register: &Path) -> Result<Self> {
        let mut rules = ExemptionRules::new();
        let mut r = open_csv(exemption_sets)?;
        expect_header(&mut r, &["criterion", "code_kind", "code"], exemption_sets)?;
        for rec in r.records() {
            let rec = rec?;
            let criterion: ExemptCriterion = rec[0].parse()?;
            let kind = match rec[1].trim().to_ascii_lowercase().as_str() {
                "okopf" => CodeKind::Okopf,
                "okfs" => CodeKind::Okfs,
                "okogu" => CodeKind::Okogu,
                other => return Err(Error::Parse(format!("unknown code_kind {other:?}"))),
            };
            rules.add_code(criterion, kind, rec[2].trim())?;
        }
        let mut r = open_csv(financial_register)?;
        expect_header(&mut r, &["year", "inn"], financial_register)?;
        for rec in r.records() {
            let rec = rec?;
            let year: i32 = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad year {:?}", &rec[0])))?;
            rules.add_financial(year, rec[1].trim());
        }
        Ok(rules)
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    Ok(csv::Reader::from_reader(file))
}

fn expect_header<R: std::io::Read>(
    r: &mut csv::Reader<R>,
    want: &[&str],
    path: &Path,
) -> Result<()> {
    let h = r.headers()?;
    if h.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::Parse(format!(
            "{}: expected columns {}",
            path.display(),
            want.join(",")
        )));
    }
    Ok(())
}

/// Classify one firm-year. Missing legal-form or ownership codes yield a
/// diagnostic; the firm is treated as eligible unless another rule applies.
pub fn classify(
    record: &FirmRecord,
    rules: &ExemptionRules,
) -> (EligibilityDecision, Option<Diagnostic>) {
    let diag = (record.okopf.is_empty() || record.okfs.is_empty()).then(|| {
        Diagnostic::warn(
            DiagCode::MissingCodes,
            record.inn.clone(),
            Some(record.year),
            "legal-form or ownership code missing; exemption by code not evaluated for it",
        )
    });
    let criterion = if ExemptionRules::matches(&rules.government, record) {
        Some(ExemptCriterion::Government)
    } else if ExemptionRules::matches(&rules.religious, record) {
        Some(ExemptCriterion::Religious)
    } else if rules.is_financial(&record.inn, record.year) {
        Some(ExemptCriterion::Financial)
    } else if record.creation_date.year() == record.year && record.creation_date.month() >= 10 {
        Some(ExemptCriterion::NewlyIncorporatedQ4)
    } else {
        None
    };
    (EligibilityDecision::from_criterion(criterion), diag)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EligibilityRow {
    pub inn: String,
    pub year: i32,
    pub decision: EligibilityDecision,
    pub financial: bool,
}

#[derive(Debug, Default)]
pub struct EligibilityTable {
    pub rows: Vec<EligibilityRow>,
    pub diagnostics: Diagnostics,
}

impl EligibilityTable {
    /// (eligible, ineligible) counts.
    pub fn partition_counts(&self) -> (usize, usize) {
        let eligible = self.rows.iter().filter(|r| r.decision.eligible()).count();
        (eligible, self.rows.len() - eligible)
    }

    /// Ineligible counts per criterion.
    pub fn criterion_counts(&self) -> BTreeMap<ExemptCriterion, usize> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            if let Some(c) = r.decision.exempt_criteria() {
                *m.entry(c).or_insert(0) += 1;
            }
        }
        m
    }
}

pub fn eligibility_table(
    universe: &[FirmRecord],
    rules: &ExemptionRules,
    workers: &Workers,
) -> EligibilityTable {
    let classified = workers.map(universe, |r| {
        let (decision, diag) = classify(r, rules);
        let row = EligibilityRow {
            inn: r.inn.clone(),
            year: r.year,
            decision,
            financial: rules.is_financial(&r.inn, r.year),
        };
        (row, diag)
    });
    let mut table = EligibilityTable::default();
    for (row, diag) in classified {
        table.rows.push(row);
        if let Some(d) = diag {
            table.diagnostics.push(d);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{date, firm};

    fn rules() -> ExemptionRules {
        let mut r = ExemptionRules::new();
        r.add_code(ExemptCriterion::Government, CodeKind::Okfs, "12")
            .unwrap();
        r.add_code(ExemptCriterion::Government, CodeKind::Okopf, "75104")
            .unwrap();
        r.add_code(ExemptCriterion::Religious, CodeKind::Okopf, "71400")
            .unwrap();
        r.add_financial(2020, "7702070139");
        r
    }

    #[test]
    fn religious_by_legal_form() {
        let mut f = firm("7736050003", 2020);
        f.okopf = "71400".into();
        assert_eq!(
            classify(&f, &rules()).0,
            EligibilityDecision::exempt(ExemptCriterion::Religious)
        );
    }

    #[test]
    fn q4_only_in_creation_year() {
        let mut f = firm("7736050003", 2020);
        f.creation_date = date(2020, 11, 15);
        assert_eq!(
            classify(&f, &rules()).0,
            EligibilityDecision::exempt(ExemptCriterion::NewlyIncorporatedQ4)
        );
        f.year = 2021;
        assert!(classify(&f, &rules()).0.eligible());
        f.year = 2020;
        f.creation_date = date(2020, 9, 30);
        assert!(classify(&f, &rules()).0.eligible());
    }

    #[test]
    fn financial_by_register_year() {
        let f = firm("7702070139", 2020);
        assert_eq!(
            classify(&f, &rules()).0,
            EligibilityDecision::exempt(ExemptCriterion::Financial)
        );
        let f = firm("7702070139", 2021);
        assert!(classify(&f, &rules()).0.eligible());
    }

    #[test]
    fn precedence_government_first() {
        let mut f = firm("7702070139", 2020);
        f.okfs = "12".into();
        f.okopf = "71400".into();
        assert_eq!(
            classify(&f, &rules()).0.exempt_criteria(),
            Some(ExemptCriterion::Government)
        );
    }

    #[test]
    fn missing_codes_eligible_with_diagnostic() {
        let mut f = firm("7736050003", 2020);
        f.okopf.clear();
        let (d, diag) = classify(&f, &rules());
        assert!(d.eligible());
        assert_eq!(diag.unwrap().code, DiagCode::MissingCodes);
    }

    #[test]
    fn table_counts() {
        let w = Workers::sequential();
        assert!(eligibility_table(&[], &rules(), &w).rows.is_empty());
        let t = eligibility_table(&[firm("7736050003", 2020)], &rules(), &w);
        assert_eq!(t.partition_counts(), (1, 0));
    }

    /// Ten hand-classified firms.
    #[test]
    fn mixed_fixture_matches_hand_classification() {
        let mk = |inn: &str, okopf: &str, okfs: &str, created: (i32, u32)| {
            let mut f = firm(inn, 2020);
            f.okopf = okopf.into();
            f.okfs = okfs.into();
            f.creation_date = date(created.0, created.1, 1);
            f
        };
        let universe = vec![
            mk("1000000001", "12300", "16", (2010, 1)),  // eligible
            mk("1000000002", "12300", "12", (2010, 1)),  // government (okfs)
            mk("1000000003", "75104", "16", (2010, 1)),  // government (okopf)
            mk("1000000004", "71400", "16", (2010, 1)),  // religious
            mk("7702070139", "12300", "16", (2010, 1)),  // financial
            mk("1000000006", "12300", "16", (2020, 10)), // Q4
            mk("1000000007", "12300", "16", (2020, 9)),  // eligible (Q3)
            mk("1000000008", "71400", "12", (2020, 12)), // government beats religious and Q4
            mk("1000000009", "12300", "16", (2019, 12)), // eligible (Q4 of an earlier year)
            mk("1000000010", "12300", "16", (2015, 6)),  // eligible
        ];
        let t = eligibility_table(&universe, &rules(), &Workers::sequential());
        assert_eq!(t.partition_counts(), (4, 6));
        let c = t.criterion_counts();
        assert_eq!(c[&ExemptCriterion::Government], 3);
        assert_eq!(c[&ExemptCriterion::Religious], 1);
        assert_eq!(c[&ExemptCriterion::Financial], 1);
        assert_eq!(c[&ExemptCriterion::NewlyIncorporatedQ4], 1);
    }
}

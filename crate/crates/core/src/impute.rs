//! Reconstruction of entirely missing statements from the prior-period columns
//! of later filings: year t from the t+1 filing, or, when there is no usable
//! t+1 filing, balance-sheet lines only from the t+2 filing.
//!
//! Filed statements are never touched and imputation is single-hop: an imputed
//! statement is never itself a source.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;

use crate::model::{Form, HarmonizedStatement, Lines, RawFiling, Section};
use crate::par::Workers;

/// Lookup of deduplicated filings by (inn, year).
pub struct FilingIndex<'a> {
    by_key: HashMap<(&'a str, i32), &'a RawFiling>,
}

impl<'a> FilingIndex<'a> {
    pub fn new(filings: &'a [RawFiling]) -> Self {
        FilingIndex {
            by_key: filings
                .iter()
                .map(|f| ((f.inn.as_str(), f.year), f))
                .collect(),
        }
    }

    pub fn get(&self, inn: &str, year: i32) -> Option<&'a RawFiling> {
        self.by_key.get(&(inn, year)).copied()
    }

    pub fn contains(&self, inn: &str, year: i32) -> bool {
        self.by_key.contains_key(&(inn, year))
    }
}

fn imputed(inn: &str, year: i32, source: &RawFiling, lines: Lines) -> HarmonizedStatement {
    HarmonizedStatement {
        inn: inn.to_string(),
        year,
        form: source.form,
        lines,
        imputed: true,
        imputation_source_year: Some(source.year),
        simplified: source.form == Form::Simplified,
        totals_adjustment: false,
        articulated: false,
    }
}

/// Build the year-`year` statement of `inn` from later filings, if any carries
/// prior-period values. The caller guarantees no filing exists for (inn, year).
pub fn reconstruct(inn: &str, year: i32, filings: &FilingIndex<'_>) -> Option<HarmonizedStatement> {
    if let Some(next) = filings.get(inn, year + 1) {
        if !next.prior1.is_empty() {
            return Some(imputed(inn, year, next, next.prior1.clone()));
        }
    }
    let after = filings.get(inn, year + 2)?;
    let balance: Lines = after
        .prior2
        .iter()
        .filter(|(c, _)| c.section() == Section::Balance)
        .map(|(c, v)| (*c, *v))
        .collect();
    (!balance.is_empty()).then(|| imputed(inn, year, after, balance))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ImputationYear {
    pub year: i32,
    pub n_gaps: usize,
    pub n_imputed_t1: usize,
    pub n_imputed_t2: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ImputationReport {
    pub years: Vec<ImputationYear>,
}

impl ImputationReport {
    pub fn total_imputed(&self) -> usize {
        self.years
            .iter()
            .map(|y| y.n_imputed_t1 + y.n_imputed_t2)
            .sum()
    }
}

/// Add an imputed statement for every universe firm-year that has no statement
/// and can be reconstructed. Returns all statements sorted by (inn, year).
pub fn impute_pass(
    mut statements: Vec<HarmonizedStatement>,
    filings: &[RawFiling],
    universe: &[(String, i32)],
    workers: &Workers,
) -> (Vec<HarmonizedStatement>, ImputationReport) {
    let index = FilingIndex::new(filings);
    let have: HashSet<(&str, i32)> = statements
        .iter()
        .map(|s| (s.inn.as_str(), s.year))
        .collect();
    let gaps: Vec<&(String, i32)> = universe
        .iter()
        .filter(|(inn, year)| !have.contains(&(inn.as_str(), *year)) && !index.contains(inn, *year))
        .collect();

    let mut per_year: BTreeMap<i32, ImputationYear> = universe
        .iter()
        .map(|(_, y)| {
            (
                *y,
                ImputationYear {
                    year: *y,
                    ..Default::default()
                },
            )
        })
        .collect();
    for (_, year) in &gaps {
        per_year.get_mut(year).expect("year seeded").n_gaps += 1;
    }

    let rebuilt = workers.map(&gaps, |(inn, year)| reconstruct(inn, *year, &index));
    drop(have);
    for s in rebuilt.into_iter().flatten() {
        let entry = per_year.get_mut(&s.year).expect("year seeded");
        if s.imputation_source_year == Some(s.year + 1) {
            entry.n_imputed_t1 += 1;
        } else {
            entry.n_imputed_t2 += 1;
        }
        statements.push(s);
    }
    statements.sort_by(|a, b| (&a.inn, a.year).cmp(&(&b.inn, b.year)));
    (
        statements,
        ImputationReport {
            years: per_year.into_values().collect(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LineCode, Provider};
    use crate::testutil::date;

    fn filing(inn: &str, year: i32) -> RawFiling {
        RawFiling::new(inn, year, Provider::for_year(year), date(year + 1, 3, 30))
    }

    #[test]
    fn t_plus_one_source() {
        let mut f = filing("7736050003", 2021);
        f.prior1.insert(LineCode::of("2110"), 400);
        f.current.insert(LineCode::of("2110"), 999);
        let filings = vec![f];
        let s = reconstruct("7736050003", 2020, &FilingIndex::new(&filings)).unwrap();
        assert_eq!(s.get(LineCode::of("2110")), Some(400));
        assert!(s.imputed);
        assert_eq!(s.imputation_source_year, Some(2021));
    }

    #[test]
    fn t_plus_two_balance_only() {
        let mut f = filing("7736050003", 2022);
        f.prior2.insert(LineCode::of("1600"), 900);
        f.prior1.insert(LineCode::of("2110"), 5);
        let filings = vec![f];
        let s = reconstruct("7736050003", 2020, &FilingIndex::new(&filings)).unwrap();
        assert_eq!(s.lines.len(), 1);
        assert_eq!(s.get(LineCode::of("1600")), Some(900));
        assert_eq!(s.imputation_source_year, Some(2022));
    }

    #[test]
    fn t_plus_one_takes_precedence() {
        let mut a = filing("7736050003", 2021);
        a.prior1.insert(LineCode::of("1600"), 1);
        let mut b = filing("7736050003", 2022);
        b.prior2.insert(LineCode::of("1600"), 2);
        let filings = vec![a, b];
        let s = reconstruct("7736050003", 2020, &FilingIndex::new(&filings)).unwrap();
        assert_eq!(s.get(LineCode::of("1600")), Some(1));
    }

    #[test]
    fn nothing_to_rebuild_from() {
        let filings: Vec<RawFiling> = vec![];
        assert!(reconstruct("7736050003", 2020, &FilingIndex::new(&filings)).is_none());
    }

    #[test]
    fn pass_never_overwrites_and_is_idempotent() {
        let mut a = filing("7736050003", 2021);
        a.current.insert(LineCode::of("2110"), 10);
        a.prior1.insert(LineCode::of("2110"), 7);
        let mut b = filing("7736050003", 2022);
        b.current.insert(LineCode::of("2110"), 12);
        b.prior1.insert(LineCode::of("2110"), 11);
        let filings = vec![a, b];
        let statements: Vec<HarmonizedStatement> = filings
            .iter()
            .map(HarmonizedStatement::from_filing)
            .collect();
        let universe: Vec<(String, i32)> = (2020..=2023)
            .map(|y| ("7736050003".to_string(), y))
            .collect();
        let w = Workers::sequential();
        let (out, report) = impute_pass(statements.clone(), &filings, &universe, &w);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].year, 2020);
        assert_eq!(out[1], statements[0]);
        assert_eq!(out[2], statements[1]);
        // the final year has no t+1 filing
        let y2023 = report.years.iter().find(|y| y.year == 2023).unwrap();
        assert_eq!((y2023.n_gaps, y2023.n_imputed_t1), (1, 0));
        assert_eq!(report.total_imputed(), 1);

        let (again, report2) = impute_pass(out.clone(), &filings, &universe, &w);
        assert_eq!(again, out);
        assert_eq!(report2.total_imputed(), 0);
    }

    #[test]
    fn section_restricted_priors_leave_cash_flow_missing() {
        // Statistics-office era filings carry no cash-flow prior columns.
        let mut f = filing("7736050003", 2016);
        f.current.insert(LineCode::of("4110"), 50);
        f.prior1.insert(LineCode::of("2110"), 40);
        let filings = vec![f];
        let s = reconstruct("7736050003", 2015, &FilingIndex::new(&filings)).unwrap();
        assert!(s.get(LineCode::of("4110")).is_none());
        assert_eq!(s.get(LineCode::of("2110")), Some(40));
    }

    #[test]
    fn planted_gaps_counted() {
        // 10 firms filing 2019-2021, three of them skip 2020.
        let mut filings = Vec::new();
        for i in 0..10 {
            let inn = format!("77000000{i:02}");
            for year in 2019..=2021 {
                if year == 2020 && i < 3 {
                    continue;
                }
                let mut f = filing(&inn, year);
                f.current.insert(LineCode::of("2110"), 100 + year as i64);
                f.prior1.insert(LineCode::of("2110"), 99 + year as i64);
                filings.push(f);
            }
        }
        let statements: Vec<_> = filings
            .iter()
            .map(HarmonizedStatement::from_filing)
            .collect();
        let universe: Vec<(String, i32)> = (0..10)
            .flat_map(|i| (2019..=2021).map(move |y| (format!("77000000{i:02}"), y)))
            .collect();
        let (out, report) = impute_pass(statements, &filings, &universe, &Workers::sequential());
        assert_eq!(report.total_imputed(), 3);
        assert_eq!(out.iter().filter(|s| s.imputed).count(), 3);
        assert!(out
            .iter()
            .filter(|s| s.imputed)
            .all(|s| s.get(LineCode::of("2110")) == Some(2120)));
    }
}

//! Validation reports over the assembled panel. Anomalous firm-years are
//! excluded from every numerator and denominator.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{lines, LineCode, PanelRow};

use super::Key;

fn ratio(num: i128, den: i128) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

fn positive(row: &PanelRow, code: LineCode) -> Option<i64> {
    row.line(code).filter(|v| *v > 0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilingRate {
    pub year: i32,
    /// Empty for the all-regions row.
    pub region: String,
    pub eligible: usize,
    pub filed: usize,
    pub imputed: usize,
    pub rate: Option<f64>,
    pub rate_with_imputation: Option<f64>,
}

/// Share of eligible firm-years that filed, per year and per (year, region).
/// Imputed statements count only towards `rate_with_imputation`.
pub fn filing_rate_report(rows: &[PanelRow]) -> Vec<FilingRate> {
    let mut acc: BTreeMap<(i32, String), [usize; 3]> = BTreeMap::new();
    for r in rows
        .iter()
        .filter(|r| !r.anomalous && r.eligibility.eligible())
    {
        let imputed = r.statement.as_ref().is_some_and(|s| s.imputed);
        for region in [String::new(), r.firm.region.clone()] {
            let e = acc.entry((r.year(), region)).or_insert([0; 3]);
            e[0] += 1;
            e[1] += r.filed as usize;
            e[2] += imputed as usize;
        }
    }
    acc.into_iter()
        .map(|((year, region), [eligible, filed, imputed])| FilingRate {
            year,
            region,
            eligible,
            filed,
            imputed,
            rate: ratio(filed as i128, eligible as i128),
            rate_with_imputation: ratio((filed + imputed) as i128, eligible as i128),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArticulationShare {
    pub year: i32,
    pub filed: usize,
    pub articulated: usize,
    pub share: Option<f64>,
    pub weighted_share: Option<f64>,
    /// Share articulating after totals repair, when the detail is available.
    pub share_after_repair: Option<f64>,
}

/// Plain and revenue-weighted shares of filed statements that articulate.
/// `after_repair` maps firm-years to their post-repair verdict.
pub fn articulation_report(
    rows: &[PanelRow],
    after_repair: &HashMap<Key, bool>,
) -> Vec<ArticulationShare> {
    // filed, articulated, weight, articulated weight, articulated after repair, with after-repair verdict
    let mut acc: BTreeMap<i32, (usize, usize, i128, i128, usize, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.anomalous) {
        let e = acc.entry(r.year()).or_default();
        let Some(s) = r.statement.as_ref().filter(|_| r.filed) else {
            continue;
        };
        let w = positive(r, lines::revenue()).unwrap_or(0) as i128;
        e.0 += 1;
        e.2 += w;
        if s.articulated {
            e.1 += 1;
            e.3 += w;
        }
        if let Some(&after) = after_repair.get(&(s.inn.clone(), s.year)) {
            e.5 += 1;
            e.4 += after as usize;
        }
    }
    acc.into_iter()
        .map(
            |(year, (filed, articulated, w, wa, after, with_after))| ArticulationShare {
                year,
                filed,
                articulated,
                share: ratio(articulated as i128, filed as i128),
                weighted_share: ratio(wa, w),
                share_after_repair: ratio(after as i128, with_after as i128),
            },
        )
        .collect()
}

/// Externally published totals for one year, thousands of rubles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalAggregates {
    pub gross_output: f64,
    pub intermediate_consumption: f64,
    pub gdp: f64,
}

/// Read `year,gross_output,intermediate_consumption,gdp`.
pub fn load_external_aggregates(path: &Path) -> Result<BTreeMap<i32, ExternalAggregates>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(file);
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = || Error::Parse(format!("{}: bad row {:?}", path.display(), rec));
        let num = |i: usize| {
            rec.get(i)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(bad)
        };
        let year = rec
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(bad)?;
        out.insert(
            year,
            ExternalAggregates {
                gross_output: num(1)?,
                intermediate_consumption: num(2)?,
                gdp: num(3)?,
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRatio {
    pub year: i32,
    pub revenue: i64,
    pub materials: i64,
    pub value_added: i64,
    pub revenue_imputed_share: Option<f64>,
    pub materials_imputed_share: Option<f64>,
    pub value_added_imputed_share: Option<f64>,
    pub gross_output_ratio: Option<f64>,
    pub intermediate_consumption_ratio: Option<f64>,
    pub gdp_ratio: Option<f64>,
}

/// Sums of positive revenue, positive materials, and value added (revenue
/// minus materials where both are positive), with their imputed shares and
/// ratios to external totals.
pub fn aggregate_ratio_report(
    rows: &[PanelRow],
    external: &BTreeMap<i32, ExternalAggregates>,
    materials: LineCode,
) -> (Vec<AggregateRatio>, Diagnostics) {
    // totals and imputed parts of revenue, materials, value added
    let mut acc: BTreeMap<i32, [i128; 6]> = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.anomalous) {
        let e = acc.entry(r.year()).or_insert([0; 6]);
        let imputed = r.statement.as_ref().is_some_and(|s| s.imputed);
        let rev = positive(r, lines::revenue());
        let mat = positive(r, materials);
        let va = rev.zip(mat).map(|(a, b)| a - b);
        for (i, v) in [rev, mat, va].into_iter().enumerate() {
            if let Some(v) = v {
                e[i] += v as i128;
                if imputed {
                    e[i + 3] += v as i128;
                }
            }
        }
    }
    let mut diags = Diagnostics::new();
    let out = acc
        .into_iter()
        .map(|(year, t)| {
            let ext = external.get(&year);
            if ext.is_none() && !external.is_empty() {
                diags.push(Diagnostic::warn(
                    DiagCode::MissingExternalYear,
                    "",
                    Some(year),
                    "no external aggregates",
                ));
            }
            let against =
                |num: i128, den: Option<f64>| den.filter(|d| *d != 0.0).map(|d| num as f64 / d);
            AggregateRatio {
                year,
                revenue: t[0] as i64,
                materials: t[1] as i64,
                value_added: t[2] as i64,
                revenue_imputed_share: ratio(t[3], t[0]),
                materials_imputed_share: ratio(t[4], t[1]),
                value_added_imputed_share: ratio(t[5], t[2]),
                gross_output_ratio: against(t[0], ext.map(|e| e.gross_output)),
                intermediate_consumption_ratio: against(
                    t[1],
                    ext.map(|e| e.intermediate_consumption),
                ),
                gdp_ratio: against(t[2], ext.map(|e| e.gdp)),
            }
        })
        .collect();
    (out, diags)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipCount {
    pub year: i32,
    pub eligible: usize,
    pub eligible_filed: usize,
    pub eligible_imputed: usize,
    pub non_eligible_filers: usize,
    pub rows: usize,
}

/// Row counts behind the panel membership identity, per year.
pub fn membership_report(rows: &[PanelRow]) -> Vec<MembershipCount> {
    let mut acc: BTreeMap<i32, MembershipCount> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.year()).or_insert(MembershipCount {
            year: r.year(),
            eligible: 0,
            eligible_filed: 0,
            eligible_imputed: 0,
            non_eligible_filers: 0,
            rows: 0,
        });
        e.rows += 1;
        if r.eligibility.eligible() {
            e.eligible += 1;
            e.eligible_filed += r.filed as usize;
            e.eligible_imputed += r.statement.as_ref().is_some_and(|s| s.imputed) as usize;
        } else {
            e.non_eligible_filers += 1;
        }
    }
    acc.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EligibilityDecision, ExemptCriterion};
    use crate::testutil::panel_row;

    fn filer(inn: &str, revenue: i64, articulated: bool) -> PanelRow {
        let mut r = panel_row(inn, 2020, "46.90", Some(revenue), None);
        r.statement.as_mut().unwrap().articulated = articulated;
        r
    }

    fn non_filer(inn: &str) -> PanelRow {
        let mut r = panel_row(inn, 2020, "46.90", None, None);
        r.statement = None;
        r.filed = false;
        r
    }

    #[test]
    fn filing_rate_raw_and_with_imputation() {
        let mut rows: Vec<PanelRow> = (0..7)
            .map(|i| filer(&format!("10000000{i:02}"), 1, true))
            .collect();
        rows.extend((7..10).map(|i| non_filer(&format!("10000000{i:02}"))));
        let imputed = rows.iter_mut().find(|r| r.statement.is_none()).unwrap();
        let mut s = filer("x", 1, true).statement.unwrap();
        s.imputed = true;
        imputed.statement = Some(s);
        let all = &filing_rate_report(&rows)[0];
        assert_eq!(all.region, "");
        assert_eq!((all.eligible, all.filed, all.imputed), (10, 7, 1));
        assert_eq!(all.rate, Some(0.7));
        assert_eq!(all.rate_with_imputation, Some(0.8));
    }

    #[test]
    fn filing_rate_ignores_non_eligible_and_anomalous() {
        let mut rows = vec![
            filer("1000000001", 1, true),
            filer("1000000002", 1, true),
            non_filer("1000000003"),
        ];
        rows[1].eligibility = EligibilityDecision::exempt(ExemptCriterion::Religious);
        rows[2].anomalous = true;
        let all = &filing_rate_report(&rows)[0];
        assert_eq!((all.eligible, all.rate), (1, Some(1.0)));
    }

    #[test]
    fn articulation_weighted_by_revenue() {
        let rows = vec![
            filer("1000000001", 900, true),
            filer("1000000002", 100, false),
        ];
        let r = &articulation_report(&rows, &HashMap::new())[0];
        assert_eq!(r.share, Some(0.5));
        assert_eq!(r.weighted_share, Some(0.9));
        assert_eq!(r.share_after_repair, None);
    }

    #[test]
    fn articulation_without_filings_is_absent() {
        let r = &articulation_report(&[non_filer("1000000001")], &HashMap::new())[0];
        assert_eq!((r.filed, r.share, r.weighted_share), (0, None, None));
    }

    #[test]
    fn aggregate_ratios_skip_anomalous() {
        let mut rows = vec![
            filer("1000000001", 500, true),
            filer("1000000002", 10_000, true),
        ];
        rows[1].anomalous = true;
        let mut ext = BTreeMap::new();
        ext.insert(
            2020,
            ExternalAggregates {
                gross_output: 1000.0,
                intermediate_consumption: 1.0,
                gdp: 1.0,
            },
        );
        let (r, d) = aggregate_ratio_report(&rows, &ext, LineCode::of("4121"));
        assert_eq!(r[0].revenue, 500);
        assert_eq!(r[0].gross_output_ratio, Some(0.5));
        assert_eq!(r[0].value_added, 0);
        assert!(d.is_empty());

        let (r, d) = aggregate_ratio_report(
            &rows,
            &BTreeMap::from([(2019, ext[&2020])]),
            LineCode::of("4121"),
        );
        assert_eq!(r[0].gross_output_ratio, None);
        assert_eq!(d.count(DiagCode::MissingExternalYear), 1);
    }

    #[test]
    fn membership_identity() {
        let mut rows = vec![
            filer("1000000001", 1, true),
            non_filer("1000000002"),
            filer("1000000003", 1, true),
        ];
        rows[2].eligibility = EligibilityDecision::exempt(ExemptCriterion::Financial);
        let m = &membership_report(&rows)[0];
        assert_eq!(m.rows, m.eligible + m.non_eligible_filers);
        assert_eq!(
            (m.eligible, m.eligible_filed, m.non_eligible_filers),
            (2, 1, 1)
        );
    }
}

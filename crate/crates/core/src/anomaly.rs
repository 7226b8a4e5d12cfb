//! Manual-review queue and curated exclusion flags.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{lines, LineCode, PanelRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Among the largest non-financial firms of a 2-digit industry in a year.
    IndustryTop,
    /// Largest year-on-year relative change.
    YoyChange,
    /// Largest revenue among imputed statements.
    ImputedRevenue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub trigger: Trigger,
    pub rank: usize,
    pub inn: String,
    pub year: i32,
    pub metric: LineCode,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct ReviewConfig {
    pub n_top: usize,
    /// Lines ranked for industry tops and year-on-year changes.
    pub metrics: Vec<LineCode>,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            n_top: 20,
            metrics: vec![lines::revenue(), lines::total_assets()],
        }
    }
}

/// Sort descending by value, ties by (inn, year), and keep the first `n`.
type Scored<'a> = (f64, &'a str, i32);

fn top_n(mut items: Vec<Scored<'_>>, n: usize) -> Vec<(usize, f64, &str, i32)> {
    items.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| (a.1, a.2).cmp(&(b.1, b.2)))
    });
    items
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (v, inn, y))| (i + 1, v, inn, y))
        .collect()
}

/// max(v_t / v_{t-1}, v_{t-1} / v_t) for two positive values.
pub fn yoy_change(previous: i64, current: i64) -> Option<f64> {
    (previous > 0 && current > 0).then(|| {
        let (p, c) = (previous as f64, current as f64);
        (c / p).max(p / c)
    })
}

pub fn review_queue(rows: &[PanelRow], config: &ReviewConfig) -> Vec<Candidate> {
    let mut out = Vec::new();
    let with_statement: Vec<&PanelRow> = rows.iter().filter(|r| r.statement.is_some()).collect();

    for &metric in &config.metrics {
        let mut groups: BTreeMap<(i32, &str), Vec<Scored>> = BTreeMap::new();
        for r in with_statement.iter().filter(|r| !r.financial) {
            if let Some(v) = r.line(metric) {
                groups
                    .entry((r.year(), r.firm.okved_division()))
                    .or_default()
                    .push((v as f64, r.firm.inn.as_str(), r.year()));
            }
        }
        for items in groups.into_values() {
            for (rank, value, inn, year) in top_n(items, config.n_top) {
                out.push(Candidate {
                    trigger: Trigger::IndustryTop,
                    rank,
                    inn: inn.into(),
                    year,
                    metric,
                    value,
                });
            }
        }
    }

    let by_key: HashMap<(&str, i32), &PanelRow> =
        with_statement.iter().map(|r| (r.key(), *r)).collect();
    for &metric in &config.metrics {
        let changes: Vec<(f64, &str, i32)> = with_statement
            .iter()
            .filter_map(|r| {
                let prev = by_key
                    .get(&(r.firm.inn.as_str(), r.year() - 1))?
                    .line(metric)?;
                let ratio = yoy_change(prev, r.line(metric)?)?;
                Some((ratio, r.firm.inn.as_str(), r.year()))
            })
            .collect();
        for (rank, value, inn, year) in top_n(changes, config.n_top) {
            out.push(Candidate {
                trigger: Trigger::YoyChange,
                rank,
                inn: inn.into(),
                year,
                metric,
                value,
            });
        }
    }

    let imputed: Vec<(f64, &str, i32)> = with_statement
        .iter()
        .filter(|r| r.statement.as_ref().is_some_and(|s| s.imputed))
        .filter_map(|r| {
            Some((
                r.line(lines::revenue())? as f64,
                r.firm.inn.as_str(),
                r.year(),
            ))
        })
        .collect();
    for (rank, value, inn, year) in top_n(imputed, config.n_top) {
        out.push(Candidate {
            trigger: Trigger::ImputedRevenue,
            rank,
            inn: inn.into(),
            year,
            metric: lines::revenue(),
            value,
        });
    }
    out
}

pub fn write_review_queue(path: &Path, queue: &[Candidate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trigger", "rank", "inn", "year", "metric", "value"])?;
    for c in queue {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Exclusion {
    pub inn: String,
    pub year: i32,
    pub reason: String,
}

/// Read an `inn,year,reason` CSV.
pub fn load_exclusions(path: &Path) -> Result<Vec<Exclusion>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let mut r = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let year = rec
            .get(1)
            .and_then(|y| y.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("{}: bad year", path.display())))?;
        out.push(Exclusion {
            inn: rec.get(0).unwrap_or("").trim().to_string(),
            year,
            reason: rec.get(2).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

/// Flag rows listed for exclusion. Only the `anomalous` flag changes; entries
/// that match no row with a statement are reported.
pub fn apply_exclusions(rows: &mut [PanelRow], list: &[Exclusion]) -> Diagnostics {
    let index: HashMap<(String, i32), usize> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| ((r.firm.inn.clone(), r.year()), i))
        .collect();
    let mut diags = Diagnostics::new();
    for e in list {
        match index.get(&(e.inn.clone(), e.year)) {
            Some(&i) if rows[i].statement.is_some() => rows[i].anomalous = true,
            _ => diags.push(Diagnostic::warn(
                DiagCode::UnmatchedExclusion,
                e.inn.clone(),
                Some(e.year),
                "exclusion entry has no matching statement",
            )),
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::panel_row as row;

    #[test]
    fn industry_tops_bounded() {
        let mut rows = Vec::new();
        for ind in ["01", "46", "62"] {
            for i in 0..25 {
                rows.push(row(
                    &format!("{ind}000000{i:02}"),
                    2020,
                    &format!("{ind}.10"),
                    Some(100 + i),
                    Some(10 + i),
                ));
            }
        }
        let q = review_queue(&rows, &ReviewConfig::default());
        let revenue_tops = q
            .iter()
            .filter(|c| c.trigger == Trigger::IndustryTop && c.metric == LineCode::of("2110"))
            .count();
        assert_eq!(revenue_tops, 60);
        let first = q
            .iter()
            .find(|c| c.trigger == Trigger::IndustryTop && c.rank == 1)
            .unwrap();
        assert_eq!(first.value, 124.0);
    }

    #[test]
    fn financial_firms_excluded_from_tops() {
        let mut rows = vec![row("7702070139", 2020, "64.19", Some(1_000_000_000), None)];
        rows[0].financial = true;
        rows.push(row("7736050003", 2020, "64.19", Some(5), None));
        let q = review_queue(&rows, &ReviewConfig::default());
        assert!(q
            .iter()
            .all(|c| c.inn != "7702070139" || c.trigger != Trigger::IndustryTop));
    }

    /// Five firms over two years; hand-ranked ratios 1000, 2, 1.5, 1.25 (drop), 1.
    #[test]
    fn yoy_jump_ranked_first() {
        let pairs = [(10, 10_000), (50, 100), (200, 300), (400, 320), (7, 7)];
        let mut rows = Vec::new();
        for (i, (a, b)) in pairs.iter().enumerate() {
            let inn = format!("50000000{i:02}");
            rows.push(row(&inn, 2020, "46.90", Some(*a), None));
            rows.push(row(&inn, 2021, "46.90", Some(*b), None));
        }
        let q = review_queue(
            &rows,
            &ReviewConfig {
                n_top: 5,
                metrics: vec![LineCode::of("2110")],
            },
        );
        let yoy: Vec<(&str, f64)> = q
            .iter()
            .filter(|c| c.trigger == Trigger::YoyChange)
            .map(|c| (c.inn.as_str(), c.value))
            .collect();
        assert_eq!(
            yoy,
            vec![
                ("5000000000", 1000.0),
                ("5000000001", 2.0),
                ("5000000002", 1.5),
                ("5000000003", 1.25),
                ("5000000004", 1.0)
            ]
        );
    }

    #[test]
    fn ties_broken_by_key() {
        let rows = vec![
            row("2000000000", 2020, "46.90", Some(5), None),
            row("1000000000", 2020, "46.90", Some(5), None),
        ];
        let q = review_queue(
            &rows,
            &ReviewConfig {
                n_top: 2,
                metrics: vec![LineCode::of("2110")],
            },
        );
        let tops: Vec<&str> = q
            .iter()
            .filter(|c| c.trigger == Trigger::IndustryTop)
            .map(|c| c.inn.as_str())
            .collect();
        assert_eq!(tops, vec!["1000000000", "2000000000"]);
    }

    #[test]
    fn imputed_revenue_trigger() {
        let mut rows = vec![
            row("1000000000", 2020, "46.90", Some(5), None),
            row("2000000000", 2020, "46.90", Some(9), None),
        ];
        rows[0].statement.as_mut().unwrap().imputed = true;
        rows[0].filed = false;
        let q = review_queue(&rows, &ReviewConfig::default());
        let imp: Vec<&str> = q
            .iter()
            .filter(|c| c.trigger == Trigger::ImputedRevenue)
            .map(|c| c.inn.as_str())
            .collect();
        assert_eq!(imp, vec!["1000000000"]);
    }

    #[test]
    fn exclusions_flag_only() {
        let mut rows = vec![
            row("1000000000", 2020, "46.90", Some(5), None),
            row("2000000000", 2020, "46.90", Some(9), None),
            row("3000000000", 2020, "46.90", Some(9), None),
        ];
        rows[2].statement = None;
        rows[2].filed = false;
        let before = rows.clone();
        let list = vec![
            Exclusion {
                inn: "1000000000".into(),
                year: 2020,
                reason: "audit".into(),
            },
            Exclusion {
                inn: "2000000000".into(),
                year: 2020,
                reason: "audit".into(),
            },
            Exclusion {
                inn: "3000000000".into(),
                year: 2020,
                reason: "non-filer".into(),
            },
        ];
        let d = apply_exclusions(&mut rows, &list);
        assert_eq!(rows.iter().filter(|r| r.anomalous).count(), 2);
        assert_eq!(d.count(DiagCode::UnmatchedExclusion), 1);
        for (a, b) in rows.iter().zip(&before) {
            let mut a = a.clone();
            a.anomalous = false;
            assert_eq!(&a, b);
        }
        let mut untouched = before.clone();
        assert!(apply_exclusions(&mut untouched, &[]).is_empty());
        assert_eq!(untouched, before);
    }
}

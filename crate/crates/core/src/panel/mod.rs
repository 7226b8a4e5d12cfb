//! Joining universe, eligibility, statements, locations and anomaly flags into
//! panel rows.
//!
//! The panel holds every eligible firm-year, filed or not, plus non-eligible
//! firm-years that carry a statement. Non-eligible non-filers are dropped.

pub mod export;
pub mod reports;

use std::collections::{BTreeMap, HashMap};

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::eligibility::EligibilityRow;
use crate::error::{Error, Result};
use crate::model::{FirmRecord, GeoLocation, HarmonizedStatement, PanelRow};

pub type Key = (String, i32);

fn index_unique<'a, T>(
    items: &'a [T],
    key: impl Fn(&'a T) -> (&'a str, i32),
) -> Result<HashMap<(&'a str, i32), &'a T>> {
    let mut map = HashMap::with_capacity(items.len());
    for item in items {
        let k = key(item);
        if map.insert(k, item).is_some() {
            return Err(Error::KeyCollision {
                inn: k.0.to_string(),
                year: k.1,
            });
        }
    }
    Ok(map)
}

#[derive(Debug, Default)]
pub struct Assembled {
    /// Sorted by (inn, year).
    pub rows: Vec<PanelRow>,
    pub diagnostics: Diagnostics,
    pub dropped_non_eligible_non_filers: usize,
    pub dropped_unmatched_statements: usize,
}

pub fn assemble(
    universe: &[FirmRecord],
    eligibility: &[EligibilityRow],
    statements: Vec<HarmonizedStatement>,
    geo: &HashMap<Key, GeoLocation>,
    anomalous: &BTreeMap<Key, String>,
) -> Result<Assembled> {
    let firms = index_unique(universe, |f| f.key())?;
    let decisions = index_unique(eligibility, |e| (e.inn.as_str(), e.year))?;
    let mut out = Assembled::default();

    let mut by_key: HashMap<Key, HarmonizedStatement> = HashMap::with_capacity(statements.len());
    for s in statements {
        if !firms.contains_key(&(s.inn.as_str(), s.year)) {
            out.diagnostics.push(Diagnostic::warn(
                DiagCode::UnmatchedStatement,
                s.inn.clone(),
                Some(s.year),
                "statement has no matching universe firm-year; removed",
            ));
            out.dropped_unmatched_statements += 1;
            continue;
        }
        let key = (s.inn.clone(), s.year);
        if by_key.contains_key(&key) {
            return Err(Error::KeyCollision {
                inn: key.0,
                year: key.1,
            });
        }
        by_key.insert(key, s);
    }

    let mut sorted: Vec<&FirmRecord> = universe.iter().collect();
    sorted.sort_by(|a, b| a.key().cmp(&b.key()));
    for firm in sorted {
        let e = decisions
            .get(&firm.key())
            .ok_or_else(|| Error::StageFailed {
                stage: "assemble".into(),
                message: format!("no eligibility decision for {} {}", firm.inn, firm.year),
            })?;
        let key = (firm.inn.clone(), firm.year);
        let statement = by_key.remove(&key);
        if !e.decision.eligible() && statement.is_none() {
            out.dropped_non_eligible_non_filers += 1;
            continue;
        }
        out.rows.push(PanelRow {
            firm: firm.clone(),
            eligibility: e.decision,
            financial: e.financial,
            filed: statement.as_ref().is_some_and(|s| !s.imputed),
            statement,
            geo: geo.get(&key).copied(),
            anomalous: anomalous.contains_key(&key),
        });
    }
    Ok(out)
}

//! Statement articulation: the official summation equations, totals repair and
//! the articulated verdict.
//!
//! Missing terms count as zero as long as one term of the right-hand side is
//! present; an all-missing right-hand side gives no verdict for that equation.
//! Repair fires when the stated total is absent or off by more than
//! [`ARTICULATION_THRESHOLD`]; articulation passes when every applicable
//! equation is within it.

use std::sync::OnceLock;

use serde::Serialize;

use crate::model::{Form, HarmonizedStatement, LineCode, Lines, ARTICULATION_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equation {
    pub id: &'static str,
    pub form_scope: Form,
    pub total: LineCode,
    pub terms: Vec<(i8, LineCode)>,
    /// Whether the total's x-line (summed decodings) enters the right-hand side.
    pub includes_optional: bool,
}

impl Equation {
    /// The x-line added to the right-hand side, if any.
    pub fn optional_line(&self) -> Option<LineCode> {
        if self.includes_optional {
            self.total.decoding_sum_line()
        } else {
            None
        }
    }

    /// Total-to-total identities (`1600 = 1700`) are checked but never used to
    /// overwrite a line: both sides are already repaired by their own equations.
    pub fn is_identity(&self) -> bool {
        self.terms.len() == 1
            && !self.includes_optional
            && TOTAL_LINES.contains(&self.terms[0].1.as_str())
    }

    /// Signed sum of the present right-hand side terms; `None` if all are missing.
    pub fn compute(&self, lines: &Lines) -> Option<i64> {
        let mut any = false;
        let mut sum = 0i64;
        for (sign, code) in &self.terms {
            if let Some(v) = lines.get(code) {
                any = true;
                sum += i64::from(*sign) * v;
            }
        }
        if let Some(x) = self.optional_line() {
            if let Some(v) = lines.get(&x) {
                any = true;
                sum += v;
            }
        }
        any.then_some(sum)
    }
}

const TOTAL_LINES: [&str; 20] = [
    "1100", "1200", "1300", "1400", "1500", "1600", "1700", "2100", "2200", "2300", "2400", "4100",
    "4110", "4120", "4200", "4210", "4220", "4300", "4310", "4320",
];

type Row = (
    &'static str,
    Form,
    &'static str,
    &'static [(i8, &'static str)],
    bool,
);

const P: i8 = 1;
const M: i8 = -1;

#[rustfmt::skip]
const EQUATIONS: [Row; 26] = [
    ("F-1100", Form::Full, "1100", &[(P, "1110"), (P, "1120"), (P, "1130"), (P, "1140"), (P, "1150"), (P, "1160"), (P, "1170"), (P, "1180"), (P, "1190")], false),
    ("F-1200", Form::Full, "1200", &[(P, "1210"), (P, "1220"), (P, "1230"), (P, "1240"), (P, "1250"), (P, "1260")], false),
    ("F-1300", Form::Full, "1300", &[(P, "1310"), (P, "1320"), (P, "1330"), (P, "1340"), (P, "1350"), (P, "1360"), (P, "1370")], false),
    ("F-1400", Form::Full, "1400", &[(P, "1410"), (P, "1420"), (P, "1430"), (P, "1450")], false),
    ("F-1500", Form::Full, "1500", &[(P, "1510"), (P, "1520"), (P, "1530"), (P, "1540"), (P, "1550")], false),
    ("F-1600", Form::Full, "1600", &[(P, "1200"), (P, "1100")], false),
    ("F-1600-1700", Form::Full, "1600", &[(P, "1700")], false),
    ("F-1700", Form::Full, "1700", &[(P, "1300"), (P, "1400"), (P, "1500")], false),
    ("F-2100", Form::Full, "2100", &[(P, "2110"), (M, "2120")], false),
    ("F-2200", Form::Full, "2200", &[(P, "2100"), (M, "2210"), (M, "2220")], false),
    // The minus on 2310 is taken from the official equation table as published.
    ("F-2300", Form::Full, "2300", &[(P, "2200"), (M, "2310"), (P, "2320"), (M, "2330"), (P, "2340"), (M, "2350")], false),
    ("F-4100", Form::Full, "4100", &[(P, "4110"), (M, "4120")], false),
    ("F-4110", Form::Full, "4110", &[(P, "4111"), (P, "4112"), (P, "4113"), (P, "4114"), (P, "4116"), (P, "4119")], true),
    ("F-4120", Form::Full, "4120", &[(P, "4121"), (P, "4122"), (P, "4123"), (P, "4124"), (P, "4126"), (P, "4129")], true),
    ("F-4200", Form::Full, "4200", &[(P, "4210"), (M, "4220")], false),
    ("F-4210", Form::Full, "4210", &[(P, "4211"), (P, "4212"), (P, "4213"), (P, "4214"), (P, "4216"), (P, "4219")], true),
    ("F-4220", Form::Full, "4220", &[(P, "4221"), (P, "4222"), (P, "4223"), (P, "4224"), (P, "4226"), (P, "4229")], true),
    ("F-4300", Form::Full, "4300", &[(P, "4310"), (M, "4320")], false),
    ("F-4310", Form::Full, "4310", &[(P, "4311"), (P, "4312"), (P, "4313"), (P, "4314"), (P, "4316"), (P, "4319")], true),
    ("F-4320", Form::Full, "4320", &[(P, "4321"), (P, "4322"), (P, "4323"), (P, "4324"), (P, "4326"), (P, "4329")], true),
    ("F-4400", Form::Full, "4400", &[(P, "4100"), (P, "4200"), (P, "4300")], false),
    ("F-4500", Form::Full, "4500", &[(P, "4400"), (P, "4450"), (P, "4490")], false),
    ("S-1600", Form::Simplified, "1600", &[(P, "1150"), (P, "1170"), (P, "1210"), (P, "1250"), (P, "1230")], false),
    ("S-1600-1700", Form::Simplified, "1600", &[(P, "1700")], false),
    ("S-1700", Form::Simplified, "1700", &[(P, "1300"), (P, "1410"), (P, "1450"), (P, "1510"), (P, "1520"), (P, "1550")], false),
    ("S-2400", Form::Simplified, "2400", &[(P, "2110"), (M, "2120"), (M, "2330"), (P, "2340"), (M, "2350"), (M, "2410")], false),
];

/// The fixed suite: 22 full-form and 4 simplified-form equations, in table order.
pub fn equation_registry() -> &'static [Equation] {
    static REGISTRY: OnceLock<Vec<Equation>> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        EQUATIONS
            .iter()
            .map(|(id, form, total, terms, optional)| Equation {
                id,
                form_scope: *form,
                total: LineCode::of(total),
                terms: terms.iter().map(|(s, c)| (*s, LineCode::of(c))).collect(),
                includes_optional: *optional,
            })
            .collect()
    })
}

pub fn equations_for(form: Form) -> impl Iterator<Item = &'static Equation> {
    equation_registry()
        .iter()
        .filter(move |e| e.form_scope == form)
}

/// Equations of one form ordered so that every equation comes after those
/// producing its terms: section totals first, composites (1600, 1700, 4400, ...) last.
pub fn evaluation_order(form: Form) -> &'static [&'static Equation] {
    static FULL: OnceLock<Vec<&'static Equation>> = OnceLock::new();
    static SIMPLIFIED: OnceLock<Vec<&'static Equation>> = OnceLock::new();
    let cell = match form {
        Form::Full => &FULL,
        Form::Simplified => &SIMPLIFIED,
    };
    cell.get_or_init(|| {
        let eqs: Vec<&Equation> = equations_for(form).collect();
        let depth = |root: &Equation| -> usize {
            fn go(eq: &Equation, eqs: &[&Equation], seen: usize) -> usize {
                if seen > eqs.len() {
                    return 0;
                }
                eq.terms
                    .iter()
                    .flat_map(|(_, t)| {
                        eqs.iter()
                            .filter(move |e| e.total == *t && !e.is_identity())
                    })
                    .map(|e| 1 + go(e, eqs, seen + 1))
                    .max()
                    .unwrap_or(0)
            }
            go(root, &eqs, 0) + usize::from(root.is_identity()) * eqs.len()
        };
        let mut ordered: Vec<(usize, usize, &Equation)> = eqs
            .iter()
            .enumerate()
            .map(|(i, e)| (depth(e), i, *e))
            .collect();
        ordered.sort_by_key(|(d, i, _)| (*d, *i));
        ordered.into_iter().map(|(_, _, e)| e).collect()
    })
}

pub fn compute_total(statement: &HarmonizedStatement, equation: &Equation) -> Option<i64> {
    equation.compute(&statement.lines)
}

/// Repair totals in place. Returns whether any stated total was replaced.
pub fn adjust_lines(lines: &mut Lines, form: Form) -> bool {
    if form == Form::Simplified {
        // Totals that exist only on the full form are added for compatibility.
        // This runs first because some of them are terms of simplified equations.
        for eq in evaluation_order(Form::Full) {
            if eq.is_identity() || lines.contains_key(&eq.total) {
                continue;
            }
            if let Some(computed) = eq.compute(lines) {
                lines.insert(eq.total, computed);
            }
        }
    }
    let mut adjusted = false;
    for eq in evaluation_order(form) {
        if eq.is_identity() {
            continue;
        }
        let Some(computed) = eq.compute(lines) else {
            continue;
        };
        match lines.get(&eq.total) {
            Some(stated) if (stated - computed).abs() <= ARTICULATION_THRESHOLD => {}
            _ => {
                lines.insert(eq.total, computed);
                adjusted = true;
            }
        }
    }
    adjusted
}

/// Apply totals repair; sets `totals_adjustment` when a stated total was absent or replaced.
pub fn adjust_totals(mut statement: HarmonizedStatement) -> HarmonizedStatement {
    if adjust_lines(&mut statement.lines, statement.form) {
        statement.totals_adjustment = true;
    }
    statement
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Discrepancy {
    pub equation: &'static str,
    pub stated: i64,
    pub computed: i64,
}

impl Discrepancy {
    pub fn difference(&self) -> i64 {
        (self.stated - self.computed).abs()
    }

    pub fn passes(&self) -> bool {
        self.difference() <= ARTICULATION_THRESHOLD
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticulationCheck {
    pub articulated: bool,
    /// One entry per applicable equation (stated and computed both present).
    pub discrepancies: Vec<Discrepancy>,
}

impl ArticulationCheck {
    pub fn failing(&self) -> impl Iterator<Item = &Discrepancy> {
        self.discrepancies.iter().filter(|d| !d.passes())
    }
}

pub fn check_lines(lines: &Lines, form: Form) -> ArticulationCheck {
    let discrepancies: Vec<Discrepancy> = equations_for(form)
        .filter_map(|eq| {
            let computed = eq.compute(lines)?;
            let stated = *lines.get(&eq.total)?;
            Some(Discrepancy {
                equation: eq.id,
                stated,
                computed,
            })
        })
        .collect();
    ArticulationCheck {
        articulated: discrepancies.iter().all(Discrepancy::passes),
        discrepancies,
    }
}

pub fn check_articulation(statement: &HarmonizedStatement) -> ArticulationCheck {
    check_lines(&statement.lines, statement.form)
}

/// Verdicts before and after repair for one statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticulationOutcome {
    pub before: ArticulationCheck,
    pub after: ArticulationCheck,
}

/// Record the pre-repair verdict in `articulated`, then repair totals.
pub fn articulate(statement: HarmonizedStatement) -> (HarmonizedStatement, ArticulationOutcome) {
    let before = check_articulation(&statement);
    let mut repaired = adjust_totals(statement);
    repaired.articulated = before.articulated;
    let after = check_articulation(&repaired);
    (repaired, ArticulationOutcome { before, after })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stmt(form: Form, values: &[(&str, i64)]) -> HarmonizedStatement {
        HarmonizedStatement {
            inn: "7736050003".into(),
            year: 2020,
            form,
            lines: values.iter().map(|(c, v)| (LineCode::of(c), *v)).collect(),
            imputed: false,
            imputation_source_year: None,
            simplified: form == Form::Simplified,
            totals_adjustment: false,
            articulated: false,
        }
    }

    fn eq(id: &str) -> &'static Equation {
        equation_registry().iter().find(|e| e.id == id).unwrap()
    }

    #[test]
    fn registry_counts() {
        assert_eq!(equations_for(Form::Full).count(), 22);
        assert_eq!(equations_for(Form::Simplified).count(), 4);
        let e = equation_registry()
            .iter()
            .find(|e| e.total == LineCode::of("4400"))
            .unwrap();
        let terms: Vec<_> = e.terms.iter().map(|(s, c)| (*s, c.as_str())).collect();
        assert_eq!(terms, vec![(1, "4100"), (1, "4200"), (1, "4300")]);
    }

    #[test]
    fn compute_total_examples() {
        let s = stmt(Form::Full, &[("1110", 100), ("1150", 200)]);
        assert_eq!(compute_total(&s, eq("F-1100")), Some(300));
        assert_eq!(compute_total(&stmt(Form::Full, &[]), eq("F-1100")), None);
        let s = stmt(Form::Full, &[("4111", 50), ("4119", 20), ("411x", 30)]);
        assert_eq!(compute_total(&s, eq("F-4110")), Some(100));
    }

    #[test]
    fn adjustment_threshold_is_strict() {
        let s = adjust_totals(stmt(
            Form::Full,
            &[("1110", 100), ("1150", 200), ("1100", 305)],
        ));
        assert_eq!(s.get(LineCode::of("1100")), Some(300));
        assert!(s.totals_adjustment);

        let s = adjust_totals(stmt(
            Form::Full,
            &[("1110", 100), ("1150", 200), ("1100", 304)],
        ));
        assert_eq!(s.get(LineCode::of("1100")), Some(304));

        let s = adjust_totals(stmt(Form::Full, &[("1110", 100), ("1150", 200)]));
        assert_eq!(s.get(LineCode::of("1100")), Some(300));
        assert!(s.totals_adjustment);
    }

    #[test]
    fn repaired_section_totals_feed_grand_totals() {
        let s = adjust_totals(stmt(
            Form::Full,
            &[
                ("1110", 100),
                ("1100", 999),
                ("1210", 50),
                ("1200", 50),
                ("1600", 1049),
            ],
        ));
        assert_eq!(s.get(LineCode::of("1100")), Some(100));
        assert_eq!(s.get(LineCode::of("1600")), Some(150));
    }

    #[test]
    fn articulation_passes_at_four_fails_at_five() {
        let ok = stmt(Form::Full, &[("1110", 100), ("1100", 104)]);
        assert!(check_articulation(&ok).articulated);
        let bad = stmt(Form::Full, &[("1110", 100), ("1100", 105)]);
        let check = check_articulation(&bad);
        assert!(!check.articulated);
        assert_eq!(
            check.failing().map(|d| d.equation).collect::<Vec<_>>(),
            vec!["F-1100"]
        );
    }

    #[test]
    fn simplified_uses_only_simplified_equations() {
        // 1100 would fail the full-form equation but simplified statements never check it.
        let s = stmt(
            Form::Simplified,
            &[("1150", 10), ("1100", 999), ("1600", 10)],
        );
        let check = check_articulation(&s);
        assert!(check.articulated);
        assert!(check
            .discrepancies
            .iter()
            .all(|d| d.equation.starts_with("S-")));
    }

    #[test]
    fn simplified_gets_full_form_totals() {
        let s = adjust_totals(stmt(
            Form::Simplified,
            &[
                ("1150", 10),
                ("1210", 5),
                ("1600", 15),
                ("2110", 100),
                ("2120", 60),
                ("2400", 40),
            ],
        ));
        assert_eq!(s.get(LineCode::of("1100")), Some(10));
        assert_eq!(s.get(LineCode::of("1200")), Some(5));
        assert_eq!(s.get(LineCode::of("2100")), Some(40));
        assert!(!s.totals_adjustment);
    }

    #[test]
    fn identity_equation_never_overwrites() {
        let s = adjust_totals(stmt(Form::Full, &[("1600", 100), ("1700", 200)]));
        assert_eq!(s.get(LineCode::of("1600")), Some(100));
        assert!(!check_articulation(&s).articulated);
    }

    #[test]
    fn evaluation_order_puts_composites_last() {
        let order: Vec<&str> = evaluation_order(Form::Full).iter().map(|e| e.id).collect();
        let pos = |id: &str| order.iter().position(|x| *x == id).unwrap();
        assert!(pos("F-1100") < pos("F-1600"));
        assert!(pos("F-1700") < pos("F-1600-1700"));
        assert!(pos("F-4110") < pos("F-4100"));
        assert!(pos("F-4100") < pos("F-4400"));
        assert!(pos("F-4400") < pos("F-4500"));
        assert!(pos("F-2100") < pos("F-2200") && pos("F-2200") < pos("F-2300"));
        assert_eq!(order.len(), 22);
    }

    #[test]
    fn articulate_flags_pre_repair_quality() {
        let (s, outcome) = articulate(stmt(Form::Full, &[("1110", 100), ("1100", 200)]));
        assert!(!s.articulated);
        assert!(s.totals_adjustment);
        assert!(!outcome.before.articulated);
        assert!(outcome.after.articulated);
    }
}

//! Property tests for the order- and repetition-insensitive parts of the pipeline.

use chrono::NaiveDate;
use firmpanel::articulate::{adjust_lines, check_lines};
use firmpanel::impute::impute_pass;
use firmpanel::ingest::dedupe_filings;
use firmpanel::ingest::fns::{parse_fns_xml, write_fns_xml};
use firmpanel::model::{
    line_registry, Decoding, Form, HarmonizedStatement, LineCode, Lines, Period, Provider,
    RawFiling, Unit,
};
use firmpanel::Workers;
use proptest::prelude::*;
use proptest::sample::{select, subsequence};

fn codes() -> Vec<LineCode> {
    line_registry().keys().copied().collect()
}

fn lines_strategy(max: usize) -> impl Strategy<Value = Lines> {
    subsequence(codes(), 0..max)
        .prop_flat_map(|cs| {
            let n = cs.len();
            (Just(cs), prop::collection::vec(-1_000_000i64..1_000_000, n))
        })
        .prop_map(|(cs, vs)| cs.into_iter().zip(vs).collect())
}

fn date_strategy() -> impl Strategy<Value = NaiveDate> {
    (2019i32..2025, 1u32..13, 1u32..29)
        .prop_map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap())
}

fn filing_strategy() -> impl Strategy<Value = RawFiling> {
    let decoding = (
        select(vec!["1150", "1230", "2120"]),
        "[A-Za-z &<>\"']{1,12}",
        select(vec![Period::Current, Period::Prior1]),
        -5000i64..5000,
    )
        .prop_map(|(p, label, period, value)| Decoding {
            parent: LineCode::of(p),
            label,
            period,
            value,
        });
    (
        "[0-9]{10}",
        2019i32..2024,
        select(vec![Form::Full, Form::Simplified]),
        select(vec![Unit::Rubles, Unit::Thousands, Unit::Millions]),
        date_strategy(),
        lines_strategy(20),
        lines_strategy(10),
        lines_strategy(5),
        prop::collection::vec(decoding, 0..3),
    )
        .prop_map(
            |(inn, year, form, unit, date, current, prior1, prior2, decodings)| RawFiling {
                inn,
                year,
                provider: Provider::Fns,
                form,
                unit,
                submission_date: date,
                current,
                prior1,
                prior2: prior2.into_iter().filter(|(c, _)| c.is_balance()).collect(),
                decodings,
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fns_xml_round_trips(filing in filing_strategy()) {
        let (parsed, diags) = parse_fns_xml(&write_fns_xml(&filing)).unwrap();
        prop_assert!(diags.is_empty());
        prop_assert_eq!(parsed, filing);
    }

    #[test]
    fn dedupe_ignores_input_order(
        base in filing_strategy(),
        variants in prop::collection::vec((date_strategy(), -50i64..50), 1..6),
        seed in any::<u64>(),
    ) {
        let group: Vec<RawFiling> = variants
            .iter()
            .map(|(date, bump)| {
                let mut f = base.clone();
                f.submission_date = *date;
                *f.current.entry(LineCode::of("2110")).or_insert(0) += bump;
                f
            })
            .collect();
        let mut shuffled = group.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        let latest = group.iter().map(|f| f.submission_date).max().unwrap();
        let a = dedupe_filings(group).unwrap();
        let b = dedupe_filings(shuffled).unwrap();
        prop_assert_eq!(a.submission_date, latest);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn totals_repair_is_idempotent(lines in lines_strategy(60), simplified in any::<bool>()) {
        let form = if simplified { Form::Simplified } else { Form::Full };
        let mut once = lines.clone();
        adjust_lines(&mut once, form);
        let mut twice = once.clone();
        let changed = adjust_lines(&mut twice, form);
        prop_assert!(!changed);
        prop_assert_eq!(&once, &twice);
        // a repaired statement fails only identity equations, which are never rewritten
        let verdict = check_lines(&once, form);
        for d in verdict.failing() {
            prop_assert!(d.equation.ends_with("-1700"), "{} still fails after repair", d.equation);
        }
    }

    #[test]
    fn imputation_is_idempotent(
        filings in prop::collection::vec((0usize..4, 2019i32..2024, lines_strategy(8), lines_strategy(8)), 0..12),
    ) {
        let mut raw: Vec<RawFiling> = Vec::new();
        for (firm, year, prior1, prior2) in filings {
            let inn = format!("770000000{firm}");
            if raw.iter().any(|f| f.inn == inn && f.year == year) {
                continue;
            }
            let mut f = RawFiling::new(inn, year, Provider::Fns, NaiveDate::from_ymd_opt(year + 1, 3, 1).unwrap());
            f.current.insert(LineCode::of("1600"), 1);
            f.prior1 = prior1;
            f.prior2 = prior2;
            raw.push(f);
        }
        let universe: Vec<(String, i32)> =
            (0..4).flat_map(|i| (2017..2024).map(move |y| (format!("770000000{i}"), y))).collect();
        let statements: Vec<HarmonizedStatement> = raw.iter().map(HarmonizedStatement::from_filing).collect();
        let workers = Workers::sequential();
        let (once, report) = impute_pass(statements, &raw, &universe, &workers);
        let (twice, again) = impute_pass(once.clone(), &raw, &universe, &workers);
        prop_assert_eq!(&once, &twice);
        prop_assert_eq!(again.total_imputed(), 0);
        prop_assert_eq!(once.iter().filter(|s| s.imputed).count(), report.total_imputed());
        for s in once.iter().filter(|s| s.imputed) {
            prop_assert!(!raw.iter().any(|f| f.inn == s.inn && f.year == s.year));
            prop_assert!(!s.lines.is_empty());
        }
    }
}

//! Stage orchestration. Each stage reads the intermediate files of earlier
//! stages from `<output_dir>/work`, writes its own, and returns a short
//! summary; `run_all` chains them in order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::anomaly::{self, ReviewConfig};
use crate::articulate;
use crate::config::PipelineConfig;
use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::eligibility::{self, ExemptionRules};
use crate::error::{Error, Result};
use crate::geocode::{
    self, GazetteerClient, GeoCache, GeocodeClient, Geocoder, GeocoderSource, NominatimClient,
    StructuredAddress,
};
use crate::impute;
use crate::ingest;
use crate::model::{ExemptCriterion, GeoLocation, HarmonizedStatement};
use crate::panel::{self, export, reports, Key};
use crate::par::Workers;
use crate::registry::{self, Correspondence};
use crate::store;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    BuildUniverse,
    Classify,
    Ingest,
    Impute,
    Articulate,
    FlagAnomalies,
    Geocode,
    Assemble,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::BuildUniverse,
        Stage::Classify,
        Stage::Ingest,
        Stage::Impute,
        Stage::Articulate,
        Stage::FlagAnomalies,
        Stage::Geocode,
        Stage::Assemble,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::BuildUniverse => "build-universe",
            Stage::Classify => "classify",
            Stage::Ingest => "ingest",
            Stage::Impute => "impute",
            Stage::Articulate => "articulate",
            Stage::FlagAnomalies => "flag-anomalies",
            Stage::Geocode => "geocode",
            Stage::Assemble => "assemble",
            Stage::Report => "report",
        }
    }

    /// Intermediate files read, relative to the output directory.
    pub fn inputs(&self) -> &'static [&'static str] {
        match self {
            Stage::BuildUniverse | Stage::Ingest => &[],
            Stage::Classify => &["work/universe.csv"],
            Stage::Impute => &[
                "work/universe.csv",
                "work/eligibility.csv",
                "work/filings.csv",
            ],
            Stage::Articulate => &["work/statements.csv"],
            Stage::FlagAnomalies | Stage::Geocode => &[
                "work/universe.csv",
                "work/eligibility.csv",
                "work/articulated.csv",
            ],
            Stage::Assemble | Stage::Report => &[
                "work/universe.csv",
                "work/eligibility.csv",
                "work/articulated.csv",
                "work/anomalous.csv",
                "work/geo.csv",
            ],
        }
    }

    pub fn outputs(&self) -> &'static [&'static str] {
        match self {
            Stage::BuildUniverse => &["work/universe.csv"],
            Stage::Classify => &["work/eligibility.csv", "reports/eligibility.csv"],
            Stage::Ingest => &["work/filings.csv", "work/filing_lines.csv"],
            Stage::Impute => &[
                "work/statements.csv",
                "work/statement_lines.csv",
                "reports/imputation.csv",
            ],
            Stage::Articulate => &[
                "work/articulated.csv",
                "work/articulated_lines.csv",
                "work/articulation_detail.csv",
            ],
            Stage::FlagAnomalies => &["work/anomalous.csv", "reports/review_queue.csv"],
            Stage::Geocode => &["work/geo.csv"],
            Stage::Assemble => &["panel/panel_<year>.<format>", "reports/membership.csv"],
            Stage::Report => &[
                "reports/filing_rate.csv",
                "reports/articulation.csv",
                "reports/aggregate_ratio.csv",
                "reports/geocoding_quality.csv",
                "reports/grid_<year>.csv",
                "reports/diagnostics.csv",
            ],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown stage {s:?}")))
    }
}

/// Text listing of the stages with their inputs and outputs.
pub fn plan(stages: &[Stage], config: &PipelineConfig) -> String {
    let mut out = format!("output directory: {}\n", config.output_dir.display());
    for (i, s) in stages.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, s));
        for p in s.inputs() {
            out.push_str(&format!("     reads  {p}\n"));
        }
        for p in s.outputs() {
            out.push_str(&format!("     writes {p}\n"));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct StageSummary {
    pub stage: Stage,
    pub facts: Vec<(String, String)>,
    pub diagnostics: usize,
}

impl fmt::Display for StageSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.stage)?;
        for (k, v) in &self.facts {
            write!(f, " {k}={v}")?;
        }
        write!(f, " diagnostics={}", self.diagnostics)
    }
}

#[derive(Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    workers: Workers,
}

fn fact(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn require_file(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingInput(path.display().to_string()))
    }
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let workers = Workers::new(config.workers)?;
        Ok(Pipeline { config, workers })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn work(&self, name: &str) -> PathBuf {
        self.config.output_dir.join("work").join(name)
    }

    fn report_path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join("reports").join(name)
    }

    pub fn panel_dir(&self) -> PathBuf {
        self.config.output_dir.join("panel")
    }

    fn finish(
        &self,
        stage: Stage,
        facts: Vec<(String, String)>,
        diags: Diagnostics,
    ) -> Result<StageSummary> {
        let path = self.work(&format!("diagnostics_{}.csv", stage.name()));
        std::fs::create_dir_all(path.parent().expect("work dir"))
            .map_err(|e| Error::io(&path, e))?;
        diags.write_csv(&path)?;
        Ok(StageSummary {
            stage,
            facts,
            diagnostics: diags.len(),
        })
    }

    pub fn run(&self, stage: Stage) -> Result<StageSummary> {
        let res = self.workers.install(|| match stage {
            Stage::BuildUniverse => self.build_universe(),
            Stage::Classify => self.classify(),
            Stage::Ingest => self.ingest(),
            Stage::Impute => self.impute(),
            Stage::Articulate => self.articulate(),
            Stage::FlagAnomalies => self.flag_anomalies(),
            Stage::Geocode => self.geocode(),
            Stage::Assemble => self.assemble(),
            Stage::Report => self.report(),
        });
        res.map_err(|e| match e {
            Error::Io { .. }
            | Error::Csv(_)
            | Error::Parquet(_)
            | Error::Xml(_)
            | Error::Parse(_) => Error::StageFailed {
                stage: stage.name().into(),
                message: e.to_string(),
            },
            other => other,
        })
    }

    pub fn run_all(&self) -> Result<Vec<StageSummary>> {
        Stage::ALL.iter().map(|s| self.run(*s)).collect()
    }

    fn build_universe(&self) -> Result<StageSummary> {
        let cfg = &self.config;
        let dir = require_file(cfg.require(&cfg.registry_dir, "registry_dir")?)?;
        let (snapshots, mut diags) = registry::load_snapshots(dir, &self.workers)?;
        let rows = registry::build_universe(&snapshots, cfg.span, &self.workers)?;
        let mut corr = Correspondence::default();
        if let Some(p) = &cfg.okved_correspondence {
            corr.okved = registry::load_correspondence_table(p)?;
        }
        if let Some(p) = &cfg.okopf_correspondence {
            corr.okopf = registry::load_correspondence_table(p)?;
        }
        let harmonized = self
            .workers
            .map_owned(rows, |r| registry::harmonize_codes(r, &corr));
        let records: Vec<_> = harmonized.into_iter().map(|r| r.record).collect();
        let records = registry::impute_missing_codes(records);
        for r in records.iter().filter(|r| r.unmapped_code) {
            diags.push(Diagnostic::warn(
                DiagCode::UnmappedCode,
                r.inn.clone(),
                Some(r.year),
                "legacy code has no correspondence entry",
            ));
        }
        store::write_universe(&self.work("universe.csv"), &records)?;
        let firms: HashSet<&str> = records.iter().map(|r| r.inn.as_str()).collect();
        let facts = vec![
            fact("snapshots", snapshots.len()),
            fact("firms", firms.len()),
            fact("firm_years", records.len()),
        ];
        self.finish(Stage::BuildUniverse, facts, diags)
    }

    fn classify(&self) -> Result<StageSummary> {
        let cfg = &self.config;
        let sets = cfg.require(&cfg.exemption_sets, "exemption_sets")?;
        let register = cfg.require(&cfg.financial_register, "financial_register")?;
        let rules = ExemptionRules::load(sets, register)?;
        let universe = store::read_universe(&self.work("universe.csv"))?;
        let table = eligibility::eligibility_table(&universe, &rules, &self.workers);
        store::write_eligibility(&self.work("eligibility.csv"), &table.rows)?;

        #[derive(serde::Serialize)]
        struct Row {
            year: i32,
            eligible: usize,
            ineligible: usize,
            government: usize,
            religious: usize,
            financial: usize,
            newly_incorporated_q4: usize,
        }
        let mut by_year: BTreeMap<i32, Row> = BTreeMap::new();
        for r in &table.rows {
            let e = by_year.entry(r.year).or_insert(Row {
                year: r.year,
                eligible: 0,
                ineligible: 0,
                government: 0,
                religious: 0,
                financial: 0,
                newly_incorporated_q4: 0,
            });
            match r.decision.exempt_criteria() {
                None => e.eligible += 1,
                Some(c) => {
                    e.ineligible += 1;
                    match c {
                        ExemptCriterion::Government => e.government += 1,
                        ExemptCriterion::Religious => e.religious += 1,
                        ExemptCriterion::Financial => e.financial += 1,
                        ExemptCriterion::NewlyIncorporatedQ4 => e.newly_incorporated_q4 += 1,
                    }
                }
            }
        }
        let rows: Vec<Row> = by_year.into_values().collect();
        store::write_rows(&self.report_path("eligibility.csv"), &rows)?;
        let (eligible, ineligible) = table.partition_counts();
        self.finish(
            Stage::Classify,
            vec![fact("eligible", eligible), fact("ineligible", ineligible)],
            table.diagnostics,
        )
    }

    fn ingest(&self) -> Result<StageSummary> {
        let cfg = &self.config;
        if cfg.rosstat_dir.is_none() && cfg.fns_dir.is_none() {
            return Err(Error::ConfigInvalid(
                "neither rosstat_dir nor fns_dir is set".into(),
            ));
        }
        fn existing(p: &Option<PathBuf>) -> Option<&Path> {
            p.as_deref().filter(|p| p.exists())
        }
        let out = ingest::ingest_dirs(
            existing(&cfg.rosstat_dir),
            existing(&cfg.fns_dir),
            cfg.span,
            &self.workers,
        )?;
        store::write_filings(
            &self.work("filings.csv"),
            &self.work("filing_lines.csv"),
            &out.filings,
        )?;
        let facts = vec![
            fact("files", out.files_read),
            fact("documents", out.documents_parsed),
            fact("duplicates_dropped", out.duplicates_dropped),
            fact("filings", out.filings.len()),
        ];
        self.finish(Stage::Ingest, facts, out.diagnostics)
    }

    fn impute(&self) -> Result<StageSummary> {
        let filings =
            store::read_filings(&self.work("filings.csv"), &self.work("filing_lines.csv"))?;
        let eligibility = store::read_eligibility(&self.work("eligibility.csv"))?;
        let statements: Vec<HarmonizedStatement> =
            self.workers.map(&filings, HarmonizedStatement::from_filing);
        let eligible: Vec<(String, i32)> = eligibility
            .iter()
            .filter(|e| e.decision.eligible())
            .map(|e| (e.inn.clone(), e.year))
            .collect();
        let filed = statements.len();
        let (statements, report) =
            impute::impute_pass(statements, &filings, &eligible, &self.workers);
        store::write_statements(
            &self.work("statements.csv"),
            &self.work("statement_lines.csv"),
            &statements,
        )?;
        store::write_rows(&self.report_path("imputation.csv"), &report.years)?;
        let facts = vec![
            fact("filed", filed),
            fact("imputed", report.total_imputed()),
        ];
        self.finish(Stage::Impute, facts, Diagnostics::new())
    }

    fn articulate(&self) -> Result<StageSummary> {
        let statements = store::read_statements(
            &self.work("statements.csv"),
            &self.work("statement_lines.csv"),
        )?;
        let results = self.workers.map_owned(statements, articulate::articulate);

        #[derive(serde::Serialize)]
        struct Detail<'a> {
            inn: &'a str,
            year: i32,
            articulated_before: bool,
            articulated_after: bool,
            totals_adjustment: bool,
            failing_equations: String,
        }
        let details: Vec<Detail<'_>> = results
            .iter()
            .map(|(s, o)| Detail {
                inn: &s.inn,
                year: s.year,
                articulated_before: o.before.articulated,
                articulated_after: o.after.articulated,
                totals_adjustment: s.totals_adjustment,
                failing_equations: o
                    .before
                    .failing()
                    .map(|d| d.equation)
                    .collect::<Vec<_>>()
                    .join(" "),
            })
            .collect();
        store::write_rows(&self.work("articulation_detail.csv"), &details)?;
        let articulated = results.iter().filter(|(s, _)| s.articulated).count();
        let adjusted = results.iter().filter(|(s, _)| s.totals_adjustment).count();
        let total = results.len();
        drop(details);
        let statements: Vec<HarmonizedStatement> = results.into_iter().map(|(s, _)| s).collect();
        store::write_statements(
            &self.work("articulated.csv"),
            &self.work("articulated_lines.csv"),
            &statements,
        )?;
        let facts = vec![
            fact("statements", total),
            fact("articulated", articulated),
            fact("totals_adjusted", adjusted),
        ];
        self.finish(Stage::Articulate, facts, Diagnostics::new())
    }

    fn load_panel(&self, with_geo: bool, with_flags: bool) -> Result<panel::Assembled> {
        let universe = store::read_universe(&self.work("universe.csv"))?;
        let eligibility = store::read_eligibility(&self.work("eligibility.csv"))?;
        let statements = store::read_statements(
            &self.work("articulated.csv"),
            &self.work("articulated_lines.csv"),
        )?;
        let geo = if with_geo {
            store::read_geo(&self.work("geo.csv"))?
        } else {
            HashMap::new()
        };
        let flags = if with_flags {
            store::read_flags(&self.work("anomalous.csv"))?
        } else {
            BTreeMap::new()
        };
        panel::assemble(&universe, &eligibility, statements, &geo, &flags)
    }

    fn flag_anomalies(&self) -> Result<StageSummary> {
        let cfg = &self.config;
        let mut assembled = self.load_panel(false, false)?;
        let review = ReviewConfig {
            n_top: cfg.n_top,
            ..ReviewConfig::default()
        };
        let queue = anomaly::review_queue(&assembled.rows, &review);
        anomaly::write_review_queue(&self.report_path("review_queue.csv"), &queue)?;
        let list = match &cfg.exclusion_list {
            Some(p) => anomaly::load_exclusions(p)?,
            None => Vec::new(),
        };
        let diags = anomaly::apply_exclusions(&mut assembled.rows, &list);
        let reasons: HashMap<(&str, i32), &str> = list
            .iter()
            .map(|e| ((e.inn.as_str(), e.year), e.reason.as_str()))
            .collect();
        let flags: BTreeMap<Key, String> = assembled
            .rows
            .iter()
            .filter(|r| r.anomalous)
            .map(|r| {
                (
                    (r.firm.inn.clone(), r.year()),
                    reasons.get(&r.key()).copied().unwrap_or("").to_string(),
                )
            })
            .collect();
        store::write_flags(&self.work("anomalous.csv"), &flags)?;
        let facts = vec![
            fact("candidates", queue.len()),
            fact("flagged", flags.len()),
        ];
        self.finish(Stage::FlagAnomalies, facts, diags)
    }

    fn geocode(&self) -> Result<StageSummary> {
        let cfg = &self.config;
        let assembled = self.load_panel(false, false)?;
        let mut diags = Diagnostics::new();
        let mut geo: BTreeMap<Key, GeoLocation> = BTreeMap::new();
        let mut facts = Vec::new();
        let Some(url) = cfg.geocoder_url.as_deref() else {
            store::write_geo(&self.work("geo.csv"), &geo)?;
            return self.finish(Stage::Geocode, vec![fact("geocoder", "none")], diags);
        };
        let client: Box<dyn GeocodeClient> = match GeocoderSource::parse(url)? {
            GeocoderSource::Http(u) => Box::new(NominatimClient::new(&u)),
            GeocoderSource::Gazetteer(p) => Box::new(GazetteerClient::load(&p)?),
        };
        let cache = match &cfg.geocode_cache {
            Some(p) => GeoCache::load(p)?,
            None => GeoCache::new(),
        };
        let cached = cache.len();
        let geocoder = Geocoder::new(client).with_cache(cache);
        let mut addressed: Vec<(Key, String)> = Vec::new();
        let mut queries: Vec<(String, StructuredAddress)> = Vec::new();
        for r in &assembled.rows {
            match StructuredAddress::from_address(&r.firm.address) {
                Some(a) => {
                    addressed.push(((r.firm.inn.clone(), r.year()), a.normalized()));
                    queries.push((r.firm.inn.clone(), a));
                }
                None => diags.push(Diagnostic::new(
                    crate::diagnostics::Severity::Info,
                    DiagCode::MissingCodes,
                    r.firm.inn.clone(),
                    Some(r.year()),
                    "address lacks region or city; not geocoded",
                )),
            }
        }
        let in_flight = Workers::new(cfg.max_in_flight)?;
        let (resolved, geo_diags) = geocoder.geocode_all(&queries, &in_flight);
        diags.extend(geo_diags);
        for (key, addr) in addressed {
            if let Some(Some(loc)) = resolved.get(&addr) {
                geo.insert(key, *loc);
            }
        }
        if let Some(p) = &cfg.geocode_cache {
            geocoder.cache().save(p)?;
        }
        store::write_geo(&self.work("geo.csv"), &geo)?;
        facts.push(fact("addresses", resolved.len()));
        facts.push(fact("cached_before", cached));
        facts.push(fact("located_firm_years", geo.len()));
        self.finish(Stage::Geocode, facts, diags)
    }

    fn assemble(&self) -> Result<StageSummary> {
        let cfg = &self.config;
        let assembled = self.load_panel(true, true)?;
        let written = export::export(&assembled.rows, &self.panel_dir(), cfg.span, cfg.format)?;
        store::write_rows(
            &self.report_path("membership.csv"),
            &reports::membership_report(&assembled.rows),
        )?;
        let facts = vec![
            fact("rows", assembled.rows.len()),
            fact("partitions", written.len()),
            fact(
                "dropped_non_eligible_non_filers",
                assembled.dropped_non_eligible_non_filers,
            ),
            fact(
                "dropped_unmatched_statements",
                assembled.dropped_unmatched_statements,
            ),
        ];
        self.finish(Stage::Assemble, facts, assembled.diagnostics)
    }

    fn report(&self) -> Result<StageSummary> {
        let cfg = &self.config;
        let assembled = self.load_panel(true, true)?;
        let rows = &assembled.rows;
        store::write_rows(
            &self.report_path("filing_rate.csv"),
            &reports::filing_rate_report(rows),
        )?;

        let mut after: HashMap<Key, bool> = HashMap::new();
        let mut r = csv::Reader::from_path(self.work("articulation_detail.csv"))?;
        for rec in r.records() {
            let rec = rec?;
            let year = rec[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad year {:?}", &rec[1])))?;
            after.insert((rec[0].to_string(), year), &rec[3] == "true");
        }
        store::write_rows(
            &self.report_path("articulation.csv"),
            &reports::articulation_report(rows, &after),
        )?;

        let external = match &cfg.external_aggregates {
            Some(p) => reports::load_external_aggregates(p)?,
            None => BTreeMap::new(),
        };
        let (ratios, mut diags) =
            reports::aggregate_ratio_report(rows, &external, cfg.materials_line);
        store::write_rows(&self.report_path("aggregate_ratio.csv"), &ratios)?;

        let clean: Vec<_> = rows.iter().filter(|r| !r.anomalous).cloned().collect();
        store::write_rows(
            &self.report_path("geocoding_quality.csv"),
            &geocode::quality_report(&clean),
        )?;
        let mut cells = 0;
        for year in cfg.span.0..=cfg.span.1 {
            let grid = geocode::grid_aggregate(
                &clean,
                year,
                cfg.cell_size_km,
                cfg.materials_line,
                &cfg.projection,
            );
            cells += grid.len();
            geocode::write_grid(&self.report_path(&format!("grid_{year}.csv")), &grid)?;
        }

        diags.extend(assembled.diagnostics);
        let mut all = Diagnostics::new();
        for stage in Stage::ALL
            .iter()
            .filter(|s| **s != Stage::Report && **s != Stage::Assemble)
        {
            let p = self.work(&format!("diagnostics_{}.csv", stage.name()));
            if p.exists() {
                all.extend(Diagnostics::read_csv(&p)?);
            }
        }
        all.extend(diags.iter().cloned());
        all.write_csv(&self.report_path("diagnostics.csv"))?;
        let facts = vec![
            fact("rows", rows.len()),
            fact("grid_cells", cells),
            fact("all_diagnostics", all.len()),
        ];
        self.finish(Stage::Report, facts, diags)
    }
}

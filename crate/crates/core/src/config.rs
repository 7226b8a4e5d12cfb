//! Pipeline configuration: a `key = value` file, one setting per line, `#`
//! starts a comment. Relative paths resolve against the file's directory.
//!
//! ```text
//! registry_dir = registry
//! rosstat_dir = statements/rosstat
//! fns_dir = statements/fns
//! okved_correspondence = tables/okved.csv
//! okopf_correspondence = tables/okopf.csv
//! exemption_sets = tables/exemption_sets.csv
//! financial_register = tables/financial_register.csv
//! exclusion_list = tables/exclusions.csv
//! external_aggregates = tables/national_accounts.csv
//! geocoder_url = gazetteer:tables/gazetteer.csv
//! geocode_cache = cache/geocode.csv
//! span = 2011-2023
//! cell_size_km = 1
//! materials_line = 4121
//! workers = 4
//! max_in_flight = 4
//! n_top = 20
//! format = parquet
//! output_dir = out
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geocode::EqualAreaProjection;
use crate::model::{lines, LineCode, MAX_YEAR, MIN_YEAR};
use crate::panel::export::OutputFormat;

/// Environment variable that overrides `geocoder_url`.
pub const GEOCODER_URL_ENV: &str = "FIRMPANEL_GEOCODER_URL";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub registry_dir: Option<PathBuf>,
    pub rosstat_dir: Option<PathBuf>,
    pub fns_dir: Option<PathBuf>,
    pub okved_correspondence: Option<PathBuf>,
    pub okopf_correspondence: Option<PathBuf>,
    pub exemption_sets: Option<PathBuf>,
    pub financial_register: Option<PathBuf>,
    pub exclusion_list: Option<PathBuf>,
    pub external_aggregates: Option<PathBuf>,
    pub geocoder_url: Option<String>,
    pub geocode_cache: Option<PathBuf>,
    pub span: (i32, i32),
    pub cell_size_km: f64,
    pub projection: EqualAreaProjection,
    pub materials_line: LineCode,
    pub workers: usize,
    pub max_in_flight: usize,
    pub n_top: usize,
    pub format: OutputFormat,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            registry_dir: None,
            rosstat_dir: None,
            fns_dir: None,
            okved_correspondence: None,
            okopf_correspondence: None,
            exemption_sets: None,
            financial_register: None,
            exclusion_list: None,
            external_aggregates: None,
            geocoder_url: None,
            geocode_cache: None,
            span: (MIN_YEAR, MAX_YEAR),
            cell_size_km: 1.0,
            projection: EqualAreaProjection::default(),
            materials_line: lines::materials_payments(),
            workers: 1,
            max_in_flight: 4,
            n_top: 20,
            format: OutputFormat::Parquet,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::ConfigInvalid(format!("{key}: cannot parse {value:?}")))
}

/// `2011-2023` or a single year.
pub fn parse_span(value: &str) -> Result<(i32, i32)> {
    let (a, b) = value.split_once('-').unwrap_or((value, value));
    Ok((parse_num("span", a.trim())?, parse_num("span", b.trim())?))
}

impl PipelineConfig {
    /// Apply one setting. Paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let value = value.trim();
        let path = || {
            Some(if Path::new(value).is_absolute() {
                PathBuf::from(value)
            } else {
                base.join(value)
            })
        };
        match key.trim() {
            "registry_dir" => self.registry_dir = path(),
            "rosstat_dir" => self.rosstat_dir = path(),
            "fns_dir" => self.fns_dir = path(),
            "okved_correspondence" => self.okved_correspondence = path(),
            "okopf_correspondence" => self.okopf_correspondence = path(),
            "exemption_sets" => self.exemption_sets = path(),
            "financial_register" => self.financial_register = path(),
            "exclusion_list" => self.exclusion_list = path(),
            "external_aggregates" => self.external_aggregates = path(),
            "geocode_cache" => self.geocode_cache = path(),
            "output_dir" => self.output_dir = path().expect("set"),
            "geocoder_url" => {
                self.geocoder_url = match value.strip_prefix("gazetteer:") {
                    Some(p) if !Path::new(p).is_absolute() => {
                        Some(format!("gazetteer:{}", base.join(p).display()))
                    }
                    _ if value.is_empty() => None,
                    _ => Some(value.to_string()),
                }
            }
            "span" => self.span = parse_span(value)?,
            "cell_size_km" => self.cell_size_km = parse_num("cell_size_km", value)?,
            "projection_central_meridian" => {
                self.projection.central_meridian = parse_num(key, value)?
            }
            "projection_standard_parallel" => {
                self.projection.standard_parallel = parse_num(key, value)?
            }
            "materials_line" => {
                self.materials_line = LineCode::parse(value)
                    .map_err(|e| Error::ConfigInvalid(format!("materials_line: {e}")))?
            }
            "workers" => self.workers = parse_num("workers", value)?,
            "max_in_flight" => self.max_in_flight = parse_num("max_in_flight", value)?,
            "n_top" => self.n_top = parse_num("n_top", value)?,
            "format" => self.format = value.parse()?,
            other => return Err(Error::ConfigInvalid(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        // like every other path, the default output directory sits next to the file
        cfg.output_dir = base.join(&cfg.output_dir);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::ConfigInvalid(format!("line {}: expected key = value", i + 1))
            })?;
            cfg.set(k, v, base)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        crate::registry::check_span(self.span)?;
        if self.workers == 0 {
            return Err(Error::ConfigInvalid("workers must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(Error::ConfigInvalid(
                "max_in_flight must be at least 1".into(),
            ));
        }
        if !(self.cell_size_km > 0.0 && self.cell_size_km.is_finite()) {
            return Err(Error::ConfigInvalid("cell_size_km must be positive".into()));
        }
        Ok(())
    }

    /// Required path setting, or CONFIG_INVALID naming the key.
    pub fn require<'a>(&self, value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::ConfigInvalid(format!("{key} is not set")))
    }

    /// Render as a config file (absolute paths).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        let paths = [
            ("registry_dir", &self.registry_dir),
            ("rosstat_dir", &self.rosstat_dir),
            ("fns_dir", &self.fns_dir),
            ("okved_correspondence", &self.okved_correspondence),
            ("okopf_correspondence", &self.okopf_correspondence),
            ("exemption_sets", &self.exemption_sets),
            ("financial_register", &self.financial_register),
            ("exclusion_list", &self.exclusion_list),
            ("external_aggregates", &self.external_aggregates),
            ("geocode_cache", &self.geocode_cache),
        ];
        for (k, v) in paths {
            if let Some(p) = v {
                put(k, p.display().to_string());
            }
        }
        if let Some(u) = &self.geocoder_url {
            put("geocoder_url", u.clone());
        }
        put("span", format!("{}-{}", self.span.0, self.span.1));
        put("cell_size_km", self.cell_size_km.to_string());
        put(
            "projection_central_meridian",
            self.projection.central_meridian.to_string(),
        );
        put(
            "projection_standard_parallel",
            self.projection.standard_parallel.to_string(),
        );
        put("materials_line", self.materials_line.to_string());
        put("workers", self.workers.to_string());
        put("max_in_flight", self.max_in_flight.to_string());
        put("n_top", self.n_top.to_string());
        put("format", self.format.extension().to_string());
        put("output_dir", self.output_dir.display().to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let cfg = PipelineConfig::parse(
            "# demo\nregistry_dir = registry\nspan = 2015-2020 # trailing\nworkers=8\ngeocoder_url = gazetteer:g.csv\noutput_dir=/abs/out\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.registry_dir, Some(PathBuf::from("/data/registry")));
        assert_eq!(cfg.span, (2015, 2020));
        assert_eq!(cfg.workers, 8);
        assert_eq!(cfg.geocoder_url.as_deref(), Some("gazetteer:/data/g.csv"));
        assert_eq!(cfg.output_dir, PathBuf::from("/abs/out"));
    }

    #[test]
    fn rejects_bad_settings() {
        let base = Path::new(".");
        assert_eq!(
            PipelineConfig::parse("nope = 1", base).unwrap_err().code(),
            "CONFIG_INVALID"
        );
        assert_eq!(
            PipelineConfig::parse("workers 1", base).unwrap_err().code(),
            "CONFIG_INVALID"
        );
        let mut c = PipelineConfig {
            workers: 0,
            ..PipelineConfig::default()
        };
        assert_eq!(c.validate().unwrap_err().code(), "CONFIG_INVALID");
        c.workers = 1;
        c.span = (2010, 2020);
        assert_eq!(c.validate().unwrap_err().code(), "CONFIG_INVALID");
    }

    #[test]
    fn text_round_trip() {
        let cfg = PipelineConfig::parse(
            "registry_dir = r\nspan = 2012-2019\nformat = csv\n",
            Path::new("/x"),
        )
        .unwrap();
        assert_eq!(
            PipelineConfig::parse(&cfg.to_text(), Path::new("/elsewhere")).unwrap(),
            cfg
        );
    }
}

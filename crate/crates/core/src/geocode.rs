//! Address geocoding through a three-query fallback cascade, an on-disk result
//! cache, and aggregation of firm value added onto an equal-area grid.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;
use std::time::Duration;

use serde::Serialize;

use crate::diagnostics::{DiagCode, Diagnostic, Diagnostics};
use crate::error::{Error, Result};
use crate::model::{Address, GeoLocation, GeoQuality, LineCode, PanelRow};
use crate::par::Workers;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructuredAddress {
    pub region: String,
    pub city: String,
    pub street: Option<String>,
    pub house: Option<String>,
}

fn non_empty(s: &str) -> Option<String> {
    let t = s.trim();
    (!t.is_empty()).then(|| t.to_string())
}

fn normalize_part(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl StructuredAddress {
    /// None when region or city is missing.
    pub fn from_address(a: &Address) -> Option<Self> {
        Some(StructuredAddress {
            region: non_empty(&a.region)?,
            city: non_empty(&a.city)?,
            street: non_empty(&a.street),
            house: non_empty(&a.house),
        })
    }

    /// Cache key: lowercased, whitespace-collapsed fields joined by `|`.
    pub fn normalized(&self) -> String {
        [
            self.region.as_str(),
            self.city.as_str(),
            self.street.as_deref().unwrap_or(""),
            self.house.as_deref().unwrap_or(""),
        ]
        .map(normalize_part)
        .join("|")
    }

    /// The cascade: full address, then without the house, then region and city.
    /// Steps that would repeat the previous query are skipped.
    pub fn cascade_queries(&self) -> Vec<StructuredAddress> {
        let full = self.clone();
        let no_house = StructuredAddress {
            house: None,
            ..self.clone()
        };
        let city = StructuredAddress {
            street: None,
            house: None,
            ..self.clone()
        };
        let mut out: Vec<StructuredAddress> = Vec::with_capacity(3);
        for q in [full, no_house, city] {
            if out.last() != Some(&q) {
                out.push(q);
            }
        }
        out
    }
}

/// A structured-search geocoding backend. `Ok(None)` means the service
/// answered with no match.
pub trait GeocodeClient: Send + Sync {
    fn search(&self, query: &StructuredAddress) -> Result<Option<GeoLocation>>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

/// Thread-safe map from normalized address to the cascade result.
#[derive(Debug, Default)]
pub struct GeoCache {
    entries: RwLock<HashMap<String, Option<GeoLocation>>>,
}

impl GeoCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<Option<GeoLocation>> {
        self.entries.read().expect("cache lock").get(key).copied()
    }

    pub fn insert(&self, key: String, value: Option<GeoLocation>) {
        self.entries.write().expect("cache lock").insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Read a `normalized_address,lat,lon,rank` file; empty coordinates record
    /// an address that resolved to nothing. A missing file gives an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        let cache = GeoCache::new();
        if !path.exists() {
            return Ok(cache);
        }
        let mut r = csv::Reader::from_path(path)?;
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::Parse(format!("{}: bad cache row {:?}", path.display(), rec));
            let key = rec.get(0).ok_or_else(bad)?.to_string();
            let lat = rec.get(1).ok_or_else(bad)?;
            let value = if lat.is_empty() {
                None
            } else {
                Some(GeoLocation {
                    lat: lat.parse().map_err(|_| bad())?,
                    lon: rec.get(2).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                    address_rank: rec.get(3).and_then(|v| v.parse().ok()).ok_or_else(bad)?,
                })
            };
            cache.insert(key, value);
        }
        Ok(cache)
    }

    /// Write entries sorted by key.
    pub fn save(&self, path: &Path) -> Result<()> {
        let entries = self.entries.read().expect("cache lock");
        let sorted: BTreeMap<&String, &Option<GeoLocation>> = entries.iter().collect();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["normalized_address", "lat", "lon", "rank"])?;
        for (k, v) in sorted {
            match v {
                Some(g) => w.write_record([
                    k.as_str(),
                    &g.lat.to_string(),
                    &g.lon.to_string(),
                    &g.address_rank.to_string(),
                ])?,
                None => w.write_record([k.as_str(), "", "", ""])?,
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Cascade driver with caching and retries around a client.
pub struct Geocoder<C> {
    client: C,
    cache: GeoCache,
    retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeocodeOutcome {
    pub location: Option<GeoLocation>,
    /// Requests issued for this call, retries included.
    pub requests: usize,
    pub diagnostic: Option<Diagnostic>,
}

impl<C: GeocodeClient> Geocoder<C> {
    pub fn new(client: C) -> Self {
        Geocoder {
            client,
            cache: GeoCache::new(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_cache(mut self, cache: GeoCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn cache(&self) -> &GeoCache {
        &self.cache
    }

    pub fn client(&self) -> &C {
        &self.client
    }

    fn search_with_retry(
        &self,
        q: &StructuredAddress,
        requests: &mut usize,
    ) -> Result<Option<GeoLocation>> {
        let mut delay = self.retry.base_delay;
        let mut attempt = 1;
        loop {
            *requests += 1;
            match self.client.search(q) {
                Err(Error::ServiceUnavailable(_)) if attempt < self.retry.attempts => {
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    /// Resolve one address. Service failures end the cascade with no location
    /// and a diagnostic, and are not cached.
    pub fn geocode(&self, address: &StructuredAddress, inn: &str) -> GeocodeOutcome {
        let key = address.normalized();
        if let Some(hit) = self.cache.get(&key) {
            return GeocodeOutcome {
                location: hit,
                requests: 0,
                diagnostic: None,
            };
        }
        let mut requests = 0;
        for q in address.cascade_queries() {
            match self.search_with_retry(&q, &mut requests) {
                Ok(Some(loc)) => {
                    self.cache.insert(key, Some(loc));
                    return GeocodeOutcome {
                        location: Some(loc),
                        requests,
                        diagnostic: None,
                    };
                }
                Ok(None) => {}
                Err(e) => {
                    let code = match e {
                        Error::MalformedResponse(_) => DiagCode::MalformedResponse,
                        _ => DiagCode::ServiceUnavailable,
                    };
                    let diag = Diagnostic::warn(code, inn, None, format!("{key}: {e}"));
                    return GeocodeOutcome {
                        location: None,
                        requests,
                        diagnostic: Some(diag),
                    };
                }
            }
        }
        self.cache.insert(key, None);
        GeocodeOutcome {
            location: None,
            requests,
            diagnostic: None,
        }
    }

    /// Resolve distinct addresses with at most `workers.threads()` requests in
    /// flight. Results are keyed by normalized address.
    pub fn geocode_all(
        &self,
        addresses: &[(String, StructuredAddress)],
        workers: &Workers,
    ) -> (BTreeMap<String, Option<GeoLocation>>, Diagnostics) {
        let mut unique: BTreeMap<String, (&str, &StructuredAddress)> = BTreeMap::new();
        for (inn, a) in addresses {
            unique.entry(a.normalized()).or_insert((inn.as_str(), a));
        }
        let items: Vec<(String, (&str, &StructuredAddress))> = unique.into_iter().collect();
        let outcomes = workers.map(&items, |(_, (inn, a))| self.geocode(a, inn));
        let mut diags = Diagnostics::new();
        let mut out = BTreeMap::new();
        for ((key, _), o) in items.into_iter().zip(outcomes) {
            if let Some(d) = o.diagnostic {
                diags.push(d);
            }
            out.insert(key, o.location);
        }
        (out, diags)
    }
}

/// HTTP client for a Nominatim-style `/search` endpoint with structured
/// `state`, `city` and `street` parameters.
pub struct NominatimClient {
    base_url: String,
    agent: ureq::Agent,
}

impl NominatimClient {
    pub fn new(base_url: &str) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .user_agent(concat!("firmpanel/", env!("CARGO_PKG_VERSION")))
            .build();
        NominatimClient {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }
}

/// Parse the first hit of a JSON array response.
pub fn parse_search_response(body: &str) -> Result<Option<GeoLocation>> {
    let malformed = |m: &str| Error::MalformedResponse(m.to_string());
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| malformed(&e.to_string()))?;
    let arr = v
        .as_array()
        .ok_or_else(|| malformed("expected a JSON array"))?;
    let Some(hit) = arr.first() else {
        return Ok(None);
    };
    let num = |field: &str| -> Option<f64> {
        match hit.get(field)? {
            serde_json::Value::String(s) => s.parse().ok(),
            serde_json::Value::Number(n) => n.as_f64(),
            _ => None,
        }
    };
    let lat = num("lat").ok_or_else(|| malformed("missing lat"))?;
    let lon = num("lon").ok_or_else(|| malformed("missing lon"))?;
    let rank = num("address_rank")
        .or_else(|| num("place_rank"))
        .ok_or_else(|| malformed("missing address_rank"))?;
    if !(0.0..=30.0).contains(&rank) {
        return Err(malformed("address_rank out of range"));
    }
    Ok(Some(GeoLocation {
        lon,
        lat,
        address_rank: rank as u8,
    }))
}

impl GeocodeClient for NominatimClient {
    fn search(&self, q: &StructuredAddress) -> Result<Option<GeoLocation>> {
        let mut req = self
            .agent
            .get(&format!("{}/search", self.base_url))
            .query("format", "jsonv2")
            .query("limit", "1")
            .query("state", &q.region)
            .query("city", &q.city);
        if let Some(street) = &q.street {
            let s = match &q.house {
                Some(h) => format!("{h} {street}"),
                None => street.clone(),
            };
            req = req.query("street", &s);
        }
        match req.call() {
            Ok(resp) => {
                let body = resp
                    .into_string()
                    .map_err(|e| Error::MalformedResponse(e.to_string()))?;
                parse_search_response(&body)
            }
            Err(ureq::Error::Status(code, _)) if code == 429 || code >= 500 => {
                Err(Error::ServiceUnavailable(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => {
                Err(Error::MalformedResponse(format!("HTTP {code}")))
            }
            Err(e) => Err(Error::ServiceUnavailable(e.to_string())),
        }
    }
}

/// Offline geocoder backed by a table of known places, matched on normalized
/// query fields. Used for fixtures and air-gapped runs.
#[derive(Debug, Default)]
pub struct GazetteerClient {
    places: HashMap<String, GeoLocation>,
    requests: AtomicUsize,
}

impl GazetteerClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: &StructuredAddress, location: GeoLocation) {
        self.places.insert(query.normalized(), location);
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// Read `region,city,street,house,lat,lon,rank`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut g = GazetteerClient::new();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
        let mut r = csv::Reader::from_reader(file);
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::Parse(format!("{}: bad gazetteer row {:?}", path.display(), rec));
            let field = |i: usize| rec.get(i).unwrap_or("");
            let q = StructuredAddress {
                region: field(0).to_string(),
                city: field(1).to_string(),
                street: non_empty(field(2)),
                house: non_empty(field(3)),
            };
            let loc = GeoLocation {
                lat: field(4).parse().map_err(|_| bad())?,
                lon: field(5).parse().map_err(|_| bad())?,
                address_rank: field(6).parse().map_err(|_| bad())?,
            };
            g.insert(&q, loc);
        }
        Ok(g)
    }

    pub fn write(path: &Path, places: &[(StructuredAddress, GeoLocation)]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["region", "city", "street", "house", "lat", "lon", "rank"])?;
        for (q, g) in places {
            w.write_record([
                q.region.as_str(),
                &q.city,
                q.street.as_deref().unwrap_or(""),
                q.house.as_deref().unwrap_or(""),
                &g.lat.to_string(),
                &g.lon.to_string(),
                &g.address_rank.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

impl GeocodeClient for GazetteerClient {
    fn search(&self, q: &StructuredAddress) -> Result<Option<GeoLocation>> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        Ok(self.places.get(&q.normalized()).copied())
    }
}

/// Which geocoding backend a URL setting selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeocoderSource {
    Http(String),
    Gazetteer(PathBuf),
}

impl GeocoderSource {
    /// `http(s)://...` or `gazetteer:<path>`.
    pub fn parse(url: &str) -> Result<Self> {
        if let Some(p) = url.strip_prefix("gazetteer:") {
            Ok(GeocoderSource::Gazetteer(PathBuf::from(p)))
        } else if url.starts_with("http://") || url.starts_with("https://") {
            Ok(GeocoderSource::Http(url.to_string()))
        } else {
            Err(Error::ConfigInvalid(format!(
                "unsupported geocoder url {url:?}"
            )))
        }
    }
}

impl GeocodeClient for Box<dyn GeocodeClient> {
    fn search(&self, query: &StructuredAddress) -> Result<Option<GeoLocation>> {
        (**self).search(query)
    }
}

/// Lambert cylindrical equal-area projection on the authalic sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EqualAreaProjection {
    pub central_meridian: f64,
    pub standard_parallel: f64,
}

const AUTHALIC_RADIUS_KM: f64 = 6371.0072;

impl Default for EqualAreaProjection {
    /// Standard parallel 30° (Behrmann) with the Greenwich meridian.
    fn default() -> Self {
        EqualAreaProjection {
            central_meridian: 0.0,
            standard_parallel: 30.0,
        }
    }
}

impl EqualAreaProjection {
    /// Projected (x, y) in kilometres.
    pub fn project(&self, lon: f64, lat: f64) -> (f64, f64) {
        let k = self.standard_parallel.to_radians().cos();
        let x = AUTHALIC_RADIUS_KM * (lon - self.central_meridian).to_radians() * k;
        let y = AUTHALIC_RADIUS_KM * lat.to_radians().sin() / k;
        (x, y)
    }

    pub fn cell(&self, lon: f64, lat: f64, cell_size_km: f64) -> (i64, i64) {
        let (x, y) = self.project(lon, lat);
        (
            (x / cell_size_km).floor() as i64,
            (y / cell_size_km).floor() as i64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub cell_x: i64,
    pub cell_y: i64,
    pub cell_size_km: f64,
    pub value: i64,
}

/// Revenue minus materials when both are present and positive and the
/// difference is positive.
pub fn value_added(row: &PanelRow, materials: LineCode) -> Option<i64> {
    let revenue = row
        .line(crate::model::lines::revenue())
        .filter(|v| *v > 0)?;
    let mat = row.line(materials).filter(|v| *v > 0)?;
    Some(revenue - mat).filter(|v| *v > 0)
}

/// Sum value added of house- and street-level firms per grid cell for one
/// year. Cells are sorted by (x, y); empty cells are omitted.
pub fn grid_aggregate(
    rows: &[PanelRow],
    year: i32,
    cell_size_km: f64,
    materials: LineCode,
    projection: &EqualAreaProjection,
) -> Vec<GridCell> {
    let mut cells: BTreeMap<(i64, i64), i64> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.year() == year) {
        let Some(geo) = r.geo else { continue };
        if !matches!(geo.quality(), GeoQuality::House | GeoQuality::Street) {
            continue;
        }
        if let Some(va) = value_added(r, materials) {
            *cells
                .entry(projection.cell(geo.lon, geo.lat, cell_size_km))
                .or_insert(0) += va;
        }
    }
    cells
        .into_iter()
        .filter(|(_, v)| *v != 0)
        .map(|((cell_x, cell_y), value)| GridCell {
            cell_x,
            cell_y,
            cell_size_km,
            value,
        })
        .collect()
}

pub fn write_grid(path: &Path, cells: &[GridCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cell_x", "cell_y", "cell_size_km", "value"])?;
    for c in cells {
        w.write_record([
            c.cell_x.to_string(),
            c.cell_y.to_string(),
            c.cell_size_km.to_string(),
            c.value.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Revenue-weighted shares per geocoding tier; `None` when the year has no
/// positive revenue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityShares {
    pub year: i32,
    pub house_street: Option<f64>,
    pub city: Option<f64>,
    pub none: Option<f64>,
}

pub fn quality_report(rows: &[PanelRow]) -> Vec<QualityShares> {
    let mut acc: BTreeMap<i32, [i128; 3]> = BTreeMap::new();
    for r in rows {
        let entry = acc.entry(r.year()).or_insert([0; 3]);
        let Some(revenue) = r.line(crate::model::lines::revenue()).filter(|v| *v > 0) else {
            continue;
        };
        let tier = match r.geo_quality() {
            GeoQuality::House | GeoQuality::Street => 0,
            GeoQuality::City => 1,
            GeoQuality::None => 2,
        };
        entry[tier] += revenue as i128;
    }
    acc.into_iter()
        .map(|(year, w)| {
            let total: i128 = w.iter().sum();
            let share = |i: usize| (total > 0).then(|| w[i] as f64 / total as f64);
            QualityShares {
                year,
                house_street: share(0),
                city: share(1),
                none: share(2),
            }
        })
        .collect()
}

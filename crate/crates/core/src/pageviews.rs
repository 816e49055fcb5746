//! Cross-language title resolution and calendar-year pageview totals.
//!
//! Two backends exist. The fixture backend answers from local TSV files and
//! holds no transport at all, so it cannot reach the network. The live
//! backend talks to the Wikimedia REST and Action APIs through a
//! [`Transport`], funnelled through one [`RateLimiter`] and backed by an
//! on-disk [`DiskCache`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alumni::AlumniRecord;
use crate::registry::Registry;
use crate::tsv::Table;

pub const DEFAULT_PAGEVIEWS_URL: &str = "https://wikimedia.org/api/rest_v1/metrics/pageviews/per-article/{lang}.wikipedia/{access}/{agent}/{title}/monthly/{year}010100/{year}123100";
pub const DEFAULT_LANGLINKS_URL: &str = "https://{lang}.wikipedia.org/w/api.php?action=query&prop=langlinks&lllang=en&redirects=1&format=json&formatversion=2&titles={title}";

static NETWORK_OPERATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of HTTP requests issued by [`HttpTransport`].
pub fn network_operations() -> u64 {
    NETWORK_OPERATIONS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewSource {
    LiveApi,
    Fixture,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageViewStat {
    pub title: String,
    pub lang: String,
    pub year: i32,
    pub total: u64,
    pub source: ViewSource,
    /// The service had no data for the page (HTTP 404 or absent from the
    /// fixture); `total` is 0.
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossLangLink {
    pub title_national: String,
    pub lang_national: String,
    pub title_en: Option<String>,
}

#[derive(Debug, Error)]
pub enum PageviewError {
    #[error("request for {what} failed after {attempts} attempts: {message}")]
    Unresolved {
        what: String,
        attempts: u32,
        message: String,
    },
    #[error("cannot read fixture {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error("cache error at {path}: {source}")]
    Cache { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

/// Performs a GET request.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError>;
}

/// Blocking HTTPS transport. Every call increments [`network_operations`].
pub struct HttpTransport {
    agent: ureq::Agent,
    user_agent: String,
}

impl HttpTransport {
    pub fn new(user_agent: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport {
            agent,
            user_agent: user_agent.to_string(),
        }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        NETWORK_OPERATIONS.fetch_add(1, Ordering::SeqCst);
        let mut resp = self
            .agent
            .get(url)
            .header("User-Agent", &self.user_agent)
            .call()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Monotonic time source; swapped for a virtual clock in tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Spaces requests at least `1 / rps` apart.
pub struct RateLimiter {
    interval: Duration,
    last: Option<Duration>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        let interval = if requests_per_second > 0.0 {
            Duration::from_secs_f64(1.0 / requests_per_second)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            last: None,
            clock,
        }
    }

    /// Blocks until the next request may go out and records its start.
    pub fn acquire(&mut self) {
        if let Some(last) = self.last {
            let ready = last + self.interval;
            let now = self.clock.now();
            if now < ready {
                self.clock.sleep(ready - now);
            }
        }
        self.last = Some(self.clock.now());
    }
}

/// Transport settings for live mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveSettings {
    pub pageviews_url: String,
    pub langlinks_url: String,
    pub agent: String,
    pub access: String,
    pub retries: u32,
    pub backoff: Duration,
    pub requests_per_second: f64,
    pub user_agent: String,
}

impl Default for LiveSettings {
    fn default() -> Self {
        LiveSettings {
            pageviews_url: DEFAULT_PAGEVIEWS_URL.to_string(),
            langlinks_url: DEFAULT_LANGLINKS_URL.to_string(),
            agent: "all-agents".to_string(),
            access: "all-access".to_string(),
            retries: 3,
            backoff: Duration::from_millis(500),
            requests_per_second: 1.0,
            user_agent: "wikialumni/0.1 (research pipeline)".to_string(),
        }
    }
}

const PATH_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');

fn encode_title(title: &str) -> String {
    utf8_percent_encode(&title.replace(' ', "_"), PATH_SEGMENT).to_string()
}

impl LiveSettings {
    pub fn pageviews_request(&self, lang: &str, title: &str, year: i32) -> String {
        self.pageviews_url
            .replace("{lang}", lang)
            .replace("{access}", &self.access)
            .replace("{agent}", &self.agent)
            .replace("{title}", &encode_title(title))
            .replace("{year}", &year.to_string())
    }

    pub fn langlinks_request(&self, lang: &str, title: &str) -> String {
        self.langlinks_url
            .replace("{lang}", lang)
            .replace("{title}", &encode_title(title))
    }
}

/// Offline answers: `(lang, title, year) → total` and `(lang, title) → en title`.
#[derive(Debug, Clone, Default)]
pub struct Fixture {
    views: HashMap<(String, String, i32), u64>,
    langlinks: HashMap<(String, String), String>,
}

impl Fixture {
    /// Adds `total` to the views of a page; repeated keys accumulate so
    /// monthly rows sum to the year.
    pub fn add_views(&mut self, lang: &str, title: &str, year: i32, total: u64) {
        *self
            .views
            .entry((lang.to_string(), crate::title::normalize_title(title), year))
            .or_default() += total;
    }

    pub fn add_langlink(&mut self, lang: &str, title: &str, title_en: &str) {
        self.langlinks.insert(
            (lang.to_string(), crate::title::normalize_title(title)),
            title_en.to_string(),
        );
    }

    /// Views file: header `lang, title, year, views` (an optional `month`
    /// column is accepted and ignored).
    pub fn load_views(&mut self, path: &Path) -> Result<(), PageviewError> {
        let table = read_fixture_table(path)?;
        let err = |message: String| PageviewError::Fixture {
            path: path.to_path_buf(),
            message,
        };
        let col = |n: &str| table.column(n).ok_or_else(|| err(format!("missing column {n:?}")));
        let (c_lang, c_title, c_year, c_views) = (col("lang")?, col("title")?, col("year")?, col("views")?);
        for (line, f) in &table.rows {
            let get = |i: usize| f.get(i).map(|s| s.trim()).unwrap_or("");
            let year = get(c_year)
                .parse()
                .map_err(|_| err(format!("line {line}: invalid year {:?}", get(c_year))))?;
            let views = get(c_views)
                .replace(',', "")
                .parse()
                .map_err(|_| err(format!("line {line}: invalid views {:?}", get(c_views))))?;
            self.add_views(get(c_lang), get(c_title), year, views);
        }
        Ok(())
    }

    /// Langlinks file: header `lang, title, title_en`.
    pub fn load_langlinks(&mut self, path: &Path) -> Result<(), PageviewError> {
        let table = read_fixture_table(path)?;
        let err = |message: String| PageviewError::Fixture {
            path: path.to_path_buf(),
            message,
        };
        let col = |n: &str| table.column(n).ok_or_else(|| err(format!("missing column {n:?}")));
        let (c_lang, c_title, c_en) = (col("lang")?, col("title")?, col("title_en")?);
        for (_, f) in &table.rows {
            let get = |i: usize| f.get(i).map(|s| s.trim()).unwrap_or("");
            if !get(c_en).is_empty() {
                self.add_langlink(get(c_lang), get(c_title), get(c_en));
            }
        }
        Ok(())
    }

    fn views(&self, lang: &str, title: &str, year: i32) -> Option<u64> {
        self.views
            .get(&(lang.to_string(), crate::title::normalize_title(title), year))
            .copied()
    }

    fn langlink(&self, lang: &str, title: &str) -> Option<&str> {
        self.langlinks
            .get(&(lang.to_string(), crate::title::normalize_title(title)))
            .map(String::as_str)
    }
}

fn read_fixture_table(path: &Path) -> Result<Table, PageviewError> {
    let err = |message: String| PageviewError::Fixture {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| err(e.to_string()))?;
    Table::read(BufReader::new(file))
        .map_err(|e| err(e.to_string()))?
        .ok_or_else(|| err("empty file".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct CachedViews {
    lang: String,
    title: String,
    year: i32,
    total: u64,
    missing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
struct CachedLanglink {
    lang: String,
    title: String,
    title_en: Option<String>,
}

/// One JSON file per key under `views/` and `langlinks/`, named by the
/// SHA-256 of the key. Writes go through a temp file and a rename so readers
/// never see partial entries.
#[derive(Debug, Clone)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DiskCache { dir: dir.into() }
    }

    fn path(&self, kind: &str, key: &str) -> PathBuf {
        let digest = hex::encode(Sha256::digest(key.as_bytes()));
        self.dir.join(kind).join(format!("{digest}.json"))
    }

    fn views_key(lang: &str, title: &str, year: i32) -> String {
        format!("{lang}\t{title}\t{year}")
    }

    fn read<T: for<'de> Deserialize<'de>>(&self, path: &Path) -> Option<T> {
        let bytes = fs::read(path).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    fn write<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), PageviewError> {
        let cache_err = |source| PageviewError::Cache {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(cache_err)?;
        }
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let body = serde_json::to_vec(value).map_err(|e| cache_err(io::Error::other(e)))?;
        fs::write(&tmp, body).map_err(cache_err)?;
        fs::rename(&tmp, path).map_err(cache_err)
    }

    fn get_views(&self, lang: &str, title: &str, year: i32) -> Option<CachedViews> {
        let entry: CachedViews = self.read(&self.path("views", &Self::views_key(lang, title, year)))?;
        (entry.lang == lang && entry.title == title && entry.year == year).then_some(entry)
    }

    fn put_views(&self, entry: &CachedViews) -> Result<(), PageviewError> {
        let path = self.path("views", &Self::views_key(&entry.lang, &entry.title, entry.year));
        self.write(&path, entry)
    }

    fn get_langlink(&self, lang: &str, title: &str) -> Option<CachedLanglink> {
        let entry: CachedLanglink = self.read(&self.path("langlinks", &format!("{lang}\t{title}")))?;
        (entry.lang == lang && entry.title == title).then_some(entry)
    }

    fn put_langlink(&self, entry: &CachedLanglink) -> Result<(), PageviewError> {
        let path = self.path("langlinks", &format!("{}\t{}", entry.lang, entry.title));
        self.write(&path, entry)
    }
}

pub struct LiveClient {
    settings: LiveSettings,
    transport: Box<dyn Transport>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    cache: DiskCache,
    requests: u64,
}

impl LiveClient {
    pub fn new(
        settings: LiveSettings,
        transport: Box<dyn Transport>,
        clock: Arc<dyn Clock>,
        cache: DiskCache,
    ) -> Self {
        let limiter = RateLimiter::new(settings.requests_per_second, clock.clone());
        LiveClient {
            settings,
            transport,
            limiter,
            clock,
            cache,
            requests: 0,
        }
    }

    /// Issues a request with retries. 404 returns `Ok(None)`.
    fn request(&mut self, url: &str) -> Result<Option<String>, PageviewError> {
        let attempts = self.settings.retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                self.clock.sleep(self.settings.backoff * 2u32.saturating_pow(attempt - 1));
            }
            self.limiter.acquire();
            self.requests += 1;
            match self.transport.get(url) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(Some(resp.body)),
                Ok(resp) if resp.status == 404 => return Ok(None),
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last_error = format!("HTTP {}", resp.status);
                }
                Ok(resp) => {
                    return Err(PageviewError::Unresolved {
                        what: url.to_string(),
                        attempts: attempt + 1,
                        message: format!("HTTP {}", resp.status),
                    })
                }
                Err(e) => last_error = e.0,
            }
        }
        Err(PageviewError::Unresolved {
            what: url.to_string(),
            attempts,
            message: last_error,
        })
    }
}

#[derive(Deserialize)]
struct PageviewsBody {
    #[serde(default)]
    items: Vec<PageviewsItem>,
}

#[derive(Deserialize)]
struct PageviewsItem {
    views: u64,
}

#[derive(Deserialize)]
struct LanglinksBody {
    query: Option<LanglinksQuery>,
}

#[derive(Deserialize)]
struct LanglinksQuery {
    #[serde(default)]
    pages: Vec<LanglinksPage>,
}

#[derive(Deserialize)]
struct LanglinksPage {
    #[serde(default)]
    missing: bool,
    #[serde(default)]
    langlinks: Vec<Langlink>,
}

#[derive(Deserialize)]
struct Langlink {
    lang: String,
    title: String,
}

pub enum Backend {
    Fixture(Fixture),
    Live(LiveClient),
}

/// Memoizing front for either backend.
pub struct ViewsService {
    backend: Backend,
    views_memo: HashMap<(String, String, i32), PageViewStat>,
    links_memo: HashMap<(String, String), Option<String>>,
}

impl ViewsService {
    pub fn fixture(fixture: Fixture) -> Self {
        Self::with_backend(Backend::Fixture(fixture))
    }

    pub fn live(client: LiveClient) -> Self {
        Self::with_backend(Backend::Live(client))
    }

    pub fn with_backend(backend: Backend) -> Self {
        ViewsService {
            backend,
            views_memo: HashMap::new(),
            links_memo: HashMap::new(),
        }
    }

    /// Requests sent through the transport so far (always 0 for fixtures).
    pub fn requests_issued(&self) -> u64 {
        match &self.backend {
            Backend::Fixture(_) => 0,
            Backend::Live(c) => c.requests,
        }
    }

    pub fn is_fixture(&self) -> bool {
        matches!(self.backend, Backend::Fixture(_))
    }

    /// English counterpart of a national-language page. For `lang == "en"`
    /// the page is its own counterpart.
    pub fn resolve_english(&mut self, title: &str, lang: &str) -> Result<CrossLangLink, PageviewError> {
        let link = |title_en: Option<String>| CrossLangLink {
            title_national: title.to_string(),
            lang_national: lang.to_string(),
            title_en,
        };
        if lang == "en" {
            return Ok(link(Some(title.to_string())));
        }
        let key = (lang.to_string(), title.to_string());
        if let Some(hit) = self.links_memo.get(&key) {
            return Ok(link(hit.clone()));
        }
        let title_en = match &mut self.backend {
            Backend::Fixture(f) => f.langlink(lang, title).map(str::to_string),
            Backend::Live(client) => {
                if let Some(cached) = client.cache.get_langlink(lang, title) {
                    cached.title_en
                } else {
                    let url = client.settings.langlinks_request(lang, title);
                    let body = client.request(&url)?;
                    let title_en = match body {
                        None => None,
                        Some(body) => parse_langlinks(&body).map_err(|message| PageviewError::Unresolved {
                            what: url.clone(),
                            attempts: 1,
                            message,
                        })?,
                    };
                    client.cache.put_langlink(&CachedLanglink {
                        lang: lang.to_string(),
                        title: title.to_string(),
                        title_en: title_en.clone(),
                    })?;
                    title_en
                }
            }
        };
        self.links_memo.insert(key, title_en.clone());
        Ok(link(title_en))
    }

    /// Total views of a page over a calendar year.
    pub fn fetch_views(&mut self, title: &str, lang: &str, year: i32) -> Result<PageViewStat, PageviewError> {
        let key = (lang.to_string(), title.to_string(), year);
        if let Some(hit) = self.views_memo.get(&key) {
            return Ok(hit.clone());
        }
        let stat = match &mut self.backend {
            Backend::Fixture(f) => {
                let total = f.views(lang, title, year);
                PageViewStat {
                    title: title.to_string(),
                    lang: lang.to_string(),
                    year,
                    total: total.unwrap_or(0),
                    source: ViewSource::Fixture,
                    missing: total.is_none(),
                }
            }
            Backend::Live(client) => {
                if let Some(c) = client.cache.get_views(lang, title, year) {
                    PageViewStat {
                        title: title.to_string(),
                        lang: lang.to_string(),
                        year,
                        total: c.total,
                        source: ViewSource::Cache,
                        missing: c.missing,
                    }
                } else {
                    let url = client.settings.pageviews_request(lang, title, year);
                    let (total, missing) = match client.request(&url)? {
                        None => (0, true),
                        Some(body) => {
                            let parsed: PageviewsBody =
                                serde_json::from_str(&body).map_err(|e| PageviewError::Unresolved {
                                    what: url.clone(),
                                    attempts: 1,
                                    message: format!("bad response: {e}"),
                                })?;
                            (parsed.items.iter().map(|i| i.views).sum(), false)
                        }
                    };
                    client.cache.put_views(&CachedViews {
                        lang: lang.to_string(),
                        title: title.to_string(),
                        year,
                        total,
                        missing,
                    })?;
                    PageViewStat {
                        title: title.to_string(),
                        lang: lang.to_string(),
                        year,
                        total,
                        source: ViewSource::LiveApi,
                        missing,
                    }
                }
            }
        };
        self.views_memo.insert(key, stat.clone());
        Ok(stat)
    }
}

fn parse_langlinks(body: &str) -> Result<Option<String>, String> {
    let parsed: LanglinksBody = serde_json::from_str(body).map_err(|e| format!("bad response: {e}"))?;
    let Some(query) = parsed.query else {
        return Ok(None);
    };
    Ok(query
        .pages
        .into_iter()
        .filter(|p| !p.missing)
        .flat_map(|p| p.langlinks)
        .find(|l| l.lang == "en")
        .map(|l| l.title))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum FlagKind {
    /// No data for the page; counted as 0.
    NoData,
    /// A request failed after retries; the value is left empty.
    Unresolved,
}

impl FlagKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlagKind::NoData => "no_data",
            FlagKind::Unresolved => "unresolved",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ViewFlag {
    pub kind: FlagKind,
    pub lang: String,
    pub title: String,
    pub detail: String,
}

fn flag_for(stat: &PageViewStat) -> Option<ViewFlag> {
    stat.missing.then(|| ViewFlag {
        kind: FlagKind::NoData,
        lang: stat.lang.clone(),
        title: stat.title.clone(),
        detail: format!("no pageview data for {}", stat.year),
    })
}

/// Records with `views_total` and `person_link_en` filled in, plus flags.
#[derive(Debug, Clone, Default)]
pub struct Enrichment {
    pub records: Vec<AlumniRecord>,
    pub flags: Vec<ViewFlag>,
}

impl Enrichment {
    pub fn unresolved(&self) -> usize {
        self.flags.iter().filter(|f| f.kind == FlagKind::Unresolved).count()
    }
}

/// National views plus English views of the counterpart page; English
/// records count their own page only once.
pub fn enrich_records(service: &mut ViewsService, records: &[AlumniRecord], year: i32) -> Enrichment {
    let mut out = Enrichment::default();
    for record in records {
        let mut r = record.clone();
        let lang = r.lang.clone();
        let title = r.person_link.clone();
        let result = (|| -> Result<(u64, Option<String>, Vec<ViewFlag>), PageviewError> {
            let mut flags = Vec::new();
            let national = service.fetch_views(&title, &lang, year)?;
            flags.extend(flag_for(&national));
            let mut total = national.total;
            let link = service.resolve_english(&title, &lang)?;
            if lang != "en" {
                if let Some(en) = &link.title_en {
                    let english = service.fetch_views(en, "en", year)?;
                    flags.extend(flag_for(&english));
                    total += english.total;
                }
            }
            Ok((total, link.title_en, flags))
        })();
        match result {
            Ok((total, title_en, flags)) => {
                r.views_total = Some(total);
                r.person_link_en = title_en;
                out.flags.extend(flags);
            }
            Err(e) => {
                r.views_total = None;
                out.flags.push(ViewFlag {
                    kind: FlagKind::Unresolved,
                    lang: lang.clone(),
                    title: title.clone(),
                    detail: e.to_string(),
                });
            }
        }
        out.records.push(r);
    }
    out.flags.sort();
    out.flags.dedup();
    out
}

/// Views of each university's own pages: the primary title in every
/// language it has, summed. Redirect aliases are not counted.
pub fn university_views(
    service: &mut ViewsService,
    registry: &Registry,
    year: i32,
) -> (BTreeMap<u32, Option<u64>>, Vec<ViewFlag>) {
    let mut totals = BTreeMap::new();
    let mut flags = Vec::new();
    for uni in registry.iter() {
        let mut sum = Some(0u64);
        for (lang, titles) in &uni.titles {
            match service.fetch_views(&titles.primary, lang, year) {
                Ok(stat) => {
                    flags.extend(flag_for(&stat));
                    sum = sum.map(|s| s + stat.total);
                }
                Err(e) => {
                    flags.push(ViewFlag {
                        kind: FlagKind::Unresolved,
                        lang: lang.clone(),
                        title: titles.primary.clone(),
                        detail: e.to_string(),
                    });
                    sum = None;
                }
            }
        }
        totals.insert(uni.id, sum);
    }
    flags.sort();
    flags.dedup();
    (totals, flags)
}

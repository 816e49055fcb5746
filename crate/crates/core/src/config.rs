//! Pipeline configuration file.
//!
//! A single TOML document drives every subcommand. Relative paths are
//! resolved against the directory holding the config file, so a config and
//! its inputs can be moved together.
//!
//! ```toml
//! languages = ["en", "ru"]
//! universities = "universities.tsv"
//! dictionary_dir = "dictionaries"
//! output_dir = "out"
//! analysis_year = 2017
//! correlation_method = "spearman"
//!
//! [dumps.en]
//! path = "dumps/enwiki.xml.bz2"
//! date = "2018-09-01"
//!
//! [pageviews]
//! mode = "fixture"
//! views_fixture = "fixtures/views.tsv"
//! langlinks_fixture = "fixtures/langlinks.tsv"
//!
//! [[report.filters]]
//! name = "1948-2000 & >999 views"
//! min_birth_year = 1948
//! max_birth_year = 2000
//! min_views_exclusive = 999
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::{CorrelationMethod, FilterSpec, DEFAULT_UNMAPPED_THRESHOLD};
use crate::dump::DumpSource;
use crate::pageviews::{LiveSettings, DEFAULT_LANGLINKS_URL, DEFAULT_PAGEVIEWS_URL};
use crate::registry::dictionary_path;

/// Overrides `pageviews.cache_dir`.
pub const ENV_CACHE_DIR: &str = "WIKIALUMNI_CACHE_DIR";
/// Overrides `pageviews.rate_limit` (requests per second).
pub const ENV_RATE_LIMIT: &str = "WIKIALUMNI_RATE_LIMIT";

/// Earliest year served by the pageviews API.
pub const PAGEVIEWS_API_FIRST_YEAR: i32 = 2015;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PageviewMode {
    Live,
    #[default]
    Fixture,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDump {
    path: PathBuf,
    date: String,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPageviews {
    #[serde(default)]
    mode: PageviewMode,
    views_fixture: Option<PathBuf>,
    langlinks_fixture: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    rate_limit: Option<f64>,
    retries: Option<u32>,
    backoff_ms: Option<u64>,
    agent: Option<String>,
    access: Option<String>,
    pageviews_url: Option<String>,
    langlinks_url: Option<String>,
    user_agent: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    name: Option<String>,
    min_birth_year: Option<i32>,
    max_birth_year: Option<i32>,
    min_views_exclusive: Option<u64>,
    #[serde(default)]
    require_birth_year: bool,
}

impl RawFilter {
    fn spec(&self) -> FilterSpec {
        FilterSpec {
            min_birth_year: self.min_birth_year,
            max_birth_year: self.max_birth_year,
            min_views_exclusive: self.min_views_exclusive,
            require_birth_year: self.require_birth_year,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExternal {
    name: String,
    file: PathBuf,
    mapping: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawReport {
    #[serde(default)]
    filters: Vec<RawFilter>,
    #[serde(default)]
    externals: Vec<RawExternal>,
    top_n: Option<usize>,
    unmapped_threshold: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawAudit {
    rate: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    languages: Vec<String>,
    universities: PathBuf,
    dictionary_dir: PathBuf,
    output_dir: PathBuf,
    #[serde(default = "default_year")]
    analysis_year: i32,
    #[serde(default)]
    correlation_method: CorrelationMethod,
    #[serde(default)]
    dumps: BTreeMap<String, RawDump>,
    #[serde(default)]
    pageviews: RawPageviews,
    #[serde(default)]
    report: RawReport,
    #[serde(default)]
    audit: RawAudit,
}

fn default_year() -> i32 {
    2017
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedFilter {
    pub name: String,
    pub spec: FilterSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalSpec {
    pub name: String,
    pub file: PathBuf,
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageviewConfig {
    pub mode: PageviewMode,
    pub views_fixture: Option<PathBuf>,
    pub langlinks_fixture: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub live: LiveSettings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub languages: Vec<String>,
    pub dumps: BTreeMap<String, DumpSource>,
    /// Dump paths as written in the config file, used in manifests and
    /// provenance so they do not depend on where the project lives.
    pub dump_paths_as_written: BTreeMap<String, String>,
    pub universities: PathBuf,
    pub dictionary_dir: PathBuf,
    pub output_dir: PathBuf,
    pub analysis_year: i32,
    pub correlation_method: CorrelationMethod,
    pub pageviews: PageviewConfig,
    pub filters: Vec<NamedFilter>,
    pub externals: Vec<ExternalSpec>,
    pub top_n: usize,
    pub unmapped_threshold: f64,
    pub audit_rate: f64,
    pub audit_seed: u64,
    /// SHA-256 of the config file bytes, hex encoded.
    pub config_hash: String,
}

/// Cohorts used when the config lists no filters.
pub fn default_filters() -> Vec<NamedFilter> {
    let f = |name: &str, spec: FilterSpec| NamedFilter {
        name: name.to_string(),
        spec,
    };
    vec![
        f("full dataset", FilterSpec::default()),
        f("1900-2000", FilterSpec::born_between(Some(1900), Some(2000))),
        f("1948-2000", FilterSpec::born_between(Some(1948), Some(2000))),
        f(
            "1948-2000 & >999 views",
            FilterSpec::born_between(Some(1948), Some(2000)).with_min_views_exclusive(999),
        ),
    ]
}

impl PipelineConfig {
    /// Reads, resolves and validates a config, applying environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::load_with_env(path, |k| std::env::var(k).ok())
    }

    pub fn load_with_env(path: &Path, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let bytes = fs::read(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut cfg = Self::parse(&bytes, &base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        if let Some(dir) = env(ENV_CACHE_DIR) {
            cfg.pageviews.cache_dir = PathBuf::from(dir);
        }
        if let Some(rate) = env(ENV_RATE_LIMIT) {
            cfg.pageviews.live.requests_per_second = rate
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("{ENV_RATE_LIMIT}={rate:?} is not a number")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses config text with relative paths resolved against `base`.
    /// Does not validate.
    pub fn parse(bytes: &[u8], base: &Path) -> Result<Self, ConfigError> {
        let text = std::str::from_utf8(bytes).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };

        let dumps = raw
            .dumps
            .iter()
            .map(|(lang, d)| (lang.clone(), DumpSource::new(resolve(&d.path), lang.clone(), d.date.clone())))
            .collect();
        let dump_paths_as_written = raw
            .dumps
            .iter()
            .map(|(lang, d)| (lang.clone(), d.path.to_string_lossy().replace('\\', "/")))
            .collect();

        let p = raw.pageviews;
        let defaults = LiveSettings::default();
        let live = LiveSettings {
            pageviews_url: p.pageviews_url.unwrap_or_else(|| DEFAULT_PAGEVIEWS_URL.to_string()),
            langlinks_url: p.langlinks_url.unwrap_or_else(|| DEFAULT_LANGLINKS_URL.to_string()),
            agent: p.agent.unwrap_or(defaults.agent),
            access: p.access.unwrap_or(defaults.access),
            retries: p.retries.unwrap_or(defaults.retries),
            backoff: p.backoff_ms.map(Duration::from_millis).unwrap_or(defaults.backoff),
            requests_per_second: p.rate_limit.unwrap_or(defaults.requests_per_second),
            user_agent: p.user_agent.unwrap_or(defaults.user_agent),
        };
        let output_dir = resolve(&raw.output_dir);
        let pageviews = PageviewConfig {
            mode: p.mode,
            views_fixture: p.views_fixture.as_deref().map(resolve),
            langlinks_fixture: p.langlinks_fixture.as_deref().map(resolve),
            cache_dir: p
                .cache_dir
                .as_deref()
                .map(resolve)
                .unwrap_or_else(|| output_dir.join("cache")),
            live,
        };

        let filters = if raw.report.filters.is_empty() {
            default_filters()
        } else {
            raw.report
                .filters
                .into_iter()
                .map(|f| {
                    let spec = f.spec();
                    NamedFilter {
                        name: f.name.unwrap_or_else(|| spec.describe()),
                        spec,
                    }
                })
                .collect()
        };
        let externals = raw
            .report
            .externals
            .into_iter()
            .map(|e| ExternalSpec {
                name: e.name,
                file: resolve(&e.file),
                mapping: e.mapping.as_deref().map(resolve),
            })
            .collect();

        Ok(PipelineConfig {
            languages: raw.languages,
            dumps,
            dump_paths_as_written,
            universities: resolve(&raw.universities),
            dictionary_dir: resolve(&raw.dictionary_dir),
            output_dir,
            analysis_year: raw.analysis_year,
            correlation_method: raw.correlation_method,
            pageviews,
            filters,
            externals,
            top_n: raw.report.top_n.unwrap_or(10),
            unmapped_threshold: raw.report.unmapped_threshold.unwrap_or(DEFAULT_UNMAPPED_THRESHOLD),
            audit_rate: raw.audit.rate.unwrap_or(0.05),
            audit_seed: raw.audit.seed.unwrap_or(0),
            config_hash: hex::encode(Sha256::digest(bytes)),
        })
    }

    /// Pre-flight checks that need no pipeline artifacts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.languages.is_empty() {
            return invalid("no languages configured".into());
        }
        for lang in &self.languages {
            if !self.dumps.contains_key(lang) {
                return invalid(format!("language {lang:?} has no [dumps.{lang}] entry"));
            }
            let dict = dictionary_path(&self.dictionary_dir, lang);
            if !dict.is_file() {
                return invalid(format!("language {lang:?} has no dictionary file at {}", dict.display()));
            }
        }
        if let Some(extra) = self.dumps.keys().find(|l| !self.languages.contains(l)) {
            return invalid(format!("dump configured for {extra:?}, which is not in `languages`"));
        }
        match self.pageviews.mode {
            PageviewMode::Live => {
                if self.analysis_year < PAGEVIEWS_API_FIRST_YEAR {
                    return invalid(format!(
                        "analysis_year {} predates the pageviews API ({PAGEVIEWS_API_FIRST_YEAR})",
                        self.analysis_year
                    ));
                }
                if !(self.pageviews.live.requests_per_second > 0.0) {
                    return invalid("pageviews.rate_limit must be positive".into());
                }
            }
            PageviewMode::Fixture => {
                if self.pageviews.views_fixture.is_none() {
                    return invalid("fixture mode needs pageviews.views_fixture".into());
                }
            }
        }
        let mut names = std::collections::BTreeSet::new();
        for f in &self.filters {
            f.spec.validate(&f.name).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !names.insert(f.name.as_str()) {
                return invalid(format!("duplicate filter name {:?}", f.name));
            }
        }
        for e in &self.externals {
            if !names.insert(e.name.as_str()) {
                return invalid(format!("ranking name {:?} is used twice", e.name));
            }
        }
        if !(self.audit_rate > 0.0 && self.audit_rate <= 1.0) {
            return invalid(format!("audit.rate must be in (0, 1], got {}", self.audit_rate));
        }
        if !(0.0..=1.0).contains(&self.unmapped_threshold) {
            return invalid("report.unmapped_threshold must be in [0, 1]".into());
        }
        Ok(())
    }

    /// One-line provenance stamp embedded in report files.
    pub fn provenance(&self) -> String {
        let dumps: Vec<String> = self
            .dumps
            .iter()
            .map(|(lang, d)| format!("{lang}@{}", d.dump_date))
            .collect();
        format!(
            "# config_sha256={} analysis_year={} dumps={} correlation={}",
            self.config_hash,
            self.analysis_year,
            dumps.join(","),
            self.correlation_method.as_str()
        )
    }
}

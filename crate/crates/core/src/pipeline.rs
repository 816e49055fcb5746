//! The resumable subcommands: `ingest`, `extract`, `views`, `report` and
//! `audit`. Each reads the artifacts of the previous step from the output
//! directory and writes its own, so any step can be re-run alone.
//!
//! Output layout:
//!
//! ```text
//! out/ingest/manifest.json
//! out/ingest/redirects/<lang>.tsv
//! out/persons/<lang>/page_<id>_<year>.xml
//! out/extract/dataset.tsv, evidence.tsv, extract_report.json
//! out/views/dataset_enriched.tsv, university_views.tsv, views_flags.tsv
//! out/report/...
//! out/audit/audit_sample.tsv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, Write as _};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alumni::{self, AlumniRecord, DatasetError, Evidence};
use crate::analytics::{self, AnalyticsError, CorrelationMethod, Ranking};
use crate::config::{ConfigError, PageviewMode, PipelineConfig};
use crate::dump::{stream_pages, DumpError, RedirectCollector, RedirectMap, DEFAULT_REDIRECT_CAP};
use crate::pageviews::{
    self, DiskCache, Fixture, HttpTransport, LiveClient, PageviewError, SystemClock, ViewFlag, ViewsService,
};
use crate::person::{self, PersonError};
use crate::registry::{self, dictionary_path, MarkerDictionary, Registry, RegistryError};
use crate::tsv::{self, Table};

pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_PARTIAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Precondition(String),
    #[error("output directory is locked by another run ({0}); remove the file if no run is active")]
    Locked(PathBuf),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Pageviews(#[from] PageviewError),
    #[error(transparent)]
    Person(#[from] PersonError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Precondition(_) | PipelineError::Locked(_) => EXIT_CONFIG,
            _ => EXIT_PARTIAL,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Result of a subcommand that ran to completion.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    /// Some inputs were skipped or left unresolved.
    pub partial: bool,
    pub messages: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.partial {
            EXIT_PARTIAL
        } else {
            EXIT_SUCCESS
        }
    }

    fn note(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        info!("{msg}");
        self.messages.push(msg);
    }

    fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        warn!("{msg}");
        self.messages.push(msg);
        self.partial = true;
    }
}

/// Paths of every artifact under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }
    pub fn root(&self) -> &Path {
        &self.root
    }
    pub fn manifest(&self) -> PathBuf {
        self.root.join("ingest/manifest.json")
    }
    pub fn redirects(&self, lang: &str) -> PathBuf {
        self.root.join("ingest/redirects").join(format!("{lang}.tsv"))
    }
    pub fn unresolvable_redirects(&self, lang: &str) -> PathBuf {
        self.root.join("ingest/redirects").join(format!("{lang}.unresolvable.tsv"))
    }
    pub fn persons(&self, lang: &str) -> PathBuf {
        self.root.join("persons").join(lang)
    }
    pub fn dataset(&self) -> PathBuf {
        self.root.join("extract/dataset.tsv")
    }
    pub fn evidence(&self) -> PathBuf {
        self.root.join("extract/evidence.tsv")
    }
    pub fn extract_report(&self) -> PathBuf {
        self.root.join("extract/extract_report.json")
    }
    pub fn enriched(&self) -> PathBuf {
        self.root.join("views/dataset_enriched.tsv")
    }
    pub fn university_views(&self) -> PathBuf {
        self.root.join("views/university_views.tsv")
    }
    pub fn view_flags(&self) -> PathBuf {
        self.root.join("views/views_flags.tsv")
    }
    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
    pub fn audit_sample(&self) -> PathBuf {
        self.root.join("audit/audit_sample.tsv")
    }
    fn lock(&self) -> PathBuf {
        self.root.join(".wikialumni.lock")
    }
}

/// Exclusive hold on an output directory, released on drop.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(layout: &Layout) -> Result<Self, PipelineError> {
        fs::create_dir_all(layout.root()).map_err(io_err(layout.root()))?;
        let path = layout.lock();
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(OutputLock { path })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageEntry {
    pub dump: String,
    pub dump_date: String,
    pub fingerprint: String,
    pub status: LanguageStatus,
    pub pages: u64,
    pub articles: u64,
    pub redirects: u64,
    pub unresolvable_redirects: u64,
    pub persons: u64,
    pub persons_with_birth_year: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-language ingest record used to resume and to gate `extract`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub languages: BTreeMap<String, LanguageEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Option<Self>, PipelineError> {
        match fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| PipelineError::Precondition(format!("corrupt manifest {}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(path)(e)),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut body = serde_json::to_string_pretty(self).expect("manifest serializes");
        body.push('\n');
        write_atomic(path, body.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn load_dictionaries(cfg: &PipelineConfig) -> Result<BTreeMap<String, MarkerDictionary>, PipelineError> {
    cfg.languages
        .iter()
        .map(|lang| {
            let d = MarkerDictionary::load(&dictionary_path(&cfg.dictionary_dir, lang), lang)?;
            Ok((lang.clone(), d))
        })
        .collect()
}

fn fingerprint(cfg: &PipelineConfig, lang: &str, dict: &MarkerDictionary) -> String {
    let mut h = Sha256::new();
    h.update(cfg.dump_paths_as_written.get(lang).map(String::as_str).unwrap_or("").as_bytes());
    h.update(b"\0");
    h.update(cfg.dumps[lang].dump_date.as_bytes());
    for m in &dict.person_markers {
        h.update(b"\0m");
        h.update(m.as_bytes());
    }
    if let Ok(meta) = fs::metadata(&cfg.dumps[lang].path) {
        h.update(meta.len().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Streams every configured dump, writes person files and redirect maps,
/// and records per-language counts in the manifest. Languages whose
/// manifest entry is complete and unchanged are skipped.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<Outcome, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let _lock = OutputLock::acquire(&layout)?;
    let dicts = load_dictionaries(cfg)?;
    let mut manifest = Manifest::read(&layout.manifest())?.unwrap_or_default();
    let mut outcome = Outcome::default();

    for lang in &cfg.languages {
        let dict = &dicts[lang];
        let fp = fingerprint(cfg, lang, dict);
        if let Some(entry) = manifest.languages.get(lang) {
            if entry.status == LanguageStatus::Complete && entry.fingerprint == fp {
                outcome.note(format!("ingest {lang}: manifest complete, nothing to do"));
                continue;
            }
        }
        let entry = ingest_language(cfg, &layout, lang, dict, fp);
        match entry.status {
            LanguageStatus::Complete => outcome.note(format!(
                "ingest {lang}: {} pages, {} persons ({} with birth year), {} redirects",
                entry.pages, entry.persons, entry.persons_with_birth_year, entry.redirects
            )),
            LanguageStatus::Failed => outcome.warn(format!(
                "ingest {lang} failed: {}",
                entry.error.as_deref().unwrap_or("unknown error")
            )),
        }
        manifest.languages.insert(lang.clone(), entry);
        manifest.write(&layout.manifest())?;
    }
    manifest.languages.retain(|l, _| cfg.languages.contains(l));
    manifest.write(&layout.manifest())?;
    Ok(outcome)
}

fn ingest_language(
    cfg: &PipelineConfig,
    layout: &Layout,
    lang: &str,
    dict: &MarkerDictionary,
    fingerprint: String,
) -> LanguageEntry {
    let source = &cfg.dumps[lang];
    let mut entry = LanguageEntry {
        dump: cfg.dump_paths_as_written.get(lang).cloned().unwrap_or_default(),
        dump_date: source.dump_date.clone(),
        fingerprint,
        status: LanguageStatus::Complete,
        pages: 0,
        articles: 0,
        redirects: 0,
        unresolvable_redirects: 0,
        persons: 0,
        persons_with_birth_year: 0,
        error: None,
    };
    if let Err(e) = ingest_into(layout, source, dict, &mut entry) {
        entry.status = LanguageStatus::Failed;
        entry.error = Some(e.to_string());
    }
    entry
}

fn ingest_into(
    layout: &Layout,
    source: &crate::dump::DumpSource,
    dict: &MarkerDictionary,
    entry: &mut LanguageEntry,
) -> Result<(), PipelineError> {
    let lang = &source.lang;
    let persons_dir = layout.persons(lang);
    if persons_dir.exists() {
        fs::remove_dir_all(&persons_dir).map_err(io_err(&persons_dir))?;
    }
    fs::create_dir_all(&persons_dir).map_err(io_err(&persons_dir))?;

    let mut collector = RedirectCollector::new();
    let mut failure: Option<DumpError> = None;
    let pages = stream_pages(source).map_err(|e| PipelineError::Precondition(e.to_string()))?;
    for page in pages {
        let page = match page {
            Ok(p) => p,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        entry.pages += 1;
        collector.observe(&page);
        if page.is_article() {
            entry.articles += 1;
        }
        if let Some(p) = person::classify_person(page, dict) {
            entry.persons += 1;
            if p.birth_year.is_some() {
                entry.persons_with_birth_year += 1;
            }
            person::persist_person(&p, &persons_dir)?;
        }
    }

    let map = collector.resolve(DEFAULT_REDIRECT_CAP);
    entry.redirects = map.len() as u64;
    entry.unresolvable_redirects = map.unresolvable.len() as u64;
    write_redirects(layout, lang, &map)?;
    match failure {
        Some(e) => Err(PipelineError::Precondition(e.to_string())),
        None => Ok(()),
    }
}

fn write_redirects(layout: &Layout, lang: &str, map: &RedirectMap) -> Result<(), PipelineError> {
    let mut out = Vec::new();
    tsv::write_row(&mut out, &["title", "target"]).expect("in-memory write");
    for (from, to) in &map.resolved {
        tsv::write_row(&mut out, &[from, to]).expect("in-memory write");
    }
    write_atomic(&layout.redirects(lang), &out)?;
    let mut bad = Vec::new();
    tsv::write_row(&mut bad, &["title"]).expect("in-memory write");
    for t in &map.unresolvable {
        tsv::write_row(&mut bad, &[t]).expect("in-memory write");
    }
    write_atomic(&layout.unresolvable_redirects(lang), &bad)
}

fn read_redirects(layout: &Layout, lang: &str) -> Result<RedirectMap, PipelineError> {
    let path = layout.redirects(lang);
    let file = fs::File::open(&path).map_err(io_err(&path))?;
    let mut collector = RedirectCollector::new();
    if let Some(table) = Table::read(BufReader::new(file)).map_err(io_err(&path))? {
        for (_, f) in &table.rows {
            if let (Some(a), Some(b)) = (f.first(), f.get(1)) {
                collector.add_edge(a, b);
            }
        }
    }
    Ok(collector.resolve(DEFAULT_REDIRECT_CAP))
}

fn completed_languages(cfg: &PipelineConfig, layout: &Layout) -> Result<(Vec<String>, Vec<String>), PipelineError> {
    let manifest = Manifest::read(&layout.manifest())?.ok_or_else(|| {
        PipelineError::Precondition(format!(
            "no ingest manifest at {}; run `wikialumni ingest` with this config first",
            layout.manifest().display()
        ))
    })?;
    let mut done = Vec::new();
    let mut missing = Vec::new();
    for lang in &cfg.languages {
        match manifest.languages.get(lang) {
            Some(e) if e.status == LanguageStatus::Complete => done.push(lang.clone()),
            _ => missing.push(lang.clone()),
        }
    }
    Ok((done, missing))
}

fn load_full_registry(cfg: &PipelineConfig, layout: &Layout, langs: &[String]) -> Result<Registry, PipelineError> {
    let mut maps = BTreeMap::new();
    for lang in langs {
        maps.insert(lang.clone(), read_redirects(layout, lang)?);
    }
    Ok(registry::load_registry(&cfg.universities, &maps)?)
}

#[derive(Debug, Clone, Default, Serialize)]
struct ExtractReport {
    persons_read: u64,
    records: u64,
    skipped: Vec<String>,
}

/// Runs alumni matching over all person files and writes the dataset.
pub fn cmd_extract(cfg: &PipelineConfig) -> Result<Outcome, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let _lock = OutputLock::acquire(&layout)?;
    let (langs, missing) = completed_languages(cfg, &layout)?;
    let mut outcome = Outcome::default();
    for lang in &missing {
        outcome.warn(format!("extract: language {lang} has no completed ingest; skipped"));
    }
    let dicts = load_dictionaries(cfg)?;
    let registry = load_full_registry(cfg, &layout, &langs)?;

    let mut records = Vec::new();
    let mut evidence = Vec::new();
    let mut report = ExtractReport::default();
    for lang in &langs {
        let dict = &dicts[lang];
        let dir = layout.persons(lang);
        let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "xml"))
                .collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        files.sort();
        for file in files {
            match person::load_person(&file, dict) {
                Ok(p) => {
                    report.persons_read += 1;
                    for (r, e) in alumni::match_alumni_with_evidence(&p, &registry, dict) {
                        records.push(r);
                        evidence.push(e);
                    }
                }
                Err(e) => {
                    let name = format!("{lang}/{}", file.file_name().and_then(|n| n.to_str()).unwrap_or("?"));
                    outcome.warn(format!("extract: skipped {name}: {e}"));
                    report.skipped.push(name);
                }
            }
        }
    }
    let merged = alumni::merge_records(records);
    report.records = merged.len() as u64;
    alumni::write_dataset(&merged, &layout.dataset(), false)?;
    alumni::write_evidence(&evidence, &layout.evidence())?;
    let mut body = serde_json::to_string_pretty(&report).expect("report serializes");
    body.push('\n');
    write_atomic(&layout.extract_report(), body.as_bytes())?;
    outcome.note(format!(
        "extract: {} persons read, {} records, {} skipped",
        report.persons_read,
        report.records,
        report.skipped.len()
    ));
    Ok(outcome)
}

/// Builds the pageview service the config asks for.
pub fn build_views_service(cfg: &PipelineConfig) -> Result<ViewsService, PipelineError> {
    match cfg.pageviews.mode {
        PageviewMode::Fixture => {
            let mut fixture = Fixture::default();
            if let Some(p) = &cfg.pageviews.views_fixture {
                fixture.load_views(p)?;
            }
            if let Some(p) = &cfg.pageviews.langlinks_fixture {
                fixture.load_langlinks(p)?;
            }
            Ok(ViewsService::fixture(fixture))
        }
        PageviewMode::Live => {
            let transport = HttpTransport::new(&cfg.pageviews.live.user_agent, Duration::from_secs(30));
            let client = LiveClient::new(
                cfg.pageviews.live.clone(),
                Box::new(transport),
                Arc::new(SystemClock::default()),
                DiskCache::new(&cfg.pageviews.cache_dir),
            );
            Ok(ViewsService::live(client))
        }
    }
}

pub fn cmd_views(cfg: &PipelineConfig) -> Result<Outcome, PipelineError> {
    cfg.validate()?;
    let mut service = build_views_service(cfg)?;
    cmd_views_with(cfg, &mut service)
}

/// `views` with a caller-supplied service (used to inject transports).
pub fn cmd_views_with(cfg: &PipelineConfig, service: &mut ViewsService) -> Result<Outcome, PipelineError> {
    let layout = Layout::new(&cfg.output_dir);
    let _lock = OutputLock::acquire(&layout)?;
    if !layout.dataset().is_file() {
        return Err(PipelineError::Precondition(format!(
            "no dataset at {}; run `wikialumni extract` first",
            layout.dataset().display()
        )));
    }
    let records = alumni::read_dataset(&layout.dataset())?;
    let year = cfg.analysis_year;
    let mut outcome = Outcome::default();

    let enriched = pageviews::enrich_records(service, &records, year);
    alumni::write_dataset(&enriched.records, &layout.enriched(), true)?;

    let rows = registry::read_university_rows(&cfg.universities)?;
    let reg = Registry::from_rows(&rows, &BTreeMap::new())?;
    let (totals, uni_flags) = pageviews::university_views(service, &reg, year);
    let mut out = Vec::new();
    tsv::write_row(&mut out, &["university_id", "university_name", "views_total"]).expect("in-memory write");
    for (id, total) in &totals {
        let total = total.map(|t| t.to_string()).unwrap_or_default();
        tsv::write_row(&mut out, &[id.to_string().as_str(), reg.canonical_name(*id).unwrap_or(""), &total])
            .expect("in-memory write");
    }
    write_atomic(&layout.university_views(), &out)?;

    let mut flags: Vec<ViewFlag> = enriched.flags.clone();
    flags.extend(uni_flags);
    flags.sort();
    flags.dedup();
    let mut fl = Vec::new();
    tsv::write_row(&mut fl, &["kind", "lang", "title", "detail"]).expect("in-memory write");
    for f in &flags {
        tsv::write_row(&mut fl, &[f.kind.as_str(), &f.lang, &f.title, &f.detail]).expect("in-memory write");
    }
    write_atomic(&layout.view_flags(), &fl)?;

    let unresolved = flags
        .iter()
        .filter(|f| f.kind == pageviews::FlagKind::Unresolved)
        .count();
    let no_data = flags.len() - unresolved;
    outcome.note(format!(
        "views: {} records enriched for {year}, {} pages without data, {} requests issued",
        enriched.records.len(),
        no_data,
        service.requests_issued()
    ));
    if unresolved > 0 {
        outcome.warn(format!("views: {unresolved} lookups unresolved; see {}", layout.view_flags().display()));
    }
    Ok(outcome)
}

fn read_university_views(path: &Path) -> Result<BTreeMap<u32, Option<u64>>, PipelineError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = BTreeMap::new();
    if let Some(t) = Table::read(BufReader::new(file)).map_err(io_err(path))? {
        for (_, f) in &t.rows {
            let Some(id) = f.first().and_then(|s| s.parse::<u32>().ok()) else {
                continue;
            };
            out.insert(id, f.get(2).and_then(|s| s.parse::<u64>().ok()));
        }
    }
    Ok(out)
}

fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "NA".to_string())
}

/// Top `n` records by views (ties by person link, then university id).
pub fn top_alumni(records: &[AlumniRecord], n: usize) -> Vec<AlumniRecord> {
    let mut v: Vec<AlumniRecord> = records.iter().filter(|r| r.views_total.is_some()).cloned().collect();
    v.sort_by(|a, b| {
        b.views_total
            .cmp(&a.views_total)
            .then_with(|| a.person_link.cmp(&b.person_link))
            .then_with(|| a.university_id.cmp(&b.university_id))
    });
    v.truncate(n);
    v
}

/// Statistics, rankings, correlation matrices and the university-page
/// comparison for every configured filter and external ranking.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<Outcome, PipelineError> {
    for f in &cfg.filters {
        f.spec
            .validate(&f.name)
            .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;
    }
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let _lock = OutputLock::acquire(&layout)?;
    if !layout.enriched().is_file() {
        return Err(PipelineError::Precondition(format!(
            "no enriched dataset at {}; run `wikialumni views` first",
            layout.enriched().display()
        )));
    }
    let records = alumni::read_dataset(&layout.enriched())?;
    let rows = registry::read_university_rows(&cfg.universities)?;
    let reg = Registry::from_rows(&rows, &BTreeMap::new())?;
    let uni_totals = read_university_views(&layout.university_views())?;
    let dir = layout.report_dir();
    let prov = cfg.provenance();
    let mut outcome = Outcome::default();

    // statistics per cohort
    let mut stats_tsv = format!("{prov}\nfilter\tn_alumni\tn_universities\tn_with_views\tmean_views\tmedian_views\tstddev_views\n");
    let mut stats_txt = format!("{prov}\n{:<28} {:>10} {:>12} {:>14} {:>14} {:>16}\n", "Dataset", "Alumni", "Universities", "Mean views", "Median views", "Std. dev. views");
    let mut filter_rankings = Vec::new();
    let mut alumni_tsv = format!("{prov}\nfilter\tposition\tuniversity_name\tperson_link\tbirth_year\tviews_total\n");
    for nf in &cfg.filters {
        let subset = analytics::apply_filter(&records, &nf.spec);
        let s = analytics::describe(&subset);
        let _ = writeln!(
            stats_tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            tsv::clean(&nf.name),
            s.n_alumni,
            s.n_universities,
            s.n_with_views,
            fmt_opt(s.mean_views),
            fmt_opt(s.median_views),
            fmt_opt(s.stddev_views)
        );
        let _ = writeln!(
            stats_txt,
            "{:<28} {:>10} {:>12} {:>14} {:>14} {:>16}",
            nf.name,
            s.n_alumni,
            s.n_universities,
            fmt_opt(s.mean_views),
            fmt_opt(s.median_views),
            fmt_opt(s.stddev_views)
        );
        for (i, r) in top_alumni(&subset, cfg.top_n).iter().enumerate() {
            let _ = writeln!(
                alumni_tsv,
                "{}\t{}\t{}\t{}\t{}\t{}",
                tsv::clean(&nf.name),
                i + 1,
                tsv::clean(&r.university_name),
                tsv::clean(&r.person_link),
                r.birth_year.map(|y| y.to_string()).unwrap_or_default(),
                r.views_total.unwrap_or(0)
            );
        }
        let mut ranking = analytics::rank_universities(&records, &nf.spec);
        ranking.label = nf.name.clone();
        filter_rankings.push(ranking);
    }
    write_text(&dir.join("stats.tsv"), &stats_tsv)?;
    write_text(&dir.join("stats.txt"), &stats_txt)?;
    write_text(&dir.join("top_alumni.tsv"), &alumni_tsv)?;

    let mut externals = Vec::new();
    for ext in &cfg.externals {
        let loaded = analytics::load_external_ranking(
            &ext.file,
            ext.mapping.as_deref(),
            &ext.name,
            &reg,
            cfg.unmapped_threshold,
        )?;
        for name in &loaded.unmapped {
            outcome.note(format!("report: {} name not mapped to a university: {name}", ext.name));
        }
        externals.push(loaded.ranking);
    }
    let uni_ranking = analytics::rank_by_university_views(&reg, &uni_totals);

    let rankings_dir = dir.join("rankings");
    for r in filter_rankings.iter().chain(&externals).chain(std::iter::once(&uni_ranking)) {
        let body = format!("{prov}\n# ranking={} kind={}\n{}", r.label, r.score_kind.as_str(), analytics::render_ranking_tsv(r));
        write_text(&rankings_dir.join(format!("{}.tsv", slug(&r.label))), &body)?;
    }

    let mut columns: Vec<&Ranking> = filter_rankings.iter().collect();
    columns.extend(externals.iter());
    columns.push(&uni_ranking);
    write_text(
        &dir.join("top_universities.tsv"),
        &format!("{prov}\n{}", analytics::render_top_n(&columns, cfg.top_n)),
    )?;

    let mut compared: Vec<Ranking> = filter_rankings.clone();
    compared.extend(externals.iter().cloned());
    if compared.len() >= 2 {
        let m = analytics::correlation_matrix(&compared, cfg.correlation_method)?;
        for (i, j, e) in &m.errors {
            outcome.note(format!("report: correlation {} vs {} unavailable: {e}", m.labels[*i], m.labels[*j]));
        }
        let head = format!("{prov}\n# method={}\n", m.method.as_str());
        write_text(&dir.join("matrix.tsv"), &format!("{head}{}", m.render_tsv()))?;
        write_text(&dir.join("matrix.txt"), &format!("{head}{}", m.render_lower_triangular()))?;
    }

    if let Some(full) = filter_rankings.first() {
        let mut cmp = format!("{prov}\nalumni_ranking\tuniversity_ranking\tmethod\tcoefficient\tn\n");
        for method in [CorrelationMethod::Spearman, CorrelationMethod::PearsonOnScores] {
            match analytics::correlate(full, &uni_ranking, method) {
                Ok(c) => {
                    let _ = writeln!(cmp, "{}\t{}\t{}\t{:.6}\t{}", full.label, uni_ranking.label, method.as_str(), c.coefficient, c.n);
                }
                Err(e) => {
                    let _ = writeln!(cmp, "{}\t{}\t{}\tNA\t0", full.label, uni_ranking.label, method.as_str());
                    outcome.note(format!("report: university-page comparison ({}) unavailable: {e}", method.as_str()));
                }
            }
        }
        write_text(&dir.join("university_vs_alumni.tsv"), &cmp)?;
    }
    outcome.note(format!(
        "report: {} cohorts, {} external rankings written to {}",
        cfg.filters.len(),
        externals.len(),
        dir.display()
    ));
    Ok(outcome)
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_atomic(path, text.as_bytes())
}

/// Seeded sample of dataset rows, with the sentence and trigger that
/// produced each, for manual review.
pub fn cmd_audit(cfg: &PipelineConfig) -> Result<Outcome, PipelineError> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output_dir);
    let _lock = OutputLock::acquire(&layout)?;
    let source = if layout.enriched().is_file() {
        layout.enriched()
    } else if layout.dataset().is_file() {
        layout.dataset()
    } else {
        return Err(PipelineError::Precondition("no dataset; run `wikialumni extract` first".into()));
    };
    let records = alumni::read_dataset(&source)?;
    let evidence: Vec<Evidence> = if layout.evidence().is_file() {
        alumni::read_evidence(&layout.evidence())?
    } else {
        Vec::new()
    };
    let rows = analytics::join_evidence(&records, &evidence);
    let sample = analytics::audit_sample(&rows, cfg.audit_rate, cfg.audit_seed)?;
    analytics::write_audit_sample(&sample, &layout.audit_sample())?;
    let mut outcome = Outcome::default();
    outcome.note(format!(
        "audit: {} of {} records sampled (rate {}, seed {})",
        sample.len(),
        rows.len(),
        cfg.audit_rate,
        cfg.audit_seed
    ));
    Ok(outcome)
}

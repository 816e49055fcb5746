//! Cohort filters, descriptive statistics, university rankings and rank
//! correlation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alumni::{AlumniRecord, Evidence};
use crate::registry::Registry;
use crate::tsv::{self, Table};

/// Default share of unmapped names tolerated in an external ranking.
pub const DEFAULT_UNMAPPED_THRESHOLD: f64 = 0.2;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("invalid filter {label:?}: {message}")]
    InvalidFilter { label: String, message: String },
    #[error("rankings share only {n} entities; at least 3 are required")]
    InsufficientOverlap { n: usize },
    #[error("correlation undefined: {0} has no variance over the shared entities")]
    Degenerate(String),
    #[error("a correlation matrix needs at least 2 rankings, got {0}")]
    TooFewRankings(usize),
    #[error("audit rate must be in (0, 1], got {0}")]
    InvalidRate(f64),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },
    #[error("external ranking {name:?}: {unmapped} of {total} names unmapped (threshold {threshold:.0}%): {names:?}")]
    TooManyUnmapped {
        name: String,
        unmapped: usize,
        total: usize,
        threshold: f64,
        names: Vec<String>,
    },
}

/// Cohort restriction on birth year and views. `min_views_exclusive = 999`
/// keeps records with at least 1000 views.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default)]
    pub min_birth_year: Option<i32>,
    #[serde(default)]
    pub max_birth_year: Option<i32>,
    #[serde(default)]
    pub min_views_exclusive: Option<u64>,
    #[serde(default)]
    pub require_birth_year: bool,
}

impl FilterSpec {
    pub fn born_between(min: Option<i32>, max: Option<i32>) -> Self {
        FilterSpec {
            min_birth_year: min,
            max_birth_year: max,
            ..Default::default()
        }
    }

    pub fn with_min_views_exclusive(mut self, v: u64) -> Self {
        self.min_views_exclusive = Some(v);
        self
    }

    pub fn validate(&self, label: &str) -> Result<(), AnalyticsError> {
        if let (Some(lo), Some(hi)) = (self.min_birth_year, self.max_birth_year) {
            if lo > hi {
                return Err(AnalyticsError::InvalidFilter {
                    label: label.to_string(),
                    message: format!("min_birth_year {lo} exceeds max_birth_year {hi}"),
                });
            }
        }
        Ok(())
    }

    fn needs_year(&self) -> bool {
        self.require_birth_year || self.min_birth_year.is_some() || self.max_birth_year.is_some()
    }

    pub fn matches(&self, r: &AlumniRecord) -> bool {
        if self.needs_year() {
            let Some(y) = r.birth_year else {
                return false;
            };
            if self.min_birth_year.is_some_and(|lo| y < lo) || self.max_birth_year.is_some_and(|hi| y > hi) {
                return false;
            }
        }
        if let Some(min) = self.min_views_exclusive {
            match r.views_total {
                Some(v) if v > min => {}
                _ => return false,
            }
        }
        true
    }

    /// Short human label, e.g. `1948-2000 & >999 views`.
    pub fn describe(&self) -> String {
        let years = match (self.min_birth_year, self.max_birth_year) {
            (None, None) if self.require_birth_year => Some("known birth year".to_string()),
            (None, None) => None,
            (Some(lo), Some(hi)) => Some(format!("{lo}-{hi}")),
            (Some(lo), None) => Some(format!("born {lo} or later")),
            (None, Some(hi)) => Some(format!("born {hi} or earlier")),
        };
        let views = self.min_views_exclusive.map(|v| format!(">{v} views"));
        match (years, views) {
            (None, None) => "full dataset".to_string(),
            (Some(y), None) => y,
            (None, Some(v)) => v,
            (Some(y), Some(v)) => format!("{y} & {v}"),
        }
    }
}

pub fn apply_filter(records: &[AlumniRecord], f: &FilterSpec) -> Vec<AlumniRecord> {
    records.iter().filter(|r| f.matches(r)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptiveStats {
    pub n_alumni: usize,
    pub n_universities: usize,
    /// Records that carry a view count; the moments are computed over these.
    pub n_with_views: usize,
    pub mean_views: Option<f64>,
    pub median_views: Option<f64>,
    pub stddev_views: Option<f64>,
}

/// Mean, median (average of the two middle values for even counts) and
/// population standard deviation of `views_total`. Moments are `None` when
/// no record has views.
pub fn describe(records: &[AlumniRecord]) -> DescriptiveStats {
    let n_universities = records.iter().map(|r| r.university_id).collect::<BTreeSet<_>>().len();
    let mut views: Vec<u64> = records.iter().filter_map(|r| r.views_total).collect();
    views.sort_unstable();
    let n = views.len();
    let (mean, median, stddev) = if n == 0 {
        (None, None, None)
    } else {
        let sum: u128 = views.iter().map(|&v| v as u128).sum();
        let mean = sum as f64 / n as f64;
        let median = if n % 2 == 1 {
            views[n / 2] as f64
        } else {
            (views[n / 2 - 1] as f64 + views[n / 2] as f64) / 2.0
        };
        let var = views.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        (Some(mean), Some(median), Some(var.sqrt()))
    };
    DescriptiveStats {
        n_alumni: records.len(),
        n_universities,
        n_with_views: n,
        mean_views: mean,
        median_views: median,
        stddev_views: stddev,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    AlumniViewSum,
    UniversityPageViews,
    External,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::AlumniViewSum => "alumni_view_sum",
            ScoreKind::UniversityPageViews => "university_page_views",
            ScoreKind::External => "external",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Views(u64),
    External(f64),
}

impl Score {
    pub fn value(self) -> f64 {
        match self {
            Score::Views(v) => v as f64,
            Score::External(x) => x,
        }
    }

    fn compare(self, other: Score) -> Ordering {
        match (self, other) {
            (Score::Views(a), Score::Views(b)) => a.cmp(&b),
            (a, b) => a.value().total_cmp(&b.value()),
        }
    }
}

impl std::fmt::Display for Score {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Score::Views(v) => write!(f, "{v}"),
            Score::External(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub university_id: u32,
    pub name: String,
    pub score: Score,
}

/// Entries sorted by score descending, ties by name ascending, then id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub label: String,
    pub score_kind: ScoreKind,
    pub filter: Option<FilterSpec>,
    pub entries: Vec<RankEntry>,
}

impl Ranking {
    pub fn new(label: impl Into<String>, score_kind: ScoreKind, filter: Option<FilterSpec>, mut entries: Vec<RankEntry>) -> Self {
        entries.sort_by(|a, b| {
            b.score
                .compare(a.score)
                .then_with(|| a.name.cmp(&b.name))
                .then_with(|| a.university_id.cmp(&b.university_id))
        });
        Ranking {
            label: label.into(),
            score_kind,
            filter,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.university_id).collect()
    }

    fn scores(&self) -> HashMap<u32, f64> {
        self.entries.iter().map(|e| (e.university_id, e.score.value())).collect()
    }
}

/// Sum of alumni `views_total` per university over the records passing `f`.
pub fn rank_universities(records: &[AlumniRecord], f: &FilterSpec) -> Ranking {
    let mut sums: BTreeMap<u32, (String, u64)> = BTreeMap::new();
    for r in records.iter().filter(|r| f.matches(r)) {
        let e = sums.entry(r.university_id).or_insert_with(|| (r.university_name.clone(), 0));
        if e.0.is_empty() || r.university_name < e.0 {
            e.0 = r.university_name.clone();
        }
        e.1 += r.views_total.unwrap_or(0);
    }
    let entries = sums
        .into_iter()
        .map(|(id, (name, total))| RankEntry {
            university_id: id,
            name,
            score: Score::Views(total),
        })
        .collect();
    Ranking::new(f.describe(), ScoreKind::AlumniViewSum, Some(f.clone()), entries)
}

/// Ranking of universities by the views of their own pages.
pub fn rank_by_university_views(registry: &Registry, totals: &BTreeMap<u32, Option<u64>>) -> Ranking {
    let entries = totals
        .iter()
        .filter_map(|(&id, total)| {
            Some(RankEntry {
                university_id: id,
                name: registry.canonical_name(id).unwrap_or_default().to_string(),
                score: Score::Views((*total)?),
            })
        })
        .collect();
    Ranking::new("university pages", ScoreKind::UniversityPageViews, None, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMethod {
    /// Pearson correlation of average ranks.
    #[default]
    Spearman,
    /// Pearson correlation of the raw scores.
    PearsonOnScores,
}

impl CorrelationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CorrelationMethod::Spearman => "spearman",
            CorrelationMethod::PearsonOnScores => "pearson_on_scores",
        }
    }
}

impl std::str::FromStr for CorrelationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spearman" => Ok(CorrelationMethod::Spearman),
            "pearson" | "pearson_on_scores" => Ok(CorrelationMethod::PearsonOnScores),
            other => Err(format!("unknown correlation method {other:?} (spearman | pearson_on_scores)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub coefficient: f64,
    /// Size of the entity intersection the coefficient was computed on.
    pub n: usize,
    pub method: CorrelationMethod,
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Correlates two rankings over the universities present in both.
pub fn correlate(a: &Ranking, b: &Ranking, method: CorrelationMethod) -> Result<Correlation, AnalyticsError> {
    let sa = a.scores();
    let sb = b.scores();
    let mut shared: Vec<u32> = sa.keys().filter(|k| sb.contains_key(k)).copied().collect();
    shared.sort_unstable();
    if shared.len() < 3 {
        return Err(AnalyticsError::InsufficientOverlap { n: shared.len() });
    }
    let mut x: Vec<f64> = shared.iter().map(|k| sa[k]).collect();
    let mut y: Vec<f64> = shared.iter().map(|k| sb[k]).collect();
    if method == CorrelationMethod::Spearman {
        x = average_ranks(&x);
        y = average_ranks(&y);
    }
    let (x_var, y_var) = (x.iter().any(|v| *v != x[0]), y.iter().any(|v| *v != y[0]));
    if !x_var {
        return Err(AnalyticsError::Degenerate(a.label.clone()));
    }
    if !y_var {
        return Err(AnalyticsError::Degenerate(b.label.clone()));
    }
    let coefficient = pearson(&x, &y).ok_or_else(|| AnalyticsError::Degenerate(a.label.clone()))?;
    Ok(Correlation {
        coefficient,
        n: shared.len(),
        method,
    })
}

/// Symmetric matrix with unit diagonal. Cells that cannot be computed are
/// `None` and carry the reason in `errors`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub method: CorrelationMethod,
    pub cells: Vec<Vec<Option<f64>>>,
    pub overlap: Vec<Vec<usize>>,
    pub errors: Vec<(usize, usize, String)>,
}

pub fn correlation_matrix(rankings: &[Ranking], method: CorrelationMethod) -> Result<CorrelationMatrix, AnalyticsError> {
    let k = rankings.len();
    if k < 2 {
        return Err(AnalyticsError::TooFewRankings(k));
    }
    let mut cells = vec![vec![None; k]; k];
    let mut overlap = vec![vec![0usize; k]; k];
    let mut errors = Vec::new();
    for i in 0..k {
        cells[i][i] = Some(1.0);
        overlap[i][i] = rankings[i].len();
        for j in 0..i {
            match correlate(&rankings[i], &rankings[j], method) {
                Ok(c) => {
                    cells[i][j] = Some(c.coefficient);
                    cells[j][i] = Some(c.coefficient);
                    overlap[i][j] = c.n;
                    overlap[j][i] = c.n;
                }
                Err(e) => errors.push((i, j, e.to_string())),
            }
        }
    }
    Ok(CorrelationMatrix {
        labels: rankings.iter().map(|r| r.label.clone()).collect(),
        method,
        cells,
        overlap,
        errors,
    })
}

impl CorrelationMatrix {
    /// Lower-triangular text table with two decimals; `NA` marks
    /// unavailable cells.
    pub fn render_lower_triangular(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push('\t');
            out.push_str(&tsv::clean(l));
        }
        out.push('\n');
        for (i, row) in self.cells.iter().enumerate() {
            out.push_str(&tsv::clean(&self.labels[i]));
            for (j, cell) in row.iter().enumerate() {
                out.push('\t');
                if j <= i {
                    match cell {
                        Some(v) => {
                            let _ = write!(out, "{v:.2}");
                        }
                        None => out.push_str("NA"),
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// Full matrix as TSV with six decimals.
    pub fn render_tsv(&self) -> String {
        let mut out = String::from("ranking");
        for l in &self.labels {
            out.push('\t');
            out.push_str(&tsv::clean(l));
        }
        out.push('\n');
        for (i, row) in self.cells.iter().enumerate() {
            out.push_str(&tsv::clean(&self.labels[i]));
            for cell in row {
                out.push('\t');
                match cell {
                    Some(v) => {
                        let _ = write!(out, "{v:.6}");
                    }
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// An external ranking plus the names that could not be aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalRanking {
    pub ranking: Ranking,
    pub unmapped: Vec<String>,
}

fn parse_rank(raw: &str) -> Option<f64> {
    let raw = raw.trim().trim_start_matches('=');
    if let Some((lo, hi)) = raw.split_once('-') {
        let (lo, hi): (f64, f64) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
        return Some((lo + hi) / 2.0);
    }
    raw.parse().ok()
}

/// Loads a third-party ranking. The file is tab-separated with a `name`
/// column and either a `score` column (higher is better) or a `rank` column
/// (1 is best; bands like `101-150` take their midpoint). Ranks are stored
/// as negated scores so that the usual descending order applies.
///
/// Names are aligned through the optional mapping file (`external_name`,
/// `university_id`) and otherwise by exact canonical name.
pub fn load_external_ranking(
    file: &Path,
    mapping: Option<&Path>,
    name: &str,
    registry: &Registry,
    unmapped_threshold: f64,
) -> Result<ExternalRanking, AnalyticsError> {
    let table = read_table(file)?;
    let bad = |message: String| AnalyticsError::BadFile {
        path: file.to_path_buf(),
        message,
    };
    let c_name = table.column("name").ok_or_else(|| bad("missing column \"name\"".into()))?;
    let (c_val, is_rank) = match (table.column("score"), table.column("rank")) {
        (Some(c), _) => (c, false),
        (None, Some(c)) => (c, true),
        (None, None) => return Err(bad("needs a \"score\" or \"rank\" column".into())),
    };

    let mut aliases: HashMap<String, u32> = HashMap::new();
    if let Some(map_path) = mapping {
        let mt = read_table(map_path)?;
        let mbad = |message: String| AnalyticsError::BadFile {
            path: map_path.to_path_buf(),
            message,
        };
        let c_ext = mt.column("external_name").ok_or_else(|| mbad("missing column \"external_name\"".into()))?;
        let c_id = mt.column("university_id").ok_or_else(|| mbad("missing column \"university_id\"".into()))?;
        for (line, f) in &mt.rows {
            let id_raw = f.get(c_id).map(|s| s.trim()).unwrap_or("");
            let id = id_raw
                .parse()
                .map_err(|_| mbad(format!("line {line}: invalid university_id {id_raw:?}")))?;
            aliases.insert(f.get(c_ext).map(|s| s.trim().to_string()).unwrap_or_default(), id);
        }
    }

    let mut entries = Vec::new();
    let mut unmapped = Vec::new();
    let mut seen = BTreeSet::new();
    let total = table.rows.len();
    for (line, f) in &table.rows {
        let ext_name = f.get(c_name).map(|s| s.trim()).unwrap_or("").to_string();
        let raw = f.get(c_val).map(String::as_str).unwrap_or("");
        let value = parse_rank(raw).ok_or_else(|| bad(format!("line {line}: invalid value {raw:?}")))?;
        let id = aliases
            .get(&ext_name)
            .copied()
            .filter(|id| registry.get(*id).is_some())
            .or_else(|| registry.find_by_name(&ext_name));
        match id {
            Some(id) if seen.insert(id) => entries.push(RankEntry {
                university_id: id,
                name: registry.canonical_name(id).unwrap_or_default().to_string(),
                score: Score::External(if is_rank { -value } else { value }),
            }),
            Some(_) => unmapped.push(format!("{ext_name} (duplicate)")),
            None => unmapped.push(ext_name),
        }
    }
    if total > 0 && unmapped.len() as f64 > unmapped_threshold * total as f64 {
        return Err(AnalyticsError::TooManyUnmapped {
            name: name.to_string(),
            unmapped: unmapped.len(),
            total,
            threshold: unmapped_threshold * 100.0,
            names: unmapped,
        });
    }
    Ok(ExternalRanking {
        ranking: Ranking::new(name, ScoreKind::External, None, entries),
        unmapped,
    })
}

fn read_table(path: &Path) -> Result<Table, AnalyticsError> {
    let file = fs::File::open(path).map_err(|source| AnalyticsError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Table::read(BufReader::new(file))
        .map_err(|source| AnalyticsError::Read {
            path: path.to_path_buf(),
            source,
        })?
        .ok_or_else(|| AnalyticsError::BadFile {
            path: path.to_path_buf(),
            message: "empty file".into(),
        })
}

/// A record as presented to a manual reviewer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRow {
    pub person_link: String,
    pub lang: String,
    pub university_id: u32,
    pub university_name: String,
    pub trigger: String,
    pub sentence: String,
}

/// Attaches the firing sentence and trigger to each record. Records without
/// evidence keep empty fields.
pub fn join_evidence(records: &[AlumniRecord], evidence: &[Evidence]) -> Vec<AuditRow> {
    let index: HashMap<(u32, &str, &str), &Evidence> = evidence
        .iter()
        .map(|e| ((e.university_id, e.person_link.as_str(), e.lang.as_str()), e))
        .collect();
    records
        .iter()
        .map(|r| {
            let ev = index.get(&(r.university_id, r.person_link.as_str(), r.lang.as_str()));
            AuditRow {
                person_link: r.person_link.clone(),
                lang: r.lang.clone(),
                university_id: r.university_id,
                university_name: r.university_name.clone(),
                trigger: ev.map(|e| e.trigger.clone()).unwrap_or_default(),
                sentence: ev.map(|e| e.sentence.clone()).unwrap_or_default(),
            }
        })
        .collect()
}

/// Keeps each row independently with probability `rate`, using a ChaCha8
/// stream seeded with `seed`.
pub fn audit_sample(rows: &[AuditRow], rate: f64, seed: u64) -> Result<Vec<AuditRow>, AnalyticsError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(AnalyticsError::InvalidRate(rate));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rows
        .iter()
        .filter(|_| rng.random::<f64>() < rate)
        .cloned()
        .collect())
}

pub fn write_audit_sample(rows: &[AuditRow], path: &Path) -> Result<(), AnalyticsError> {
    let mut out = Vec::new();
    let header = ["person_link", "lang", "university_id", "university_name", "trigger", "sentence", "verdict"];
    tsv::write_row(&mut out, &header).expect("in-memory write");
    for r in rows {
        let id = r.university_id.to_string();
        let fields = [
            r.person_link.as_str(),
            r.lang.as_str(),
            id.as_str(),
            r.university_name.as_str(),
            r.trigger.as_str(),
            r.sentence.as_str(),
            "",
        ];
        tsv::write_row(&mut out, &fields).expect("in-memory write");
    }
    write_file(path, &out)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), AnalyticsError> {
    let err = |source| AnalyticsError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(err)?;
    }
    fs::write(path, bytes).map_err(err)
}

/// Side-by-side top-`n` listing of several rankings, one column each.
pub fn render_top_n(rankings: &[&Ranking], n: usize) -> String {
    let mut out = String::from("rank");
    for r in rankings {
        out.push('\t');
        out.push_str(&tsv::clean(&r.label));
    }
    out.push('\n');
    for i in 0..n {
        let _ = write!(out, "{}", i + 1);
        for r in rankings {
            out.push('\t');
            if let Some(e) = r.entries.get(i) {
                out.push_str(&tsv::clean(&e.name));
            }
        }
        out.push('\n');
    }
    out
}

/// Full ranking as TSV: position, id, name, score.
pub fn render_ranking_tsv(r: &Ranking) -> String {
    let mut out = String::from("position\tuniversity_id\tuniversity_name\tscore\n");
    for (i, e) in r.entries.iter().enumerate() {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", i + 1, e.university_id, tsv::clean(&e.name), e.score);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(uni: u32, person: &str, year: Option<i32>, views: Option<u64>) -> AlumniRecord {
        AlumniRecord {
            university_id: uni,
            university_name: format!("U{uni}"),
            person_link: person.into(),
            person_link_en: None,
            birth_year: year,
            lang: "en".into(),
            views_total: views,
        }
    }

    fn ranking(label: &str, scores: &[(u32, f64)]) -> Ranking {
        Ranking::new(
            label,
            ScoreKind::External,
            None,
            scores
                .iter()
                .map(|&(id, s)| RankEntry {
                    university_id: id,
                    name: format!("U{id}"),
                    score: Score::External(s),
                })
                .collect(),
        )
    }

    #[test]
    fn empty_filter_is_identity() {
        let rs = vec![rec(1, "a", None, None), rec(2, "b", Some(1900), Some(5))];
        assert_eq!(apply_filter(&rs, &FilterSpec::default()), rs);
    }

    #[test]
    fn views_threshold_is_strict() {
        let f = FilterSpec::default().with_min_views_exclusive(999);
        assert!(!f.matches(&rec(1, "a", None, Some(999))));
        assert!(f.matches(&rec(1, "a", None, Some(1000))));
        assert!(!f.matches(&rec(1, "a", None, None)));
    }

    #[test]
    fn year_bounds_drop_unknown_years() {
        let f = FilterSpec::born_between(Some(1948), None);
        assert!(!f.matches(&rec(1, "a", None, Some(1))));
        assert!(f.matches(&rec(1, "a", Some(1948), Some(1))));
        assert!(!f.matches(&rec(1, "a", Some(1947), Some(1))));
        let req = FilterSpec {
            require_birth_year: true,
            ..Default::default()
        };
        assert!(!req.matches(&rec(1, "a", None, Some(1))));
    }

    #[test]
    fn filter_validation() {
        assert!(FilterSpec::born_between(Some(2000), Some(1900)).validate("x").is_err());
        assert!(FilterSpec::born_between(Some(1900), Some(2000)).validate("x").is_ok());
    }

    #[test]
    fn filter_labels() {
        assert_eq!(FilterSpec::default().describe(), "full dataset");
        assert_eq!(
            FilterSpec::born_between(Some(1948), Some(2000)).with_min_views_exclusive(999).describe(),
            "1948-2000 & >999 views"
        );
    }

    #[test]
    fn describe_small() {
        let rs: Vec<_> = [1, 2, 3].iter().map(|&v| rec(1, "p", None, Some(v))).collect();
        let s = describe(&rs);
        assert_eq!(s.mean_views, Some(2.0));
        assert_eq!(s.median_views, Some(2.0));
        assert!((s.stddev_views.unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn describe_single_and_empty() {
        let s = describe(&[rec(1, "p", None, Some(10))]);
        assert_eq!(s.stddev_views, Some(0.0));
        let e = describe(&[]);
        assert_eq!((e.n_alumni, e.mean_views, e.median_views, e.stddev_views), (0, None, None, None));
    }

    #[test]
    fn even_median_averages_middle_pair() {
        let rs: Vec<_> = [1, 2, 10, 20].iter().map(|&v| rec(1, "p", None, Some(v))).collect();
        assert_eq!(describe(&rs).median_views, Some(6.0));
    }

    #[test]
    fn ranking_order_and_ties() {
        let rs = vec![
            rec(1, "a", None, Some(10)),
            rec(1, "b", None, Some(20)),
            rec(2, "c", None, Some(25)),
        ];
        let r = rank_universities(&rs, &FilterSpec::default());
        assert_eq!(r.ids(), vec![1, 2]);
        assert_eq!(r.entries[0].score, Score::Views(30));
        assert!(rank_universities(&[], &FilterSpec::default()).is_empty());

        let tie = vec![rec(9, "a", None, Some(5)), rec(3, "b", None, Some(5))];
        let mut t = tie.clone();
        t[0].university_name = "Alpha".into();
        t[1].university_name = "Beta".into();
        assert_eq!(rank_universities(&t, &FilterSpec::default()).ids(), vec![9, 3]);
    }

    #[test]
    fn spearman_oracle_values() {
        // ranks a = (1,2,3,4), b = (2,1,4,3), expressed as descending scores
        let a = ranking("a", &[(1, 4.0), (2, 3.0), (3, 2.0), (4, 1.0)]);
        let b = ranking("b", &[(1, 3.0), (2, 4.0), (3, 1.0), (4, 2.0)]);
        let c = correlate(&a, &b, CorrelationMethod::Spearman).unwrap();
        assert!((c.coefficient - 0.6).abs() < 1e-9);
        assert_eq!(c.n, 4);
        assert!((correlate(&a, &a, CorrelationMethod::Spearman).unwrap().coefficient - 1.0).abs() < 1e-12);
        let rev = ranking("r", &[(1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)]);
        assert!((correlate(&a, &rev, CorrelationMethod::Spearman).unwrap().coefficient + 1.0).abs() < 1e-12);
    }

    #[test]
    fn small_overlap_refused() {
        let a = ranking("a", &[(1, 1.0), (2, 2.0), (3, 3.0)]);
        let b = ranking("b", &[(1, 1.0), (2, 2.0), (9, 3.0)]);
        assert!(matches!(
            correlate(&a, &b, CorrelationMethod::Spearman),
            Err(AnalyticsError::InsufficientOverlap { n: 2 })
        ));
    }

    #[test]
    fn ties_get_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn matrix_with_duplicate() {
        let a = ranking("a", &[(1, 4.0), (2, 3.0), (3, 2.0), (4, 1.0)]);
        let m = correlation_matrix(&[a.clone(), a], CorrelationMethod::Spearman).unwrap();
        assert_eq!(m.cells, vec![vec![Some(1.0), Some(1.0)], vec![Some(1.0), Some(1.0)]]);
        let text = m.render_lower_triangular();
        assert_eq!(text, "\ta\ta\na\t1.00\t\na\t1.00\t1.00\n");
    }

    #[test]
    fn matrix_marks_unavailable_cells() {
        let a = ranking("a", &[(1, 4.0), (2, 3.0), (3, 2.0)]);
        let b = ranking("b", &[(7, 1.0)]);
        let m = correlation_matrix(&[a, b], CorrelationMethod::Spearman).unwrap();
        assert_eq!(m.cells[1][0], None);
        assert_eq!(m.errors.len(), 1);
        assert!(m.render_lower_triangular().contains("NA"));
        assert!(correlation_matrix(&[], CorrelationMethod::Spearman).is_err());
    }

    #[test]
    fn rank_bands() {
        assert_eq!(parse_rank("101-150"), Some(125.5));
        assert_eq!(parse_rank("=7"), Some(7.0));
        assert_eq!(parse_rank("x"), None);
    }

    #[test]
    fn audit_full_rate_and_determinism() {
        let rows: Vec<AuditRow> = (0..50)
            .map(|i| AuditRow {
                person_link: format!("P{i}"),
                lang: "en".into(),
                university_id: 1,
                university_name: "U".into(),
                trigger: "graduated".into(),
                sentence: "s".into(),
            })
            .collect();
        assert_eq!(audit_sample(&rows, 1.0, 7).unwrap(), rows);
        assert_eq!(audit_sample(&rows, 0.3, 7).unwrap(), audit_sample(&rows, 0.3, 7).unwrap());
        assert!(audit_sample(&rows, 0.0, 7).is_err());
        assert!(audit_sample(&rows, 1.5, 7).is_err());
    }
}

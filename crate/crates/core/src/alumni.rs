//! Sentence segmentation, trigger-word matching and the alumni dataset file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::person::PersonPage;
use crate::registry::{MarkerDictionary, Registry};
use crate::title::link_target;
use crate::tsv::{write_row, Table};

/// Base dataset columns, in file order.
pub const DATASET_COLUMNS: [&str; 5] = ["university_id", "university_name", "person_link", "birth_year", "lang"];
/// Columns appended once pageviews are attached.
pub const ENRICHED_COLUMNS: [&str; 2] = ["person_link_en", "views_total"];
pub const EVIDENCE_COLUMNS: [&str; 5] = ["university_id", "person_link", "lang", "trigger", "sentence"];

/// A stretch of wikitext up to a full stop, with the link targets inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    /// Raw wikitext of the sentence, trimmed, without the closing full stop.
    pub text: String,
    /// Text with link markup replaced by the link label.
    pub plain: String,
    /// Targets of the top-level `[[...]]` links, pipe labels removed.
    pub links: Vec<String>,
}

/// Splits wikitext at full stops. A `.` inside `[[...]]` never splits.
/// Empty or whitespace-only segments are dropped.
pub fn split_sentences(wikitext: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let bytes = wikitext.as_bytes();
    let mut i = 0usize;
    while i < bytes.len() {
        match bytes[i] {
            b'[' if bytes.get(i + 1) == Some(&b'[') => {
                depth += 1;
                i += 2;
                continue;
            }
            b']' if bytes.get(i + 1) == Some(&b']') && depth > 0 => {
                depth -= 1;
                i += 2;
                continue;
            }
            b'.' if depth == 0 => {
                push_sentence(&mut out, &wikitext[start..i]);
                start = i + 1;
            }
            _ => {}
        }
        i += 1;
    }
    push_sentence(&mut out, &wikitext[start..]);
    out
}

fn push_sentence(out: &mut Vec<Sentence>, raw: &str) {
    let text = raw.trim();
    if text.is_empty() {
        return;
    }
    let (plain, links) = scan_links(text);
    out.push(Sentence {
        text: text.to_string(),
        plain,
        links,
    });
}

/// Collects top-level link targets and renders the label text.
fn scan_links(text: &str) -> (String, Vec<String>) {
    let mut plain = String::with_capacity(text.len());
    let mut links = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("[[") {
        plain.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        // find the matching close, honouring nesting
        let mut depth = 1usize;
        let b = after.as_bytes();
        let mut j = 0usize;
        let mut close = None;
        while j + 1 < b.len() {
            if b[j] == b'[' && b[j + 1] == b'[' {
                depth += 1;
                j += 2;
            } else if b[j] == b']' && b[j + 1] == b']' {
                depth -= 1;
                if depth == 0 {
                    close = Some(j);
                    break;
                }
                j += 2;
            } else {
                j += 1;
            }
        }
        match close {
            Some(c) => {
                let inner = &after[..c];
                let target = link_target(inner);
                if !target.is_empty() {
                    links.push(target.to_string());
                }
                let label = inner.rsplit('|').next().unwrap_or(inner);
                plain.push_str(label);
                rest = &after[c + 2..];
            }
            None => {
                plain.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    plain.push_str(rest);
    (plain, links)
}

/// First trigger phrase found in `text` at word boundaries, case-insensitive.
pub fn find_trigger<'d>(text: &str, triggers: &'d [String]) -> Option<&'d str> {
    let lower = text.to_lowercase();
    triggers
        .iter()
        .find(|t| contains_at_word_boundary(&lower, t))
        .map(String::as_str)
}

fn contains_at_word_boundary(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let boundary = |c: Option<char>| c.is_none_or(|c| !(c.is_alphanumeric() || c == '_'));
    let mut from = 0;
    while let Some(pos) = haystack[from..].find(needle) {
        let at = from + pos;
        let before = haystack[..at].chars().next_back();
        let after = haystack[at + needle.len()..].chars().next();
        if boundary(before) && boundary(after) {
            return true;
        }
        from = at + haystack[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// One extracted (university, person) relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlumniRecord {
    pub university_id: u32,
    pub university_name: String,
    pub person_link: String,
    pub person_link_en: Option<String>,
    pub birth_year: Option<i32>,
    pub lang: String,
    pub views_total: Option<u64>,
}

impl AlumniRecord {
    pub fn key(&self) -> (u32, &str, &str) {
        (self.university_id, &self.person_link, &self.lang)
    }
}

/// Why a record was emitted: the sentence and the trigger that fired.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evidence {
    pub university_id: u32,
    pub person_link: String,
    pub lang: String,
    pub trigger: String,
    pub sentence: String,
}

/// Extracts relations together with the first sentence supporting each.
pub fn match_alumni_with_evidence(
    person: &PersonPage,
    registry: &Registry,
    dict: &MarkerDictionary,
) -> Vec<(AlumniRecord, Evidence)> {
    let lang = &person.page.lang;
    let mut found: BTreeMap<u32, (AlumniRecord, Evidence)> = BTreeMap::new();
    for sentence in split_sentences(&person.page.wikitext) {
        let Some(trigger) = find_trigger(&sentence.plain, &dict.trigger_words) else {
            continue;
        };
        for link in &sentence.links {
            let Some(id) = registry.resolve_link(link, lang) else {
                continue;
            };
            found.entry(id).or_insert_with(|| {
                let name = registry.canonical_name(id).unwrap_or_default().to_string();
                (
                    AlumniRecord {
                        university_id: id,
                        university_name: name,
                        person_link: person.page.title.clone(),
                        person_link_en: None,
                        birth_year: person.birth_year,
                        lang: lang.clone(),
                        views_total: None,
                    },
                    Evidence {
                        university_id: id,
                        person_link: person.page.title.clone(),
                        lang: lang.clone(),
                        trigger: trigger.to_string(),
                        sentence: sentence.text.clone(),
                    },
                )
            });
        }
    }
    found.into_values().collect()
}

/// One record per university linked from a trigger sentence of the page.
pub fn match_alumni(person: &PersonPage, registry: &Registry, dict: &MarkerDictionary) -> Vec<AlumniRecord> {
    match_alumni_with_evidence(person, registry, dict)
        .into_iter()
        .map(|(r, _)| r)
        .collect()
}

fn sort_key(r: &AlumniRecord) -> (u32, &str, &str) {
    (r.university_id, &r.person_link, &r.lang)
}

/// Removes duplicate `(university_id, person_link, lang)` keys, keeping the
/// first occurrence, and sorts by `(university_id, person_link, lang)`.
pub fn merge_records(mut records: Vec<AlumniRecord>) -> Vec<AlumniRecord> {
    records.sort_by(|a, b| sort_key(a).cmp(&sort_key(b)));
    records.dedup_by(|b, a| a.key() == b.key());
    records
}

pub fn merge_evidence(mut evidence: Vec<Evidence>) -> Vec<Evidence> {
    evidence.sort_by(|a, b| {
        (a.university_id, &a.person_link, &a.lang).cmp(&(b.university_id, &b.person_link, &b.lang))
    });
    evidence.dedup_by(|b, a| (a.university_id, &a.person_link, &a.lang) == (b.university_id, &b.person_link, &b.lang));
    evidence
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path}:{line}: {message}")]
    BadRow { path: PathBuf, line: usize, message: String },
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Writes the dataset (deduplicated and sorted). With `enriched` the
/// `person_link_en` and `views_total` columns are appended.
pub fn write_dataset(records: &[AlumniRecord], path: &Path, enriched: bool) -> Result<(), DatasetError> {
    let merged = merge_records(records.to_vec());
    let write_err = |source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(write_err)?;
    }
    let mut out = BufWriter::new(fs::File::create(path).map_err(write_err)?);
    let mut header: Vec<&str> = DATASET_COLUMNS.to_vec();
    if enriched {
        header.extend(ENRICHED_COLUMNS);
    }
    write_row(&mut out, &header).map_err(write_err)?;
    for r in &merged {
        let mut row = vec![
            r.university_id.to_string(),
            r.university_name.clone(),
            r.person_link.clone(),
            opt(&r.birth_year),
            r.lang.clone(),
        ];
        if enriched {
            row.push(opt(&r.person_link_en));
            row.push(opt(&r.views_total));
        }
        write_row(&mut out, &row).map_err(write_err)?;
    }
    out.flush().map_err(write_err)
}

/// Reads a dataset file, plain or enriched.
pub fn read_dataset(path: &Path) -> Result<Vec<AlumniRecord>, DatasetError> {
    let read_err = |source| DatasetError::Read {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(read_err)?;
    let Some(table) = Table::read(BufReader::new(file)).map_err(read_err)? else {
        return Ok(Vec::new());
    };
    let col = |name: &'static str| {
        table.column(name).ok_or(DatasetError::MissingColumn {
            path: path.to_path_buf(),
            column: name,
        })
    };
    let c_id = col("university_id")?;
    let c_name = col("university_name")?;
    let c_person = col("person_link")?;
    let c_year = col("birth_year")?;
    let c_lang = col("lang")?;
    let c_en = table.column("person_link_en");
    let c_views = table.column("views_total");

    let mut records = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let bad = |message: String| DatasetError::BadRow {
            path: path.to_path_buf(),
            line: *line,
            message,
        };
        let get = |i: usize| fields.get(i).map(String::as_str).unwrap_or("");
        let get_opt = |c: Option<usize>| c.map(get).filter(|s| !s.is_empty());
        let university_id = get(c_id)
            .parse()
            .map_err(|_| bad(format!("invalid university_id {:?}", get(c_id))))?;
        let birth_year = match get(c_year) {
            "" => None,
            y => Some(y.parse().map_err(|_| bad(format!("invalid birth_year {y:?}")))?),
        };
        let views_total = match get_opt(c_views) {
            None => None,
            Some(v) => Some(v.parse().map_err(|_| bad(format!("invalid views_total {v:?}")))?),
        };
        records.push(AlumniRecord {
            university_id,
            university_name: get(c_name).to_string(),
            person_link: get(c_person).to_string(),
            person_link_en: get_opt(c_en).map(str::to_string),
            birth_year,
            lang: get(c_lang).to_string(),
            views_total,
        });
    }
    Ok(records)
}

pub fn write_evidence(evidence: &[Evidence], path: &Path) -> Result<(), DatasetError> {
    let merged = merge_evidence(evidence.to_vec());
    let write_err = |source| DatasetError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(write_err)?;
    }
    let mut out = BufWriter::new(fs::File::create(path).map_err(write_err)?);
    write_row(&mut out, &EVIDENCE_COLUMNS).map_err(write_err)?;
    for e in &merged {
        write_row(
            &mut out,
            &[
                e.university_id.to_string(),
                e.person_link.clone(),
                e.lang.clone(),
                e.trigger.clone(),
                e.sentence.clone(),
            ],
        )
        .map_err(write_err)?;
    }
    out.flush().map_err(write_err)
}

pub fn read_evidence(path: &Path) -> Result<Vec<Evidence>, DatasetError> {
    let read_err = |source| DatasetError::Read {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(read_err)?;
    let Some(table) = Table::read(BufReader::new(file)).map_err(read_err)? else {
        return Ok(Vec::new());
    };
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(EVIDENCE_COLUMNS) {
        *slot = table.column(name).ok_or(DatasetError::MissingColumn {
            path: path.to_path_buf(),
            column: name,
        })?;
    }
    table
        .rows
        .iter()
        .map(|(line, f)| {
            let get = |i: usize| f.get(cols[i]).cloned().unwrap_or_default();
            Ok(Evidence {
                university_id: get(0).parse().map_err(|_| DatasetError::BadRow {
                    path: path.to_path_buf(),
                    line: *line,
                    message: "invalid university_id".into(),
                })?,
                person_link: get(1),
                lang: get(2),
                trigger: get(3),
                sentence: get(4),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dump::WikiPage;
    use crate::registry::UniversityRow;

    fn registry() -> Registry {
        let rows: Vec<UniversityRow> = [
            (1, "Northwestern University"),
            (2, "Univ A"),
            (3, "Univ B"),
            (4, "University of St Andrews"),
        ]
        .iter()
        .map(|(id, name)| UniversityRow {
            id: *id,
            canonical_name: name.to_string(),
            lang: "en".into(),
            title: name.to_string(),
        })
        .collect();
        Registry::from_rows(&rows, &Default::default()).unwrap()
    }

    fn dict() -> MarkerDictionary {
        MarkerDictionary::new("en", &["born"], &["graduated", "alumni", "received degree"])
    }

    fn person(title: &str, text: &str) -> PersonPage {
        PersonPage {
            page: WikiPage {
                title: title.into(),
                lang: "en".into(),
                namespace: 0,
                redirect_target: None,
                wikitext: text.into(),
                page_id: 1,
            },
            birth_year: Some(1981),
            marker_hit: "born".into(),
        }
    }

    #[test]
    fn two_sentences() {
        let s = split_sentences("He studied at [[Harvard University]]. He later moved.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].links, vec!["Harvard University"]);
        assert_eq!(s[0].text, "He studied at [[Harvard University]]");
        assert!(s[1].links.is_empty());
    }

    #[test]
    fn no_full_stop() {
        let s = split_sentences("no stop here [[A|b]]");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].plain, "no stop here b");
        assert_eq!(s[0].links, vec!["A"]);
    }

    #[test]
    fn dot_inside_link() {
        let s = split_sentences("[[St. Andrews]] is old.");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].links, vec!["St. Andrews"]);
    }

    #[test]
    fn nested_link_kept_whole() {
        let s = split_sentences("[[File:X.jpg|thumb|At [[Yale]]. Photo]] graduated.");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].links, vec!["File:X.jpg"]);
    }

    #[test]
    fn markle_record() {
        let p = person("Meghan Markle", "She graduated from [[Northwestern University]] in 2003.");
        let recs = match_alumni(&p, &registry(), &dict());
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].university_name, "Northwestern University");
        assert_eq!(recs[0].person_link, "Meghan Markle");
        assert_eq!(recs[0].birth_year, Some(1981));
    }

    #[test]
    fn trigger_must_share_sentence() {
        let p = person("X", "He graduated with honours. He lived near [[Univ A]].");
        assert!(match_alumni(&p, &registry(), &dict()).is_empty());
    }

    #[test]
    fn two_universities_one_sentence() {
        let p = person("X", "He Received Degree at [[Univ A]] and [[Univ B|B]]");
        let recs = match_alumni(&p, &registry(), &dict());
        let ids: Vec<u32> = recs.iter().map(|r| r.university_id).collect();
        assert_eq!(ids, vec![2, 3]);
    }

    #[test]
    fn trigger_word_boundary() {
        let t = vec!["alumni".to_string()];
        assert_eq!(find_trigger("Notable ALUMNI include", &t), Some("alumni"));
        assert_eq!(find_trigger("alumnis", &t), None);
        assert_eq!(find_trigger("(alumni)", &t), Some("alumni"));
    }

    #[test]
    fn same_university_across_sentences_merges() {
        let p = person(
            "X",
            "He graduated from [[Univ A]]. Later he was an alumni speaker at [[Univ A]].",
        );
        let recs = match_alumni(&p, &registry(), &dict());
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        write_dataset(&[], &path, false).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "university_id\tuniversity_name\tperson_link\tbirth_year\tlang\n"
        );
        assert!(read_dataset(&path).unwrap().is_empty());
    }

    #[test]
    fn duplicate_rows_collapse() {
        let p = person("Y", "Y graduated from [[Univ B]].");
        let mut recs = match_alumni(&p, &registry(), &dict());
        recs.extend(recs.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tsv");
        write_dataset(&recs, &path, true).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], recs[0]);
    }
}

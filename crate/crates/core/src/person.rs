//! Person detection, birth-year heuristic and per-person page files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::Datelike;
use quick_xml::escape::{escape, partial_escape};
use thiserror::Error;

use crate::dump::{pages_from_reader, DumpError, WikiPage};
use crate::registry::MarkerDictionary;

/// Number of leading whitespace-delimited words searched for a birth year.
pub const BIRTH_YEAR_WINDOW_WORDS: usize = 1000;
/// Earliest accepted birth year.
pub const MIN_BIRTH_YEAR: i32 = 800;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonPage {
    pub page: WikiPage,
    pub birth_year: Option<i32>,
    pub marker_hit: String,
}

#[derive(Debug, Error)]
pub enum PersonError {
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: DumpError },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// Returns the first dictionary marker contained in the page text, compared
/// case-insensitively. Redirects and non-article pages never match.
pub fn detect_person<'d>(page: &WikiPage, dict: &'d MarkerDictionary) -> Option<&'d str> {
    if !page.is_article() {
        return None;
    }
    let text = page.wikitext.to_lowercase();
    dict.person_markers
        .iter()
        .find(|m| text.contains(m.as_str()))
        .map(String::as_str)
}

/// Runs detection and year extraction together.
pub fn classify_person(page: WikiPage, dict: &MarkerDictionary) -> Option<PersonPage> {
    let marker = detect_person(&page, dict)?.to_string();
    let birth_year = extract_birth_year(&page.wikitext);
    Some(PersonPage {
        page,
        birth_year,
        marker_hit: marker,
    })
}

pub fn current_year() -> i32 {
    chrono::Utc::now().year()
}

/// Birth year with the upper bound set to the current calendar year.
pub fn extract_birth_year(wikitext: &str) -> Option<i32> {
    extract_birth_year_until(wikitext, current_year())
}

/// First standalone four-digit number among the first
/// [`BIRTH_YEAR_WINDOW_WORDS`] words whose value lies in
/// `[MIN_BIRTH_YEAR, max_year]`. Out-of-range candidates are skipped.
///
/// A candidate is a run of exactly four ASCII digits not adjoined by another
/// letter, digit or underscore.
pub fn extract_birth_year_until(wikitext: &str, max_year: i32) -> Option<i32> {
    wikitext
        .split_whitespace()
        .take(BIRTH_YEAR_WINDOW_WORDS)
        .flat_map(four_digit_runs)
        .find(|y| (MIN_BIRTH_YEAR..=max_year).contains(y))
}

fn four_digit_runs(word: &str) -> impl Iterator<Item = i32> + '_ {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let before_ok = start == 0 || !is_word_char(chars[start - 1]);
        let after_ok = i == chars.len() || !is_word_char(chars[i]);
        if i - start == 4 && before_ok && after_ok {
            let s: String = chars[start..i].iter().collect();
            out.push(s.parse::<i32>().unwrap_or(0));
        }
    }
    out.into_iter()
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// `page_<id>_<year>.xml`, with an empty year segment when unknown.
pub fn person_file_name(page_id: u64, birth_year: Option<i32>) -> String {
    match birth_year {
        Some(y) => format!("page_{page_id}_{y}.xml"),
        None => format!("page_{page_id}_.xml"),
    }
}

/// Parses a person file name back into `(page_id, birth_year)`.
pub fn parse_person_file_name(name: &str) -> Option<(u64, Option<i32>)> {
    let rest = name.strip_prefix("page_")?.strip_suffix(".xml")?;
    let (id, year) = rest.split_once('_')?;
    let id = id.parse().ok()?;
    let year = match year {
        "" => None,
        y => Some(y.parse().ok()?),
    };
    Some((id, year))
}

/// Serializes a page back into a MediaWiki `<page>` element.
pub fn page_to_xml(page: &WikiPage) -> String {
    let mut xml = String::with_capacity(page.wikitext.len() + 256);
    xml.push_str("<page>\n");
    xml.push_str(&format!("  <title>{}</title>\n", partial_escape(&page.title)));
    xml.push_str(&format!("  <ns>{}</ns>\n", page.namespace));
    xml.push_str(&format!("  <id>{}</id>\n", page.page_id));
    if let Some(target) = &page.redirect_target {
        xml.push_str(&format!("  <redirect title=\"{}\" />\n", escape(target)));
    }
    xml.push_str("  <revision>\n    <text xml:space=\"preserve\">");
    xml.push_str(&partial_escape(&page.wikitext));
    xml.push_str("</text>\n  </revision>\n</page>\n");
    xml
}

/// Writes the person's page element to `out_dir/page_<id>_<year>.xml`,
/// overwriting any previous file.
pub fn persist_person(person: &PersonPage, out_dir: &Path) -> Result<PathBuf, PersonError> {
    let path = out_dir.join(person_file_name(person.page.page_id, person.birth_year));
    let write_err = |source| PersonError::Write {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(out_dir).map_err(write_err)?;
    fs::write(&path, page_to_xml(&person.page)).map_err(write_err)?;
    Ok(path)
}

/// Reads a person file written by [`persist_person`]. The marker is
/// re-detected with `dict`; a file whose page no longer matches any marker
/// is rejected.
pub fn load_person(path: &Path, dict: &MarkerDictionary) -> Result<PersonPage, PersonError> {
    let invalid = |message: String| PersonError::Invalid {
        path: path.to_path_buf(),
        message,
    };
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| invalid("not a person file name".into()))?;
    let (page_id, birth_year) =
        parse_person_file_name(name).ok_or_else(|| invalid(format!("bad person file name {name:?}")))?;
    let bytes = fs::read(path).map_err(|source| PersonError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pages = pages_from_reader(bytes.as_slice(), &dict.lang)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|source| PersonError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    if pages.len() != 1 {
        return Err(invalid(format!("expected one page element, found {}", pages.len())));
    }
    let page = pages.remove(0);
    if page.page_id != page_id {
        return Err(invalid(format!("file name id {page_id} does not match page id {}", page.page_id)));
    }
    let marker = detect_person(&page, dict)
        .ok_or_else(|| invalid("page matches no person marker".into()))?
        .to_string();
    Ok(PersonPage {
        page,
        birth_year,
        marker_hit: marker,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dict() -> MarkerDictionary {
        MarkerDictionary::new("en", &["births]]", "born"], &["graduated"])
    }

    fn article(text: &str) -> WikiPage {
        WikiPage {
            title: "X".into(),
            lang: "en".into(),
            namespace: 0,
            redirect_target: None,
            wikitext: text.into(),
            page_id: 42,
        }
    }

    #[test]
    fn category_marker() {
        let p = article("Text.\n[[Category:1955 births]]");
        assert_eq!(detect_person(&p, &dict()), Some("births]]"));
    }

    #[test]
    fn no_marker() {
        assert_eq!(detect_person(&article("A river in France."), &dict()), None);
    }

    #[test]
    fn marker_is_case_insensitive() {
        let p = article("Stephen Hawking (BORN 8 January 1942) was");
        assert_eq!(detect_person(&p, &dict()), Some("born"));
    }

    #[test]
    fn redirects_are_not_persons() {
        let mut p = article("#REDIRECT [[Someone]] born");
        p.redirect_target = Some("Someone".into());
        assert_eq!(detect_person(&p, &dict()), None);
        let mut talk = article("born");
        talk.namespace = 1;
        assert_eq!(detect_person(&talk, &dict()), None);
    }

    #[test]
    fn hawking_year() {
        let text = "'''Stephen William Hawking''' (born 8 January 1942) was an English theoretical physicist";
        assert_eq!(extract_birth_year_until(text, 2026), Some(1942));
    }

    #[test]
    fn year_beyond_window() {
        let mut text = "word ".repeat(1000);
        text.push_str("1955");
        assert_eq!(extract_birth_year_until(&text, 2026), None);
        let mut inside = "word ".repeat(999);
        inside.push_str("1955");
        assert_eq!(extract_birth_year_until(&inside, 2026), Some(1955));
    }

    #[test]
    fn out_of_range_candidate_is_skipped() {
        let text = "released album 3000 copies sold; born 1971 in Pretoria";
        assert_eq!(extract_birth_year_until(text, 2026), Some(1971));
        assert_eq!(extract_birth_year_until("in 0799 then 0800", 2026), Some(800));
    }

    #[test]
    fn non_standalone_digits_ignored() {
        assert_eq!(extract_birth_year_until("A3800 12345 x1999 1999s 2001", 2026), Some(2001));
        assert_eq!(extract_birth_year_until("(1942–2018)", 2026), Some(1942));
        assert_eq!(extract_birth_year_until("[[Category:1955_births]]", 2026), None);
    }

    #[test]
    fn file_names() {
        assert_eq!(person_file_name(42, Some(1955)), "page_42_1955.xml");
        assert_eq!(person_file_name(7, None), "page_7_.xml");
        assert_eq!(parse_person_file_name("page_7_.xml"), Some((7, None)));
        assert_eq!(parse_person_file_name("page_42_1955.xml"), Some((42, Some(1955))));
        assert_eq!(parse_person_file_name("page_x_.xml"), None);
    }

    #[test]
    fn persist_is_idempotent_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut page = article("Ada & <b>Bob</b> born 1815 \"quoted\"");
        page.title = "Ada & Co".into();
        let person = PersonPage {
            page,
            birth_year: Some(1815),
            marker_hit: "born".into(),
        };
        let p1 = persist_person(&person, dir.path()).unwrap();
        let first = fs::read(&p1).unwrap();
        let p2 = persist_person(&person, dir.path()).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(first, fs::read(&p2).unwrap());
        assert!(p1.ends_with("page_42_1815.xml"));

        let back = load_person(&p1, &dict()).unwrap();
        assert_eq!(back, person);
    }
}

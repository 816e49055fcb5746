//! University registry, redirect alias expansion and per-language marker
//! dictionaries.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dump::RedirectMap;
use crate::title::normalize_title;
use crate::tsv::Table;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: missing column {column:?} in header")]
    MissingColumn { path: String, column: &'static str },
    #[error("{path}:{line}: {message}")]
    BadRow { path: String, line: usize, message: String },
    #[error("duplicate university id {id}: {first:?} and {second:?}")]
    DuplicateId { id: u32, first: String, second: String },
    #[error("title {title:?} ({lang}) is claimed by university {first_id} ({first_name:?}) and {second_id} ({second_name:?})")]
    TitleCollision {
        lang: String,
        title: String,
        first_id: u32,
        first_name: String,
        second_id: u32,
        second_name: String,
    },
    #[error("university {id} ({name:?}) has no page title in any language")]
    NoTitles { id: u32, name: String },
    #[error("dictionary {path}:{line}: {message}")]
    Dictionary { path: String, line: usize, message: String },
}

/// Page titles of one university in one language. `primary` is the title
/// listed first in the universities file; `aliases` holds further listed
/// titles and every redirect resolving to one of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TitleSet {
    pub primary: String,
    pub aliases: BTreeSet<String>,
}

impl TitleSet {
    pub fn all(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.primary.as_str()).chain(self.aliases.iter().map(String::as_str))
    }

    pub fn contains(&self, title: &str) -> bool {
        self.primary == title || self.aliases.contains(title)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct University {
    pub id: u32,
    pub canonical_name: String,
    pub titles: BTreeMap<String, TitleSet>,
}

/// One row of the universities file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UniversityRow {
    pub id: u32,
    pub canonical_name: String,
    pub lang: String,
    pub title: String,
}

/// Immutable after construction; lookups are pure.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    universities: BTreeMap<u32, University>,
    index: HashMap<(String, String), u32>,
}

impl Registry {
    /// Builds the registry from universities-file rows and per-language
    /// redirect maps.
    pub fn from_rows(
        rows: &[UniversityRow],
        redirects: &BTreeMap<String, RedirectMap>,
    ) -> Result<Self, RegistryError> {
        let mut reg = Registry::default();
        for row in rows {
            let title = normalize_title(&row.title);
            let uni = reg.universities.entry(row.id).or_insert_with(|| University {
                id: row.id,
                canonical_name: row.canonical_name.clone(),
                titles: BTreeMap::new(),
            });
            if uni.canonical_name != row.canonical_name {
                return Err(RegistryError::DuplicateId {
                    id: row.id,
                    first: uni.canonical_name.clone(),
                    second: row.canonical_name.clone(),
                });
            }
            if title.is_empty() {
                continue;
            }
            match uni.titles.get_mut(&row.lang) {
                Some(set) => {
                    if set.primary != title {
                        set.aliases.insert(title.clone());
                    }
                }
                None => {
                    uni.titles.insert(
                        row.lang.clone(),
                        TitleSet {
                            primary: title.clone(),
                            aliases: BTreeSet::new(),
                        },
                    );
                }
            }
            reg.claim(&row.lang, &title, row.id)?;
        }
        if let Some(u) = reg.universities.values().find(|u| u.titles.is_empty()) {
            return Err(RegistryError::NoTitles {
                id: u.id,
                name: u.canonical_name.clone(),
            });
        }

        for (lang, map) in redirects {
            for (alias, target) in &map.resolved {
                let Some(&id) = reg.index.get(&(lang.clone(), target.clone())) else {
                    continue;
                };
                reg.claim(lang, alias, id)?;
                if let Some(set) = reg
                    .universities
                    .get_mut(&id)
                    .and_then(|u| u.titles.get_mut(lang))
                {
                    if set.primary != *alias {
                        set.aliases.insert(alias.clone());
                    }
                }
            }
        }
        Ok(reg)
    }

    fn claim(&mut self, lang: &str, title: &str, id: u32) -> Result<(), RegistryError> {
        let key = (lang.to_string(), title.to_string());
        match self.index.get(&key) {
            Some(&other) if other != id => {
                let name = |i: u32| {
                    self.universities
                        .get(&i)
                        .map(|u| u.canonical_name.clone())
                        .unwrap_or_default()
                };
                let (first_id, second_id) = (other.min(id), other.max(id));
                Err(RegistryError::TitleCollision {
                    lang: lang.to_string(),
                    title: title.to_string(),
                    first_id,
                    first_name: name(first_id),
                    second_id,
                    second_name: name(second_id),
                })
            }
            Some(_) => Ok(()),
            None => {
                self.index.insert(key, id);
                Ok(())
            }
        }
    }

    /// Maps a wiki link target to a university id, if it names one.
    pub fn resolve_link(&self, target_title: &str, lang: &str) -> Option<u32> {
        let inner = crate::title::link_target(target_title);
        let title = normalize_title(inner);
        if title.is_empty() {
            return None;
        }
        self.index.get(&(lang.to_string(), title)).copied()
    }

    pub fn get(&self, id: u32) -> Option<&University> {
        self.universities.get(&id)
    }

    pub fn len(&self) -> usize {
        self.universities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universities.is_empty()
    }

    /// Universities in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &University> {
        self.universities.values()
    }

    pub fn canonical_name(&self, id: u32) -> Option<&str> {
        self.universities.get(&id).map(|u| u.canonical_name.as_str())
    }

    /// Exact lookup by canonical English name.
    pub fn find_by_name(&self, name: &str) -> Option<u32> {
        self.universities
            .values()
            .find(|u| u.canonical_name == name)
            .map(|u| u.id)
    }
}

/// Parses the universities file: tab-separated, header
/// `id, canonical_name, lang, title`, one row per title.
pub fn read_university_rows(path: &Path) -> Result<Vec<UniversityRow>, RegistryError> {
    let io_err = |source| RegistryError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let table = Table::read(BufReader::new(file)).map_err(io_err)?;
    let display = path.display().to_string();
    let Some(table) = table else {
        return Ok(Vec::new());
    };
    let col = |name: &'static str| {
        table.column(name).ok_or(RegistryError::MissingColumn {
            path: display.clone(),
            column: name,
        })
    };
    let (c_id, c_name, c_lang, c_title) = (col("id")?, col("canonical_name")?, col("lang")?, col("title")?);

    let mut rows = Vec::with_capacity(table.rows.len());
    for (line, fields) in &table.rows {
        let get = |i: usize| fields.get(i).map(|s| s.trim().to_string()).unwrap_or_default();
        let id = get(c_id).parse::<u32>().map_err(|_| RegistryError::BadRow {
            path: display.clone(),
            line: *line,
            message: format!("invalid id {:?}", get(c_id)),
        })?;
        let lang = get(c_lang);
        if lang.is_empty() {
            return Err(RegistryError::BadRow {
                path: display.clone(),
                line: *line,
                message: "empty lang".into(),
            });
        }
        rows.push(UniversityRow {
            id,
            canonical_name: get(c_name),
            lang,
            title: get(c_title),
        });
    }
    Ok(rows)
}

pub fn load_registry(
    universities_file: &Path,
    redirects: &BTreeMap<String, RedirectMap>,
) -> Result<Registry, RegistryError> {
    let rows = read_university_rows(universities_file)?;
    Registry::from_rows(&rows, redirects)
}

/// Per-language phrase lists. Phrases are stored lower-cased; matching is
/// always case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerDictionary {
    pub lang: String,
    pub person_markers: Vec<String>,
    pub trigger_words: Vec<String>,
}

impl MarkerDictionary {
    pub fn new<S: AsRef<str>>(lang: &str, person_markers: &[S], trigger_words: &[S]) -> Self {
        let prep = |v: &[S]| {
            v.iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect()
        };
        MarkerDictionary {
            lang: lang.to_string(),
            person_markers: prep(person_markers),
            trigger_words: prep(trigger_words),
        }
    }

    /// Parses the dictionary text format:
    ///
    /// ```text
    /// # comment
    /// [person_markers]
    /// born
    /// [trigger_words]
    /// graduated
    /// ```
    pub fn parse(lang: &str, text: &str, origin: &str) -> Result<Self, RegistryError> {
        let mut markers = Vec::new();
        let mut triggers = Vec::new();
        let mut section: Option<&mut Vec<String>> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| RegistryError::Dictionary {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "person_markers" => Some(&mut markers),
                    "trigger_words" => Some(&mut triggers),
                    other => return Err(err(format!("unknown section [{other}]"))),
                };
                continue;
            }
            match section.as_deref_mut() {
                Some(list) => list.push(line.to_lowercase()),
                None => return Err(err("phrase outside of a section".into())),
            }
        }
        let err = |message: &str| RegistryError::Dictionary {
            path: origin.to_string(),
            line: 0,
            message: message.to_string(),
        };
        if markers.is_empty() {
            return Err(err("no person_markers"));
        }
        if triggers.is_empty() {
            return Err(err("no trigger_words"));
        }
        Ok(MarkerDictionary {
            lang: lang.to_string(),
            person_markers: markers,
            trigger_words: triggers,
        })
    }

    pub fn load(path: &Path, lang: &str) -> Result<Self, RegistryError> {
        let text = fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(lang, &text, &path.display().to_string())
    }
}

/// Location of the dictionary file for `lang` inside `dir`.
pub fn dictionary_path(dir: &Path, lang: &str) -> PathBuf {
    dir.join(format!("{lang}.dict"))
}

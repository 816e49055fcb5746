//! Streaming reader for MediaWiki `pages-articles` XML dumps.
//!
//! Pages are produced one at a time from a pull parser, so memory stays
//! proportional to the largest single page rather than the dump. Plain XML,
//! gzip and bzip2 (including multistream) inputs are detected from their
//! leading bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use bzip2::read::MultiBzDecoder;
use flate2::read::MultiGzDecoder;
use quick_xml::events::{BytesRef, BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

use crate::title::normalize_title;

/// Default cap on the number of hops followed when resolving a redirect.
pub const DEFAULT_REDIRECT_CAP: usize = 16;

/// One page element from a dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikiPage {
    pub title: String,
    pub lang: String,
    pub namespace: i64,
    pub redirect_target: Option<String>,
    pub wikitext: String,
    pub page_id: u64,
}

impl WikiPage {
    pub fn is_redirect(&self) -> bool {
        self.redirect_target.is_some()
    }

    /// True for non-redirect pages in the main (article) namespace.
    pub fn is_article(&self) -> bool {
        self.namespace == 0 && self.redirect_target.is_none()
    }
}

/// A dump file together with its language and declared snapshot date.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DumpSource {
    pub path: PathBuf,
    pub lang: String,
    pub dump_date: String,
}

impl DumpSource {
    pub fn new(path: impl Into<PathBuf>, lang: impl Into<String>, dump_date: impl Into<String>) -> Self {
        DumpSource {
            path: path.into(),
            lang: lang.into(),
            dump_date: dump_date.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("cannot open dump {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error("unsupported dump compression ({format}); {hint}")]
    UnknownCompression { format: String, hint: String },
    #[error("malformed XML at byte {offset} (last parsed page: {last_title:?}): {message}")]
    Malformed {
        offset: u64,
        last_title: Option<String>,
        message: String,
    },
    #[error("dump truncated at byte {offset} after {pages} pages (last parsed page: {last_title:?})")]
    Truncated {
        offset: u64,
        pages: u64,
        last_title: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    Plain,
    Gzip,
    Bzip2,
}

/// Identifies the container format from the first bytes of a stream.
pub fn detect_compression(head: &[u8]) -> Result<Compression, DumpError> {
    let unsupported = |format: &str| DumpError::UnknownCompression {
        format: format.to_string(),
        hint: "recompress the dump as .xml, .xml.gz or .xml.bz2".to_string(),
    };
    if head.starts_with(&[0x1f, 0x8b]) {
        return Ok(Compression::Gzip);
    }
    if head.starts_with(b"BZh") {
        return Ok(Compression::Bzip2);
    }
    if head.starts_with(&[0xfd, b'7', b'z', b'X', b'Z', 0x00]) {
        return Err(unsupported("xz"));
    }
    if head.starts_with(&[0x28, 0xb5, 0x2f, 0xfd]) {
        return Err(unsupported("zstd"));
    }
    if head.starts_with(&[b'7', b'z', 0xbc, 0xaf, 0x27, 0x1c]) {
        return Err(unsupported("7z"));
    }
    if head.starts_with(b"PK\x03\x04") {
        return Err(unsupported("zip"));
    }
    let text = head.strip_prefix(&[0xef, 0xbb, 0xbf]).unwrap_or(head);
    match text.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'<') | None => Ok(Compression::Plain),
        Some(_) => Err(DumpError::UnknownCompression {
            format: "unrecognized".to_string(),
            hint: "expected MediaWiki XML, optionally gzip or bzip2 compressed".to_string(),
        }),
    }
}

/// Opens a dump file, sniffing compression, and returns a page stream.
pub fn stream_pages(source: &DumpSource) -> Result<PageStream<Box<dyn BufRead>>, DumpError> {
    let open_err = |e| DumpError::Open {
        path: source.path.clone(),
        source: e,
    };
    let mut file = BufReader::new(File::open(&source.path).map_err(open_err)?);
    let head = file.fill_buf().map_err(open_err)?.to_vec();
    let reader: Box<dyn BufRead> = match detect_compression(&head)? {
        Compression::Plain => Box::new(file),
        Compression::Gzip => Box::new(BufReader::new(MultiGzDecoder::new(file))),
        Compression::Bzip2 => Box::new(BufReader::new(MultiBzDecoder::new(file))),
    };
    Ok(PageStream::new(reader, &source.lang))
}

/// Reads pages from any buffered reader of (uncompressed) XML.
pub fn pages_from_reader<R: BufRead>(reader: R, lang: &str) -> PageStream<R> {
    PageStream::new(reader, lang)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Namespace,
    Id,
    Text,
}

#[derive(Debug, Default)]
struct PageBuilder {
    title: String,
    namespace: String,
    id: String,
    redirect: Option<String>,
    text: String,
}

/// Iterator over the pages of a dump. After an error is yielded the stream
/// is exhausted.
pub struct PageStream<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    lang: String,
    path: Vec<Vec<u8>>,
    page: Option<PageBuilder>,
    field: Option<Field>,
    last_title: Option<String>,
    pages: u64,
    finished: bool,
    peak_buffer: usize,
}

impl<R: BufRead> PageStream<R> {
    fn new(reader: R, lang: &str) -> Self {
        let mut reader = Reader::from_reader(reader);
        let config = reader.config_mut();
        config.trim_text(false);
        config.check_end_names = true;
        config.expand_empty_elements = false;
        PageStream {
            reader,
            buf: Vec::new(),
            lang: lang.to_string(),
            path: Vec::new(),
            page: None,
            field: None,
            last_title: None,
            pages: 0,
            finished: false,
            peak_buffer: 0,
        }
    }

    /// Number of pages yielded so far.
    pub fn pages_read(&self) -> u64 {
        self.pages
    }

    /// Largest capacity the event buffer reached. Bounded by the size of the
    /// largest single text node.
    pub fn peak_buffer_bytes(&self) -> usize {
        self.peak_buffer
    }

    fn malformed(&self, offset: u64, message: impl Into<String>) -> DumpError {
        DumpError::Malformed {
            offset,
            last_title: self.last_title.clone(),
            message: message.into(),
        }
    }

    fn truncated(&self) -> DumpError {
        DumpError::Truncated {
            offset: self.reader.buffer_position(),
            pages: self.pages,
            last_title: self.last_title.clone(),
        }
    }

    fn classify(&self, err: quick_xml::Error) -> DumpError {
        use quick_xml::errors::{IllFormedError, SyntaxError};
        match &err {
            quick_xml::Error::Io(e) if e.kind() == io::ErrorKind::UnexpectedEof => self.truncated(),
            quick_xml::Error::Syntax(
                SyntaxError::UnclosedTag
                | SyntaxError::UnclosedCData
                | SyntaxError::UnclosedComment
                | SyntaxError::UnclosedPIOrXmlDecl
                | SyntaxError::UnclosedDoctype,
            ) => self.truncated(),
            quick_xml::Error::IllFormed(IllFormedError::MissingEndTag(_)) => self.truncated(),
            _ => self.malformed(self.reader.error_position(), err.to_string()),
        }
    }

    fn field_for(&self, name: &[u8]) -> Option<Field> {
        // `path` already includes `name` as its last element.
        let depth_in_page = self.path.iter().rposition(|p| p.as_slice() == b"page")?;
        let rel = &self.path[depth_in_page + 1..];
        match rel {
            [n] if n.as_slice() == name && name == b"title" => Some(Field::Title),
            [n] if n.as_slice() == name && name == b"ns" => Some(Field::Namespace),
            [n] if n.as_slice() == name && name == b"id" => Some(Field::Id),
            [rev, n] if rev.as_slice() == b"revision" && n.as_slice() == b"text" => Some(Field::Text),
            _ => None,
        }
    }

    fn push_text(&mut self, text: &str) {
        if let (Some(page), Some(field)) = (self.page.as_mut(), self.field) {
            let target = match field {
                Field::Title => &mut page.title,
                Field::Namespace => &mut page.namespace,
                Field::Id => &mut page.id,
                Field::Text => &mut page.text,
            };
            target.push_str(text);
        }
    }

    fn redirect_attr(&self, e: &BytesStart<'_>, offset: u64) -> Result<String, DumpError> {
        for attr in e.attributes() {
            let attr = attr.map_err(|err| self.malformed(offset, err.to_string()))?;
            if attr.key.as_ref() == b"title" {
                let value = attr
                    .unescape_value()
                    .map_err(|err| self.malformed(offset, err.to_string()))?;
                return Ok(value.into_owned());
            }
        }
        Ok(String::new())
    }

    fn finish_page(&mut self, offset: u64) -> Result<WikiPage, DumpError> {
        let b = self.page.take().unwrap_or_default();
        if b.title.is_empty() {
            return Err(self.malformed(offset, "page without a title"));
        }
        let page_id = b
            .id
            .trim()
            .parse::<u64>()
            .map_err(|_| self.malformed(offset, format!("page {:?} has invalid id {:?}", b.title, b.id)))?;
        let namespace = match b.namespace.trim() {
            "" => 0,
            ns => ns
                .parse::<i64>()
                .map_err(|_| self.malformed(offset, format!("page {:?} has invalid namespace {ns:?}", b.title)))?,
        };
        self.last_title = Some(b.title.clone());
        self.pages += 1;
        Ok(WikiPage {
            title: b.title,
            lang: self.lang.clone(),
            namespace,
            redirect_target: b.redirect,
            wikitext: b.text,
            page_id,
        })
    }

    fn next_page(&mut self) -> Option<Result<WikiPage, DumpError>> {
        loop {
            self.buf.clear();
            let offset = self.reader.buffer_position();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev.into_owned(),
                Err(err) => return Some(Err(self.classify(err))),
            };
            self.peak_buffer = self.peak_buffer.max(self.buf.capacity());
            match event {
                Event::Start(e) => {
                    let name = e.local_name().as_ref().to_vec();
                    if name == b"page" {
                        self.page = Some(PageBuilder::default());
                    }
                    if name == b"redirect" && self.page.is_some() {
                        let target = match self.redirect_attr(&e, offset) {
                            Ok(t) => t,
                            Err(err) => return Some(Err(err)),
                        };
                        if let Some(p) = self.page.as_mut() {
                            p.redirect = Some(target);
                        }
                    }
                    self.path.push(name.clone());
                    if self.page.is_some() {
                        self.field = self.field_for(&name);
                    }
                }
                Event::Empty(e) => {
                    let name = e.local_name().as_ref().to_vec();
                    if name == b"redirect" && self.page.is_some() {
                        let target = match self.redirect_attr(&e, offset) {
                            Ok(t) => t,
                            Err(err) => return Some(Err(err)),
                        };
                        if let Some(p) = self.page.as_mut() {
                            p.redirect = Some(target);
                        }
                    }
                }
                Event::End(e) => {
                    self.field = None;
                    let name = e.local_name().as_ref().to_vec();
                    self.path.pop();
                    if name == b"page" && self.page.is_some() {
                        return Some(self.finish_page(offset));
                    }
                }
                Event::Text(t) => {
                    if self.field.is_some() {
                        match t.decode() {
                            Ok(s) => self.push_text(&s),
                            Err(err) => return Some(Err(self.malformed(offset, err.to_string()))),
                        }
                    }
                }
                Event::CData(t) => {
                    if self.field.is_some() {
                        match t.decode() {
                            Ok(s) => self.push_text(&s),
                            Err(err) => return Some(Err(self.malformed(offset, err.to_string()))),
                        }
                    }
                }
                Event::GeneralRef(r) => {
                    if self.field.is_some() {
                        match resolve_entity(&r) {
                            Some(c) => {
                                let mut tmp = [0u8; 4];
                                self.push_text(c.encode_utf8(&mut tmp));
                            }
                            None => {
                                let name = String::from_utf8_lossy(&r).into_owned();
                                return Some(Err(self.malformed(offset, format!("unknown entity &{name};"))));
                            }
                        }
                    }
                }
                Event::Eof => {
                    if !self.path.is_empty() || self.page.is_some() {
                        return Some(Err(self.truncated()));
                    }
                    return None;
                }
                _ => {}
            }
        }
    }
}

fn resolve_entity(r: &BytesRef<'_>) -> Option<char> {
    if r.is_char_ref() {
        return r.resolve_char_ref().ok().flatten();
    }
    let name: &[u8] = r;
    match name {
        b"lt" => Some('<'),
        b"gt" => Some('>'),
        b"amp" => Some('&'),
        b"apos" => Some('\''),
        b"quot" => Some('"'),
        _ => None,
    }
}

impl<R: BufRead> Iterator for PageStream<R> {
    type Item = Result<WikiPage, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        let item = self.next_page();
        if !matches!(item, Some(Ok(_))) {
            self.finished = true;
        }
        item
    }
}

/// Resolved redirect table for one language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RedirectMap {
    /// Redirect title to its final non-redirect target, both normalized.
    pub resolved: BTreeMap<String, String>,
    /// Titles caught in a cycle or in a chain longer than the cap.
    pub unresolvable: BTreeSet<String>,
}

impl RedirectMap {
    pub fn get(&self, title: &str) -> Option<&str> {
        self.resolved.get(&normalize_title(title)).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.resolved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resolved.is_empty()
    }
}

/// Accumulates redirect edges while pages stream past, so the full page set
/// never has to be held in memory.
#[derive(Debug, Default, Clone)]
pub struct RedirectCollector {
    edges: HashMap<String, String>,
}

impl RedirectCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, page: &WikiPage) {
        if let Some(target) = &page.redirect_target {
            self.add_edge(&page.title, target);
        }
    }

    pub fn add_edge(&mut self, from: &str, to: &str) {
        let from = normalize_title(from);
        let to = normalize_title(to);
        if !from.is_empty() && !to.is_empty() {
            self.edges.insert(from, to);
        }
    }

    /// Computes the transitive closure with at most `cap` hops per chain.
    pub fn resolve(&self, cap: usize) -> RedirectMap {
        let mut map = RedirectMap::default();
        let mut sources: Vec<&String> = self.edges.keys().collect();
        sources.sort();
        for start in sources {
            let mut seen = vec![start.as_str()];
            let mut current = start.as_str();
            let mut hops = 0usize;
            let outcome = loop {
                match self.edges.get(current) {
                    None => break Some(current),
                    Some(next) => {
                        hops += 1;
                        if hops > cap || seen.contains(&next.as_str()) {
                            break None;
                        }
                        seen.push(next.as_str());
                        current = next.as_str();
                    }
                }
            };
            match outcome {
                Some(target) => {
                    map.resolved.insert(start.clone(), target.to_string());
                }
                None => {
                    map.unresolvable.insert(start.clone());
                }
            }
        }
        map
    }
}

/// Builds the redirect map for pages of a single language with the default cap.
pub fn collect_redirects<'a, I>(pages: I) -> RedirectMap
where
    I: IntoIterator<Item = &'a WikiPage>,
{
    collect_redirects_capped(pages, DEFAULT_REDIRECT_CAP)
}

pub fn collect_redirects_capped<'a, I>(pages: I, cap: usize) -> RedirectMap
where
    I: IntoIterator<Item = &'a WikiPage>,
{
    let mut collector = RedirectCollector::new();
    for page in pages {
        collector.observe(page);
    }
    collector.resolve(cap)
}

/// Reads a dump fully into memory. Only meant for small inputs such as
/// single-page person files.
pub fn read_all_pages(path: &Path, lang: &str) -> Result<Vec<WikiPage>, DumpError> {
    stream_pages(&DumpSource::new(path, lang, ""))?.collect()
}

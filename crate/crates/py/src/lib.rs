//! Python bindings for the `wikialumni` crate.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wikialumni::analytics::{self, CorrelationMethod, Score};
use wikialumni::config::PipelineConfig;
use wikialumni::dump::{self, DumpSource, PageStream, WikiPage};
use wikialumni::pipeline::{self, PipelineError};
use wikialumni::registry;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_method(method: &str) -> PyResult<CorrelationMethod> {
    method.parse().map_err(PyValueError::new_err)
}

#[pyfunction]
#[pyo3(signature = (wikitext, max_year = None))]
fn extract_birth_year(wikitext: &str, max_year: Option<i32>) -> Option<i32> {
    match max_year {
        Some(y) => wikialumni::person::extract_birth_year_until(wikitext, y),
        None => wikialumni::person::extract_birth_year(wikitext),
    }
}

#[pyfunction]
fn normalize_title(title: &str) -> String {
    wikialumni::title::normalize_title(title)
}

/// Returns `(text, plain, links)` per sentence.
#[pyfunction]
fn split_sentences(wikitext: &str) -> Vec<(String, String, Vec<String>)> {
    wikialumni::split_sentences(wikitext)
        .into_iter()
        .map(|s| (s.text, s.plain, s.links))
        .collect()
}

#[pyclass(name = "MarkerDictionary", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMarkerDictionary {
    inner: registry::MarkerDictionary,
}

#[pymethods]
impl PyMarkerDictionary {
    #[new]
    fn new(lang: &str, person_markers: Vec<String>, trigger_words: Vec<String>) -> PyResult<Self> {
        let text = format!(
            "[person_markers]\n{}\n[trigger_words]\n{}\n",
            person_markers.join("\n"),
            trigger_words.join("\n")
        );
        let inner = registry::MarkerDictionary::parse(lang, &text, "<python>").map_err(value_err)?;
        Ok(PyMarkerDictionary { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf, lang: &str) -> PyResult<Self> {
        let inner = registry::MarkerDictionary::load(&path, lang).map_err(value_err)?;
        Ok(PyMarkerDictionary { inner })
    }

    #[getter]
    fn lang(&self) -> String {
        self.inner.lang.clone()
    }

    #[getter]
    fn person_markers(&self) -> Vec<String> {
        self.inner.person_markers.clone()
    }

    #[getter]
    fn trigger_words(&self) -> Vec<String> {
        self.inner.trigger_words.clone()
    }

    fn find_trigger(&self, sentence: &str) -> Option<String> {
        wikialumni::alumni::find_trigger(sentence, &self.inner.trigger_words).map(str::to_string)
    }
}

/// Marker phrase that flags the page as a person, if any.
#[pyfunction]
#[pyo3(signature = (wikitext, dictionary, namespace = 0, redirect = false))]
fn detect_person(wikitext: &str, dictionary: &PyMarkerDictionary, namespace: i64, redirect: bool) -> Option<String> {
    let page = WikiPage {
        title: String::new(),
        lang: dictionary.inner.lang.clone(),
        namespace,
        redirect_target: redirect.then(String::new),
        wikitext: wikitext.to_string(),
        page_id: 0,
    };
    wikialumni::detect_person(&page, &dictionary.inner).map(str::to_string)
}

#[pyclass(name = "Registry", frozen)]
struct PyRegistry {
    inner: registry::Registry,
}

#[pymethods]
impl PyRegistry {
    /// Loads a universities file. `redirects` maps a language to
    /// `{alias: target}` pairs, resolved transitively.
    #[staticmethod]
    #[pyo3(signature = (path, redirects = None))]
    fn load(path: PathBuf, redirects: Option<BTreeMap<String, BTreeMap<String, String>>>) -> PyResult<Self> {
        let maps = redirects
            .unwrap_or_default()
            .into_iter()
            .map(|(lang, edges)| {
                let mut c = dump::RedirectCollector::new();
                for (from, to) in edges {
                    c.add_edge(&from, &to);
                }
                (lang, c.resolve(dump::DEFAULT_REDIRECT_CAP))
            })
            .collect();
        let inner = registry::load_registry(&path, &maps).map_err(value_err)?;
        Ok(PyRegistry { inner })
    }

    fn resolve_link(&self, target: &str, lang: &str) -> Option<u32> {
        self.inner.resolve_link(target, lang)
    }

    fn canonical_name(&self, id: u32) -> Option<String> {
        self.inner.canonical_name(id).map(str::to_string)
    }

    fn ids(&self) -> Vec<u32> {
        self.inner.iter().map(|u| u.id).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Iterator over the pages of a dump file, yielding dicts.
#[pyclass(name = "DumpReader", unsendable)]
struct PyDumpReader {
    stream: PageStream<Box<dyn BufRead>>,
}

#[pymethods]
impl PyDumpReader {
    #[new]
    #[pyo3(signature = (path, lang, dump_date = ""))]
    fn new(path: PathBuf, lang: &str, dump_date: &str) -> PyResult<Self> {
        let stream = dump::stream_pages(&DumpSource::new(path, lang, dump_date))
            .map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(PyDumpReader { stream })
    }

    fn __iter__(slf: PyRef<'_, Self>) -> PyRef<'_, Self> {
        slf
    }

    fn __next__<'py>(&mut self, py: Python<'py>) -> PyResult<Option<Bound<'py, PyDict>>> {
        match self.stream.next() {
            None => Ok(None),
            Some(Err(e)) => Err(PyIOError::new_err(e.to_string())),
            Some(Ok(p)) => {
                let d = PyDict::new(py);
                d.set_item("title", p.title)?;
                d.set_item("lang", p.lang)?;
                d.set_item("namespace", p.namespace)?;
                d.set_item("page_id", p.page_id)?;
                d.set_item("redirect", p.redirect_target)?;
                d.set_item("text", p.wikitext)?;
                Ok(Some(d))
            }
        }
    }

    #[getter]
    fn pages_read(&self) -> u64 {
        self.stream.pages_read()
    }
}

#[pyclass(name = "AlumniRecord", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyAlumniRecord {
    university_id: u32,
    university_name: String,
    person_link: String,
    person_link_en: Option<String>,
    birth_year: Option<i32>,
    lang: String,
    views_total: Option<u64>,
}

#[pymethods]
impl PyAlumniRecord {
    #[new]
    #[pyo3(signature = (university_id, university_name, person_link, birth_year = None, lang = "en".to_string(), views_total = None, person_link_en = None))]
    fn new(
        university_id: u32,
        university_name: String,
        person_link: String,
        birth_year: Option<i32>,
        lang: String,
        views_total: Option<u64>,
        person_link_en: Option<String>,
    ) -> Self {
        PyAlumniRecord {
            university_id,
            university_name,
            person_link,
            person_link_en,
            birth_year,
            lang,
            views_total,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "AlumniRecord({}, {:?}, {:?}, birth_year={:?}, lang={:?}, views_total={:?})",
            self.university_id, self.university_name, self.person_link, self.birth_year, self.lang, self.views_total
        )
    }
}

impl From<wikialumni::AlumniRecord> for PyAlumniRecord {
    fn from(r: wikialumni::AlumniRecord) -> Self {
        PyAlumniRecord {
            university_id: r.university_id,
            university_name: r.university_name,
            person_link: r.person_link,
            person_link_en: r.person_link_en,
            birth_year: r.birth_year,
            lang: r.lang,
            views_total: r.views_total,
        }
    }
}

impl From<&PyAlumniRecord> for wikialumni::AlumniRecord {
    fn from(r: &PyAlumniRecord) -> Self {
        wikialumni::AlumniRecord {
            university_id: r.university_id,
            university_name: r.university_name.clone(),
            person_link: r.person_link.clone(),
            person_link_en: r.person_link_en.clone(),
            birth_year: r.birth_year,
            lang: r.lang.clone(),
            views_total: r.views_total,
        }
    }
}

fn to_records(records: Vec<PyRef<'_, PyAlumniRecord>>) -> Vec<wikialumni::AlumniRecord> {
    records.iter().map(|r| (&**r).into()).collect()
}

#[pyfunction]
fn read_dataset(path: PathBuf) -> PyResult<Vec<PyAlumniRecord>> {
    let records = wikialumni::alumni::read_dataset(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok(records.into_iter().map(Into::into).collect())
}

#[pyclass(name = "FilterSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFilterSpec {
    inner: analytics::FilterSpec,
}

#[pymethods]
impl PyFilterSpec {
    #[new]
    #[pyo3(signature = (min_birth_year = None, max_birth_year = None, min_views_exclusive = None, require_birth_year = false))]
    fn new(
        min_birth_year: Option<i32>,
        max_birth_year: Option<i32>,
        min_views_exclusive: Option<u64>,
        require_birth_year: bool,
    ) -> PyResult<Self> {
        let inner = analytics::FilterSpec {
            min_birth_year,
            max_birth_year,
            min_views_exclusive,
            require_birth_year,
        };
        inner.validate("filter").map_err(value_err)?;
        Ok(PyFilterSpec { inner })
    }

    fn matches(&self, record: PyRef<'_, PyAlumniRecord>) -> bool {
        self.inner.matches(&(&*record).into())
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }

    fn __repr__(&self) -> String {
        format!("FilterSpec({:?})", self.inner.describe())
    }
}

#[pyfunction]
#[pyo3(signature = (records, filter = None))]
fn apply_filter(records: Vec<PyRef<'_, PyAlumniRecord>>, filter: Option<&PyFilterSpec>) -> Vec<PyAlumniRecord> {
    let f = filter.map(|f| f.inner.clone()).unwrap_or_default();
    analytics::apply_filter(&to_records(records), &f)
        .into_iter()
        .map(Into::into)
        .collect()
}

/// Count, mean, median and population standard deviation of views.
#[pyfunction]
fn describe<'py>(py: Python<'py>, records: Vec<PyRef<'py, PyAlumniRecord>>) -> PyResult<Bound<'py, PyDict>> {
    let s = analytics::describe(&to_records(records));
    let d = PyDict::new(py);
    d.set_item("n_alumni", s.n_alumni)?;
    d.set_item("n_universities", s.n_universities)?;
    d.set_item("n_with_views", s.n_with_views)?;
    d.set_item("mean_views", s.mean_views)?;
    d.set_item("median_views", s.median_views)?;
    d.set_item("stddev_views", s.stddev_views)?;
    Ok(d)
}

#[pyclass(name = "Ranking", frozen)]
struct PyRanking {
    inner: analytics::Ranking,
}

#[pymethods]
impl PyRanking {
    /// Ranking from `(university_id, name, score)` triples, higher is better.
    #[staticmethod]
    fn from_scores(label: &str, scores: Vec<(u32, String, f64)>) -> Self {
        let entries = scores
            .into_iter()
            .map(|(university_id, name, s)| analytics::RankEntry {
                university_id,
                name,
                score: Score::External(s),
            })
            .collect();
        PyRanking {
            inner: analytics::Ranking::new(label, analytics::ScoreKind::External, None, entries),
        }
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    /// `(university_id, name, score)` in rank order.
    #[getter]
    fn entries(&self) -> Vec<(u32, String, f64)> {
        self.inner
            .entries
            .iter()
            .map(|e| (e.university_id, e.name.clone(), e.score.value()))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
#[pyo3(signature = (records, filter = None))]
fn rank_universities(records: Vec<PyRef<'_, PyAlumniRecord>>, filter: Option<&PyFilterSpec>) -> PyRanking {
    let f = filter.map(|f| f.inner.clone()).unwrap_or_default();
    PyRanking {
        inner: analytics::rank_universities(&to_records(records), &f),
    }
}

/// Returns `(coefficient, n)` over the universities both rankings share.
#[pyfunction]
#[pyo3(signature = (a, b, method = "spearman"))]
fn correlate(a: &PyRanking, b: &PyRanking, method: &str) -> PyResult<(f64, usize)> {
    let c = analytics::correlate(&a.inner, &b.inner, parse_method(method)?).map_err(value_err)?;
    Ok((c.coefficient, c.n))
}

/// Full matrix of coefficients; `None` where a pair has too little overlap.
#[pyfunction]
#[pyo3(signature = (rankings, method = "spearman"))]
fn correlation_matrix(rankings: Vec<PyRef<'_, PyRanking>>, method: &str) -> PyResult<Vec<Vec<Option<f64>>>> {
    let owned: Vec<analytics::Ranking> = rankings.iter().map(|r| r.inner.clone()).collect();
    let m = analytics::correlation_matrix(&owned, parse_method(method)?).map_err(value_err)?;
    Ok(m.cells)
}

/// Runs one pipeline subcommand and returns `(exit_code, messages)`.
/// Config and precondition problems raise `ValueError`.
#[pyfunction]
fn run_command(py: Python<'_>, config: PathBuf, command: &str) -> PyResult<(i32, Vec<String>)> {
    let cmd: fn(&PipelineConfig) -> Result<pipeline::Outcome, PipelineError> = match command {
        "ingest" => pipeline::cmd_ingest,
        "extract" => pipeline::cmd_extract,
        "views" => pipeline::cmd_views,
        "report" => pipeline::cmd_report,
        "audit" => pipeline::cmd_audit,
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    };
    let result = py.detach(|| PipelineConfig::load(&config).map_err(PipelineError::from).and_then(|c| cmd(&c)));
    match result {
        Ok(outcome) => Ok((outcome.exit_code(), outcome.messages)),
        Err(e) if e.exit_code() == pipeline::EXIT_CONFIG => Err(value_err(e)),
        Err(e) => Err(PyRuntimeError::new_err(e.to_string())),
    }
}

#[pymodule]
#[pyo3(name = "wikialumni")]
fn wikialumni_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(extract_birth_year, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_title, m)?)?;
    m.add_function(wrap_pyfunction!(split_sentences, m)?)?;
    m.add_function(wrap_pyfunction!(detect_person, m)?)?;
    m.add_function(wrap_pyfunction!(read_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(apply_filter, m)?)?;
    m.add_function(wrap_pyfunction!(describe, m)?)?;
    m.add_function(wrap_pyfunction!(rank_universities, m)?)?;
    m.add_function(wrap_pyfunction!(correlate, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    m.add_class::<PyMarkerDictionary>()?;
    m.add_class::<PyRegistry>()?;
    m.add_class::<PyDumpReader>()?;
    m.add_class::<PyAlumniRecord>()?;
    m.add_class::<PyFilterSpec>()?;
    m.add_class::<PyRanking>()?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

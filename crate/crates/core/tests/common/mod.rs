#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use wikialumni::config::PipelineConfig;
use wikialumni::pipeline::{self, Outcome};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() == "golden" || entry.file_name() == "out" {
                continue;
            }
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Copies the mini-dump project into `dir` and returns its config path.
pub fn mini_project(dir: &Path) -> PathBuf {
    copy_dir(&fixtures().join("mini"), dir);
    dir.join("pipeline.toml")
}

pub fn load(config: &Path) -> PipelineConfig {
    PipelineConfig::load_with_env(config, |_| None).unwrap()
}

pub fn run_all(cfg: &PipelineConfig) -> Vec<Outcome> {
    vec![
        pipeline::cmd_ingest(cfg).unwrap(),
        pipeline::cmd_extract(cfg).unwrap(),
        pipeline::cmd_views(cfg).unwrap(),
        pipeline::cmd_report(cfg).unwrap(),
        pipeline::cmd_audit(cfg).unwrap(),
    ]
}

/// The golden files and where each one is produced under the output dir.
pub const GOLDEN: &[(&str, &str)] = &[
    ("dataset.tsv", "extract/dataset.tsv"),
    ("dataset_enriched.tsv", "views/dataset_enriched.tsv"),
    ("stats.tsv", "report/stats.tsv"),
    ("stats.txt", "report/stats.txt"),
    ("top_alumni.tsv", "report/top_alumni.tsv"),
    ("ranking_full_dataset.tsv", "report/rankings/full_dataset.tsv"),
    ("matrix.tsv", "report/matrix.tsv"),
    ("matrix.txt", "report/matrix.txt"),
    ("university_vs_alumni.tsv", "report/university_vs_alumni.tsv"),
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedPage {
    pub title: String,
    pub ns: i64,
    pub id: u64,
    pub redirect: Option<String>,
    pub text: String,
}

/// Deterministic synthetic dump with markup-heavy titles and text.
pub fn synthetic_pages(n: usize) -> Vec<ExpectedPage> {
    (0..n)
        .map(|i| {
            let id = 1000 + i as u64;
            let ns = if i % 17 == 0 { 1 } else { 0 };
            let title = match i % 5 {
                0 => format!("Page {i} & <friends>"),
                1 => format!("Страница {i}"),
                2 => format!("Quote \"{i}\" 'x'"),
                _ => format!("Plain page {i}"),
            };
            let redirect = (i % 11 == 3).then(|| format!("Plain page {}", i + 1));
            let text = match &redirect {
                Some(t) => format!("#REDIRECT [[{t}]]"),
                None => format!(
                    "Line one of {i}\r\nLine two with <ref>x</ref> & [[Link|label]]\n\n  indented {}\ttab",
                    "é".repeat(i % 7)
                ),
            };
            ExpectedPage {
                title,
                ns,
                id,
                redirect,
                text,
            }
        })
        .collect()
}

pub fn render_page(p: &ExpectedPage) -> String {
    let redirect = p
        .redirect
        .as_ref()
        .map(|t| format!("    <redirect title=\"{}\" />\n", escape(t)))
        .unwrap_or_default();
    format!(
        "  <page>\n    <title>{}</title>\n    <ns>{}</ns>\n    <id>{}</id>\n{redirect}    <revision>\n      <id>{}</id>\n      <text xml:space=\"preserve\">{}</text>\n    </revision>\n  </page>\n",
        escape(&p.title),
        p.ns,
        p.id,
        p.id * 7,
        escape(&p.text)
    )
}

pub const DUMP_HEAD: &str = "<mediawiki xmlns=\"http://www.mediawiki.org/xml/export-0.10/\" xml:lang=\"en\">\n  <siteinfo><sitename>Test</sitename></siteinfo>\n";
pub const DUMP_TAIL: &str = "</mediawiki>\n";

pub fn render_dump(pages: &[ExpectedPage]) -> String {
    let mut s = DUMP_HEAD.to_string();
    for p in pages {
        s.push_str(&render_page(p));
    }
    s.push_str(DUMP_TAIL);
    s
}

/// Synthetic alumni dataset: each university has a latent popularity so that
/// cohort rankings are related, as in real data.
pub fn synthetic_records(n: usize, n_unis: u32, seed: u64) -> Vec<wikialumni::AlumniRecord> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let quality: Vec<f64> = (0..n_unis).map(|_| rng.random_range(1.0..50.0)).collect();
    (0..n)
        .map(|i| {
            let u = rng.random_range(0..n_unis);
            let birth_year = if rng.random_bool(0.9) {
                Some(rng.random_range(1700..2005))
            } else {
                None
            };
            let views = if rng.random_bool(0.97) {
                Some((quality[u as usize] * rng.random_range(0.0..2000.0)) as u64)
            } else {
                None
            };
            wikialumni::AlumniRecord {
                university_id: u + 1,
                university_name: format!("University {:03}", u + 1),
                person_link: format!("Person {i}"),
                person_link_en: Some(format!("Person {i}")),
                birth_year,
                lang: "en".into(),
                views_total: views,
            }
        })
        .collect()
}

pub mod net {
    use std::sync::{Arc, Mutex};
    use std::time::Duration;

    use wikialumni::pageviews::{Clock, HttpResponse, Transport, TransportError};

    #[derive(Default)]
    pub struct VirtualClock(Mutex<Duration>);

    impl Clock for VirtualClock {
        fn now(&self) -> Duration {
            *self.0.lock().unwrap()
        }
        fn sleep(&self, d: Duration) {
            *self.0.lock().unwrap() += d;
        }
    }

    /// Answers every pageviews URL with twelve months of `monthly` views,
    /// langlinks URLs from `langlinks`, and fails with `status` for any
    /// title listed in `failing`.
    pub struct FakeWiki {
        pub monthly: u64,
        pub langlinks: Vec<(String, String)>,
        pub failing: Vec<(String, u16)>,
        pub calls: Arc<Mutex<Vec<String>>>,
    }

    impl FakeWiki {
        pub fn new(monthly: u64) -> Self {
            FakeWiki {
                monthly,
                langlinks: Vec::new(),
                failing: Vec::new(),
                calls: Arc::default(),
            }
        }
    }

    impl Transport for FakeWiki {
        fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
            self.calls.lock().unwrap().push(url.to_string());
            let decoded = percent_decode(url);
            for (needle, status) in &self.failing {
                if decoded.contains(needle.as_str()) {
                    return Ok(HttpResponse {
                        status: *status,
                        body: String::new(),
                    });
                }
            }
            if decoded.contains("prop=langlinks") {
                let hit = self.langlinks.iter().find(|(t, _)| decoded.contains(t.as_str()));
                let body = match hit {
                    Some((_, en)) => format!(
                        r#"{{"query":{{"pages":[{{"title":"x","langlinks":[{{"lang":"en","title":"{en}"}}]}}]}}}}"#
                    ),
                    None => r#"{"query":{"pages":[{"title":"x"}]}}"#.to_string(),
                };
                return Ok(HttpResponse { status: 200, body });
            }
            let items: Vec<String> = (0..12).map(|_| format!(r#"{{"views":{}}}"#, self.monthly)).collect();
            Ok(HttpResponse {
                status: 200,
                body: format!(r#"{{"items":[{}]}}"#, items.join(",")),
            })
        }
    }

    fn percent_decode(s: &str) -> String {
        let bytes = s.as_bytes();
        let mut out = Vec::with_capacity(bytes.len());
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'%' && i + 2 < bytes.len() {
                if let Ok(b) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                    out.push(b);
                    i += 3;
                    continue;
                }
            }
            out.push(if bytes[i] == b'_' { b' ' } else { bytes[i] });
            i += 1;
        }
        String::from_utf8_lossy(&out).into_owned()
    }
}

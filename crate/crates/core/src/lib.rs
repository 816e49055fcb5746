//! Alumni extraction and university ranking from Wikipedia dumps.
//!
//! The pipeline reads MediaWiki XML dumps, flags biographical pages with a
//! per-language marker dictionary, extracts a birth year, links persons to
//! universities through trigger words and in-sentence wiki links, attributes
//! yearly pageviews, and ranks universities by the popularity of their alumni.
//!
//! Module map:
//!
//! - [`dump`]: streaming page reader and redirect resolution
//! - [`registry`]: university list, aliases and marker dictionaries
//! - [`person`]: person detection, birth-year heuristic, per-person files
//! - [`alumni`]: sentence splitting, trigger matching, dataset files
//! - [`pageviews`]: cross-language lookup and yearly view totals
//! - [`analytics`]: filters, statistics, rankings and correlations
//! - [`pipeline`]: the resumable subcommands driven by a [`config::PipelineConfig`]

pub mod alumni;
pub mod analytics;
pub mod config;
pub mod dump;
pub mod pageviews;
pub mod person;
pub mod pipeline;
pub mod registry;
pub mod title;
mod tsv;

pub use alumni::{match_alumni, split_sentences, AlumniRecord, Evidence, Sentence};
pub use analytics::{
    correlate, correlation_matrix, describe, rank_universities, apply_filter, CorrelationMethod,
    DescriptiveStats, FilterSpec, Ranking, ScoreKind,
};
pub use dump::{collect_redirects, stream_pages, DumpError, DumpSource, RedirectMap, WikiPage};
pub use person::{detect_person, extract_birth_year, persist_person, PersonPage};
pub use registry::{MarkerDictionary, Registry, University};

mod common;

use std::collections::{BTreeMap, HashMap};

use proptest::prelude::*;
use wikialumni::dump::RedirectCollector;
use wikialumni::registry::{load_registry, read_university_rows, Registry, RegistryError, UniversityRow};

#[test]
fn fixture_registry_has_464_universities() {
    let path = common::fixtures().join("universities_464.tsv");
    let reg = load_registry(&path, &BTreeMap::new()).unwrap();
    assert_eq!(reg.len(), 464);
    assert_eq!(reg.resolve_link("University of Cambridge", "en"), Some(2));
    assert_eq!(reg.resolve_link("ETH Zurich", "en"), Some(7));
    assert_eq!(
        reg.canonical_name(7),
        Some("ETH Zurich – Swiss Federal Institute of Technology Zurich")
    );
    assert_eq!(reg.resolve_link("University of Cambridge", "ru"), None);
}

#[test]
fn collision_names_both_claimants() {
    let rows = vec![
        UniversityRow { id: 1, canonical_name: "A".into(), lang: "en".into(), title: "Same".into() },
        UniversityRow { id: 2, canonical_name: "B".into(), lang: "en".into(), title: "Same".into() },
    ];
    match Registry::from_rows(&rows, &BTreeMap::new()) {
        Err(e @ RegistryError::TitleCollision { .. }) => {
            let msg = e.to_string();
            assert!(msg.contains("\"A\"") && msg.contains("\"B\""), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_column_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("u.tsv");
    std::fs::write(&p, "id\tcanonical_name\ttitle\n1\tA\tA\n").unwrap();
    assert!(matches!(read_university_rows(&p), Err(RegistryError::MissingColumn { column: "lang", .. })));
}

/// Follows redirect edges one hop at a time; `None` for cycles.
fn follow(edges: &HashMap<String, String>, start: &str) -> Option<String> {
    let mut cur = start.to_string();
    for _ in 0..=edges.len() {
        match edges.get(&cur) {
            Some(next) => cur = next.clone(),
            None => return Some(cur),
        }
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Every redirect that ends at a registered title resolves to that
    /// university, and nothing else resolves.
    #[test]
    fn aliases_resolve_exhaustively(
        n_unis in 1usize..8,
        raw_edges in prop::collection::vec((0usize..30, 0usize..40), 0..40),
    ) {
        let rows: Vec<UniversityRow> = (0..n_unis)
            .map(|i| UniversityRow {
                id: i as u32 + 1,
                canonical_name: format!("Uni {i}"),
                lang: "en".into(),
                title: format!("Uni {i}"),
            })
            .collect();
        let node = |k: usize| if k < n_unis { format!("Uni {k}") } else { format!("Alias {k}") };

        let mut edges = HashMap::new();
        for (from, to) in raw_edges {
            // Only alias pages are redirects; university pages are articles.
            if from < n_unis || from + 10 == to {
                continue;
            }
            edges.insert(node(from + 10), node(to));
        }
        let mut collector = RedirectCollector::new();
        for (f, t) in &edges {
            collector.add_edge(f, t);
        }
        let map = collector.resolve(64);
        let reg = Registry::from_rows(&rows, &BTreeMap::from([("en".to_string(), map)])).unwrap();

        for k in 0..50 {
            let title = node(k);
            let expected = if edges.contains_key(&title) {
                follow(&edges, &title).and_then(|end| rows.iter().find(|r| r.title == end).map(|r| r.id))
            } else {
                rows.iter().find(|r| r.title == title).map(|r| r.id)
            };
            prop_assert_eq!(reg.resolve_link(&title, "en"), expected, "title {}", title);
            prop_assert_eq!(reg.resolve_link(&title.replace(' ', "_"), "en"), expected);
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mini_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/mini")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let target = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            if e.file_name() != "golden" && e.file_name() != "out" {
                copy_dir(&e.path(), &target);
            }
        } else {
            fs::copy(e.path(), target).unwrap();
        }
    }
}

fn wikialumni(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wikialumni"))
        .current_dir(dir)
        .args(args)
        .env_remove("WIKIALUMNI_CACHE_DIR")
        .env_remove("WIKIALUMNI_RATE_LIMIT")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

#[test]
fn full_pipeline_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&mini_fixture(), tmp.path());
    for cmd in ["ingest", "extract", "views", "report", "audit"] {
        let out = wikialumni(tmp.path(), &["-c", "pipeline.toml", cmd]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let golden = mini_fixture().join("golden/ranking_full_dataset.tsv");
    assert_eq!(
        fs::read_to_string(tmp.path().join("out/report/rankings/full_dataset.tsv")).unwrap(),
        fs::read_to_string(golden).unwrap()
    );

    let again = wikialumni(tmp.path(), &["-c", "pipeline.toml", "ingest"]);
    assert!(String::from_utf8_lossy(&again.stdout).contains("nothing to do"));

    let out = wikialumni(tmp.path(), &["-c", "pipeline.toml", "report", "--method", "pearson_on_scores"]);
    assert_eq!(out.status.code(), Some(0));
    let matrix = fs::read_to_string(tmp.path().join("out/report/matrix.txt")).unwrap();
    assert!(matrix.contains("# method=pearson_on_scores"), "{matrix}");
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&mini_fixture(), tmp.path());

    let out = wikialumni(tmp.path(), &["-c", "missing.toml", "ingest"]);
    assert_eq!(out.status.code(), Some(2));

    let out = wikialumni(tmp.path(), &["-c", "pipeline.toml", "--year", "2012", "views", "--mode", "live"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2015"));

    let out = wikialumni(tmp.path(), &["-c", "pipeline.toml", "extract"]);
    assert_eq!(out.status.code(), Some(2), "extract before ingest");

    let out = Command::new(env!("CARGO_BIN_EXE_wikialumni"))
        .current_dir(tmp.path())
        .args(["-c", "pipeline.toml", "ingest"])
        .env("WIKIALUMNI_RATE_LIMIT", "fast")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = wikialumni(tmp.path(), &["-c", "pipeline.toml", "audit", "--rate", "1.5"]);
    assert_eq!(out.status.code(), Some(2));

    let out = wikialumni(tmp.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn rate_limit_env_override_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    copy_dir(&mini_fixture(), tmp.path());
    let out = Command::new(env!("CARGO_BIN_EXE_wikialumni"))
        .current_dir(tmp.path())
        .args(["-c", "pipeline.toml", "views", "--mode", "live"])
        .env("WIKIALUMNI_RATE_LIMIT", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rate_limit"));
}

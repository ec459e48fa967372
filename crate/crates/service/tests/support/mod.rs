#![allow(dead_code)]

use std::path::{Path, PathBuf};

use teleqp_service::LoadedConfig;

pub fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Writes `text` as `name` in `dir` and loads it.
pub fn load(dir: &Path, name: &str, text: &str) -> LoadedConfig {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    LoadedConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Parsed CSV body: header and rows of raw cells.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Largest absolute difference over all numeric cells; panics on any
/// structural mismatch.
pub fn max_field_difference(a: &[Vec<String>], b: &[Vec<String>]) -> f64 {
    assert_eq!(a.len(), b.len(), "row counts differ");
    let mut worst: f64 = 0.0;
    for (i, (ra, rb)) in a.iter().zip(b).enumerate() {
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(rb) {
            match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(u), Ok(v)) => worst = worst.max((u - v).abs()),
                _ => assert_eq!(x, y, "row {i}"),
            }
        }
    }
    worst
}

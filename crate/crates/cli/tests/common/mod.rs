#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// A shipped config with extra blocks or replaced lines, written into `dir`.
pub fn variant(dir: &Path, base: &str, replace: &[(&str, &str)], append: &str) -> PathBuf {
    let mut text = std::fs::read_to_string(shipped(base)).unwrap();
    for (from, to) in replace {
        assert!(text.contains(from), "{from} not in {base}");
        text = text.replacen(from, to, 1);
    }
    text.push_str(append);
    let p = dir.join(format!("variant-{}", base));
    std::fs::write(&p, text).unwrap();
    p
}

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma-ee"))
        .args(args)
        .env_remove(noma_ee::config::OUT_DIR_ENV)
        .output()
        .unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Shipped scenario shrunk for quick command tests.
pub fn quick_table1(dir: &Path) -> PathBuf {
    variant(
        dir,
        "table1.cfg",
        &[
            ("n_slots = 10_000_000", "n_slots = 200_000"),
            ("seeds = 5", "seeds = 2"),
            ("delay_bounds_ms = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]", "delay_bounds_ms = [10.0, 20.0]\nn_slots = 50_000"),
        ],
        "",
    )
}

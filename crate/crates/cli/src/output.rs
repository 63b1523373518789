//! CSV tables and provenance files. Everything is buffered in memory and
//! written once a command has its results, so files never interleave.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::Scenario;

/// A header plus rows of already formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self { header: header.iter().map(|h| h.as_ref().to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Shortest round-trip form, in exponent notation outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Empty for missing values.

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<PathBuf> {
        let p = self.root.join(name);
        fs::write(&p, bytes)?;
        self.written.push(name.to_string());
        Ok(p)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> io::Result<PathBuf> {
        self.write(name, &table.to_bytes())
    }

    /// `<command>.resolved.cfg` and `<command>.provenance.txt`. Contains no
    /// timestamps or host data so reruns compare byte for byte.
    pub fn write_provenance(&mut self, command: &str, scenario: &Scenario, extra: &[(&str, String)]) -> io::Result<()> {
        let cfg_name = format!("{command}.resolved.cfg");
        self.write(&cfg_name, scenario.echo().as_bytes())?;
        let mut lines = vec![
            ("command", command.to_string()),
            ("config", scenario.path.display().to_string()),
            ("resolved_config", cfg_name),
            ("noma_ee_version", env!("CARGO_PKG_VERSION").to_string()),
            ("noma_ee_core_version", noma_ee_core::VERSION.to_string()),
            ("users", scenario.profiles.len().to_string()),
            ("noise_power_w", num(scenario.params.noise_power_w())),
            ("peak_power_w", num(scenario.params.peak_power_w())),
            ("seed", scenario.raw.simulation.seed.to_string()),
            (
                "seeds",
                scenario.seeds().iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            ),
        ];
        lines.extend(extra.iter().map(|(k, v)| (*k, v.clone())));
        lines.push(("outputs", self.written.join(",")));
        let body: String = lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        self.write(&format!("{command}.provenance.txt"), body.as_bytes())?;
        Ok(())
    }
}

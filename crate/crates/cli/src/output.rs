//! CSV tables and the run manifest. Everything lands inside one output directory.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use torsion_sn::params::Config;

/// A named CSV table: header comments, column names, rows of numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl Table {
    pub fn new(file: impl Into<String>, columns: &[&str]) -> Self {
        Self { file: file.into(), comments: vec![], columns: columns.iter().map(|c| c.to_string()).collect(), rows: vec![] }
    }

    pub fn comment(mut self, c: impl Into<String>) -> Self {
        self.comments.push(c.into());
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Column-major constructor for all-numeric tables.
    pub fn from_columns(file: impl Into<String>, names: &[&str], cols: &[&[f64]]) -> Self {
        let mut t = Table::new(file, names);
        let n = cols.iter().map(|c| c.len()).min().unwrap_or(0);
        for i in 0..n {
            t.push(cols.iter().map(|c| Cell::Num(c[i])).collect());
        }
        t
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| if let Cell::Num(v) = r[k] { v } else { f64::NAN }).collect())
    }

    pub fn to_csv_string(&self) -> std::io::Result<String> {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        out.push_str(&String::from_utf8_lossy(&bytes));
        Ok(out)
    }
}

/// Output directory guard. File names are plain names; anything that would
/// escape the directory is refused.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), written: vec![] })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    fn target(&self, name: &str) -> std::io::Result<PathBuf> {
        let p = Path::new(name);
        let plain = p.components().count() == 1 && matches!(p.components().next(), Some(std::path::Component::Normal(_)));
        if !plain {
            return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("refusing to write {name:?} outside the output directory")));
        }
        Ok(self.root.join(p))
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> std::io::Result<PathBuf> {
        let path = self.target(name)?;
        fs::write(&path, text)?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_table(&mut self, t: &Table) -> std::io::Result<PathBuf> {
        let s = t.to_csv_string()?;
        self.write_text(&t.file, &s)
    }
}

/// SHA-256 of the canonical rendering of `cfg`.
pub fn config_hash(cfg: &Config) -> String {
    let digest = Sha256::digest(cfg.to_config_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: &'static str,
    pub subcommand: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub config_sources: Vec<String>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let v = serde_json::json!({
            "config_hash": self.config_hash,
            "seed": self.seed,
            "version": self.version,
            "subcommand": self.subcommand,
            "wall_time_s": self.wall_time_s,
            "outputs": self.outputs,
            "config_sources": self.config_sources,
        });
        serde_json::to_string_pretty(&v).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refuses_paths_outside_root() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path()).unwrap();
        for bad in ["../x.csv", "/tmp/x.csv", "a/b.csv", ".."] {
            assert!(out.write_text(bad, "x").is_err(), "{bad}");
        }
        out.write_text("ok.csv", "x").unwrap();
        assert_eq!(out.written(), ["ok.csv"]);
    }

    #[test]
    fn csv_has_comments_then_header() {
        let mut t = Table::new("t.csv", &["a", "b"]).comment("model: x");
        t.push(vec![1.5.into(), Cell::Empty]);
        assert_eq!(t.to_csv_string().unwrap(), "# model: x\na,b\n1.5e0,\n");
    }
}

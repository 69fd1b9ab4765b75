//! Flat-file outputs. Every file is written to a temporary sibling and renamed
//! into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

/// Formats a float for CSV and data files.
pub fn num(x: f64) -> String {
    format!("{x:.17e}")
}

#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            written: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Paths written so far, in order.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        let dir = path.parent().unwrap_or(&self.root).to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
        tmp.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
        tmp.as_file().sync_all().map_err(|e| CliError::io(&path, e))?;
        tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_csv<S: AsRef<str>>(&mut self, rel: &str, header: &[S], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::Config(format!("csv: {e}"));
        w.write_record(header.iter().map(|h| h.as_ref())).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Config(format!("csv: {e}")))?;
        self.write_bytes(rel, &bytes)
    }

    /// Whitespace-separated columns with a `#` header line, for gnuplot.
    pub fn write_dat<S: AsRef<str>>(&mut self, rel: &str, header: &[S], rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
        let mut text = String::from("#");
        for h in header {
            text.push(' ');
            text.push_str(h.as_ref());
        }
        text.push('\n');
        for row in rows {
            let line: Vec<String> = row.iter().map(|x| num(*x)).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        self.write_bytes(rel, text.as_bytes())
    }
}

/// Left-aligned plain-text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let fmt = |cells: &mut dyn Iterator<Item = &str>| {
        let line: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        line.join("  ").trim_end().to_string()
    };
    let mut out = fmt(&mut header.iter().copied());
    out.push('\n');
    for row in rows {
        out.push_str(&fmt(&mut row.iter().map(|s| s.as_str())));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::new(dir.path());
        out.write_bytes("a/b.txt", b"one").unwrap();
        out.write_bytes("a/b.txt", b"two").unwrap();
        assert_eq!(std::fs::read(dir.path().join("a/b.txt")).unwrap(), b"two");
        let leftovers = std::fs::read_dir(dir.path().join("a")).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn dat_has_comment_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::new(dir.path());
        let p = out.write_dat("x.dat", &["t", "y"], &[vec![0.0, 1.0]]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "# t y\n0.00000000000000000e0 1.00000000000000000e0\n");
    }

    #[test]
    fn table_alignment() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz  1\n");
    }
}

//! Sectioned key = value files and plain CSV tables.
//!
//! Both formats are written with `f64`'s shortest round-trip decimal
//! representation, so writing a value and parsing it back reproduces the
//! exact bit pattern. That property is what makes the coefficient tree,
//! network model, and exported result files byte-stable across runs.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

/// Formats a float so `parse::<f64>()` recovers the identical bits.
#[must_use]
pub fn format_f64(value: f64) -> String {
    format!("{value}")
}

fn parse_f64(text: &str, line: usize) -> Result<f64> {
    text.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("expected a number, found {text:?}"),
    })
}

/// One `[name]` block of key = value entries, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvSection {
    pub name: String,
    entries: Vec<(String, String, usize)>,
}

impl KvSection {
    #[must_use]
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.push((key.to_string(), value.into(), 0));
    }

    pub fn set_f64(&mut self, key: &str, value: f64) {
        self.set(key, format_f64(value));
    }

    pub fn set_f64_list(&mut self, key: &str, values: &[f64]) {
        let joined = values.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(" ");
        self.set(key, joined);
    }

    #[must_use]
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map_or(0, |(_, _, line)| *line)
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            Some(text) => parse_f64(text, self.line_of(key)).map(Some),
            None => Ok(None),
        }
    }

    /// Missing keys fall back to `default`; present keys must parse.
    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?.ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("section [{}] is missing key {key:?}", self.name),
        })
    }

    pub fn require_f64_list(&self, key: &str, expected_len: usize) -> Result<Vec<f64>> {
        let text = self.get(key).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("section [{}] is missing key {key:?}", self.name),
        })?;
        let line = self.line_of(key);
        let values = text
            .split_whitespace()
            .map(|tok| parse_f64(tok, line))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != expected_len {
            return Err(Error::Parse {
                line,
                message: format!(
                    "key {key:?} has {} values, expected {expected_len}",
                    values.len()
                ),
            });
        }
        Ok(values)
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        let text = self.get(key).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("section [{}] is missing key {key:?}", self.name),
        })?;
        text.trim().parse::<usize>().map_err(|_| Error::Parse {
            line: self.line_of(key),
            message: format!("expected an integer, found {text:?}"),
        })
    }
}

/// An ordered list of sections parsed from or written to one text file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvFile {
    pub sections: Vec<KvSection>,
}

impl KvFile {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, section: KvSection) {
        self.sections.push(section);
    }

    #[must_use]
    pub fn section(&self, name: &str) -> Option<&KvSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn require_section(&self, name: &str) -> Result<&KvSection> {
        self.section(name).ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("missing section [{name}]"),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut file = Self::new();
        let mut current: Option<KvSection> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("unterminated section header {line:?}"),
                })?;
                if let Some(done) = current.take() {
                    file.push(done);
                }
                current = Some(KvSection::new(name.trim()));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, found {line:?}"),
            })?;
            let section = current.get_or_insert_with(|| KvSection::new(""));
            section
                .entries
                .push((key.trim().to_string(), value.trim().to_string(), line_no));
        }
        if let Some(done) = current.take() {
            file.push(done);
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    #[must_use]
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, section) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            if !section.name.is_empty() {
                let _ = writeln!(out, "[{}]", section.name);
            }
            for (key, value, _) in &section.entries {
                let _ = writeln!(out, "{key} = {value}");
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// A rectangular CSV table with a fixed header row.
///
/// Cells are written verbatim; numeric columns should be produced with
/// [`format_f64`] so re-ingesting a file reproduces the original values
/// bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    #[must_use]
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header_line) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty CSV".to_string(),
        })?;
        let header: Vec<String> = header_line.split(',').map(|c| c.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (idx, raw) in lines {
            if raw.trim().is_empty() {
                continue;
            }
            let cells: Vec<String> = raw.split(',').map(|c| c.trim().to_string()).collect();
            if cells.len() != header.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("row has {} cells, header has {}", cells.len(), header.len()),
                });
            }
            rows.push(cells);
        }
        Ok(Self { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Verifies the header matches `expected` exactly (order included).
    pub fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.len() != expected.len()
            || self.header.iter().zip(expected).any(|(a, b)| a != b)
        {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected CSV header {:?}, expected {:?}", self.header, expected),
            });
        }
        Ok(())
    }

    pub fn f64_cell(&self, row: usize, col: usize) -> Result<f64> {
        parse_f64(&self.rows[row][col], row + 2)
    }

    #[must_use]
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 64);
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips_awkward_values() {
        for &v in &[
            0.1,
            1.0 / 3.0,
            -0.0,
            6.626e-34,
            123456789.123456789,
            f64::MIN_POSITIVE,
            -2.2250738585072014e-308,
            0.628_318_530_717_958_6,
        ] {
            let back: f64 = format_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "value {v:?}");
        }
    }

    #[test]
    fn kv_file_round_trips() {
        let mut file = KvFile::new();
        let mut s = KvSection::new("alpha");
        s.set_f64("x", 0.1 + 0.2);
        s.set("label", "front left");
        s.set_f64_list("poly", &[1.0, -0.35, 0.25]);
        file.push(s);

        let text = file.render();
        let parsed = KvFile::parse(&text).unwrap();
        let section = parsed.require_section("alpha").unwrap();
        assert_eq!(section.require_f64("x").unwrap().to_bits(), (0.1_f64 + 0.2).to_bits());
        assert_eq!(section.get("label"), Some("front left"));
        assert_eq!(
            section.require_f64_list("poly", 3).unwrap(),
            vec![1.0, -0.35, 0.25]
        );
        assert_eq!(parsed.render(), text);
    }

    #[test]
    fn kv_parse_reports_line_numbers() {
        let err = KvFile::parse("[a]\nkey value\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_round_trips_and_checks_shape() {
        let mut table = CsvTable::new(&["t", "v"]);
        table.push_row(vec![format_f64(0.001), format_f64(22.2)]);
        table.push_row(vec![format_f64(0.002), format_f64(-0.0)]);
        let text = table.render();
        let parsed = CsvTable::parse(&text).unwrap();
        assert_eq!(parsed, table);
        assert_eq!(parsed.f64_cell(1, 1).unwrap().to_bits(), (-0.0_f64).to_bits());
        assert!(CsvTable::parse("a,b\n1\n").is_err());
    }
}

//! CSV emission: fixed column order, 12 significant digits, `.` decimal
//! point regardless of locale, rows buffered and written in one pass so
//! output order never depends on computation order.

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// Format a float with 12 significant digits in scientific notation; the
/// representation is locale-independent and stable across runs.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    format!("{v:.11e}")
}

pub fn int(v: u64) -> String {
    v.to_string()
}

pub struct CsvTable {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Write to `path`, `-` meaning stdout.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = self.render();
        if path.as_os_str() == "-" {
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))
        } else {
            std::fs::write(path, text)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_is_stable() {
        assert_eq!(num(0.0), "0");
        assert_eq!(num(f64::NAN), "nan");
        assert_eq!(num(0.5), "5.00000000000e-1");
        assert_eq!(num(-123.456), "-1.23456000000e2");
        assert_eq!(num(2.812164347091e-3), "2.81216434709e-3");
    }
}

//! CSV persistence and diagnostics on externally supplied traces.
//!
//! Format: UTF-8, comma separated, one header row, LF line endings, values
//! in scientific notation with 12 significant digits.

use std::path::Path;

use crate::diagnostics::{det_l2_report, pe_margin_from, ExcitationReport, SampledTrace};

use super::run::RecordTable;
use super::{write_file, HarnessError};

pub type CsvTable = RecordTable;

/// 12 significant digits, shortest exponent form.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn format_csv(table: &RecordTable) -> String {
    let mut out = String::with_capacity(16 * (table.data.len() + table.n_cols()));
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for i in 0..table.n_rows() {
        for (j, v) in table.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_value(*v));
        }
        out.push('\n');
    }
    out
}

pub fn emit_csv(table: &RecordTable, path: &Path) -> Result<(), HarnessError> {
    write_file(path, format_csv(table).as_bytes())
}

/// Parses a header-plus-numbers CSV. `path` is only used in error messages.
pub fn parse_csv(text: &str, path: &Path) -> Result<CsvTable, HarnessError> {
    let err = |line: usize, message: String| HarnessError::Csv { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header row".into()))?;
    let columns: Vec<String> = header.split(',').map(|c| c.trim().to_string()).collect();
    let mut table = RecordTable::new(columns);
    let n = table.n_cols();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n {
            return Err(err(line_no, format!("expected {n} columns, found {}", fields.len())));
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| err(line_no, format!("column `{}`: cannot parse `{}`", table.columns[j], f.trim())))?;
            table.data.push(v);
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnoseOptions {
    pub pe_window: f64,
    /// Only windows starting at or after this time enter the PE margin.
    pub pe_start: f64,
    /// Growth-fit window for `∫det M²`; `None` uses the second half.
    pub fit_range: Option<(f64, f64)>,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { pe_window: super::run::PE_WINDOW, pe_start: f64::NEG_INFINITY, fit_range: None }
    }
}

/// Excitation diagnostics for a CSV holding a time column `t` and either a
/// regressor block `phi_1..phi_q`, a matrix block `M_i_j` (`q²` columns,
/// row-major), or both.
pub fn diagnose_trace(path: &Path, options: &DiagnoseOptions) -> Result<ExcitationReport, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let table = parse_csv(&text, path)?;
    diagnose_table(&table, options).map_err(|e| match e {
        HarnessError::Csv { line, message, .. } => HarnessError::Csv { path: path.to_path_buf(), line, message },
        other => other,
    })
}

pub fn diagnose_table(table: &CsvTable, options: &DiagnoseOptions) -> Result<ExcitationReport, HarnessError> {
    let missing = |message: &str| HarnessError::Csv { path: Default::default(), line: 1, message: message.into() };
    if table.index_of("t").is_none() {
        return Err(missing("no `t` column"));
    }
    let phi: Vec<String> = (1..).map(|i| format!("phi_{i}")).take_while(|c| table.index_of(c).is_some()).collect();
    let mut q = 0;
    while table.index_of(&format!("M_{}_{}", q + 1, q + 1)).is_some() {
        q += 1;
    }
    let m_cols = super::run::m_columns(q);
    if q > 0 && m_cols.iter().any(|c| table.index_of(c).is_none()) {
        return Err(missing("incomplete M_i_j block"));
    }
    if phi.is_empty() && q == 0 {
        return Err(missing("neither phi_i nor M_i_j columns present"));
    }
    let mut report = if q > 0 {
        det_l2_report(&trace(table, &m_cols), options.fit_range)?
    } else {
        ExcitationReport::empty()
    };
    if !phi.is_empty() {
        report.pe_margin = Some(pe_margin_from(&trace(table, &phi), options.pe_window, options.pe_start)?);
    }
    Ok(report)
}

fn trace(table: &CsvTable, names: &[String]) -> SampledTrace {
    table.trace(names).expect("columns checked")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn table(cols: &[&str], rows: &[&[f64]]) -> RecordTable {
        let mut t = RecordTable::new(cols.iter().map(|c| c.to_string()).collect());
        for r in rows {
            t.data.extend_from_slice(r);
        }
        t
    }

    #[test]
    fn empty_trace_is_header_only() {
        let t = table(&["t", "a"], &[]);
        assert_eq!(format_csv(&t), "t,a\n");
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_value(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(format_value(-2.0), "-2.00000000000e0");
        let t = table(&["t"], &[&[std::f64::consts::PI]]);
        let back = parse_csv(&format_csv(&t), &PathBuf::from("x.csv")).unwrap();
        assert!((back.data[0] - std::f64::consts::PI).abs() <= 5e-12 * std::f64::consts::PI);
    }

    #[test]
    fn ragged_row_reports_line() {
        let err = parse_csv("t,a\n0,1\n1\n", &PathBuf::from("bad.csv")).unwrap_err();
        assert_eq!(err.to_string(), "bad.csv:3: expected 2 columns, found 1");
        assert_eq!(err.exit_code(), 4);
        let err = parse_csv("t,a\n0,zz\n", &PathBuf::from("bad.csv")).unwrap_err();
        assert!(err.to_string().contains("bad.csv:2"));
    }

    #[test]
    fn identity_m_integral_is_time() {
        let mut t = RecordTable::new(["t", "M_1_1", "M_1_2", "M_2_1", "M_2_2"].map(String::from).to_vec());
        for k in 0..=1000 {
            t.data.extend([k as f64 * 0.01, 1.0, 0.0, 0.0, 1.0]);
        }
        let rep = diagnose_table(&t, &DiagnoseOptions::default()).unwrap();
        assert!((rep.det_l2_integral.last().unwrap() - 10.0).abs() < 1e-9);
        assert!(rep.pe_margin.is_none());
    }

    #[test]
    fn sin_cos_regressor_margin() {
        let mut t = RecordTable::new(["t", "phi_1", "phi_2"].map(String::from).to_vec());
        for k in 0..=5000 {
            let s = k as f64 * 0.01;
            t.data.extend([s, s.sin(), s.cos()]);
        }
        let rep = diagnose_table(&t, &DiagnoseOptions::default()).unwrap();
        assert!((rep.pe_margin.unwrap().margin - 0.5).abs() < 0.05);
    }

    #[test]
    fn missing_blocks_rejected() {
        let t = table(&["t", "y"], &[&[0.0, 1.0]]);
        assert!(diagnose_table(&t, &DiagnoseOptions::default()).is_err());
    }
}

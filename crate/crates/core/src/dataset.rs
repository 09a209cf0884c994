//! Line-oriented dataset files: `<term> | <label reals>`, `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::term::{collect_signatures, parse_term, Term};
use crate::tnn::Example;

/// One parsed line with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub line: usize,
    pub term: Term,
    pub label: Vec<f64>,
}

pub fn parse_line(text: &str) -> std::result::Result<(Term, Vec<f64>), String> {
    let (term_text, label_text) =
        text.split_once('|').ok_or_else(|| "missing '|' between term and label".to_string())?;
    let term = parse_term(term_text).map_err(|e| e.to_string())?;
    let label = label_text
        .split_whitespace()
        .map(|v| v.parse::<f64>().map_err(|_| format!("invalid label value {v:?}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if label.is_empty() {
        return Err("empty label".into());
    }
    if let Some(v) = label.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(format!("label value {v} outside [0, 1]"));
    }
    Ok((term, label))
}

/// Parses dataset text; `path` is only used in error messages.
pub fn parse_records(text: &str, path: &Path) -> Result<Vec<Record>> {
    let mut records = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (term, label) =
            parse_line(line).map_err(|msg| Error::Malformed { path: path.to_path_buf(), line: i + 1, msg })?;
        records.push(Record { line: i + 1, term, label });
    }
    collect_signatures(records.iter().map(|r| &r.term))?;
    Ok(records)
}

pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text, path)
}

/// Formats a label so integral values print without a fractional part.
pub fn format_label(label: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in label.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{v}");
    }
    s
}

pub fn format_line(term: &Term, label: &[f64]) -> String {
    format!("{term} | {}", format_label(label))
}

/// Writes single-head examples, one per line.
pub fn write_examples(path: &Path, examples: &[Example]) -> Result<()> {
    let mut out = String::new();
    for ex in examples {
        let target = ex
            .target()
            .ok_or_else(|| Error::InvalidArgument(format!("example {} does not have exactly one head", ex.term)))?;
        out.push_str(&format_line(&ex.term, target));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lines_and_comments() {
        let text = "# header\n(+ 0 (s 0)) | 0 0 0 1\n\n0 | 0 0 0 0\n";
        let recs = parse_records(text, Path::new("t.txt")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].line, 2);
        assert_eq!(recs[0].term.to_string(), "(+ 0 (s 0))");
        assert_eq!(recs[0].label, vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(format_line(&recs[0].term, &recs[0].label), "(+ 0 (s 0)) | 0 0 0 1");
        assert!(parse_records("", Path::new("e")).unwrap().is_empty());
    }

    #[test]
    fn reports_line_numbers() {
        let text = "0 | 1\n(s 0 | 1\n";
        match parse_records(text, Path::new("bad.txt")) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        for bad in ["0 1", "0 |", "0 | a", "0 | 2"] {
            assert!(parse_records(bad, Path::new("b")).is_err(), "{bad}");
        }
        assert!(matches!(parse_records("(s 0) | 1\n(s 0 0) | 1\n", Path::new("c")), Err(Error::ArityConflict { .. })));
    }
}

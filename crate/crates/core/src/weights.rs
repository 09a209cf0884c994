//! Plain-text weight files.
//!
//! ```text
//! tnn v1
//! dim <d>
//! operator <name> <arity> <dims...>     one line per operator, sorted by name
//! head <name> <dims...>                 one line per head, sorted by name
//! end
//! network <name>                        same order as the header
//! layer <activation> <rows> <cols>
//! <cols reals>                          one line per row
//! ```
//!
//! Reals use 17 significant digits, which round-trips every `f64` exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Activation, DenseNetwork, Layer};
use crate::tnn::{OperatorNet, Tnn};

pub const FORMAT_VERSION: &str = "tnn v1";

fn write_network(out: &mut String, name: &str, net: &DenseNetwork) {
    let _ = writeln!(out, "network {name}");
    for layer in net.layers() {
        let (rows, cols) = layer.shape();
        let _ = writeln!(out, "layer {} {rows} {cols}", layer.activation());
        for i in 0..rows {
            let row = layer.row(i);
            for (j, w) in row.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{w:.16e}");
            }
            out.push('\n');
        }
    }
}

fn join_dims(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

pub fn to_text(tnn: &Tnn) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_VERSION}");
    let _ = writeln!(out, "dim {}", tnn.dim());
    for (name, op) in tnn.operators() {
        let _ = writeln!(out, "operator {name} {} {}", op.arity, join_dims(&op.net.dims()));
    }
    for (name, net) in tnn.heads() {
        let _ = writeln!(out, "head {name} {}", join_dims(&net.dims()));
    }
    out.push_str("end\n");
    for (name, op) in tnn.operators() {
        write_network(&mut out, name, &op.net);
    }
    for (name, net) in tnn.heads() {
        write_network(&mut out, name, net);
    }
    out
}

pub fn save_tnn(tnn: &Tnn, path: &Path) -> Result<()> {
    fs::write(path, to_text(tnn)).map_err(|e| Error::io(path, e))
}

pub fn load_tnn(path: &Path) -> Result<Tnn> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}

enum Entry {
    Operator { name: String, arity: usize, dims: Vec<usize> },
    Head { name: String, dims: Vec<usize> },
}

impl Entry {
    fn name(&self) -> &str {
        match self {
            Entry::Operator { name, .. } | Entry::Head { name, .. } => name,
        }
    }

    fn dims(&self) -> &[usize] {
        match self {
            Entry::Operator { dims, .. } | Entry::Head { dims, .. } => dims,
        }
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .ok_or_else(|| Error::Dimension(format!("truncated weight file: expected {what}")))
    }
}

fn parse_usizes<'a>(fields: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<usize>> {
    fields.map(|f| f.parse().map_err(|_| Error::InvalidArgument(format!("line {line}: bad integer {f:?}")))).collect()
}

pub fn from_text(text: &str) -> Result<Tnn> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let (_, version) = lines.next("version line")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version(version.to_string()));
    }
    let (n, dim_line) = lines.next("dim line")?;
    let dim = dim_line
        .strip_prefix("dim ")
        .and_then(|d| d.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::InvalidArgument(format!("line {n}: expected `dim <d>`")))?;

    let mut entries = Vec::new();
    loop {
        let (n, line) = lines.next("header entry or `end`")?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("end") => break,
            Some("operator") => {
                let name = fields.next().ok_or_else(|| Error::InvalidArgument(format!("line {n}: missing name")))?;
                let nums = parse_usizes(fields, n)?;
                let (&arity, dims) =
                    nums.split_first().ok_or_else(|| Error::InvalidArgument(format!("line {n}: missing arity")))?;
                entries.push(Entry::Operator { name: name.to_string(), arity, dims: dims.to_vec() });
            }
            Some("head") => {
                let name = fields.next().ok_or_else(|| Error::InvalidArgument(format!("line {n}: missing name")))?;
                entries.push(Entry::Head { name: name.to_string(), dims: parse_usizes(fields, n)? });
            }
            _ => return Err(Error::InvalidArgument(format!("line {n}: unexpected header line {line:?}"))),
        }
    }

    let mut operators = BTreeMap::new();
    let mut heads = BTreeMap::new();
    for entry in entries {
        let net = read_network(&mut lines, &entry)?;
        match entry {
            Entry::Operator { name, arity, .. } => {
                if operators.insert(name.clone(), OperatorNet { arity, net }).is_some() {
                    return Err(Error::DuplicateName(name));
                }
            }
            Entry::Head { name, .. } => {
                if heads.insert(name.clone(), net).is_some() {
                    return Err(Error::DuplicateName(name));
                }
            }
        }
    }
    if let Some((n, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(Error::InvalidArgument(format!("line {}: trailing content {extra:?}", n + 1)));
    }
    Tnn::from_parts(dim, operators, heads)
}

fn read_network(lines: &mut Lines<'_>, entry: &Entry) -> Result<DenseNetwork> {
    let name = entry.name();
    let dim_err = |msg: String| Error::Dimension(format!("network {name:?}: {msg}"));
    let (n, header) = lines.next("network line")?;
    if header != format!("network {name}") {
        return Err(dim_err(format!("line {n}: expected `network {name}`, found {header:?}")));
    }
    let dims = entry.dims();
    if dims.len() < 2 {
        return Err(dim_err(format!("header lists dims {dims:?}")));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (n, line) = lines.next("layer line")?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [kw, act, rows, cols] = fields[..] else {
            return Err(dim_err(format!("line {n}: expected `layer <activation> <rows> <cols>`")));
        };
        if kw != "layer" {
            return Err(dim_err(format!("line {n}: expected layer, found {kw:?}")));
        }
        let act: Activation = act.parse()?;
        let shape = parse_usizes([rows, cols].into_iter(), n)?;
        let (rows, cols) = (shape[0], shape[1]);
        if rows != w[1] || cols != w[0] + 1 {
            return Err(dim_err(format!("line {n}: layer {rows}x{cols} disagrees with header dims {dims:?}")));
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, row) = lines.next("matrix row")?;
            let before = weights.len();
            for f in row.split_whitespace() {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("line {n}: bad real {f:?} in network {name:?}")))?;
                weights.push(v);
            }
            if weights.len() - before != cols {
                return Err(dim_err(format!("line {n}: row has {} values, expected {cols}", weights.len() - before)));
            }
        }
        layers.push(Layer::from_weights(rows, cols, weights, act).map_err(|e| dim_err(e.to_string()))?);
    }
    DenseNetwork::from_layers(layers).map_err(|e| dim_err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tnn::{random_tnn, signatures_for};

    fn sample() -> Tnn {
        let arities = BTreeMap::from([("0".to_string(), 0), ("s".to_string(), 1), ("+".to_string(), 2)]);
        random_tnn(&signatures_for(&arities, 4, &[5]), 3, 77).unwrap()
    }

    fn bits(t: &Tnn) -> Vec<u64> {
        t.operators()
            .values()
            .map(|o| &o.net)
            .chain(t.heads().values())
            .flat_map(|n| n.layers().iter().flat_map(|l| l.weights().iter().map(|w| w.to_bits())))
            .collect()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let tnn = sample();
        let text = to_text(&tnn);
        let back = from_text(&text).unwrap();
        assert_eq!(bits(&back), bits(&tnn));
        assert_eq!(back, tnn);
        assert_eq!(to_text(&back), text);
        assert!(text.starts_with(
            "tnn v1\ndim 3\noperator + 2 6 5 3\noperator 0 0 1 5 3\noperator s 1 3 5 3\nhead head 3 5 4\nend\n"
        ));
    }

    #[test]
    fn awkward_values_round_trip() {
        let vals = [0.1, -0.0, 1e-310, f64::MAX, f64::MIN_POSITIVE, 1.0 / 3.0, -2.5e-17];
        let layer = Layer::from_weights(1, vals.len(), vals.to_vec(), Activation::Tanh).unwrap();
        let net = DenseNetwork::from_layers(vec![layer]).unwrap();
        let tnn = Tnn::from_parts(
            6,
            BTreeMap::from([("f".to_string(), OperatorNet { arity: 1, net: net.clone() })]),
            BTreeMap::new(),
        );
        // `f` maps 6 -> 1, so it is not a valid operator for dim 6; use it as a head instead.
        assert!(tnn.is_err());
        let tnn = Tnn::from_parts(6, BTreeMap::new(), BTreeMap::from([("h".to_string(), net)])).unwrap();
        let back = from_text(&to_text(&tnn)).unwrap();
        assert_eq!(bits(&back), bits(&tnn));
    }

    #[test]
    fn version_mismatch() {
        let text = to_text(&sample()).replacen("tnn v1", "tnn v2", 1);
        assert!(matches!(from_text(&text), Err(Error::Version(v)) if v == "tnn v2"));
    }

    #[test]
    fn corrupted_row_names_network() {
        let text = to_text(&sample());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let idx = lines.iter().position(|l| l == "network s").unwrap() + 2;
        let mut row: Vec<&str> = lines[idx].split(' ').collect();
        row.pop();
        lines[idx] = row.join(" ");
        match from_text(&lines.join("\n")) {
            Err(Error::Dimension(msg)) => assert!(msg.contains("\"s\""), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_file() {
        let text = to_text(&sample());
        let cut = &text[..text.len() / 2];
        let cut = &cut[..cut.rfind('\n').unwrap()];
        assert!(matches!(from_text(cut), Err(Error::Dimension(_))));
        assert!(from_text("").is_err());
    }

    #[test]
    fn header_dims_must_match_layers() {
        let text = to_text(&sample()).replacen("operator s 1 3 5 3", "operator s 1 3 6 3", 1);
        assert!(matches!(from_text(&text), Err(Error::Dimension(m)) if m.contains("\"s\"")));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.tnn");
        let tnn = sample();
        save_tnn(&tnn, &path).unwrap();
        assert_eq!(load_tnn(&path).unwrap(), tnn);
    }
}

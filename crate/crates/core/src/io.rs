//! Text file formats.
//!
//! - responses: CSV, one row per item and one column per learner, integer
//!   cells, `0` = missing;
//! - partition: one segment length per line;
//! - graph: edge list, `n n' [delta]` per line with 1-based node ids;
//! - labels: one 1-based label per line.
//!
//! Blank lines and lines starting with `#` are skipped. Every parser reports
//! malformed input with its 1-based line number.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{FusionError, Result};
use crate::types::{DataGraph, ResponseMatrix, SequencePartition};

fn parse_err(source: &str, line: usize, msg: impl Into<String>) -> FusionError {
    FusionError::Parse {
        source_name: source.to_string(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// Parses a response CSV. `k_classes = None` infers K as the largest entry.
pub fn parse_responses(text: &str, k_classes: Option<usize>, source: &str) -> Result<ResponseMatrix> {
    let mut rows: Vec<Vec<u32>> = Vec::new();
    for (line, l) in content_lines(text) {
        let row = l
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<u32>()
                    .map_err(|_| parse_err(source, line, format!("invalid response cell {:?}", c.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(
                    source,
                    line,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        if let Some(k) = k_classes {
            if let Some(v) = row.iter().find(|&&v| v as usize > k) {
                return Err(parse_err(source, line, format!("response {v} exceeds K = {k}")));
            }
        }
        if row.iter().all(|&v| v == 0) {
            return Err(parse_err(source, line, "item with no responses"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(source, 0, "no items"));
    }
    let k = k_classes.unwrap_or_else(|| rows.iter().flatten().copied().max().unwrap_or(0) as usize);
    ResponseMatrix::from_item_rows(&rows, k)
}

pub fn format_responses(f: &ResponseMatrix) -> String {
    let mut out = String::new();
    for n in 0..f.n_items() {
        let cells: Vec<String> = f.entries().column(n).iter().map(u32::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_partition(text: &str, n_items: usize, source: &str) -> Result<SequencePartition> {
    let mut lengths = Vec::new();
    for (line, l) in content_lines(text) {
        let len = l
            .parse::<usize>()
            .map_err(|_| parse_err(source, line, format!("invalid segment length {l:?}")))?;
        if len == 0 {
            return Err(parse_err(source, line, "segment length must be at least 1"));
        }
        lengths.push(len);
    }
    SequencePartition::new(lengths, n_items)
}

pub fn format_partition(p: &SequencePartition) -> String {
    p.lengths().iter().map(|l| format!("{l}\n")).collect()
}

pub fn parse_graph(text: &str, n_nodes: usize, source: &str) -> Result<DataGraph> {
    let mut edges = Vec::new();
    for (line, l) in content_lines(text) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(source, line, "expected `n n' [delta]`"));
        }
        let node = |s: &str| -> Result<usize> {
            let v = s
                .parse::<usize>()
                .map_err(|_| parse_err(source, line, format!("invalid node id {s:?}")))?;
            if v == 0 || v > n_nodes {
                return Err(parse_err(source, line, format!("node id {v} outside 1..={n_nodes}")));
            }
            Ok(v - 1)
        };
        let a = node(fields[0])?;
        let b = node(fields[1])?;
        if a == b {
            return Err(parse_err(source, line, "self-loop"));
        }
        let w = match fields.get(2) {
            Some(s) => {
                let d = s
                    .parse::<f64>()
                    .map_err(|_| parse_err(source, line, format!("invalid delta {s:?}")))?;
                if !(d > 0.0 && d.is_finite()) {
                    return Err(parse_err(source, line, format!("delta must be positive, got {d}")));
                }
                Some(d)
            }
            None => None,
        };
        edges.push((a, b, w, line));
    }
    let mut seen = std::collections::HashSet::new();
    for &(a, b, _, line) in &edges {
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(parse_err(source, line, "duplicate edge"));
        }
    }
    DataGraph::new(n_nodes, edges.into_iter().map(|(a, b, w, _)| (a, b, w)).collect())
}

pub fn format_graph(g: &DataGraph) -> String {
    let mut out = String::new();
    for &(a, b, w) in g.edges() {
        match w {
            Some(d) => writeln!(out, "{} {} {d}", a + 1, b + 1),
            None => writeln!(out, "{} {}", a + 1, b + 1),
        }
        .expect("writing to String");
    }
    out
}

/// Parses 1-based labels, one per line.
pub fn parse_labels(text: &str, k_classes: usize, source: &str) -> Result<Vec<usize>> {
    content_lines(text)
        .map(|(line, l)| {
            let v = l
                .parse::<usize>()
                .map_err(|_| parse_err(source, line, format!("invalid label {l:?}")))?;
            if v == 0 || v > k_classes {
                return Err(parse_err(source, line, format!("label {v} outside 1..={k_classes}")));
            }
            Ok(v)
        })
        .collect()
}

pub fn format_labels(labels: &[usize]) -> String {
    labels.iter().map(|l| format!("{l}\n")).collect()
}

/// Row-per-line CSV of a real matrix.
pub fn format_matrix_csv(a: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in a.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        FusionError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })
}

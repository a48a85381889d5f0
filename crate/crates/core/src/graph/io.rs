//! Plain-text graph files.
//!
//! * Edge list: one `i j weight` triple per line. `#` starts a comment;
//!   blank lines are ignored. Each undirected edge appears once.
//! * Labels: one `node_id class_id` pair per line, every node listed once.
//! * Features: one `node_id v_0 ... v_{d-1}` line per node.
//! * `graph.json`: a [`GraphHeader`] written next to the three files above.
//!
//! Numbers are written with Rust's shortest round-trip float formatting, so
//! a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Graph, GraphError, SignedMatrix, TwoClassGraphSpec};
use crate::state::FeatureState;

pub const EDGES_FILE: &str = "edges.txt";
pub const LABELS_FILE: &str = "labels.txt";
pub const FEATURES_FILE: &str = "features.txt";
pub const HEADER_FILE: &str = "graph.json";

#[derive(Debug, Error)]
pub enum GraphIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Header {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Metadata stored alongside a graph bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphHeader {
    pub node_count: usize,
    pub edge_count: usize,
    pub feature_dim: Option<usize>,
    pub spec: Option<TwoClassGraphSpec>,
    pub seed: Option<u64>,
}

fn read(path: &Path) -> Result<String, GraphIoError> {
    fs::read_to_string(path).map_err(|source| GraphIoError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), GraphIoError> {
    fs::write(path, contents).map_err(|source| GraphIoError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Non-empty, comment-stripped lines with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(k, line)| {
        let body = line.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((k + 1, body))
    })
}

fn parse_triples(path: &Path, text: &str) -> Result<Vec<(usize, usize, f64)>, GraphIoError> {
    let fmt = |line: usize, message: String| GraphIoError::Format {
        path: path.to_owned(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (line, body) in data_lines(text) {
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(fmt(
                line,
                format!("expected `i j weight`, got {} fields", fields.len()),
            ));
        }
        let i = fields[0]
            .parse::<usize>()
            .map_err(|e| fmt(line, format!("bad node index `{}`: {e}", fields[0])))?;
        let j = fields[1]
            .parse::<usize>()
            .map_err(|e| fmt(line, format!("bad node index `{}`: {e}", fields[1])))?;
        let w = fields[2]
            .parse::<f64>()
            .map_err(|e| fmt(line, format!("bad weight `{}`: {e}", fields[2])))?;
        out.push((i, j, w));
    }
    Ok(out)
}

fn infer_node_count(triples: &[(usize, usize, f64)]) -> usize {
    triples
        .iter()
        .map(|&(i, j, _)| i.max(j) + 1)
        .max()
        .unwrap_or(0)
}

/// Parses an edge list. Without `node_count`, the count is one past the
/// largest index seen.
pub fn parse_edge_list(
    path: &Path,
    text: &str,
    node_count: Option<usize>,
) -> Result<Graph, GraphIoError> {
    let triples = parse_triples(path, text)?;
    let n = node_count.unwrap_or_else(|| infer_node_count(&triples));
    Ok(Graph::from_edges(n, &triples, None)?)
}

pub fn read_edge_list(path: &Path, node_count: Option<usize>) -> Result<Graph, GraphIoError> {
    parse_edge_list(path, &read(path)?, node_count)
}

/// Reads a signed coupling matrix stored in edge-list format.
pub fn read_signed_edge_list(
    path: &Path,
    node_count: Option<usize>,
) -> Result<SignedMatrix, GraphIoError> {
    let triples = parse_triples(path, &read(path)?)?;
    let n = node_count.unwrap_or_else(|| infer_node_count(&triples));
    Ok(SignedMatrix::from_entries(n, &triples)?)
}

pub fn format_edge_list(g: &Graph) -> String {
    let mut s = format!("# nodes {} edges {}\n", g.node_count(), g.edge_count());
    for (i, j, w) in g.edges() {
        writeln!(s, "{i} {j} {w:?}").expect("string write");
    }
    s
}

pub fn format_signed_edge_list(m: &SignedMatrix) -> String {
    let mut s = format!("# nodes {}\n", m.size());
    for (i, j, w) in m.entries() {
        writeln!(s, "{i} {j} {w:?}").expect("string write");
    }
    s
}

pub fn parse_labels(path: &Path, text: &str, node_count: usize) -> Result<Vec<u32>, GraphIoError> {
    let fmt = |line: usize, message: String| GraphIoError::Format {
        path: path.to_owned(),
        line,
        message,
    };
    let mut labels: Vec<Option<u32>> = vec![None; node_count];
    for (line, body) in data_lines(text) {
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(fmt(line, "expected `node_id class_id`".into()));
        }
        let node = fields[0]
            .parse::<usize>()
            .map_err(|e| fmt(line, format!("bad node id: {e}")))?;
        let class = fields[1]
            .parse::<u32>()
            .map_err(|e| fmt(line, format!("bad class id: {e}")))?;
        let slot = labels.get_mut(node).ok_or_else(|| {
            fmt(
                line,
                format!("node {node} out of range for {node_count} nodes"),
            )
        })?;
        if slot.replace(class).is_some() {
            return Err(fmt(line, format!("node {node} labelled twice")));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(node, l)| l.ok_or_else(|| fmt(0, format!("node {node} has no label"))))
        .collect()
}

pub fn format_labels(labels: &[u32]) -> String {
    let mut s = String::new();
    for (i, c) in labels.iter().enumerate() {
        writeln!(s, "{i} {c}").expect("string write");
    }
    s
}

pub fn parse_features(
    path: &Path,
    text: &str,
    node_count: usize,
) -> Result<FeatureState, GraphIoError> {
    let fmt = |line: usize, message: String| GraphIoError::Format {
        path: path.to_owned(),
        line,
        message,
    };
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; node_count];
    let mut dim = None;
    for (line, body) in data_lines(text) {
        let mut fields = body.split_whitespace();
        let node = fields
            .next()
            .unwrap_or("")
            .parse::<usize>()
            .map_err(|e| fmt(line, format!("bad node id: {e}")))?;
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| fmt(line, format!("bad value `{f}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(fmt(line, "node has no feature values".into()));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(fmt(
                    line,
                    format!("expected {d} values, got {}", values.len()),
                ))
            }
            _ => {}
        }
        let slot = rows
            .get_mut(node)
            .ok_or_else(|| fmt(line, format!("node {node} out of range")))?;
        if slot.replace(values).is_some() {
            return Err(fmt(line, format!("node {node} listed twice")));
        }
    }
    let dim = dim.ok_or_else(|| fmt(0, "no feature rows".into()))?;
    let mut data = Vec::with_capacity(node_count * dim);
    for (node, r) in rows.into_iter().enumerate() {
        data.extend(r.ok_or_else(|| fmt(0, format!("node {node} has no features")))?);
    }
    Ok(FeatureState::from_vec(node_count, dim, data).expect("shape checked"))
}

pub fn format_features(x: &FeatureState) -> String {
    let mut s = String::new();
    for (i, row) in x.rows().enumerate() {
        write!(s, "{i}").expect("string write");
        for v in row {
            write!(s, " {v:?}").expect("string write");
        }
        s.push('\n');
    }
    s
}

/// Writes `edges.txt`, `labels.txt` (when labelled), `features.txt`
/// (when given) and `graph.json` into `dir`.
pub fn write_bundle(
    dir: &Path,
    g: &Graph,
    features: Option<&FeatureState>,
    spec: Option<&TwoClassGraphSpec>,
) -> Result<GraphHeader, GraphIoError> {
    fs::create_dir_all(dir).map_err(|source| GraphIoError::Io {
        path: dir.to_owned(),
        source,
    })?;
    write(&dir.join(EDGES_FILE), &format_edge_list(g))?;
    if let Some(labels) = g.labels() {
        write(&dir.join(LABELS_FILE), &format_labels(labels))?;
    }
    if let Some(x) = features {
        write(&dir.join(FEATURES_FILE), &format_features(x))?;
    }
    let header = GraphHeader {
        node_count: g.node_count(),
        edge_count: g.edge_count(),
        feature_dim: features.map(FeatureState::dim),
        spec: spec.cloned(),
        seed: spec.map(|s| s.seed),
    };
    let path = dir.join(HEADER_FILE);
    let json = serde_json::to_string_pretty(&header).map_err(|source| GraphIoError::Header {
        path: path.clone(),
        source,
    })?;
    write(&path, &json)?;
    Ok(header)
}

/// Loaded contents of a bundle directory.
#[derive(Debug, Clone)]
pub struct GraphBundle {
    pub graph: Graph,
    pub features: Option<FeatureState>,
    pub header: GraphHeader,
}

pub fn read_bundle(dir: &Path) -> Result<GraphBundle, GraphIoError> {
    let header_path = dir.join(HEADER_FILE);
    let header: GraphHeader =
        serde_json::from_str(&read(&header_path)?).map_err(|source| GraphIoError::Header {
            path: header_path,
            source,
        })?;
    let n = header.node_count;
    let mut graph = read_edge_list(&dir.join(EDGES_FILE), Some(n))?;
    let labels_path = dir.join(LABELS_FILE);
    if labels_path.exists() {
        let labels = parse_labels(&labels_path, &read(&labels_path)?, n)?;
        graph = graph.with_labels(labels)?;
    }
    let features_path = dir.join(FEATURES_FILE);
    let features = if features_path.exists() {
        Some(parse_features(&features_path, &read(&features_path)?, n)?)
    } else {
        None
    };
    Ok(GraphBundle {
        graph,
        features,
        header,
    })
}

//! Edge list, attribute CSV and label CSV readers/writers.
//!
//! Edge lines are `u v` or `u v w`; lines starting with `#` are comments,
//! except `# nodes: N` which declares ids `0..N` up front so isolated nodes
//! survive a round trip. Arbitrary node tokens are remapped to dense ids:
//! numerically sorted when every token is an integer, lexicographically
//! otherwise.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Attributes, Edge, Graph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub attributes: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Original token for each dense node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMap {
    pub original: Vec<String>,
}

impl NodeMap {
    fn index(&self) -> HashMap<&str, usize> {
        self.original.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_graph(files: &GraphFiles, directed: bool) -> Result<(Graph, NodeMap)> {
    let edges = read(&files.edges)?;
    let attrs = files.attributes.as_deref().map(read).transpose()?;
    let labels = files.labels.as_deref().map(read).transpose()?;
    parse_graph(
        &files.edges.display().to_string(),
        &edges,
        attrs.as_deref(),
        labels.as_deref(),
        directed,
    )
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn declared_nodes(line: &str) -> Option<&str> {
    line.strip_prefix('#')?.trim().strip_prefix("nodes:").map(str::trim)
}

pub(crate) fn parse_graph(
    name: &str,
    edge_text: &str,
    attr_text: Option<&str>,
    label_text: Option<&str>,
    directed: bool,
) -> Result<(Graph, NodeMap)> {
    let mut tokens: BTreeSet<String> = BTreeSet::new();
    let mut raw: Vec<(usize, String, String, f64)> = Vec::new();
    for (i, line) in edge_text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            if let Some(n) = declared_nodes(line) {
                let n: usize = n
                    .parse()
                    .map_err(|_| parse_err(name, lineno, format!("bad node count '{n}'")))?;
                tokens.extend((0..n).map(|i| i.to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let w = match fields.len() {
            2 => 1.0,
            3 => fields[2]
                .parse::<f64>()
                .map_err(|_| parse_err(name, lineno, format!("bad weight '{}'", fields[2])))?,
            k => return Err(parse_err(name, lineno, format!("expected 'u v [w]', found {k} fields"))),
        };
        if !(w.is_finite() && w > 0.0) {
            return Err(parse_err(name, lineno, format!("weight must be positive, got {w}")));
        }
        if fields[0] == fields[1] {
            return Err(parse_err(name, lineno, format!("self-loop on '{}'", fields[0])));
        }
        tokens.insert(fields[0].to_string());
        tokens.insert(fields[1].to_string());
        raw.push((lineno, fields[0].to_string(), fields[1].to_string(), w));
    }

    let mut original: Vec<String> = tokens.into_iter().collect();
    if original.iter().all(|t| t.parse::<u64>().is_ok()) {
        original.sort_by_key(|t| t.parse::<u64>().unwrap_or(0));
    }
    let map = NodeMap { original };
    let index = map.index();
    let n = map.original.len();

    let edges = raw.iter().map(|(_, u, v, w)| Edge {
        u: index[u.as_str()],
        v: index[v.as_str()],
        w: *w,
    });
    let mut graph = Graph::new(n, edges, directed)?;

    if let Some(text) = attr_text {
        graph = graph.with_attributes(parse_attributes(text, &index, n)?)?;
    }
    if let Some(text) = label_text {
        graph = graph.with_labels(parse_labels(text, &index, n)?)?;
    }
    Ok((graph, map))
}

fn csv_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        if l.is_empty() || l.starts_with('#') {
            None
        } else {
            Some((i + 1, l.split(',').map(str::trim).collect()))
        }
    })
}

fn parse_attributes(text: &str, index: &HashMap<&str, usize>, n: usize) -> Result<Attributes> {
    const NAME: &str = "attributes";
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut dim: Option<usize> = None;
    let mut first = true;
    for (lineno, fields) in csv_lines(text) {
        let parsed: std::result::Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(_) => return Err(parse_err(NAME, lineno, "non-numeric attribute value")),
        };
        first = false;
        let &node = index
            .get(fields[0])
            .ok_or_else(|| parse_err(NAME, lineno, format!("unknown node id '{}'", fields[0])))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(parse_err(
                    NAME,
                    lineno,
                    format!("expected {d} attribute values, found {}", values.len()),
                ))
            }
            _ => {}
        }
        if rows[node].replace(values).is_some() {
            return Err(parse_err(NAME, lineno, format!("duplicate node id '{}'", fields[0])));
        }
    }
    let dim = dim.unwrap_or(0);
    let mut flat = Vec::with_capacity(n * dim);
    for (v, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| Error::invalid(format!("node {v} has no attribute row")))?;
        flat.extend(row);
    }
    Attributes::new(n, dim, flat)
}

fn parse_labels(text: &str, index: &HashMap<&str, usize>, n: usize) -> Result<Vec<usize>> {
    const NAME: &str = "labels";
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut first = true;
    for (lineno, fields) in csv_lines(text) {
        if fields.len() != 2 {
            return Err(parse_err(NAME, lineno, "expected 'node_id,label'"));
        }
        let label = match fields[1].parse::<usize>() {
            Ok(l) => l,
            Err(_) if first => {
                first = false;
                continue;
            }
            Err(_) => return Err(parse_err(NAME, lineno, format!("bad label '{}'", fields[1]))),
        };
        first = false;
        let &node = index
            .get(fields[0])
            .ok_or_else(|| parse_err(NAME, lineno, format!("unknown node id '{}'", fields[0])))?;
        if labels[node].replace(label).is_some() {
            return Err(parse_err(NAME, lineno, format!("duplicate node id '{}'", fields[0])));
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| Error::invalid(format!("node {v} has no label"))))
        .collect()
}

pub(crate) fn format_edges(g: &Graph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# graphreach edge list");
    let _ = writeln!(out, "# nodes: {}", g.n());
    for e in g.edges() {
        if e.w == 1.0 {
            let _ = writeln!(out, "{} {}", e.u, e.v);
        } else {
            let _ = writeln!(out, "{} {} {}", e.u, e.v, e.w);
        }
    }
    out
}

/// Writes the graph's edges, plus attributes and labels when both the graph
/// carries them and a path is given.
pub fn save_graph(g: &Graph, files: &GraphFiles) -> Result<()> {
    write(&files.edges, &format_edges(g))?;
    if let (Some(path), Some(attrs)) = (&files.attributes, g.attributes()) {
        let mut out = String::from("node_id");
        for j in 0..attrs.dim() {
            let _ = write!(out, ",f{j}");
        }
        out.push('\n');
        for v in 0..g.n() {
            let _ = write!(out, "{v}");
            for x in attrs.row(v) {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        write(path, &out)?;
    }
    if let (Some(path), Some(labels)) = (&files.labels, g.labels()) {
        let mut out = String::from("node_id,label\n");
        for (v, l) in labels.iter().enumerate() {
            let _ = writeln!(out, "{v},{l}");
        }
        write(path, &out)?;
    }
    Ok(())
}

pub fn write_node_map(map: &NodeMap, path: &Path) -> Result<()> {
    let mut out = String::from("dense_id,original_id\n");
    for (i, s) in map.original.iter().enumerate() {
        let _ = writeln!(out, "{i},{s}");
    }
    write(path, &out)
}

pub fn read_node_map(path: &Path) -> Result<NodeMap> {
    let text = read(path)?;
    let mut original = Vec::new();
    for (lineno, fields) in csv_lines(&text).skip(1) {
        if fields.len() != 2 || fields[0].parse::<usize>() != Ok(original.len()) {
            return Err(parse_err("node map", lineno, "expected 'dense_id,original_id'"));
        }
        original.push(fields[1].to_string());
    }
    Ok(NodeMap { original })
}

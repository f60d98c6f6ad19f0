//! Text formats for features, labels, graphs, rankings and relevance sets.
//!
//! Graph files start with a `M L` header followed by one
//! `layer_index src dst weight` line per undirected edge with `src < dst`.
//! Weights are written with Rust's shortest round-trip float rendering, so a
//! save/load cycle reproduces them bit for bit.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::graph::{FeatureSet, LayerGraph, MultiLayerGraph};
use crate::transition::LabelSet;
use crate::{Error, Result};

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// Numbered non-blank lines, 1-based.
fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
}

pub fn read_features<R: BufRead>(reader: R, path: &Path, delimiter: char) -> Result<FeatureSet> {
    let mut values = Vec::new();
    let mut dim = None;
    for (no, line) in content_lines(reader) {
        let line = line?;
        let mut count = 0;
        for cell in line.split(delimiter) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(path, no, format!("not a number: {:?}", cell.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(path, no, format!("non-finite value {v}")));
            }
            values.push(v);
            count += 1;
        }
        match dim {
            None => dim = Some(count),
            Some(d) if d != count => {
                return Err(parse_err(
                    path,
                    no,
                    format!("row has {count} columns, expected {d}"),
                ));
            }
            Some(_) => {}
        }
    }
    let Some(dim) = dim else {
        return Err(parse_err(path, 0, "empty feature file"));
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    FeatureSet::new(name, dim, values).map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn load_features(path: impl AsRef<Path>, delimiter: char) -> Result<FeatureSet> {
    let path = path.as_ref();
    read_features(open(path)?, path, delimiter)
}

pub fn write_features<W: Write>(mut out: W, features: &FeatureSet, delimiter: char) -> Result<()> {
    for row in features.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{}", cells.join(&delimiter.to_string()))?;
    }
    Ok(())
}

pub fn save_features(path: impl AsRef<Path>, features: &FeatureSet, delimiter: char) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_features(&mut w, features, delimiter)?;
    w.flush()?;
    Ok(())
}

/// Reads `node_id,category` lines. Unlisted nodes stay unlabeled.
pub fn read_labels<R: BufRead>(reader: R, path: &Path, nodes: usize) -> Result<LabelSet> {
    let mut labels = LabelSet::unlabeled(nodes);
    for (no, line) in content_lines(reader) {
        let line = line?;
        let (id, category) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, no, "expected node_id,category"))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| parse_err(path, no, format!("bad node id {:?}", id.trim())))?;
        let category = category.trim();
        if category.is_empty() {
            return Err(parse_err(path, no, "empty category"));
        }
        if id >= nodes {
            return Err(parse_err(
                path,
                no,
                format!("node {id} out of range for {nodes} nodes"),
            ));
        }
        labels.assign(id, category)?;
    }
    Ok(labels)
}

pub fn load_labels(path: impl AsRef<Path>, nodes: usize) -> Result<LabelSet> {
    let path = path.as_ref();
    read_labels(open(path)?, path, nodes)
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, c) in labels.iter_labeled() {
        writeln!(w, "{i},{}", labels.category_name(c))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_graph<W: Write>(mut out: W, graph: &MultiLayerGraph) -> Result<()> {
    writeln!(out, "{} {}", graph.nodes(), graph.layer_count())?;
    for (l, layer) in graph.layers().iter().enumerate() {
        for e in layer.edges() {
            writeln!(out, "{l} {} {} {}", e.src, e.dst, e.weight)?;
        }
    }
    Ok(())
}

pub fn save_graph(path: impl AsRef<Path>, graph: &MultiLayerGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_graph(&mut w, graph)?;
    w.flush()?;
    Ok(())
}

pub fn read_graph<R: BufRead>(reader: R, path: &Path) -> Result<MultiLayerGraph> {
    let mut lines = content_lines(reader);
    let (no, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 0, "empty graph file"))?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(path, no, "header must be `M L`"))?;
    let [m, layer_count] = dims[..] else {
        return Err(parse_err(path, no, "header must be `M L`"));
    };
    if layer_count == 0 {
        return Err(parse_err(path, no, "graph must have at least one layer"));
    }
    let mut edges: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); layer_count];
    for (no, line) in lines {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(parse_err(path, no, "expected `layer src dst weight`"));
        }
        let idx = |k: usize| -> Result<usize> {
            fields[k]
                .parse()
                .map_err(|_| parse_err(path, no, format!("bad integer {:?}", fields[k])))
        };
        let (l, src, dst) = (idx(0)?, idx(1)?, idx(2)?);
        let w: f64 = fields[3]
            .parse()
            .map_err(|_| parse_err(path, no, format!("bad weight {:?}", fields[3])))?;
        if l >= layer_count {
            return Err(parse_err(path, no, format!("layer {l} out of range")));
        }
        if src >= dst {
            return Err(parse_err(path, no, "edges must be written with src < dst"));
        }
        edges[l].push((src, dst, w));
    }
    let layers = edges
        .into_iter()
        .map(|e| LayerGraph::from_edges(m, e).map_err(|err| parse_err(path, 0, err.to_string())))
        .collect::<Result<Vec<_>>>()?;
    MultiLayerGraph::new(layers)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<MultiLayerGraph> {
    let path = path.as_ref();
    read_graph(open(path)?, path)
}

/// `rank,node_id,score` rows after a header of the same names.
pub fn write_ranking<W: Write>(mut out: W, ranked: &[(usize, f64)]) -> Result<()> {
    writeln!(out, "rank,node_id,score")?;
    for (k, (id, score)) in ranked.iter().enumerate() {
        writeln!(out, "{},{id},{score:e}", k + 1)?;
    }
    Ok(())
}

/// Node ids of a ranking file, in rank order.
pub fn load_ranking(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut rows: Vec<(usize, usize)> = Vec::new();
    for (no, line) in content_lines(open(path)?) {
        let line = line?;
        if line.starts_with("rank") {
            continue;
        }
        let mut cells = line.split(',');
        let mut next = |what: &str| -> Result<usize> {
            cells
                .next()
                .and_then(|c| c.trim().parse().ok())
                .ok_or_else(|| parse_err(path, no, format!("bad {what}")))
        };
        let rank = next("rank")?;
        let id = next("node id")?;
        rows.push((rank, id));
    }
    rows.sort_by_key(|r| r.0);
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// `query_id,relevant_id` lines grouped by query.
pub fn load_relevance(path: impl AsRef<Path>) -> Result<BTreeMap<usize, HashSet<usize>>> {
    let path = path.as_ref();
    let mut sets: BTreeMap<usize, HashSet<usize>> = BTreeMap::new();
    for (no, line) in content_lines(open(path)?) {
        let line = line?;
        let parsed = line
            .split_once(',')
            .and_then(|(q, r)| Some((q.trim().parse().ok()?, r.trim().parse().ok()?)));
        let (q, r): (usize, usize) =
            parsed.ok_or_else(|| parse_err(path, no, "expected query_id,relevant_id"))?;
        sets.entry(q).or_default().insert(r);
    }
    Ok(sets)
}

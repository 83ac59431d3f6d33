//! On-disk graph bundle: `graph.json` plus one CSV per relation and per
//! feature/label table.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{build_graph, Edge, HeteroGraph, NodeType, Relation};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "graph.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    node_types: Vec<TypeEntry>,
    relations: Vec<RelationEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TypeEntry {
    name: String,
    count: usize,
    feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    features: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationEntry {
    name: String,
    src: String,
    dst: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<String>,
}

/// Writes `g` as a bundle directory, creating it if needed.
pub fn save_graph(g: &HeteroGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut types = Vec::new();
    for (t, nt) in g.node_types().iter().enumerate() {
        let features = g.features_at(t).map(|m| {
            let file = format!("{}.features.csv", nt.name);
            (file, m)
        });
        if let Some((file, m)) = &features {
            let mut out = String::new();
            for row in m.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            fs::write(dir.join(file), out)?;
        }
        let labels = g.labels_at(t).map(|l| {
            let file = format!("{}.labels.csv", nt.name);
            (file, l)
        });
        if let Some((file, l)) = &labels {
            let mut out = String::new();
            for y in l.iter() {
                writeln!(out, "{y}").unwrap();
            }
            fs::write(dir.join(file), out)?;
        }
        types.push(TypeEntry {
            name: nt.name.clone(),
            count: nt.count,
            feature_dim: nt.feature_dim,
            features: features.map(|f| f.0),
            labels: labels.map(|l| l.0),
        });
    }

    let mut relations = Vec::new();
    for (k, r) in g.relations().iter().enumerate() {
        let file = format!("{}.csv", r.name);
        let mut out = String::new();
        for (dst, src, count) in g.adjacency_at(k).iter() {
            if count == 1 {
                writeln!(out, "{src},{dst}").unwrap();
            } else {
                writeln!(out, "{src},{dst},{count}").unwrap();
            }
        }
        fs::write(dir.join(&file), out)?;
        relations.push(RelationEntry {
            name: r.name.clone(),
            src: r.src_type.clone(),
            dst: r.dst_type.clone(),
            edges: Some(file),
        });
    }

    let manifest = Manifest {
        node_types: types,
        relations,
    };
    fs::write(
        dir.join(MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

/// Reads a bundle directory written by [`save_graph`] (or by hand).
pub fn load_graph(dir: impl AsRef<Path>) -> Result<HeteroGraph> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path)
        .map_err(|e| Error::bundle(&manifest_path, format!("cannot read manifest: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::bundle(&manifest_path, format!("malformed header: {e}")))?;

    let mut node_types = Vec::new();
    let mut features = HashMap::new();
    let mut labels = HashMap::new();
    for t in &manifest.node_types {
        node_types.push(NodeType::new(&t.name, t.count, t.feature_dim));
        match (&t.features, t.feature_dim) {
            (Some(file), _) => {
                let path = dir.join(file);
                let text = fs::read_to_string(&path).map_err(|e| {
                    Error::bundle(&path, format!("feature file for type `{}`: {e}", t.name))
                })?;
                let m = parse_features(&text, t.count, t.feature_dim)
                    .map_err(|msg| Error::bundle(&path, format!("type `{}`: {msg}", t.name)))?;
                features.insert(t.name.clone(), m);
            }
            (None, 0) => {}
            (None, d) => {
                return Err(Error::bundle(
                    &manifest_path,
                    format!("type `{}` declares feature_dim {d} but names no feature file", t.name),
                ))
            }
        }
        if let Some(file) = &t.labels {
            let path = dir.join(file);
            let text = fs::read_to_string(&path).map_err(|e| {
                Error::bundle(&path, format!("label file for type `{}`: {e}", t.name))
            })?;
            let l = parse_labels(&text, t.count)
                .map_err(|msg| Error::bundle(&path, format!("type `{}`: {msg}", t.name)))?;
            labels.insert(t.name.clone(), l);
        }
    }

    let mut relations = Vec::new();
    let mut edges = HashMap::new();
    for r in &manifest.relations {
        for end in [&r.src, &r.dst] {
            if !manifest.node_types.iter().any(|t| &t.name == end) {
                return Err(Error::bundle(
                    &manifest_path,
                    format!("relation `{}` references unknown type `{end}`", r.name),
                ));
            }
        }
        relations.push(Relation::new(&r.name, &r.src, &r.dst));
        let file = r.edges.clone().unwrap_or_else(|| format!("{}.csv", r.name));
        let path = dir.join(&file);
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::bundle(&path, format!("edge file for relation `{}`: {e}", r.name))
        })?;
        let list = parse_edges(&text)
            .map_err(|msg| Error::bundle(&path, format!("relation `{}`: {msg}", r.name)))?;
        edges.insert(r.name.clone(), list);
    }

    build_graph(node_types, relations, edges, features, labels)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_edges(text: &str) -> Result<Vec<Edge>, String> {
    let mut out = Vec::new();
    for (line_no, line) in data_lines(text) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if line_no == 1 && cols.first().is_some_and(|c| c.parse::<usize>().is_err()) {
            continue; // optional header row
        }
        if cols.len() != 2 && cols.len() != 3 {
            return Err(format!("line {line_no}: expected 2 or 3 columns, got {}", cols.len()));
        }
        let num = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| format!("line {line_no}: `{s}`: {e}"))
        };
        let src = num(cols[0])? as usize;
        let dst = num(cols[1])? as usize;
        let count = if cols.len() == 3 { num(cols[2])? } else { 1 };
        out.push(Edge { src, dst, count });
    }
    Ok(out)
}

fn parse_features(text: &str, count: usize, dim: usize) -> Result<Array2<f64>, String> {
    let mut data = Vec::with_capacity(count * dim);
    let mut rows = 0;
    for (line_no, line) in data_lines(text) {
        let before = data.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|e| format!("line {line_no}: `{cell}`: {e}"))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(format!(
                "line {line_no}: expected {dim} columns, got {}",
                data.len() - before
            ));
        }
        rows += 1;
    }
    if rows != count {
        return Err(format!("feature row count {rows} does not match node count {count}"));
    }
    Ok(Array2::from_shape_vec((count, dim), data).expect("row widths checked"))
}

fn parse_labels(text: &str, count: usize) -> Result<Vec<usize>, String> {
    let labels = data_lines(text)
        .map(|(line_no, l)| {
            l.parse::<usize>()
                .map_err(|e| format!("line {line_no}: `{l}`: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if labels.len() != count {
        return Err(format!("label count {} does not match node count {count}", labels.len()));
    }
    Ok(labels)
}

//! Text formats: TU benchmark datasets and the line-oriented fixture format.
//!
//! Fixture grammar (UTF-8, one record per line, `#` starts a comment):
//!
//! ```text
//! v <int-id> <label-token>
//! e <int-id> <int-id>
//! ```
//!
//! All `v` lines come before the first `e` line. Nodes are numbered in
//! declaration order.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};
use crate::graph::{LabelVocabulary, LabeledGraph};

/// A graph read from fixture text together with its labels and original ids.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub graph: LabeledGraph,
    pub vocab: LabelVocabulary,
    /// `ids[v]` is the id written on the `v` line of node `v`.
    pub ids: Vec<i64>,
}

fn content(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

pub fn parse_fixture(text: &str) -> Result<Fixture> {
    let mut vocab = LabelVocabulary::new();
    let (graph, ids) = parse_fixture_with(text, &mut vocab)?;
    Ok(Fixture { graph, vocab, ids })
}

/// Parses a fixture, interning labels into an existing vocabulary.
pub fn parse_fixture_with(
    text: &str,
    vocab: &mut LabelVocabulary,
) -> Result<(LabeledGraph, Vec<i64>)> {
    let mut ids = Vec::new();
    let mut local: HashMap<i64, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = content(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["v", id, label] => {
                if !edges.is_empty() {
                    return Err(parse_err(line_no, "node line after the first edge line"));
                }
                let id: i64 = id
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("invalid node id {id:?}")))?;
                if local.insert(id, ids.len()).is_some() {
                    return Err(parse_err(line_no, format!("duplicate node id {id}")));
                }
                ids.push(id);
                labels.push(vocab.intern(label));
            }
            ["e", u, v] => {
                let endpoint = |s: &str| -> Result<usize> {
                    let id: i64 = s
                        .parse()
                        .map_err(|_| parse_err(line_no, format!("invalid node id {s:?}")))?;
                    local
                        .get(&id)
                        .copied()
                        .ok_or_else(|| parse_err(line_no, format!("undeclared node {id}")))
                };
                let (a, b) = (endpoint(u)?, endpoint(v)?);
                if a == b {
                    return Err(parse_err(line_no, format!("self-loop on node {u}")));
                }
                edges.push((a, b));
            }
            _ => return Err(parse_err(line_no, format!("unrecognized record {line:?}"))),
        }
    }
    let graph = LabeledGraph::new(labels, &edges)?;
    Ok((graph, ids))
}

/// Writes `g` in fixture form with ids `1..=n`.
pub fn write_fixture(g: &LabeledGraph, vocab: &LabelVocabulary) -> String {
    let mut out = String::new();
    for v in 0..g.node_count() {
        let label = g.label(v);
        let token = vocab
            .token(label)
            .map(str::to_owned)
            .unwrap_or_else(|| label.to_string());
        let _ = writeln!(out, "v {} {}", v + 1, token);
    }
    for (u, v) in g.edges() {
        let _ = writeln!(out, "e {} {}", u + 1, v + 1);
    }
    out
}

fn parse_int_lines(text: &str, what: &str) -> Result<Vec<i64>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let value = line
            .parse()
            .map_err(|_| parse_err(idx + 1, format!("invalid {what} {line:?}")))?;
        out.push(value);
    }
    Ok(out)
}

fn parse_label_lines(text: &str) -> Vec<(usize, String)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i, l.to_owned()))
        .collect()
}

/// Parses the three files of a TU benchmark dataset (`DS_A.txt`,
/// `DS_graph_indicator.txt`, `DS_node_labels.txt`).
///
/// Graphs are returned in order of first appearance of their indicator
/// value; node order within a graph follows the global 1-based node ids.
pub fn parse_tu_dataset(
    adjacency_text: &str,
    indicator_text: &str,
    node_labels_text: &str,
) -> Result<(Vec<LabeledGraph>, LabelVocabulary)> {
    let indicator = parse_int_lines(indicator_text, "graph indicator")?;
    let label_lines = parse_label_lines(node_labels_text);
    if label_lines.len() != indicator.len() {
        return Err(Error::Structural(format!(
            "{} node labels for {} indicator entries",
            label_lines.len(),
            indicator.len()
        )));
    }

    let mut graph_of_value: HashMap<i64, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut position = Vec::with_capacity(indicator.len());
    let mut owner = Vec::with_capacity(indicator.len());
    for (node, &value) in indicator.iter().enumerate() {
        let gid = *graph_of_value.entry(value).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        position.push(members[gid].len());
        owner.push(gid);
        members[gid].push(node);
    }

    let mut vocab = LabelVocabulary::new();
    let mut labels: Vec<Vec<u32>> = members.iter().map(|m| Vec::with_capacity(m.len())).collect();
    for (node, (_, token)) in label_lines.iter().enumerate() {
        labels[owner[node]].push(vocab.intern(token));
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); members.len()];
    let node_total = indicator.len() as i64;
    for (idx, raw) in adjacency_text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(line_no, format!("expected \"i, j\", got {line:?}")));
        };
        let parse_id = |s: &str| -> Result<i64> {
            s.parse()
                .map_err(|_| parse_err(line_no, format!("invalid node id {s:?}")))
        };
        let (a, b) = (parse_id(a)?, parse_id(b)?);
        for id in [a, b] {
            if id < 1 || id > node_total {
                return Err(Error::Structural(format!(
                    "line {line_no}: node {id} outside 1..={node_total}"
                )));
            }
        }
        let (a, b) = ((a - 1) as usize, (b - 1) as usize);
        if owner[a] != owner[b] {
            return Err(Error::Structural(format!(
                "line {line_no}: edge joins nodes of different graphs"
            )));
        }
        if a == b {
            return Err(Error::Structural(format!("line {line_no}: self-loop")));
        }
        edges[owner[a]].push((position[a], position[b]));
    }

    let graphs = labels
        .into_iter()
        .zip(edges)
        .map(|(l, e)| LabeledGraph::new(l, &e))
        .collect::<Result<Vec<_>>>()?;
    Ok((graphs, vocab))
}

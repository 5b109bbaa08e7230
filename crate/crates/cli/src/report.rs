//! Evaluation reports: one CSV schema plus a JSON summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

pub const CSV_HEADER: &str = "method,k,graph_id,found_frequency,truth_frequency,ratio,infer_ms,score_ms";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub method: String,
    pub k: usize,
    pub graph_id: usize,
    /// Mean over seeds for stochastic baselines.
    pub found_frequency: f64,
    pub truth_frequency: usize,
    pub ratio: f64,
    pub infer_ms: f64,
    pub score_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub method: String,
    pub k: usize,
    pub rows: usize,
    pub mean_ratio: f64,
    pub total_infer_ms: f64,
    pub total_score_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Absence {
    pub graph_id: usize,
    pub k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    /// Sorted by method, k, graph id.
    pub rows: Vec<EvalRow>,
    /// `(graph, k)` cells without an oracle entry; not in `rows`.
    pub absent: Vec<Absence>,
}

impl EvalReport {
    pub fn sort(&mut self) {
        self.rows
            .sort_by(|a, b| (&a.method, a.k, a.graph_id).cmp(&(&b.method, b.k, b.graph_id)));
        self.absent.sort_by_key(|a| (a.k, a.graph_id));
    }

    /// Per `(method, k)` aggregates, recomputed from the rows.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut groups: BTreeMap<(&str, usize), Vec<&EvalRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((&r.method, r.k)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((method, k), rows)| Aggregate {
                method: method.to_owned(),
                k,
                rows: rows.len(),
                mean_ratio: rows.iter().map(|r| r.ratio).sum::<f64>() / rows.len() as f64,
                total_infer_ms: rows.iter().map(|r| r.infer_ms).sum(),
                total_score_ms: rows.iter().map(|r| r.score_ms).sum(),
            })
            .collect()
    }

    pub fn mean_ratio(&self, method: &str, k: usize) -> Option<f64> {
        self.aggregates()
            .into_iter()
            .find(|a| a.method == method && a.k == k)
            .map(|a| a.mean_ratio)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3},{:.3}",
                r.method, r.k, r.graph_id, r.found_frequency, r.truth_frequency, r.ratio, r.infer_ms, r.score_ms
            );
        }
        out
    }

    /// Copy with wall-clock columns zeroed; equal across identical runs.
    pub fn without_timing(&self) -> Self {
        let mut c = self.clone();
        for r in &mut c.rows {
            r.infer_ms = 0.0;
            r.score_ms = 0.0;
        }
        c
    }

    pub fn summary_json(&self) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            aggregates: Vec<Aggregate>,
            absent: &'a [Absence],
        }
        serde_json::to_string_pretty(&Summary {
            aggregates: self.aggregates(),
            absent: &self.absent,
        })
    }
}

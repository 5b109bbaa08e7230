//! Dataset loading and label-vocabulary remapping.

use std::path::{Path, PathBuf};

use kminer_core::io::{parse_fixture_with, parse_tu_dataset};
use kminer_core::split::{filter_and_split, DatasetSplit};
use kminer_core::{LabelVocabulary, LabeledGraph};

use crate::config::{DatasetFormat, RunConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graphs: Vec<LabeledGraph>,
    pub vocab: LabelVocabulary,
    /// Node ids as written in the source files, per graph.
    pub node_ids: Vec<Vec<i64>>,
    pub split: DatasetSplit,
}

impl Dataset {
    pub fn train(&self) -> Vec<(usize, LabeledGraph)> {
        self.pick(&self.split.train)
    }

    pub fn test(&self) -> Vec<(usize, LabeledGraph)> {
        self.pick(&self.split.test)
    }

    fn pick(&self, ids: &[usize]) -> Vec<(usize, LabeledGraph)> {
        ids.iter().map(|&i| (i, self.graphs[i].clone())).collect()
    }

    /// Train and test ids, ascending and without repeats.
    pub fn used_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.split.train.iter().chain(&self.split.test).copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn infer_format(path: &Path) -> Result<DatasetFormat> {
    if path.is_file() {
        return Ok(DatasetFormat::Fixture);
    }
    let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        if entry.file_name().to_string_lossy().ends_with("_A.txt") {
            return Ok(DatasetFormat::Tu);
        }
    }
    Ok(DatasetFormat::Fixture)
}

fn fixture_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.extension().is_some_and(|x| x == "graph") {
            files.push(p);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!("no *.graph fixtures in {}", path.display())));
    }
    Ok(files)
}

/// Loads the configured dataset.
///
/// TU datasets go through the size filter and the seeded 80/20 split.
/// Fixture datasets are used whole: every connected graph is both a training
/// and a test graph.
pub fn load(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Error::Config("no dataset configured".into()))?;
    let format = match cfg.format {
        Some(f) => f,
        None => infer_format(path)?,
    };
    match format {
        DatasetFormat::Fixture => {
            let mut vocab = LabelVocabulary::new();
            let mut graphs = Vec::new();
            let mut node_ids = Vec::new();
            for file in fixture_files(path)? {
                let (g, ids) = parse_fixture_with(&read(&file)?, &mut vocab)?;
                graphs.push(g);
                node_ids.push(ids);
            }
            let ids: Vec<usize> = (0..graphs.len()).filter(|&i| graphs[i].is_connected()).collect();
            if ids.is_empty() {
                return Err(kminer_core::Error::EmptySplit.into());
            }
            Ok(Dataset {
                graphs,
                vocab,
                node_ids,
                split: DatasetSplit {
                    train: ids.clone(),
                    test: ids,
                    seed: cfg.seed(),
                },
            })
        }
        DatasetFormat::Tu => {
            let name = match &cfg.name {
                Some(n) => n.clone(),
                None => path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .ok_or_else(|| Error::Config(format!("cannot derive a dataset name from {}", path.display())))?,
            };
            let file = |suffix: &str| path.join(format!("{name}_{suffix}.txt"));
            let (graphs, vocab) = parse_tu_dataset(
                &read(&file("A"))?,
                &read(&file("graph_indicator"))?,
                &read(&file("node_labels"))?,
            )?;
            let node_ids = graphs.iter().map(|g| (1..=g.node_count() as i64).collect()).collect();
            let split = filter_and_split(&graphs, cfg.seed())?;
            Ok(Dataset {
                graphs,
                vocab,
                node_ids,
                split,
            })
        }
    }
}

/// Re-expresses `g`'s labels (ids in `from`) as ids of `to`.
pub fn remap(g: &LabeledGraph, from: &LabelVocabulary, to: &LabelVocabulary) -> Result<LabeledGraph> {
    let mut labels = Vec::with_capacity(g.node_count());
    for &l in g.labels() {
        let token = from
            .token(l)
            .ok_or_else(|| Error::Vocabulary(format!("#{l}")))?;
        labels.push(to.id(token).ok_or_else(|| Error::Vocabulary(token.to_owned()))?);
    }
    let edges: Vec<_> = g.edges().collect();
    Ok(LabeledGraph::new(labels, &edges)?)
}

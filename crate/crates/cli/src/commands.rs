//! Subcommand implementations. Each writes its artifacts under the output
//! directory and returns what it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use kminer_agent::sac::{log_to_csv, Agent, Trainer};
use kminer_core::canon::frequency;
use kminer_core::enumerator::{max_mni_pattern, most_frequent, rand_baseline};
use kminer_core::io::{parse_fixture, write_fixture};
use kminer_core::{LabeledGraph, OracleCache, OracleEntry};
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{self, remap, Dataset};
use crate::error::{Error, Result};
use crate::report::{Absence, EvalReport, EvalRow};

/// Samples per random-baseline run.
pub const RAND_SAMPLES: usize = 100;
/// Seeds averaged by the random baseline.
pub const RAND_SEEDS: u64 = 5;
pub const GREEDY_METHOD: &str = "greedy";

pub fn write_file(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub graphs: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub labels: Vec<String>,
}

/// Parses the dataset and records its split in `<out>/ingest.json`.
pub fn ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    cfg.validate()?;
    let data = dataset::load(cfg)?;
    let summary = IngestSummary {
        graphs: data.graphs.len(),
        train: data.split.train.clone(),
        test: data.split.test.clone(),
        labels: data.vocab.tokens().to_vec(),
    };
    write_file(&cfg.out.join("ingest.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSummary {
    pub path: PathBuf,
    pub computed: usize,
    pub reused: usize,
    /// `(graph id, message)` for graphs that could not be solved.
    pub failures: Vec<(usize, String)>,
}

fn read_oracle(path: &Path) -> Result<Option<OracleCache>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Some(OracleCache::parse(&text)?))
}

/// Exact optimum for every used graph and configured size. Entries already
/// in the cache are kept, so reruns reproduce the same file.
pub fn oracle(cfg: &RunConfig) -> Result<OracleSummary> {
    cfg.validate()?;
    let data = dataset::load(cfg)?;
    let path = cfg.oracle_path();
    let mut cache = read_oracle(&path)?.unwrap_or_default();
    let sizes = cfg.all_sizes();
    let todo: Vec<(usize, Vec<usize>)> = data
        .used_ids()
        .into_iter()
        .map(|id| {
            let n = data.graphs[id].node_count();
            let ks = sizes.iter().copied().filter(|&k| k <= n && cache.get(id, k).is_none()).collect();
            (id, ks)
        })
        .filter(|(_, ks): &(usize, Vec<usize>)| !ks.is_empty())
        .collect();
    let reused = cache.len();
    type Solved = (usize, std::result::Result<Vec<(OracleEntry, f64)>, String>);
    let mut solved: Vec<Solved> = todo
        .par_iter()
        .map(|(id, ks)| {
            let g = &data.graphs[*id];
            let entries = ks
                .iter()
                .map(|&k| {
                    let start = Instant::now();
                    most_frequent(g, k).map(|e| (e.with_graph_id(*id), ms(start)))
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| e.to_string());
            (*id, entries)
        })
        .collect();
    solved.sort_by_key(|s| s.0);

    let mut timings = String::from("graph_id,k,ms\n");
    let mut failures = Vec::new();
    let mut computed = 0;
    for (id, result) in solved {
        match result {
            Ok(entries) => {
                for (e, t) in entries {
                    timings.push_str(&format!("{},{},{t:.3}\n", e.graph_id, e.k));
                    cache.insert(e);
                    computed += 1;
                }
            }
            Err(message) => {
                log::error!("graph {id}: {message}");
                failures.push((id, message));
            }
        }
    }
    write_file(&path, cache.to_text())?;
    write_file(&cfg.out.join("oracle_timings.csv"), timings)?;
    Ok(OracleSummary {
        path,
        computed,
        reused,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub initial: Option<PathBuf>,
    pub log: PathBuf,
    pub epochs: usize,
}

/// Trains on the training split. After every epoch `<out>/latest.kmck` and
/// the log are rewritten; a fresh run also writes the untrained
/// `<out>/initial.kmck`.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let oracle_path = cfg.oracle_path();
    let oracle = read_oracle(&oracle_path)?;
    if cfg.trainer.reward_mode.needs_oracle() && oracle.is_none() {
        return Err(Error::Config(format!(
            "reward mode {} needs an oracle cache at {}",
            cfg.trainer.reward_mode,
            oracle_path.display()
        )));
    }
    let data = dataset::load(cfg)?;
    let net = cfg.net.resolve(data.vocab.len());
    net.validate()?;
    cfg.trainer.validate(&net)?;

    let latest = cfg.latest_path();
    let mut initial = None;
    let (agent, epoch) = if cfg.resume && latest.exists() {
        let c = Checkpoint::load(&latest)?;
        cfg.net.check_against(&c.agent.net)?;
        if c.vocab != data.vocab {
            return Err(Error::Config("checkpoint vocabulary differs from the dataset's".into()));
        }
        log::info!("resuming from {} at epoch {}", latest.display(), c.epoch);
        (c.agent, c.epoch)
    } else {
        let agent = Agent::new(net, cfg.trainer.initial_alpha, cfg.seed())?;
        let path = cfg.out.join("initial.kmck");
        Checkpoint {
            agent: agent.clone(),
            vocab: data.vocab.clone(),
            epoch: 0,
        }
        .save(&path)?;
        initial = Some(path);
        (agent, 0)
    };

    let train = data.train();
    let mut trainer = Trainer::new(agent, cfg.trainer.clone(), &train, oracle.as_ref())?;
    trainer.set_epoch(epoch);
    let log_path = cfg.out.join("train_log.csv");
    let snapshot = |t: &Trainer<'_>| Checkpoint {
        agent: t.agent().clone(),
        vocab: data.vocab.clone(),
        epoch: t.epoch(),
    };
    while trainer.epoch() < cfg.trainer.epochs {
        trainer.run_epoch()?;
        snapshot(&trainer).save(&latest)?;
        write_file(&log_path, log_to_csv(trainer.log()))?;
        log::info!("epoch {} done, alpha {:.4}", trainer.epoch(), trainer.agent().alpha());
    }
    let checkpoint = cfg.checkpoint_path();
    snapshot(&trainer).save(&checkpoint)?;
    write_file(&log_path, log_to_csv(trainer.log()))?;
    Ok(TrainSummary {
        checkpoint,
        initial,
        log: log_path,
        epochs: trainer.epoch(),
    })
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let c = Checkpoint::load(&cfg.checkpoint_path())?;
    cfg.net.check_against(&c.agent.net)?;
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferOutput {
    /// Selected nodes as written in the source file, in selection order.
    pub nodes: Vec<i64>,
    /// The induced pattern in fixture form.
    pub pattern: String,
    /// Present only when scoring was requested.
    pub frequency: Option<usize>,
    pub actor_passes: usize,
}

/// Greedy selection on one graph: a fixture file, or dataset graph `index`.
pub fn infer(cfg: &RunConfig, graph: Option<&Path>, index: Option<usize>, k: usize, score: bool) -> Result<InferOutput> {
    let ckpt = load_checkpoint(cfg)?;
    let (g, ids, vocab) = match graph {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let f = parse_fixture(&text)?;
            (f.graph, f.ids, f.vocab)
        }
        None => {
            let Dataset {
                mut graphs,
                vocab,
                mut node_ids,
                ..
            } = dataset::load(cfg)?;
            let i = index.unwrap_or(0);
            if i >= graphs.len() {
                return Err(Error::Usage(format!("graph index {i} out of range ({} graphs)", graphs.len())));
            }
            (graphs.swap_remove(i), node_ids.swap_remove(i), vocab)
        }
    };
    let g = remap(&g, &vocab, &ckpt.vocab)?;
    let found = ckpt.agent.greedy(&g, k)?;
    let induced = g.induced_subgraph(&found.nodes)?;
    let frequency = score.then(|| frequency(&induced, &g));
    Ok(InferOutput {
        nodes: found.nodes.iter().map(|&v| ids[v]).collect(),
        pattern: write_fixture(&induced, &ckpt.vocab),
        frequency,
        actor_passes: found.actor_passes,
    })
}

fn write_report(cfg: &RunConfig, stem: &str, report: &EvalReport) -> Result<()> {
    write_file(&cfg.out.join(format!("{stem}.csv")), report.to_csv())?;
    write_file(&cfg.out.join(format!("{stem}_summary.json")), report.summary_json()?)
}

/// Test-split cells `(graph id, graph, k, oracle entry)`; cells without an
/// oracle entry are recorded as absences.
fn cells<'a>(
    cfg: &RunConfig,
    test: &'a [(usize, LabeledGraph)],
    oracle: &'a OracleCache,
    report: &mut EvalReport,
) -> Vec<(usize, &'a LabeledGraph, usize, &'a OracleEntry)> {
    let mut out = Vec::new();
    for (id, g) in test {
        for &k in cfg.trainer.eval_sizes.iter().filter(|&&k| k <= g.node_count()) {
            match oracle.get(*id, k) {
                Some(e) => out.push((*id, g, k, e)),
                None => {
                    log::warn!("no oracle entry for graph {id}, k={k}; cell skipped");
                    report.absent.push(Absence { graph_id: *id, k });
                }
            }
        }
    }
    out
}

fn required_oracle(cfg: &RunConfig) -> Result<OracleCache> {
    let path = cfg.oracle_path();
    read_oracle(&path)?.ok_or_else(|| Error::Config(format!("no oracle cache at {}", path.display())))
}

/// Greedy inference on every test graph and evaluation size. Inference and
/// scoring are timed separately.
pub fn eval(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let ckpt = load_checkpoint(cfg)?;
    let data = dataset::load(cfg)?;
    let oracle = required_oracle(cfg)?;
    let test = data.test();
    let mut report = EvalReport::default();
    for (id, g, k, truth) in cells(cfg, &test, &oracle, &mut report) {
        let g = remap(g, &data.vocab, &ckpt.vocab)?;
        let start = Instant::now();
        let found = ckpt.agent.greedy(&g, k)?;
        let infer_ms = ms(start);
        let start = Instant::now();
        let f = frequency(&g.induced_subgraph(&found.nodes)?, &g);
        let score_ms = ms(start);
        report.rows.push(EvalRow {
            method: GREEDY_METHOD.into(),
            k,
            graph_id: id,
            found_frequency: f as f64,
            truth_frequency: truth.best_frequency,
            ratio: f as f64 / truth.best_frequency as f64,
            infer_ms,
            score_ms,
        });
    }
    report.sort();
    write_report(cfg, "eval", &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BaselineMethod {
    /// Best of 100 random episodes, averaged over 5 seeds.
    Rand,
    /// The pattern with the highest MNI support.
    MaxMni,
}

impl BaselineMethod {
    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Rand => "rand",
            BaselineMethod::MaxMni => "max-mni",
        }
    }
}

/// Reference baselines on the test split, scored against the oracle.
pub fn baseline(cfg: &RunConfig, method: BaselineMethod) -> Result<EvalReport> {
    cfg.validate()?;
    let data = dataset::load(cfg)?;
    let oracle = required_oracle(cfg)?;
    let test = data.test();
    let mut report = EvalReport::default();
    let todo = cells(cfg, &test, &oracle, &mut report);
    let rows: Vec<Result<EvalRow>> = todo
        .par_iter()
        .map(|&(id, g, k, truth)| {
            let start = Instant::now();
            let found = match method {
                BaselineMethod::Rand => {
                    let mut total = 0usize;
                    for s in 0..RAND_SEEDS {
                        total += rand_baseline(g, k, RAND_SAMPLES, cfg.seed().wrapping_add(s))?.0;
                    }
                    total as f64 / RAND_SEEDS as f64
                }
                BaselineMethod::MaxMni => max_mni_pattern(g, k)?.frequency as f64,
            };
            Ok(EvalRow {
                method: method.name().into(),
                k,
                graph_id: id,
                found_frequency: found,
                truth_frequency: truth.best_frequency,
                ratio: found / truth.best_frequency as f64,
                infer_ms: ms(start),
                score_ms: 0.0,
            })
        })
        .collect();
    report.rows = rows.into_iter().collect::<Result<_>>()?;
    report.sort();
    write_report(cfg, &format!("baseline_{}", method.name()), &report)?;
    Ok(report)
}

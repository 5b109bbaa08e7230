//! Flat `key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment; keys may appear once.
//!
//! | key | value |
//! |-----|-------|
//! | `dataset` | fixture file, directory of `*.graph` fixtures, or TU directory |
//! | `format` | `fixture` or `tu` (inferred from `dataset` when absent) |
//! | `name` | TU file prefix (default: directory name) |
//! | `oracle` | oracle cache path (default `<out>/oracle.txt`) |
//! | `checkpoint` | checkpoint read by `infer`/`eval` (default `<out>/checkpoint.kmck`) |
//! | `sizes` | training sizes, e.g. `3,4,5` or `3-9` |
//! | `eval_sizes` | evaluation sizes |
//! | `reward` | `raw`, `oracle` or `density` |
//! | `seed`, `out` | as the global flags |
//! | `hidden_dim`, `num_layers`, `num_heads`, `k_max` | network shape |
//! | `no_step_count`, `skip_without_gate`, `state_concat`, `no_reward_head`, `literal_state_onehot` | booleans |
//! | `epochs`, `warmup_epochs`, `gradient_steps`, `per_k_batch`, `buffer_capacity`, `eval_every` | counts |
//! | `gamma`, `tau`, `lr`, `initial_alpha`, `priority_exponent`, `importance_exponent`, `target_entropy_ratio` | reals |
//! | `entropy_form` | `log` or `literal` |
//! | `resume` | continue from `<out>/latest.kmck` |

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kminer_agent::losses::EntropyForm;
use kminer_agent::{Ablations, NetConfig, TrainerConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Fixture,
    Tu,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixture" => Ok(DatasetFormat::Fixture),
            "tu" => Ok(DatasetFormat::Tu),
            _ => Err(format!("unknown dataset format {s:?}")),
        }
    }
}

/// Network fields set explicitly; unset ones fall back to defaults or to a
/// checkpoint's values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetOverrides {
    pub hidden_dim: Option<usize>,
    pub num_layers: Option<usize>,
    pub num_heads: Option<usize>,
    pub k_max: Option<usize>,
    pub ablations: Ablations,
    pub literal_state_onehot: bool,
}

impl NetOverrides {
    pub fn resolve(&self, vocab_size: usize) -> NetConfig {
        let base = NetConfig::new(vocab_size);
        NetConfig {
            hidden_dim: self.hidden_dim.unwrap_or(base.hidden_dim),
            num_layers: self.num_layers.unwrap_or(base.num_layers),
            num_heads: self.num_heads.unwrap_or(base.num_heads),
            k_max: self.k_max.unwrap_or(base.k_max),
            label_vocab_size: vocab_size,
            ablations: self.ablations,
            literal_state_onehot: self.literal_state_onehot,
        }
    }

    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or(NetConfig::new(1).k_max)
    }

    /// Fails when an explicit override disagrees with a stored configuration.
    pub fn check_against(&self, stored: &NetConfig) -> Result<()> {
        let pairs = [
            ("hidden_dim", self.hidden_dim, stored.hidden_dim),
            ("num_layers", self.num_layers, stored.num_layers),
            ("num_heads", self.num_heads, stored.num_heads),
            ("k_max", self.k_max, stored.k_max),
        ];
        for (key, wanted, have) in pairs {
            if let Some(w) = wanted.filter(|&w| w != have) {
                return Err(Error::Config(format!(
                    "{key}={w} conflicts with the checkpoint's {key}={have}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<DatasetFormat>,
    pub name: Option<String>,
    pub oracle: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
    pub resume: bool,
    pub net: NetOverrides,
    /// Also carries sizes, reward mode and seed.
    pub trainer: TrainerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: None,
            name: None,
            oracle: None,
            checkpoint: None,
            out: PathBuf::from("out"),
            resume: false,
            net: NetOverrides::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

fn parse_sizes(v: &str) -> Result<Vec<usize>, String> {
    let mut out = BTreeSet::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("invalid size list {v:?}");
        if let Some((a, b)) = part.split_once('-') {
            let a: usize = a.trim().parse().map_err(|_| bad())?;
            let b: usize = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            out.extend(a..=b);
        } else {
            out.insert(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(format!("empty size list {v:?}"));
    }
    Ok(out.into_iter().collect())
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
}

fn flag(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("{key}: expected a boolean, got {v:?}")),
    }
}

impl RunConfig {
    /// Parses config text. Every malformed line is reported in one error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        let mut problems = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                problems.push(format!("line {}: expected key = value", idx + 1));
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_owned()) {
                problems.push(format!("line {}: duplicate key {key}", idx + 1));
                continue;
            }
            if let Err(e) = cfg.set(key, value) {
                problems.push(format!("line {}: {e}", idx + 1));
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let t = &mut self.trainer;
        let a = &mut self.net.ablations;
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "format" => self.format = Some(v.parse()?),
            "name" => self.name = Some(v.to_owned()),
            "oracle" => self.oracle = Some(PathBuf::from(v)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "resume" => self.resume = flag(key, v)?,
            "sizes" => t.train_sizes = parse_sizes(v)?,
            "eval_sizes" => t.eval_sizes = parse_sizes(v)?,
            "reward" => t.reward_mode = v.parse().map_err(|e: kminer_core::Error| e.to_string())?,
            "seed" => t.seed = num(key, v)?,
            "hidden_dim" => self.net.hidden_dim = Some(num(key, v)?),
            "num_layers" => self.net.num_layers = Some(num(key, v)?),
            "num_heads" => self.net.num_heads = Some(num(key, v)?),
            "k_max" => self.net.k_max = Some(num(key, v)?),
            "no_step_count" => a.no_step_count = flag(key, v)?,
            "skip_without_gate" => a.skip_without_gate = flag(key, v)?,
            "state_concat" => a.state_concat = flag(key, v)?,
            "no_reward_head" => a.no_reward_head = flag(key, v)?,
            "literal_state_onehot" => self.net.literal_state_onehot = flag(key, v)?,
            "epochs" => t.epochs = num(key, v)?,
            "warmup_epochs" => t.warmup_epochs = num(key, v)?,
            "gradient_steps" => t.gradient_steps_per_episode = num(key, v)?,
            "per_k_batch" => t.per_k_batch = num(key, v)?,
            "buffer_capacity" => t.buffer_capacity = num(key, v)?,
            "eval_every" => t.eval_every = num(key, v)?,
            "gamma" => t.gamma = num(key, v)?,
            "tau" => t.tau = num(key, v)?,
            "lr" => t.lr = num(key, v)?,
            "initial_alpha" => t.initial_alpha = num(key, v)?,
            "priority_exponent" => t.priority_exponent = num(key, v)?,
            "importance_exponent" => t.importance_exponent = num(key, v)?,
            "target_entropy_ratio" => t.target_entropy_ratio = num(key, v)?,
            "entropy_form" => {
                t.entropy_form = match v {
                    "log" => EntropyForm::Log,
                    "literal" => EntropyForm::Literal,
                    _ => return Err(format!("entropy_form: unknown form {v:?}")),
                }
            }
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.trainer.seed
    }

    pub fn oracle_path(&self) -> PathBuf {
        self.oracle.clone().unwrap_or_else(|| self.out.join("oracle.txt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("checkpoint.kmck"))
    }

    pub fn latest_path(&self) -> PathBuf {
        self.out.join("latest.kmck")
    }

    /// Every size used anywhere, ascending.
    pub fn all_sizes(&self) -> Vec<usize> {
        let s: BTreeSet<usize> = self.trainer.train_sizes.iter().chain(&self.trainer.eval_sizes).copied().collect();
        s.into_iter().collect()
    }

    /// Checks sizes and referenced paths, listing every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match &self.dataset {
            None => problems.push("no dataset configured".to_owned()),
            Some(p) if !p.exists() => problems.push(format!("dataset {} does not exist", p.display())),
            _ => {}
        }
        let k_max = self.net.k_max();
        for &k in &self.all_sizes() {
            if k == 0 || k > k_max {
                problems.push(format!("size {k} outside 1..={k_max}"));
            }
        }
        if self.trainer.train_sizes.is_empty() {
            problems.push("no training sizes".into());
        }
        if let Some(d) = self.net.hidden_dim {
            let h = self.net.num_heads.unwrap_or(NetConfig::new(1).num_heads);
            if d == 0 || h == 0 || d % h != 0 {
                problems.push(format!("hidden_dim {d} is not a positive multiple of num_heads {h}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

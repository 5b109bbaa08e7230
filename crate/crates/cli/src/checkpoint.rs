//! Checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "KMCK"
//! 4       4     format version, u32 little-endian
//! 8       4     header length H, u32 little-endian
//! 12      H     UTF-8 JSON header
//! 12+H    4P    parameter payload, f32 little-endian
//! end-32  32    SHA-256 of every preceding byte
//! ```
//!
//! The header holds the network configuration, the label vocabulary, the
//! epoch counter and, per parameter set, the parameter names and shapes in
//! payload order. Sets: `actor`, `critic1`, `critic2`, `target1`, `target2`,
//! `temperature`.

use std::io::Write as _;
use std::path::Path;

use kminer_agent::sac::Agent;
use kminer_agent::NetConfig;
use kminer_autograd::{ParameterSet, Tensor};
use kminer_core::LabelVocabulary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"KMCK";
pub const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;
const PREFIX_LEN: usize = 12;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub agent: Agent,
    pub vocab: LabelVocabulary,
    /// Completed training epochs.
    pub epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    net: NetConfig,
    vocab: Vec<String>,
    epoch: usize,
    sets: Vec<SetLayout>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct SetLayout {
    name: String,
    params: Vec<ParamLayout>,
}

#[derive(Serialize, Deserialize, PartialEq, Debug)]
struct ParamLayout {
    name: String,
    rows: usize,
    cols: usize,
}

fn sets(agent: &Agent) -> [(&'static str, &ParameterSet); 6] {
    [
        ("actor", &agent.actor),
        ("critic1", &agent.critics[0]),
        ("critic2", &agent.critics[1]),
        ("target1", &agent.targets[0]),
        ("target2", &agent.targets[1]),
        ("temperature", &agent.temperature),
    ]
}

fn layout(agent: &Agent) -> Vec<SetLayout> {
    sets(agent)
        .iter()
        .map(|(name, set)| SetLayout {
            name: (*name).to_owned(),
            params: set
                .iter()
                .map(|(n, t)| ParamLayout {
                    name: n.to_owned(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        })
        .collect()
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            net: self.agent.net.clone(),
            vocab: self.vocab.tokens().to_vec(),
            epoch: self.epoch,
            sets: layout(&self.agent),
        })?;
        let header_len = u32::try_from(header.len()).map_err(|_| Error::Integrity("header too large".into()))?;
        let mut out = Vec::with_capacity(PREFIX_LEN + header.len() + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for (_, set) in sets(&self.agent) {
            for t in set.values() {
                for x in t.data() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < PREFIX_LEN + DIGEST_LEN {
            return Err(Error::Integrity(format!("{} bytes is shorter than any checkpoint", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Integrity("missing magic bytes".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Integrity("checksum mismatch".into()));
        }
        let word = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        let header_len = word(8) as usize;
        let payload_start = PREFIX_LEN
            .checked_add(header_len)
            .filter(|&e| e <= body.len())
            .ok_or_else(|| Error::Integrity("header length exceeds the file".into()))?;
        let header: Header = serde_json::from_slice(&body[PREFIX_LEN..payload_start])?;
        header.net.validate()?;
        if header.vocab.len() != header.net.label_vocab_size {
            return Err(Error::Integrity(format!(
                "{} vocabulary tokens for a network over {} labels",
                header.vocab.len(),
                header.net.label_vocab_size
            )));
        }
        let floats = header
            .sets
            .iter()
            .flat_map(|s| &s.params)
            .try_fold(0usize, |acc, p| p.rows.checked_mul(p.cols).and_then(|n| acc.checked_add(n)))
            .ok_or_else(|| Error::Integrity("parameter sizes overflow".into()))?;
        let payload = &body[payload_start..];
        if floats.checked_mul(4) != Some(payload.len()) {
            return Err(Error::Integrity(format!(
                "payload holds {} bytes, header describes {floats} floats",
                payload.len()
            )));
        }

        let mut agent = Agent::new(header.net.clone(), 1.0, 0)?;
        if layout(&agent) != header.sets {
            return Err(Error::Integrity("parameter layout does not match the network configuration".into()));
        }
        let mut values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let [a, c1, c2, t1, t2, temp] = {
            let Agent {
                actor,
                critics: [c1, c2],
                targets: [t1, t2],
                temperature,
                ..
            } = &mut agent;
            [actor, c1, c2, t1, t2, temperature]
        };
        for set in [a, c1, c2, t1, t2, temp] {
            for t in set.values_mut() {
                let (r, c) = (t.rows(), t.cols());
                *t = Tensor::from_vec(r, c, values.by_ref().take(r * c).collect())?;
            }
        }
        Ok(Self {
            agent,
            vocab: LabelVocabulary::from_tokens(header.vocab),
            epoch: header.epoch,
        })
    }

    /// Writes atomically: a temporary file in the same directory is renamed
    /// over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut builder = tempfile::Builder::new();
        // Temp files default to owner-only; a checkpoint is an ordinary output.
        #[cfg(unix)]
        builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o644));
        let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(&self.encode()?).map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

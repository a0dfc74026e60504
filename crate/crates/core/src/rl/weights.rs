//! Binary weight files and their JSON manifests.
//!
//! Layout (little-endian): magic `SHPW`, `u32` version, `u32` entry count, then per entry
//! a `u16`-length UTF-8 name, a kind byte, and the payload. Network payloads carry the
//! layer sizes, activation and head codes, then the flat parameters as `f64`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rl::net::{Activation, DenseNet, Head};

pub const MAGIC: [u8; 4] = *b"SHPW";
pub const VERSION: u32 = 1;

const KIND_NET: u8 = 0;
const KIND_VECTOR: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Net(DenseNet),
    Vector(Vec<f64>),
}

/// Named collection of networks and raw parameter vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyWeights {
    entries: Vec<(String, Entry)>,
}

impl PolicyWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_net(mut self, name: &str, net: &DenseNet) -> Self {
        self.insert(name, Entry::Net(net.clone()));
        self
    }

    pub fn with_vector(mut self, name: &str, v: &[f64]) -> Self {
        self.insert(name, Entry::Vector(v.to_vec()));
        self
    }

    pub fn insert(&mut self, name: &str, entry: Entry) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = entry,
            None => self.entries.push((name.to_string(), entry)),
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn net(&self, name: &str) -> Result<&DenseNet> {
        match self.get(name)? {
            Entry::Net(n) => Ok(n),
            Entry::Vector(_) => Err(Error::Format(format!("entry `{name}` is not a network"))),
        }
    }

    pub fn vector(&self, name: &str) -> Result<&[f64]> {
        match self.get(name)? {
            Entry::Vector(v) => Ok(v),
            Entry::Net(_) => Err(Error::Format(format!("entry `{name}` is not a vector"))),
        }
    }

    fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::Format(format!("no entry named `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Net(net) => {
                    out.push(KIND_NET);
                    out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
                    for &s in net.sizes() {
                        out.extend_from_slice(&(s as u32).to_le_bytes());
                    }
                    out.push(activation_code(net.hidden()));
                    out.push(head_code(net.head()));
                    put_floats(&mut out, net.params());
                }
                Entry::Vector(v) => {
                    out.push(KIND_VECTOR);
                    put_floats(&mut out, v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported weight format version {version}")));
        }
        let n = r.u32()? as usize;
        let mut weights = Self::new();
        for _ in 0..n {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?
                .to_string();
            let entry = match r.take(1)?[0] {
                KIND_NET => {
                    let n_sizes = r.u32()? as usize;
                    let sizes = (0..n_sizes).map(|_| r.u32().map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
                    let hidden = activation_from(r.take(1)?[0])?;
                    let head = head_from(r.take(1)?[0])?;
                    let params = r.floats()?;
                    let mut net = DenseNet::new(&sizes, hidden, head)?;
                    if params.len() != net.param_count() {
                        return Err(Error::Format(format!(
                            "entry `{name}`: {} parameters for a network expecting {}",
                            params.len(),
                            net.param_count()
                        )));
                    }
                    net.params_mut().copy_from_slice(&params);
                    Entry::Net(net)
                }
                KIND_VECTOR => Entry::Vector(r.floats()?),
                k => return Err(Error::Format(format!("unknown entry kind {k}"))),
            };
            weights.entries.push((name, entry));
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after last entry".into()));
        }
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn put_floats(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("truncated weight file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn floats(&mut self) -> Result<Vec<f64>> {
        let n = u64::from_le_bytes(self.take(8)?.try_into().unwrap()) as usize;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    }
}

fn activation_from(c: u8) -> Result<Activation> {
    match c {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Tanh),
        _ => Err(Error::Format(format!("unknown activation code {c}"))),
    }
}

fn head_code(h: Head) -> u8 {
    match h {
        Head::Linear => 0,
        Head::Tanh => 1,
        Head::Softmax => 2,
    }
}

fn head_from(c: u8) -> Result<Head> {
    match c {
        0 => Ok(Head::Linear),
        1 => Ok(Head::Tanh),
        2 => Ok(Head::Softmax),
        _ => Err(Error::Format(format!("unknown head code {c}"))),
    }
}

/// Hex SHA-256 of a file.
pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path)?)))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Sidecar describing how a weight file was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub algorithm: String,
    pub scenario: String,
    pub preset: String,
    pub seed: u64,
    pub episodes_target: usize,
    pub episodes_done: usize,
    pub env_steps: u64,
    pub updates: u64,
    pub hyper: serde_json::Value,
    pub sim: serde_json::Value,
    pub reward: serde_json::Value,
    pub config_hash: String,
    pub code_version: String,
    pub weights_file: String,
    pub weights_sha256: String,
    #[serde(default)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::rl::net::Init;

    fn sample_net() -> DenseNet {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        DenseNet::with_init(&[3, 5, 2], Activation::Relu, Head::Tanh, Init::UniformFanIn, &mut rng).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let w = PolicyWeights::new()
            .with_net("actor", &sample_net())
            .with_vector("log_std", &[0.0, -0.5]);
        let back = PolicyWeights::from_bytes(&w.to_bytes()).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.vector("log_std").unwrap(), &[0.0, -0.5]);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = PolicyWeights::new().with_net("q", &sample_net()).to_bytes();
        assert!(PolicyWeights::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(PolicyWeights::from_bytes(&bad).is_err());
    }

    #[test]
    fn header_layout() {
        let bytes = PolicyWeights::new().with_vector("v", &[1.5]).to_bytes();
        assert_eq!(&bytes[..4], b"SHPW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), VERSION);
        assert_eq!(&bytes[bytes.len() - 8..], &1.5f64.to_le_bytes());
    }
}

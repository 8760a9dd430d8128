//! Binary checkpoint: `SEMCKPT\0`, a little-endian `u32` version, a `u64`
//! manifest length, the JSON manifest, a `u64` payload length and the
//! parameters as little-endian `f32` in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::env::TaskId;
use crate::error::{Error, Result};
use crate::net::{ModelConfig, Network};
use crate::numerics::{ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"SEMCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset into the payload, in floats.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub code: usize,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub params: Vec<ParamEntry>,
    /// Task code table the embedding rows are indexed by.
    pub tasks: Vec<TaskEntry>,
    pub trained_tasks: Vec<TaskId>,
    pub model: ModelConfig,
    pub config: RunConfig,
    pub seed: u64,
    /// Environment steps the parameters were trained for.
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn new(net: &Network<f32>, config: &RunConfig, trained_tasks: &[TaskId], steps: u64) -> Checkpoint {
        let mut offset = 0;
        let params = net
            .params()
            .iter()
            .map(|(name, p)| {
                let e = ParamEntry {
                    name: name.to_string(),
                    shape: p.shape().to_vec(),
                    offset,
                };
                offset += p.value.len();
                e
            })
            .collect();
        let mut store = net.params().clone();
        for (_, p) in store.iter_mut() {
            p.frozen = false;
            p.zero_grad();
        }
        Checkpoint {
            manifest: Manifest {
                params,
                tasks: TaskId::ALL
                    .iter()
                    .map(|t| TaskEntry {
                        code: t.code(),
                        name: t.name().to_string(),
                    })
                    .collect(),
                trained_tasks: trained_tasks.to_vec(),
                model: net.config().clone(),
                config: config.clone(),
                seed: config.seed,
                steps,
            },
            params: store,
        }
    }

    pub fn network(&self) -> Result<Network<f32>> {
        Network::from_params(self.manifest.model.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let floats: usize = self.params.iter().map(|(_, p)| p.value.len()).sum();
        let mut out = Vec::with_capacity(8 + 4 + 8 + manifest.len() + 8 + 4 * floats);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&((4 * floats) as u64).to_le_bytes());
        for (_, p) in self.params.iter() {
            for x in p.value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Integrity("bad magic".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: VERSION,
            });
        }
        let mlen = r.u64()? as usize;
        let manifest: Manifest =
            serde_json::from_slice(r.take(mlen)?).map_err(|e| Error::Integrity(format!("manifest: {e}")))?;
        let plen = r.u64()? as usize;
        let payload = r.take(plen)?;
        if r.pos != bytes.len() {
            return Err(Error::Integrity(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        if !plen.is_multiple_of(4) {
            return Err(Error::Integrity("payload is not whole floats".into()));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let mut params = ParamStore::new();
        let mut expect = 0;
        for e in &manifest.params {
            let n: usize = e.shape.iter().product();
            if e.offset != expect || e.offset + n > floats.len() {
                return Err(Error::Integrity(format!("parameter {} lies outside the payload", e.name)));
            }
            params.insert(&e.name, Tensor::from_vec(&e.shape, floats[e.offset..e.offset + n].to_vec())?);
            expect += n;
        }
        if expect != floats.len() {
            return Err(Error::Integrity("payload size does not match the manifest".into()));
        }
        Ok(Checkpoint { manifest, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = std::fs::read(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Integrity(format!("truncated at byte {}", self.bytes.len())))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(
    path: &Path,
    net: &Network<f32>,
    config: &RunConfig,
    trained_tasks: &[TaskId],
    steps: u64,
) -> Result<()> {
    Checkpoint::new(net, config, trained_tasks, steps).save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelKind;

    fn sample() -> Checkpoint {
        let net = Network::<f32>::new(ModelConfig::tiny(ModelKind::Sem), 4).unwrap();
        Checkpoint::new(&net, &RunConfig::default(), &TaskId::TAXI, 123)
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_an_integrity_error() {
        let bytes = sample().to_bytes();
        for cut in [3, 10, 30, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Integrity(_))), "cut {cut}");
        }
    }

    #[test]
    fn other_versions_are_refused() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::UnsupportedVersion { found: 7, expected: 1 })
        ));
    }

    #[test]
    fn header_is_little_endian() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"SEMCKPT\0");
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
    }
}

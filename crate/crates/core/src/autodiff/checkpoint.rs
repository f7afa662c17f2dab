//! Parameter checkpoints: a plain-text header naming groups and shapes,
//! followed by every value as a little-endian `f64`.
//!
//! ```text
//! geopcl-checkpoint 1
//! seed 42
//! config_hash 3f2a...
//! meta norm.y.mean 1.25e1
//! group obs_encoder 1 4
//! param layer0.weight 10,64
//! ...
//! end
//! <binary payload>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &str = "geopcl-checkpoint 1";

// Group name, trainable flag, (param name, shape) pairs.
type GroupLayout = (String, bool, Vec<(String, Vec<usize>)>);

#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub seed: u64,
    pub config_hash: String,
    /// Free-form `key value` pairs (normalization statistics, architecture).
    pub meta: BTreeMap<String, String>,
    pub params: ParamSet<S>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\nseed {}\nconfig_hash {}\n", self.seed, self.config_hash);
        for (k, v) in &self.meta {
            head.push_str(&format!("meta {k} {v}\n"));
        }
        for g in self.params.groups() {
            head.push_str(&format!(
                "group {} {} {}\n",
                g.name,
                u8::from(g.trainable),
                g.params.len()
            ));
            for p in &g.params {
                let dims: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
                head.push_str(&format!("param {} {}\n", p.name, dims.join(",")));
            }
        }
        head.push_str("end\n");
        let mut out = head.into_bytes();
        for g in self.params.groups() {
            for p in &g.params {
                for v in p.tensor.values() {
                    out.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let marker = b"\nend\n";
        let end = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or("missing header terminator")?
            + marker.len();
        let head = std::str::from_utf8(&bytes[..end]).map_err(|e| e.to_string())?;
        let mut lines = head.lines();
        if lines.next() != Some(MAGIC) {
            return Err("not a geopcl checkpoint".into());
        }

        let mut seed = None;
        let mut config_hash = None;
        let mut meta = BTreeMap::new();
        let mut layout: Vec<GroupLayout> = Vec::new();
        for line in lines {
            let mut it = line.splitn(2, ' ');
            let key = it.next().unwrap_or_default();
            let rest = it.next().unwrap_or_default();
            match key {
                "seed" => seed = Some(rest.parse::<u64>().map_err(|e| e.to_string())?),
                "config_hash" => config_hash = Some(rest.to_string()),
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                "group" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    if f.len() != 3 {
                        return Err(format!("bad group line `{line}`"));
                    }
                    layout.push((f[0].to_string(), f[1] == "1", Vec::new()));
                }
                "param" => {
                    let (name, dims) = rest.split_once(' ').ok_or("bad param line")?;
                    let dims = dims
                        .split(',')
                        .filter(|d| !d.is_empty())
                        .map(|d| d.parse::<usize>().map_err(|e| e.to_string()))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    layout
                        .last_mut()
                        .ok_or("param before group")?
                        .2
                        .push((name.to_string(), dims));
                }
                "end" => break,
                other => return Err(format!("unknown header key `{other}`")),
            }
        }

        let mut payload = bytes[end..].chunks_exact(8);
        let mut params = ParamSet::new();
        for (gname, trainable, tensors) in layout {
            let gi = params.add_group(&gname, trainable).map_err(|e| e.to_string())?;
            for (pname, dims) in tensors {
                let n: usize = dims.iter().product();
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    let chunk = payload.next().ok_or("truncated payload")?;
                    let raw: [u8; 8] = chunk.try_into().expect("8-byte chunk");
                    values.push(S::of(f64::from_le_bytes(raw)));
                }
                let t = Tensor::new(dims, values).map_err(|e| e.to_string())?;
                params.add_param(gi, &pname, t);
            }
        }
        if payload.next().is_some() {
            return Err("trailing payload".into());
        }
        Ok(Self {
            seed: seed.ok_or("missing seed")?,
            config_hash: config_hash.ok_or("missing config_hash")?,
            meta,
            params,
        })
    }
}

//! Train/validation/test assignments: site-level uniform-at-random splits and
//! systematically offset checkerboard splits.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::seeds::StreamRng;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Val,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Val => "val",
            Role::Test => "test",
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "train" => Ok(Role::Train),
            "val" => Ok(Role::Val),
            "test" => Ok(Role::Test),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// Shift of the checkerboard origin, in half cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Offset {
    Original,
    Right,
    Up,
    Both,
}

impl Offset {
    pub const ALL: [Offset; 4] = [Offset::Original, Offset::Right, Offset::Up, Offset::Both];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&o| o == self).expect("listed")
    }

    fn shift(self) -> (f64, f64) {
        match self {
            Offset::Original => (0.0, 0.0),
            Offset::Right => (0.5, 0.0),
            Offset::Up => (0.0, 0.5),
            Offset::Both => (0.5, 0.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckerboardConfig {
    /// Square side in degrees.
    pub delta: f64,
    /// Grid anchor (lon0, lat0) before the offset is applied.
    pub origin: (f64, f64),
    pub offset: Offset,
    pub swap: bool,
}

impl CheckerboardConfig {
    /// Every (offset, swap) combination: 4 offsets × 2.
    pub fn partitions(delta: f64, origin: (f64, f64)) -> Vec<Self> {
        Offset::ALL
            .iter()
            .flat_map(|&offset| {
                [false, true].map(|swap| Self {
                    delta,
                    origin,
                    offset,
                    swap,
                })
            })
            .collect()
    }

    /// Cell index under half-open `[edge, edge + δ)` intervals.
    pub fn cell(&self, lon: f64, lat: f64) -> (i64, i64) {
        let (sx, sy) = self.offset.shift();
        let x0 = self.origin.0 + sx * self.delta;
        let y0 = self.origin.1 + sy * self.delta;
        (
            ((lon - x0) / self.delta).floor() as i64,
            ((lat - y0) / self.delta).floor() as i64,
        )
    }

    pub fn is_test(&self, lon: f64, lat: f64) -> bool {
        let (i, j) = self.cell(lon, lat);
        let odd = (i + j).rem_euclid(2) == 1;
        odd != self.swap
    }
}

/// Role of every sample, in dataset order, with a provenance header.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub roles: Vec<Role>,
    /// `key=value` pairs echoed into the split file header.
    pub header: Vec<(String, String)>,
}

impl SplitAssignment {
    pub fn indices(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(i, &r)| (r == role).then_some(i))
            .collect()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self, data: &Dataset) -> String {
        let mut s = String::new();
        for (k, v) in &self.header {
            writeln!(s, "# {k}={v}").unwrap();
        }
        for (sample, role) in data.samples.iter().zip(&self.roles) {
            writeln!(s, "{},{}", sample.id, role.as_str()).unwrap();
        }
        s
    }

    pub fn write(&self, path: &Path, data: &Dataset) -> Result<()> {
        fs::write(path, self.to_text(data)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// Reads a split file and aligns it with `data`; every sample must be listed.
    pub fn read(path: &Path, data: &Dataset) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let bad = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut header = Vec::new();
        let mut by_id = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if let Some(h) = line.strip_prefix('#') {
                if let Some((k, v)) = h.trim().split_once('=') {
                    header.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (id, role) = line
                .split_once(',')
                .ok_or_else(|| bad(i + 1, format!("expected `id,role`, got `{line}`")))?;
            let role: Role = role.trim().parse().map_err(|e| bad(i + 1, e))?;
            if by_id.insert(id.trim().to_string(), role).is_some() {
                return Err(bad(i + 1, format!("sample `{id}` listed twice")));
            }
        }
        let roles = data
            .samples
            .iter()
            .map(|s| {
                by_id
                    .get(&s.id)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("sample `{}` missing from split file", s.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        if by_id.len() != roles.len() {
            return Err(Error::Data("split file lists samples absent from the dataset".into()));
        }
        Ok(Self { roles, header })
    }
}

impl fmt::Display for SplitAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "train {} / val {} / test {}",
            self.count(Role::Train),
            self.count(Role::Val),
            self.count(Role::Test)
        )
    }
}

fn validation_count(n: usize, fraction: f64) -> usize {
    if n < 2 || fraction <= 0.0 {
        return 0;
    }
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Assigns whole sites: a seeded permutation sends the first `⌊fraction·n⌋`
/// sites to training, the rest to test; `val_fraction` of the training sites
/// are then held out for validation.
pub fn uar_site_split(data: &Dataset, fraction: f64, val_fraction: f64, seed: u64, rng: &mut StreamRng) -> Result<SplitAssignment> {
    let n = data.sites.len();
    if n < 2 {
        return Err(Error::Data(format!("UAR split needs at least 2 sites, found {n}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("fraction", format!("{fraction} not in (0, 1)")));
    }
    let n_train = (fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::config(
            "fraction",
            format!("{fraction} of {n} sites leaves one side empty"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_val = validation_count(n_train, val_fraction);
    let mut site_role = vec![Role::Test; n];
    for (rank, &site) in order.iter().enumerate().take(n_train) {
        site_role[site] = if rank >= n_train - n_val { Role::Val } else { Role::Train };
    }
    Ok(SplitAssignment {
        roles: data.site_of.iter().map(|&s| site_role[s]).collect(),
        header: vec![
            ("protocol".into(), "uar".into()),
            ("fraction".into(), fraction.to_string()),
            ("val_fraction".into(), val_fraction.to_string()),
            ("seed".into(), seed.to_string()),
        ],
    })
}

/// Checkerboard assignment; `val_fraction` of the training samples are held
/// out at random for validation.
pub fn checkerboard_split(
    data: &Dataset,
    cfg: &CheckerboardConfig,
    val_fraction: f64,
    seed: u64,
    rng: &mut StreamRng,
) -> Result<SplitAssignment> {
    if !(cfg.delta > 0.0) {
        return Err(Error::config("delta", format!("{} must be positive", cfg.delta)));
    }
    let mut roles: Vec<Role> = data
        .samples
        .iter()
        .map(|s| if cfg.is_test(s.lon, s.lat) { Role::Test } else { Role::Train })
        .collect();
    let mut train: Vec<usize> = roles
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| (r == Role::Train).then_some(i))
        .collect();
    train.shuffle(rng);
    for &i in train.iter().take(validation_count(train.len(), val_fraction)) {
        roles[i] = Role::Val;
    }
    Ok(SplitAssignment {
        roles,
        header: vec![
            ("protocol".into(), "checkerboard".into()),
            ("delta".into(), cfg.delta.to_string()),
            ("origin".into(), format!("{},{}", cfg.origin.0, cfg.origin.1)),
            ("offset".into(), cfg.offset.index().to_string()),
            ("swap".into(), cfg.swap.to_string()),
            ("val_fraction".into(), val_fraction.to_string()),
            ("seed".into(), seed.to_string()),
        ],
    })
}

use crate::error::{Error, Result};

/// Mean and standard deviation of one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZScore {
    pub mean: f64,
    pub std: f64,
}

impl ZScore {
    /// Population statistics; a zero spread is rejected with the column name.
    pub fn fit(name: &str, values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Err(Error::Data(format!("no values to normalize `{name}`")));
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// Training-split statistics for features, target, and proxy channels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub features: Vec<ZScore>,
    pub target: ZScore,
    pub proxies: Vec<ZScore>,
}

impl NormalizationStats {
    /// `features[i]`, `targets[i]` and `proxies[i]` belong to training sample `i`.
    pub fn fit(
        feature_names: &[String],
        features: &[&[f64]],
        targets: &[f64],
        proxy_names: &[String],
        proxies: &[Vec<f64>],
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        let features = feature_names
            .iter()
            .enumerate()
            .map(|(j, name)| ZScore::fit(name, features.iter().map(|row| row[j])))
            .collect::<Result<_>>()?;
        let target = ZScore::fit("y", targets.iter().copied())?;
        let proxies = proxy_names
            .iter()
            .enumerate()
            .map(|(c, name)| ZScore::fit(name, proxies.iter().map(|row| row[c])))
            .collect::<Result<_>>()?;
        Ok(Self {
            features,
            target,
            proxies,
        })
    }

    pub fn apply_features(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(x.iter().zip(&self.features).map(|(&v, z)| z.apply(v)));
    }

    pub fn invert_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.features).map(|(&v, z)| z.invert(v)).collect()
    }

    pub fn apply_proxies(&self, z: &[f64], out: &mut Vec<f64>) {
        out.extend(z.iter().zip(&self.proxies).map(|(&v, s)| s.apply(v)));
    }

    /// Flat `key value` pairs for checkpoint metadata.
    pub fn to_meta(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("norm.y".to_string(), pair(&self.target)),
            ("norm.features".to_string(), self.features.iter().map(pair).collect::<Vec<_>>().join(";")),
            ("norm.proxies".to_string(), self.proxies.iter().map(pair).collect::<Vec<_>>().join(";")),
        ];
        out.sort();
        out
    }

    pub fn from_meta(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let parse_list = |key: &str| -> Result<Vec<ZScore>> {
            let raw = get(key).ok_or_else(|| Error::Data(format!("checkpoint lacks `{key}`")))?;
            raw.split(';').filter(|s| !s.is_empty()).map(|s| unpair(key, s)).collect()
        };
        let y = get("norm.y").ok_or_else(|| Error::Data("checkpoint lacks `norm.y`".into()))?;
        Ok(Self {
            features: parse_list("norm.features")?,
            target: unpair("norm.y", &y)?,
            proxies: parse_list("norm.proxies")?,
        })
    }
}

fn pair(z: &ZScore) -> String {
    format!("{:e},{:e}", z.mean, z.std)
}

fn unpair(key: &str, s: &str) -> Result<ZScore> {
    let bad = || Error::Data(format!("malformed `{key}` entry `{s}`"));
    let (m, sd) = s.split_once(',').ok_or_else(bad)?;
    Ok(ZScore {
        mean: m.parse().map_err(|_| bad())?,
        std: sd.parse().map_err(|_| bad())?,
    })
}

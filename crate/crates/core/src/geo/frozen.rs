//! Pretrained location embeddings loaded from disk and looked up by nearest
//! stored coordinate. Lookups enter the graph as constants.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEmbeddingTable<S> {
    coords: Vec<(f64, f64)>,
    embeddings: Tensor<S>,
    /// Maximum lookup distance in degrees.
    tolerance: f64,
}

impl<S: Scalar> FrozenEmbeddingTable<S> {
    pub fn new(coords: Vec<(f64, f64)>, embeddings: Tensor<S>, tolerance: f64) -> Result<Self> {
        if embeddings.shape().len() != 2 || embeddings.rows() != coords.len() {
            return Err(Error::shape(
                "frozen_table",
                format!("{} coordinates for embedding shape {:?}", coords.len(), embeddings.shape()),
            ));
        }
        if !(tolerance >= 0.0) {
            return Err(Error::config("tolerance", "must be non-negative"));
        }
        Ok(Self {
            coords,
            embeddings,
            tolerance,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn embeddings(&self) -> &Tensor<S> {
        &self.embeddings
    }

    /// Row of the nearest stored coordinate within tolerance.
    pub fn lookup(&self, lon: f64, lat: f64) -> Result<&[S]> {
        let (best, dist) = self
            .coords
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| (i, (x - lon).hypot(y - lat)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| Error::Data("empty embedding table".into()))?;
        if dist > self.tolerance {
            return Err(Error::Data(format!(
                "no stored coordinate within {}° of ({lon}, {lat}); nearest is {dist:.6}° away",
                self.tolerance
            )));
        }
        Ok(self.embeddings.row(best))
    }

    /// `n × d2` matrix of looked-up rows.
    pub fn lookup_many(&self, points: impl IntoIterator<Item = (f64, f64)>) -> Result<Tensor<S>> {
        let mut values = Vec::new();
        let mut n = 0;
        for (lon, lat) in points {
            values.extend_from_slice(self.lookup(lon, lat)?);
            n += 1;
        }
        Tensor::matrix(n, self.dim(), values)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {:e}\n", self.len(), self.dim(), self.tolerance);
        for (i, &(lon, lat)) in self.coords.iter().enumerate() {
            write!(s, "{lon:e} {lat:e}").unwrap();
            for v in self.embeddings.row(i) {
                write!(s, " {:e}", v.as_f64()).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let bad = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(bad(1, "header must be `n d2 tolerance`".into()));
        }
        let n: usize = h[0].parse().map_err(|_| bad(1, format!("bad row count `{}`", h[0])))?;
        let d: usize = h[1].parse().map_err(|_| bad(1, format!("bad dimension `{}`", h[1])))?;
        let tol: f64 = h[2].parse().map_err(|_| bad(1, format!("bad tolerance `{}`", h[2])))?;
        let mut coords = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n * d);
        for (i, line) in lines {
            let f: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(i + 1, format!("{e}")))?;
            if f.len() != d + 2 {
                return Err(bad(i + 1, format!("expected {} fields, got {}", d + 2, f.len())));
            }
            coords.push((f[0], f[1]));
            values.extend(f[2..].iter().map(|&v| S::of(v)));
        }
        if coords.len() != n {
            return Err(bad(0, format!("header declares {n} rows, found {}", coords.len())));
        }
        Self::new(coords, Tensor::matrix(n, d, values)?, tol)
    }
}

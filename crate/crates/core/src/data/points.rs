//! Labeled point tables (`points.tsv`).
//!
//! Tab-separated with header `id site lon lat date <feature names…> y`.
//! An empty `site` cell gets a generated id shared by every row at the same
//! coordinates.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::geo::SpaceTime;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub site: String,
    pub lon: f64,
    pub lat: f64,
    pub date: NaiveDate,
    pub features: Vec<f64>,
    pub y: f64,
}

impl LabeledSample {
    pub fn space_time(&self) -> SpaceTime {
        SpaceTime::new(self.lon, self.lat, self.date)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
}

/// Unique sites; every sample references exactly one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SiteTable {
    sites: Vec<Site>,
    index: HashMap<String, usize>,
}

impl SiteTable {
    pub fn insert(&mut self, site: Site) -> Result<usize> {
        if let Some(&i) = self.index.get(&site.id) {
            let s = &self.sites[i];
            if s.lon != site.lon || s.lat != site.lat {
                return Err(Error::Data(format!(
                    "site `{}` appears at ({}, {}) and ({}, {})",
                    site.id, s.lon, s.lat, site.lon, site.lat
                )));
            }
            return Ok(i);
        }
        self.index.insert(site.id.clone(), self.sites.len());
        self.sites.push(site);
        Ok(self.sites.len() - 1)
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub samples: Vec<LabeledSample>,
    pub sites: SiteTable,
    /// Site index of every sample.
    pub site_of: Vec<usize>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, samples: Vec<LabeledSample>) -> Result<Self> {
        let mut sites = SiteTable::default();
        let mut site_of = Vec::with_capacity(samples.len());
        for s in &samples {
            if s.features.len() != feature_names.len() {
                return Err(Error::Data(format!(
                    "sample `{}` has {} features, header declares {}",
                    s.id,
                    s.features.len(),
                    feature_names.len()
                )));
            }
            site_of.push(sites.insert(Site {
                id: s.site.clone(),
                lon: s.lon,
                lat: s.lat,
            })?);
        }
        Ok(Self {
            feature_names,
            samples,
            sites,
            site_of,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_points(path: &Path, data: &Dataset) -> Result<()> {
    fs::write(path, points_to_string(data)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn points_to_string(data: &Dataset) -> String {
    let mut s = String::from("id\tsite\tlon\tlat\tdate");
    for f in &data.feature_names {
        s.push('\t');
        s.push_str(f);
    }
    s.push_str("\ty\n");
    for r in &data.samples {
        write!(s, "{}\t{}\t{}\t{}\t{}", r.id, r.site, fmt_f64(r.lon), fmt_f64(r.lat), r.date).unwrap();
        for f in &r.features {
            s.push('\t');
            s.push_str(&fmt_f64(*f));
        }
        writeln!(s, "\t{}", fmt_f64(r.y)).unwrap();
    }
    s
}

/// Parses a point table; the returned dataset carries its site table.
pub fn load_labeled_table(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_points(path, &text)
}

pub(crate) fn parse_points(path: &Path, text: &str) -> Result<Dataset> {
    let bad = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split('\t').collect();
    if cols.len() < 6 || cols[..5] != ["id", "site", "lon", "lat", "date"] || cols[cols.len() - 1] != "y" {
        return Err(bad(1, "header must be `id site lon lat date <features…> y`".into()));
    }
    let feature_names: Vec<String> = cols[5..cols.len() - 1].iter().map(|s| s.to_string()).collect();

    let mut samples = Vec::new();
    let mut generated: HashMap<(u64, u64), String> = HashMap::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != cols.len() {
            return Err(bad(lineno, format!("expected {} fields, got {}", cols.len(), f.len())));
        }
        let num = |j: usize| -> Result<f64> {
            let v: f64 = f[j]
                .trim()
                .parse()
                .map_err(|_| bad(lineno, format!("column `{}`: cannot parse `{}`", cols[j], f[j])))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    column: cols[j].to_string(),
                    line: lineno,
                });
            }
            Ok(v)
        };
        let lon = num(2)?;
        let lat = num(3)?;
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(bad(lineno, format!("coordinate ({lon}, {lat}) out of range")));
        }
        let date = NaiveDate::parse_from_str(f[4].trim(), "%Y-%m-%d")
            .map_err(|e| bad(lineno, format!("column `date`: {e}")))?;
        let features = (5..cols.len() - 1).map(num).collect::<Result<Vec<_>>>()?;
        let y = num(cols.len() - 1)?;
        let site = if f[1].trim().is_empty() {
            let n = generated.len();
            generated
                .entry((lon.to_bits(), lat.to_bits()))
                .or_insert_with(|| format!("site_{n}"))
                .clone()
        } else {
            f[1].trim().to_string()
        };
        samples.push(LabeledSample {
            id: f[0].trim().to_string(),
            site,
            lon,
            lat,
            date,
            features,
            y,
        });
    }
    Dataset::new(feature_names, samples).map_err(|e| match e {
        Error::Data(reason) => bad(0, reason),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, site: &str, lon: f64, lat: f64) -> LabeledSample {
        LabeledSample {
            id: id.into(),
            site: site.into(),
            lon,
            lat,
            date: NaiveDate::from_ymd_opt(2017, 5, 3).unwrap(),
            features: vec![0.1, -2.5e-7],
            y: 12.25,
        }
    }

    #[test]
    fn header_only_is_empty() {
        let d = parse_points(Path::new("x"), "id\tsite\tlon\tlat\tdate\tf_1\ty\n").unwrap();
        assert!(d.is_empty());
        assert!(d.sites.is_empty());
        assert_eq!(d.feature_names, vec!["f_1"]);
    }

    #[test]
    fn shared_coordinates_form_one_site() {
        let text = "id\tsite\tlon\tlat\tdate\tf_1\ty\n\
                    a\t\t-90.5\t35\t2017-01-01\t1\t2\n\
                    b\t\t-90.5\t35\t2017-01-02\t1\t3\n\
                    c\t\t-91\t35\t2017-01-02\t1\t3\n";
        let d = parse_points(Path::new("x"), text).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.sites.len(), 2);
        assert_eq!(d.site_of, vec![0, 0, 1]);
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "id\tsite\tlon\tlat\tdate\tf_1\ty\na\ts\t1\t2\t2017-01-01\t1\n";
        match parse_points(Path::new("x"), text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_names_column() {
        let text = "id\tsite\tlon\tlat\tdate\tpm\ty\na\ts\t1\t2\t2017-01-01\tNaN\t1\n";
        match parse_points(Path::new("x"), text) {
            Err(Error::NonFiniteValue { column, line }) => {
                assert_eq!(column, "pm");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn site_with_two_locations_is_rejected() {
        let r = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![sample("1", "s", 0.0, 0.0), sample("2", "s", 1.0, 0.0)],
        );
        assert!(r.is_err());
    }

    #[test]
    fn write_load_round_trip() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![sample("1", "s0", -100.0 + 1.0 / 3.0, 30.1), sample("2", "s1", 0.5, -0.2)],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("points.tsv");
        write_points(&p, &d).unwrap();
        let back = load_labeled_table(&p).unwrap();
        assert_eq!(back, d);
        let p2 = dir.path().join("points2.tsv");
        write_points(&p2, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&p2).unwrap());
    }
}

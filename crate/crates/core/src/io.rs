//! JSON and CSV persistence. Every JSON file carries `format_version` and a
//! `kind`; complex numbers are `[re, im]` pairs and matrices are row lists.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, RMat, C64};
use crate::model::{Shots, TimeGrid, TimeSeriesData};

pub const FORMAT_VERSION: u32 = 1;

pub type Complex = [f64; 2];

pub fn real_rows(a: &RMat) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn complex_rows(a: &CMat) -> Vec<Vec<Complex>> {
    a.row_iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

fn square<T>(rows: &[Vec<T>]) -> Result<usize> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidConfig(
            "matrix must be square and non-empty".into(),
        ));
    }
    Ok(n)
}

pub fn real_from_rows(rows: &[Vec<f64>]) -> Result<RMat> {
    let n = square(rows)?;
    Ok(RMat::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn complex_from_rows(rows: &[Vec<Complex>]) -> Result<CMat> {
    let n = square(rows)?;
    Ok(CMat::from_fn(n, n, |i, j| {
        C64::new(rows[i][j][0], rows[i][j][1])
    }))
}

/// Where a file came from: enough to regenerate it bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_sha256: String,
    pub seed: u64,
    pub library_version: String,
    /// Effective configuration.
    pub config: serde_json::Value,
    /// Ground truth known to the simulator, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Truth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    pub h: Vec<Vec<f64>>,
    pub initial_map: Vec<Vec<Complex>>,
    pub final_map: Vec<Vec<Complex>>,
}

impl Provenance {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Self {
            command: command.to_string(),
            config_sha256: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
            seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            truth: None,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Time series on disk: `data[m][n][l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSeriesFile {
    pub format_version: u32,
    pub kind: String,
    pub dt: f64,
    #[serde(rename = "L")]
    pub len: usize,
    pub n: usize,
    pub shots: Shots,
    pub data: Vec<Vec<Vec<Complex>>>,
    pub provenance: Provenance,
}

pub const TIME_SERIES_KIND: &str = "time_series";

impl TimeSeriesFile {
    pub fn new(data: &TimeSeriesData, provenance: Provenance) -> Self {
        let n = data.dim();
        let len = data.grid().len();
        let values = (0..n)
            .map(|m| {
                (0..n)
                    .map(|k| {
                        (0..len)
                            .map(|l| {
                                let z = data.value(m, k, l);
                                [z.re, z.im]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            kind: TIME_SERIES_KIND.to_string(),
            dt: data.grid().dt(),
            len,
            n,
            shots: data.shots(),
            data: values,
            provenance,
        }
    }

    pub fn to_data(&self) -> Result<TimeSeriesData> {
        check_header(self.format_version, &self.kind, TIME_SERIES_KIND)?;
        let grid = TimeGrid::new(self.dt, self.len)?;
        let n = self.n;
        if self.data.len() != n
            || self
                .data
                .iter()
                .any(|row| row.len() != n || row.iter().any(|s| s.len() != self.len))
        {
            return Err(Error::InvalidConfig(format!(
                "data must have shape {n}×{n}×{}",
                self.len
            )));
        }
        if self
            .data
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidConfig(
                "data contains non-finite values".into(),
            ));
        }
        let values = (0..self.len)
            .map(|l| {
                CMat::from_fn(n, n, |m, k| {
                    C64::new(self.data[m][k][l][0], self.data[m][k][l][1])
                })
            })
            .collect();
        TimeSeriesData::new(values, grid, self.shots)
    }

    /// One row per sample: `m, n, t, x, p` with 1-based indices.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,n,t,x,p\n");
        for (m, row) in self.data.iter().enumerate() {
            for (k, series) in row.iter().enumerate() {
                for (l, z) in series.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{}\n",
                        m + 1,
                        k + 1,
                        l as f64 * self.dt,
                        z[0],
                        z[1]
                    ));
                }
            }
        }
        out
    }
}

pub fn check_header(version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported format_version {version}"
        )));
    }
    if kind != expected {
        return Err(Error::InvalidConfig(format!(
            "expected a {expected} file, got {kind}"
        )));
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_harper, LatticeGeometry, SpamMap};
    use crate::simulate::simulate_exact;

    #[test]
    fn time_series_round_trip() {
        let h = build_harper(3, 0.2, 20.0, &LatticeGeometry::chain(3)).unwrap();
        let id = SpamMap::identity(3);
        let data = simulate_exact(&h, &id, &id, &TimeGrid::new(1.0, 7).unwrap()).unwrap();
        let prov = Provenance::new("test", &serde_json::json!({"a": 1}), 4).unwrap();
        let file = TimeSeriesFile::new(&data, prov);
        let text = serde_json::to_string(&file).unwrap();
        let back: TimeSeriesFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_data().unwrap(), data);
        assert!(text.contains("\"format_version\":1"));
        assert_eq!(file.to_csv().lines().count(), 1 + 9 * 7);
    }

    #[test]
    fn rejects_wrong_shape_and_version() {
        let h = build_harper(2, 0.2, 20.0, &LatticeGeometry::chain(2)).unwrap();
        let id = SpamMap::identity(2);
        let data = simulate_exact(&h, &id, &id, &TimeGrid::new(1.0, 4).unwrap()).unwrap();
        let prov = Provenance::new("test", &(), 0).unwrap();
        let mut file = TimeSeriesFile::new(&data, prov);
        file.data[1][0].pop();
        assert!(file.to_data().is_err());
        let mut file = TimeSeriesFile::new(&data, file.provenance.clone());
        file.format_version = 2;
        assert!(file.to_data().is_err());
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn matrix_rows_round_trip() {
        let a = RMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(real_from_rows(&real_rows(&a)).unwrap(), a);
        let c = CMat::from_fn(2, 2, |i, j| C64::new(i as f64, j as f64));
        assert_eq!(complex_from_rows(&complex_rows(&c)).unwrap(), c);
        assert!(real_from_rows(&[vec![1.0, 2.0]]).is_err());
    }
}

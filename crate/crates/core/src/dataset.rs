//! Offline datasets and their on-disk formats.
//!
//! The binary `PCDD` layout (all integers and floats little-endian):
//!
//! ```text
//! magic      b"PCDD"
//! version    u32 (= 1)
//! name_len   u32, then name_len UTF-8 bytes
//! d, m       u32, u32
//! n          u64
//! seed       u64
//! lower      d × f64
//! upper      d × f64
//! X          n × d f64, row-major
//! Y          n × m f64, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{PcdError, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"PCDD";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub task_name: String,
    /// `N × d` decision vectors.
    pub x: Array2<f64>,
    /// `N × m` objective vectors.
    pub y: Array2<f64>,
    pub lower_bounds: Vec<f64>,
    pub upper_bounds: Vec<f64>,
    pub seed: u64,
}

impl OfflineDataset {
    pub fn new(
        task_name: impl Into<String>,
        x: Array2<f64>,
        y: Array2<f64>,
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let ds = Self {
            task_name: task_name.into(),
            x,
            y,
            lower_bounds,
            upper_bounds,
            seed,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.x.dim();
        if n == 0 {
            return Err(PcdError::Empty("dataset has no rows"));
        }
        if self.y.nrows() != n {
            return Err(PcdError::Shape(format!(
                "X has {n} rows but Y has {}",
                self.y.nrows()
            )));
        }
        if self.lower_bounds.len() != d || self.upper_bounds.len() != d {
            return Err(PcdError::Shape(format!(
                "bounds must have length d = {d}"
            )));
        }
        if self.y.iter().chain(self.x.iter()).any(|v| !v.is_finite()) {
            return Err(PcdError::NonFinite("dataset entries".into()));
        }
        for row in self.x.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v < self.lower_bounds[j] || v > self.upper_bounds[j] {
                    return Err(PcdError::OutOfBounds(format!("dataset x[{j}] = {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d) = self.x.dim();
        let m = self.m();
        let mut out = Vec::with_capacity(64 + 8 * (2 * d + n * (d + m)));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.task_name.len() as u32).to_le_bytes());
        out.extend_from_slice(self.task_name.as_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(m as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for v in self
            .lower_bounds
            .iter()
            .chain(&self.upper_bounds)
            .chain(self.x.iter())
            .chain(self.y.iter())
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut &bytes[..])
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "magic")?;
        if &magic != DATASET_MAGIC {
            return Err(PcdError::Format(format!(
                "not a PCDD dataset (magic {magic:?})"
            )));
        }
        let version = read_u32(r, "version")?;
        if version != DATASET_VERSION {
            return Err(PcdError::Format(format!(
                "unsupported dataset version {version}"
            )));
        }
        let name_len = read_u32(r, "name length")? as usize;
        if name_len > 4096 {
            return Err(PcdError::Format(format!("task name length {name_len}")));
        }
        let mut name = vec![0u8; name_len];
        read_exact(r, &mut name, "task name")?;
        let task_name = String::from_utf8(name)
            .map_err(|_| PcdError::Format("task name is not UTF-8".into()))?;
        let d = read_u32(r, "d")? as usize;
        let m = read_u32(r, "m")? as usize;
        let n = read_u64(r, "n")? as usize;
        let seed = read_u64(r, "seed")?;
        let lower_bounds = read_f64s(r, d, "lower bounds")?;
        let upper_bounds = read_f64s(r, d, "upper bounds")?;
        let x = Array2::from_shape_vec((n, d), read_f64s(r, n * d, "X")?)
            .map_err(|e| PcdError::Format(e.to_string()))?;
        let y = Array2::from_shape_vec((n, m), read_f64s(r, n * m, "Y")?)
            .map_err(|e| PcdError::Format(e.to_string()))?;
        Self::new(task_name, x, y, lower_bounds, upper_bounds, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Writes `x0..x{d-1},y0..y{m-1}` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..self.d())
            .map(|j| format!("x{j}"))
            .chain((0..self.m()).map(|j| format!("y{j}")))
            .collect();
        w.write_record(&header)?;
        for (xr, yr) in self.x.rows().into_iter().zip(self.y.rows()) {
            w.write_record(xr.iter().chain(yr.iter()).map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). Bounds come from
    /// the caller since CSV does not carry them.
    pub fn read_csv(
        path: impl AsRef<Path>,
        task_name: &str,
        lower_bounds: Vec<f64>,
        upper_bounds: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let d = header.iter().filter(|h| h.starts_with('x')).count();
        let m = header.iter().filter(|h| h.starts_with('y')).count();
        if d + m != header.len() || d == 0 || m == 0 {
            return Err(PcdError::Format(
                "CSV header must be x0..x{d-1},y0..y{m-1}".into(),
            ));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| PcdError::Format(format!("bad number `{field}`")))?;
                if j < d {
                    xs.push(v)
                } else {
                    ys.push(v)
                }
            }
        }
        let n = xs.len() / d;
        let x = Array2::from_shape_vec((n, d), xs).map_err(|e| PcdError::Format(e.to_string()))?;
        let y = Array2::from_shape_vec((n, m), ys).map_err(|e| PcdError::Format(e.to_string()))?;
        Self::new(task_name, x, y, lower_bounds, upper_bounds, seed)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => PcdError::Format(format!("truncated while reading {what}")),
        _ => PcdError::Io(e),
    })
}

pub(crate) fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize, what: &str) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n.checked_mul(8).ok_or_else(|| PcdError::Format(format!("{what} too large")))?];
    read_exact(r, &mut buf, what)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> OfflineDataset {
        OfflineDataset::new(
            "zdt1",
            array![[0.0, 0.5], [1.0, 0.25]],
            array![[0.0, 1.0], [1.0, 0.0]],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            7,
        )
        .unwrap()
    }

    #[test]
    fn binary_round_trip() {
        let ds = sample();
        let bytes = ds.to_bytes();
        assert_eq!(&bytes[..4], b"PCDD");
        assert_eq!(OfflineDataset::from_bytes(&bytes).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = sample().to_bytes();
        let cut = bytes[..bytes.len() - 3].to_vec();
        assert!(matches!(OfflineDataset::from_bytes(&cut), Err(PcdError::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(OfflineDataset::from_bytes(&bytes), Err(PcdError::Format(_))));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = sample();
        ds.write_csv(&path).unwrap();
        let back = OfflineDataset::read_csv(&path, "zdt1", vec![0.0, 0.0], vec![1.0, 1.0], 7).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn validation() {
        assert!(OfflineDataset::new("t", array![[2.0]], array![[0.0]], vec![0.0], vec![1.0], 0).is_err());
        assert!(OfflineDataset::new("t", array![[0.5]], array![[0.0], [1.0]], vec![0.0], vec![1.0], 0).is_err());
    }
}

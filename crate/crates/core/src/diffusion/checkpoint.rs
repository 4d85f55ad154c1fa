//! Versioned binary checkpoints.
//!
//! Layout (little endian): magic `PCDM`, version `u32`, scalar size `u8`,
//! `d`, `m`, width, depth, rff_dim, cond_dim and the seed as `u64`, the four
//! real config fields and the zero-init flag, then parameters, EMA parameters,
//! RFF frequencies and the normalization vectors. Reals are stored as `f64`,
//! which is exact for `f32` models too.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DenoiserConfig, DenoiserModel, Layout};
use crate::dataset::{read_f64s, read_u32, read_u64};
use crate::error::{PcdError, Result};
use crate::pareto::NormalizationStats;
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCDM";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_f64s<T: Scalar>(out: &mut Vec<u8>, v: &[T]) {
    for x in v {
        out.extend_from_slice(&x.f64().to_le_bytes());
    }
}

pub fn to_bytes<T: Scalar>(model: &DenoiserModel<T>) -> Vec<u8> {
    let c = &model.config;
    let l = &model.layout;
    let mut out = Vec::with_capacity(16 * l.total + 256);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(T::BYTES);
    for v in [l.d, l.m, c.width, c.depth, c.rff_dim, c.cond_dim] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.extend_from_slice(&c.seed.to_le_bytes());
    for v in [c.cfg_dropout_prob, c.sigma_data, c.p_mean, c.p_std] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(c.zero_init_output as u8);
    put_f64s(&mut out, &model.params);
    put_f64s(&mut out, &model.ema);
    put_f64s(&mut out, &model.rff_freq);
    let s = &model.stats;
    for v in [&s.ideal, &s.nadir, &s.y_mean, &s.y_std, &s.lower_bounds, &s.upper_bounds] {
        put_f64s(&mut out, v);
    }
    out
}

pub fn save_checkpoint<T: Scalar>(model: &DenoiserModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&to_bytes(model))?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<DenoiserModel<T>> {
    let mut r = BufReader::new(File::open(path)?);
    from_reader(&mut r)
}

pub fn from_reader<T: Scalar>(r: &mut impl Read) -> Result<DenoiserModel<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| PcdError::Format("checkpoint truncated in magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(PcdError::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(PcdError::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)
        .map_err(|_| PcdError::Format("checkpoint truncated in scalar tag".into()))?;
    if tag[0] != T::BYTES {
        return Err(PcdError::Format(format!(
            "checkpoint holds {}-byte scalars, requested {}-byte",
            tag[0],
            T::BYTES
        )));
    }
    let mut dims = [0usize; 6];
    for (k, name) in ["d", "m", "width", "depth", "rff_dim", "cond_dim"].iter().enumerate() {
        dims[k] = read_u64(r, name)? as usize;
    }
    let [d, m, width, depth, rff_dim, cond_dim] = dims;
    if d == 0 || m == 0 || d > 1 << 20 || m > 1 << 10 || width > 1 << 16 || depth > 1 << 10 {
        return Err(PcdError::Format(format!("implausible checkpoint dimensions {dims:?}")));
    }
    let seed = read_u64(r, "seed")?;
    let reals = read_f64s(r, 4, "config")?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)
        .map_err(|_| PcdError::Format("checkpoint truncated in config".into()))?;
    let config = DenoiserConfig {
        width,
        depth,
        rff_dim,
        cond_dim,
        cfg_dropout_prob: reals[0],
        sigma_data: reals[1],
        p_mean: reals[2],
        p_std: reals[3],
        zero_init_output: flag[0] != 0,
        seed,
    };
    config.validate()?;
    let layout = Layout::new(&config, d, m);
    let cast = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
    let params = cast(read_f64s(r, layout.total, "parameters")?);
    let ema = cast(read_f64s(r, layout.total, "EMA parameters")?);
    let rff_freq = cast(read_f64s(r, rff_dim, "RFF frequencies")?);
    let stats = NormalizationStats {
        ideal: cast(read_f64s(r, m, "ideal")?),
        nadir: cast(read_f64s(r, m, "nadir")?),
        y_mean: cast(read_f64s(r, m, "y mean")?),
        y_std: cast(read_f64s(r, m, "y std")?),
        lower_bounds: cast(read_f64s(r, d, "lower bounds")?),
        upper_bounds: cast(read_f64s(r, d, "upper bounds")?),
    };
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(PcdError::Format("trailing bytes after checkpoint".into()));
    }
    Ok(DenoiserModel {
        config,
        layout,
        params,
        ema,
        rff_freq,
        stats,
    })
}

impl<T: Scalar> DenoiserModel<T> {
    /// Fails unless the model was built for `d` decision variables and `m`
    /// objectives.
    pub fn expect_dims(&self, d: usize, m: usize) -> Result<()> {
        if self.d() != d || self.m() != m {
            return Err(PcdError::Shape(format!(
                "model was trained for d = {}, m = {}, but the task has d = {d}, m = {m}",
                self.d(),
                self.m()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::tests::stats;

    fn model<T: Scalar>() -> DenoiserModel<T> {
        let cfg = DenoiserConfig {
            width: 8,
            depth: 2,
            rff_dim: 4,
            cond_dim: 3,
            zero_init_output: false,
            seed: 9,
            ..Default::default()
        };
        let mut m = DenoiserModel::new(cfg, stats(3, 2).cast()).unwrap();
        m.ema.iter_mut().for_each(|v| *v = *v * T::lit(0.5));
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let m64 = model::<f64>();
        save_checkpoint(&m64, &p).unwrap();
        assert_eq!(load_checkpoint::<f64>(&p).unwrap(), m64);

        let m32 = model::<f32>();
        save_checkpoint(&m32, &p).unwrap();
        assert_eq!(load_checkpoint::<f32>(&p).unwrap(), m32);
        assert!(load_checkpoint::<f64>(&p).is_err());
    }

    #[test]
    fn corrupt_and_truncated_files_fail() {
        let bytes = to_bytes(&model::<f64>());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(from_reader::<f64>(&mut bad.as_slice()), Err(PcdError::Format(_))));
        let short = &bytes[..bytes.len() - 5];
        assert!(matches!(from_reader::<f64>(&mut &short[..]), Err(PcdError::Format(_))));
    }

    #[test]
    fn dimension_guard() {
        let m = model::<f64>();
        assert!(m.expect_dims(3, 2).is_ok());
        assert!(m.expect_dims(3, 3).is_err());
    }
}

//! Chain persistence: a binary columnar draw file and a per-parameter CSV summary.
//!
//! File layout (all integers and floats little-endian):
//!
//! ```text
//! b"GXECHAIN"            8 bytes
//! version: u32           currently 1
//! header_len: u64
//! header: JSON           header_len bytes, UTF-8
//! draws: f64             n_columns * n_draws, column-major
//! indicators: u8         n_blocks * n_draws, block-major
//! sweep_seconds: f64     n_sweeps
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{ChainOutput, Layout};
use crate::inference::{inclusion_probabilities, pooled_column};
use crate::model::data::fmt_num;
use crate::stats::{quantile_sorted, sorted};
use crate::variant::MethodVariant;

pub const MAGIC: &[u8; 8] = b"GXECHAIN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    variant: MethodVariant,
    seed: u64,
    stream_id: u64,
    n_draws: usize,
    n_sweeps: usize,
    layout: Layout,
}

pub fn write_chain<P: AsRef<Path>>(chain: &ChainOutput, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        variant: chain.variant,
        seed: chain.seed,
        stream_id: chain.stream_id,
        n_draws: chain.n_draws(),
        n_sweeps: chain.sweep_seconds.len(),
        layout: chain.layout.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Ingestion(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for col in &chain.draws {
        for v in col {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for ind in &chain.indicators {
        w.write_all(ind)?;
    }
    for v in &chain.sweep_seconds {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
}

pub fn read_chain<P: AsRef<Path>>(path: P) -> Result<ChainOutput> {
    let path = path.as_ref();
    let bad = |msg: &str| Error::Ingestion(format!("{}: {msg}", path.display()));
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated file"))?;
    if &magic != MAGIC {
        return Err(bad("not a chain file"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let len = u64::from_le_bytes(b8) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|_| bad("truncated header"))?;
    let h: Header = serde_json::from_slice(&json).map_err(|e| bad(&e.to_string()))?;
    let n = h.n_draws;
    let mut draws = Vec::with_capacity(h.layout.n_columns());
    for _ in 0..h.layout.n_columns() {
        draws.push(read_f64s(&mut r, n).map_err(|_| bad("truncated draws"))?);
    }
    let mut indicators = Vec::with_capacity(h.layout.blocks.len());
    for _ in 0..h.layout.blocks.len() {
        let mut ind = vec![0u8; n];
        r.read_exact(&mut ind).map_err(|_| bad("truncated indicators"))?;
        indicators.push(ind);
    }
    let sweep_seconds = read_f64s(&mut r, h.n_sweeps).map_err(|_| bad("truncated timings"))?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes"));
    }
    Ok(ChainOutput {
        variant: h.variant,
        layout: h.layout,
        draws,
        indicators,
        sweep_seconds,
        seed: h.seed,
        stream_id: h.stream_id,
    })
}

/// Per-parameter median, 2.5%/97.5% quantiles over the pooled chains, and the
/// inclusion probability of the owning block (empty for unpenalized parameters).
pub fn write_summary<P: AsRef<Path>>(chains: &[ChainOutput], path: P) -> Result<()> {
    let first = chains.first().ok_or(Error::EmptyChain)?;
    let l = &first.layout;
    let mut incl = vec![0.0; l.blocks.len()];
    let total: usize = chains.iter().map(|c| c.n_draws()).sum();
    if total == 0 {
        return Err(Error::EmptyChain);
    }
    for c in chains {
        for (a, p) in incl.iter_mut().zip(inclusion_probabilities(c)?) {
            *a += p * c.n_draws() as f64 / total as f64;
        }
    }
    let mut owner = vec![None; l.n_columns()];
    for (b, bc) in l.blocks.iter().enumerate() {
        for k in bc.coef.clone() {
            owner[k] = Some(b);
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "median", "q025", "q975", "inclusion"])?;
    for (k, name) in l.names.iter().enumerate() {
        let s = sorted(&pooled_column(chains, k));
        w.write_record([
            name.clone(),
            fmt_num(quantile_sorted(&s, 0.5)),
            fmt_num(quantile_sorted(&s, 0.025)),
            fmt_num(quantile_sorted(&s, 0.975)),
            owner[k].map(|b| fmt_num(incl[b])).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{run_chain, ChainSettings};
    use crate::model::{GxEDataset, Hyperparameters};
    use crate::splines::{SplineConfig, SplineSystem};
    use nalgebra::{DMatrix, DVector};

    fn small_chain(variant: MethodVariant) -> ChainOutput {
        let n = 20;
        let data = GxEDataset::new(
            DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin()),
            DMatrix::from_fn(n, 2, |i, j| ((i + j) % 3) as f64),
            DVector::from_fn(n, |i, _| i as f64 / (n - 1) as f64),
            DVector::from_fn(n, |i, _| (i % 2) as f64),
            DMatrix::from_fn(n, 1, |i, _| (i as f64).cos()),
        )
        .unwrap();
        let sp = SplineSystem::new(SplineConfig::new(2, 1, 0.0, 1.0).unwrap()).unwrap();
        let settings = ChainSettings { iterations: 60, burn_in: 10, ..Default::default() };
        run_chain(variant, &data, &sp, &Hyperparameters::default(), &settings).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for v in MethodVariant::ALL {
            let c = small_chain(v);
            let p = dir.path().join("c.bin");
            write_chain(&c, &p).unwrap();
            assert_eq!(read_chain(&p).unwrap(), c);
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_chain(MethodVariant::BssvcSi);
        let p = dir.path().join("c.bin");
        write_chain(&c, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_chain(&p).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        std::fs::write(&p, &extra).unwrap();
        assert!(read_chain(&p).is_err());
        let mut wrong = bytes;
        wrong[0] = b'X';
        std::fs::write(&p, &wrong).unwrap();
        assert!(read_chain(&p).is_err());
    }

    #[test]
    fn summary_rows_and_inclusion() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_chain(MethodVariant::BssvcSi);
        let p = dir.path().join("s.csv");
        write_summary(&[c.clone(), c.clone()], &p).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), c.layout.n_columns());
        let probs = inclusion_probabilities(&c).unwrap();
        let bc = &c.layout.blocks[0];
        let row = &rows[bc.coef.start];
        assert_eq!(&row[0], c.layout.names[bc.coef.start].as_str());
        assert_eq!(row[4].parse::<f64>().unwrap(), probs[0]);
        assert_eq!(&rows[c.layout.sigma2][4], "");
        let med: f64 = rows[c.layout.sigma2][1].parse().unwrap();
        assert_eq!(med, crate::stats::median(&c.draws[c.layout.sigma2]));
    }
}

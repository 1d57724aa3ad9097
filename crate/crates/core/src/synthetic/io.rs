//! Binary dataset and corpus files.
//!
//! Dataset block (`EIPD`), all integers and floats little-endian:
//!
//! ```text
//! magic "EIPD" | version u32 | d u32 | N u64
//! prior record: family u32 (0 = gauss2d, 1 = gauss2d-3param), 3 x f64
//!               (gauss2d: gamma, 0, 0; gauss2d-3param: mu1, mu2, gamma1)
//! N records of 2d f64: x[0..d] then y[0..d]
//! ```
//!
//! Corpus file (`EIPC`):
//!
//! ```text
//! magic "EIPC" | version u32 | M u32 | seed u64
//! forward record: A row-major 4 x f64, noise_mean_scale f64, noise_var_scale f64
//! M embedded dataset blocks
//! ```
//!
//! Every save also writes a `<path>.manifest.txt` key/value sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{Corpus, ForwardSpec, PairDataset, PriorSpec};
use crate::binio::{atomic_write, manifest_path, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const DATASET_MAGIC: &[u8; 4] = b"EIPD";
const CORPUS_MAGIC: &[u8; 4] = b"EIPC";
const VERSION: u32 = 1;

fn write_prior(w: &mut ByteWriter, prior: &PriorSpec) {
    match *prior {
        PriorSpec::Gauss2D { gamma } => {
            w.u32(0);
            w.f64s(&[gamma, 0.0, 0.0]);
        }
        PriorSpec::Gauss2D3Param { mu1, mu2, gamma1 } => {
            w.u32(1);
            w.f64s(&[mu1, mu2, gamma1]);
        }
    }
}

fn read_prior(r: &mut ByteReader) -> Result<PriorSpec> {
    let family = r.u32()?;
    let p = r.f64s(3)?;
    let spec = match family {
        0 => PriorSpec::Gauss2D { gamma: p[0] },
        1 => PriorSpec::Gauss2D3Param {
            mu1: p[0],
            mu2: p[1],
            gamma1: p[2],
        },
        other => return Err(Error::Format(format!("unknown prior family tag {other}"))),
    };
    spec.validate()
        .map_err(|e| Error::Format(format!("stored prior invalid: {e}")))?;
    Ok(spec)
}

fn write_dataset_block(w: &mut ByteWriter, ds: &PairDataset) {
    let d = ds.dim();
    w.bytes(DATASET_MAGIC);
    w.u32(VERSION);
    w.u32(d as u32);
    w.u64(ds.len() as u64);
    write_prior(w, &ds.prior);
    for (x, y) in ds.x.rows().into_iter().zip(ds.y.rows()) {
        for &v in x.iter().chain(y.iter()) {
            w.f64(v);
        }
    }
}

fn read_version(r: &mut ByteReader) -> Result<()> {
    let v = r.u32()?;
    if v != VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {v} (expected {VERSION})"
        )));
    }
    Ok(())
}

fn read_dataset_block(r: &mut ByteReader) -> Result<PairDataset> {
    r.magic(DATASET_MAGIC)?;
    read_version(r)?;
    let d = r.u32()? as usize;
    let n = r.u64()? as usize;
    if d == 0 || n == 0 {
        return Err(Error::Format(format!("empty dataset header (d={d}, N={n})")));
    }
    let prior = read_prior(r)?;
    let flat = r.f64s(n.checked_mul(2 * d).ok_or_else(|| Error::Format("size overflow".into()))?)?;
    let mut x = Array2::zeros((n, d));
    let mut y = Array2::zeros((n, d));
    for (j, rec) in flat.chunks_exact(2 * d).enumerate() {
        for i in 0..d {
            x[[j, i]] = rec[i];
            y[[j, i]] = rec[d + i];
        }
    }
    let ds = PairDataset { prior, x, y };
    ds.validate()?;
    Ok(ds)
}

fn forward_line(fwd: &ForwardSpec) -> String {
    format!(
        "A=[[{},{}],[{},{}]] noise_mean_scale={} noise_var_scale={}",
        fwd.a[0][0], fwd.a[0][1], fwd.a[1][0], fwd.a[1][1], fwd.noise_mean_scale, fwd.noise_var_scale
    )
}

fn dataset_manifest(ds: &PairDataset) -> String {
    let mut s = String::new();
    writeln!(s, "format = EIPD").unwrap();
    writeln!(s, "version = {VERSION}").unwrap();
    writeln!(s, "d = {}", ds.dim()).unwrap();
    writeln!(s, "n = {}", ds.len()).unwrap();
    writeln!(s, "prior = {}", ds.prior).unwrap();
    s
}

pub fn save_dataset(ds: &PairDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut w = ByteWriter::with_capacity(64 + ds.len() * ds.dim() * 16);
    write_dataset_block(&mut w, ds);
    atomic_write(path, &w.buf)?;
    atomic_write(&manifest_path(path), dataset_manifest(ds).as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<PairDataset> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes);
    let ds = read_dataset_block(&mut r)?;
    r.finish()?;
    Ok(ds)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    if corpus.datasets.is_empty() {
        return Err(Error::Config("corpus has no datasets".into()));
    }
    let mut w = ByteWriter::with_capacity(64 + corpus.total_pairs() * corpus.dim() * 16);
    w.bytes(CORPUS_MAGIC);
    w.u32(VERSION);
    w.u32(corpus.datasets.len() as u32);
    w.u64(corpus.seed);
    w.f64s(&[
        corpus.forward.a[0][0],
        corpus.forward.a[0][1],
        corpus.forward.a[1][0],
        corpus.forward.a[1][1],
        corpus.forward.noise_mean_scale,
        corpus.forward.noise_var_scale,
    ]);
    for ds in &corpus.datasets {
        ds.validate()?;
        write_dataset_block(&mut w, ds);
    }
    atomic_write(path, &w.buf)?;

    let mut m = String::new();
    writeln!(m, "format = EIPC").unwrap();
    writeln!(m, "version = {VERSION}").unwrap();
    writeln!(m, "m = {}", corpus.datasets.len()).unwrap();
    writeln!(m, "seed = {}", corpus.seed).unwrap();
    writeln!(m, "forward = {}", forward_line(&corpus.forward)).unwrap();
    for (i, ds) in corpus.datasets.iter().enumerate() {
        writeln!(m, "dataset.{i} = {} n={}", ds.prior, ds.len()).unwrap();
    }
    atomic_write(&manifest_path(path), m.as_bytes())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let bytes = fs::read(path)?;
    let mut r = ByteReader::new(&bytes);
    r.magic(CORPUS_MAGIC)?;
    read_version(&mut r)?;
    let m = r.u32()? as usize;
    if m == 0 {
        return Err(Error::Format("corpus with zero datasets".into()));
    }
    let seed = r.u64()?;
    let f = r.f64s(6)?;
    let forward = ForwardSpec {
        a: [[f[0], f[1]], [f[2], f[3]]],
        noise_mean_scale: f[4],
        noise_var_scale: f[5],
    };
    forward
        .validate()
        .map_err(|e| Error::Format(format!("stored forward spec invalid: {e}")))?;
    let datasets = (0..m)
        .map(|_| read_dataset_block(&mut r))
        .collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(Corpus {
        datasets,
        forward,
        seed,
    })
}

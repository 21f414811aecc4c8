//! On-disk instance directories.
//!
//! ```text
//! <dir>/meta.toml       format, n, r, m, kind, rho, seed, sigma, kappa, storage
//! <dir>/b.f64           m little-endian f64 observations
//! <dir>/zstar.f64       n·r little-endian f64, row-major (only with truth)
//! <dir>/matrices.f64    storage = "packed": m blocks of n(n+1)/2 LE f64,
//!                       upper triangle of each A_i in row-major order
//! <dir>/nnz.u32         storage = "triplets": m LE u32 entry counts
//! <dir>/triplets.bin    storage = "triplets": records (row u32, col u32,
//!                       value f64), all LE, matrices back to back
//! ```
//!
//! `sigma` and `kappa` in the metadata are informational; on load they are
//! recomputed from `zstar.f64`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use super::ensemble::{EnsembleKind, MeasurementEnsemble};
use super::instance::{GroundTruth, Instance};
use crate::dense;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceMeta {
    pub format: u32,
    pub n: usize,
    /// Rank of the planted solution; 0 when no truth is stored.
    pub r: usize,
    pub m: usize,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sigma: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub storage: String,
}

fn write_f64s(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in values {
        w.write_all(&v.to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = read_bytes(path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::parse(
            path,
            format!(
                "expected {} f64 values, found {} bytes",
                expected,
                bytes.len()
            ),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_instance(dir: &Path, inst: &Instance) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let ens = &inst.ensemble;
    let (n, m) = (ens.n(), ens.m());
    let meta = InstanceMeta {
        format: FORMAT_VERSION,
        n,
        r: inst.rank().unwrap_or(0),
        m,
        kind: ens.kind().name().to_string(),
        rho: ens.kind().density(),
        seed: inst.seed,
        sigma: inst
            .truth
            .as_ref()
            .map(|t| t.sigma.clone())
            .unwrap_or_default(),
        kappa: inst.truth.as_ref().map(|t| t.kappa),
        storage: if ens.is_sparse() {
            "triplets"
        } else {
            "packed"
        }
        .into(),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    let meta_path = dir.join("meta.toml");
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;

    write_f64s(&dir.join("b.f64"), inst.b.iter().copied())?;
    if let Some(t) = &inst.truth {
        write_f64s(&dir.join("zstar.f64"), dense::rows_of(t.zstar.as_ref()))?;
    }
    if let Some(packed) = ens.packed_all() {
        write_f64s(&dir.join("matrices.f64"), packed.iter().copied())?;
    } else {
        let counts_path = dir.join("nnz.u32");
        let mut counts =
            BufWriter::new(File::create(&counts_path).map_err(|e| Error::io(&counts_path, e))?);
        let trip_path = dir.join("triplets.bin");
        let mut trips =
            BufWriter::new(File::create(&trip_path).map_err(|e| Error::io(&trip_path, e))?);
        for i in 0..m {
            counts
                .write_all(&(ens.nnz(i) as u32).to_le_bytes())
                .map_err(|e| Error::io(&counts_path, e))?;
            for (r, c, v) in ens.triplets(i).unwrap() {
                let mut rec = [0u8; 16];
                rec[..4].copy_from_slice(&r.to_le_bytes());
                rec[4..8].copy_from_slice(&c.to_le_bytes());
                rec[8..].copy_from_slice(&v.to_le_bytes());
                trips
                    .write_all(&rec)
                    .map_err(|e| Error::io(&trip_path, e))?;
            }
        }
        counts.flush().map_err(|e| Error::io(&counts_path, e))?;
        trips.flush().map_err(|e| Error::io(&trip_path, e))?;
    }
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<InstanceMeta> {
    let path = dir.join("meta.toml");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: InstanceMeta =
        toml::from_str(&text).map_err(|e| Error::parse(&path, e.to_string()))?;
    if meta.format != FORMAT_VERSION {
        return Err(Error::parse(
            &path,
            format!("unsupported format version {}", meta.format),
        ));
    }
    Ok(meta)
}

pub fn read_instance(dir: &Path) -> Result<Instance> {
    let meta = read_meta(dir)?;
    let meta_path = dir.join("meta.toml");
    let (n, m) = (meta.n, meta.m);
    let kind = match meta.kind.as_str() {
        "goe" => EnsembleKind::Goe,
        "bernoulli" => EnsembleKind::Bernoulli {
            rho: meta
                .rho
                .ok_or_else(|| Error::parse(&meta_path, "bernoulli ensemble without rho"))?,
        },
        "explicit" => EnsembleKind::Explicit,
        other => return Err(Error::parse(&meta_path, format!("unknown kind {other:?}"))),
    };
    let ensemble = match meta.storage.as_str() {
        "packed" => {
            let packed = read_f64s(&dir.join("matrices.f64"), m * dense::packed_len(n))?;
            MeasurementEnsemble::from_packed(kind, n, m, packed)?
        }
        "triplets" => {
            let counts_path = dir.join("nnz.u32");
            let counts = read_bytes(&counts_path)?;
            if counts.len() != 4 * m {
                return Err(Error::parse(
                    &counts_path,
                    "count file does not hold m entries",
                ));
            }
            let trip_path = dir.join("triplets.bin");
            let trips = read_bytes(&trip_path)?;
            let mut records = trips.chunks_exact(16);
            if trips.len() % 16 != 0 {
                return Err(Error::parse(&trip_path, "truncated triplet record"));
            }
            let mut mats = Vec::with_capacity(m);
            for c in counts.chunks_exact(4) {
                let k = u32::from_le_bytes(c.try_into().unwrap()) as usize;
                let mut mat = Vec::with_capacity(k);
                for _ in 0..k {
                    let rec = records
                        .next()
                        .ok_or_else(|| Error::parse(&trip_path, "fewer triplets than counted"))?;
                    mat.push((
                        u32::from_le_bytes(rec[..4].try_into().unwrap()),
                        u32::from_le_bytes(rec[4..8].try_into().unwrap()),
                        f64::from_le_bytes(rec[8..].try_into().unwrap()),
                    ));
                }
                mats.push(mat);
            }
            if records.next().is_some() {
                return Err(Error::parse(&trip_path, "more triplets than counted"));
            }
            MeasurementEnsemble::from_triplets(kind, n, &mats)?
        }
        other => {
            return Err(Error::parse(
                &meta_path,
                format!("unknown storage {other:?}"),
            ))
        }
    };
    let b = read_f64s(&dir.join("b.f64"), m)?;
    let mut inst = Instance::new(ensemble, b)?;
    inst.seed = meta.seed;
    if meta.r > 0 {
        let rows = read_f64s(&dir.join("zstar.f64"), n * meta.r)?;
        inst.truth = Some(GroundTruth::from_factor(dense::from_rows(
            &rows, n, meta.r,
        ))?);
    }
    Ok(inst)
}

/// Loads just the planted factor of an instance directory, if present.
pub fn read_zstar(dir: &Path) -> Result<Option<Mat<f64>>> {
    let meta = read_meta(dir)?;
    if meta.r == 0 {
        return Ok(None);
    }
    let rows = read_f64s(&dir.join("zstar.f64"), meta.n * meta.r)?;
    Ok(Some(dense::from_rows(&rows, meta.n, meta.r)))
}

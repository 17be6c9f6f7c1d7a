//! Binary model checkpoints.
//!
//! Layout, all multi-byte values little endian:
//!
//! ```text
//! "MMT1"  magic
//! u8      model kind code
//! u32 x8  src_vocab tgt_vocab emb enc_hidden spatial global latent shared
//! f64 x3  lambda margin rho
//! u64 x2  source and target vocabulary fingerprints
//! f32 ..  every parameter tensor, flat traversal order
//! ```
//!
//! Nothing may follow the last tensor. Loading validates the magic, the
//! kind code, and both fingerprints, so a checkpoint cannot silently be
//! paired with the wrong vocabulary.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::ParamBlock;

use super::model::{Hyper, Model, ModelKind};
use super::ModelDims;

const MAGIC: &[u8; 4] = b"MMT1";

fn dims_array(d: &ModelDims) -> [usize; 8] {
    [
        d.src_vocab,
        d.tgt_vocab,
        d.emb,
        d.enc_hidden,
        d.spatial_dim,
        d.global_dim,
        d.latent_dim,
        d.shared_dim,
    ]
}

/// Writes `model` to `path`, stamping the vocabulary fingerprints.
pub fn save_model(
    path: &Path,
    model: &Model,
    src_fingerprint: u64,
    tgt_fingerprint: u64,
) -> Result<()> {
    for d in dims_array(&model.dims) {
        if u32::try_from(d).is_err() {
            return Err(Error::Argument(format!("dimension {d} exceeds the format limit")));
        }
    }
    let file = File::create(path).map_err(|e| Error::io(path.display(), e))?;
    let mut w = BufWriter::new(file);
    write_body(&mut w, model, src_fingerprint, tgt_fingerprint)
        .and_then(|()| w.flush())
        .map_err(|e| Error::io(path.display(), e))
}

fn write_body(
    w: &mut impl Write,
    model: &Model,
    src_fingerprint: u64,
    tgt_fingerprint: u64,
) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[model.kind().code()])?;
    for d in dims_array(&model.dims) {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    for h in [model.hyper.lambda, model.hyper.margin, model.hyper.rho] {
        w.write_all(&h.to_le_bytes())?;
    }
    w.write_all(&src_fingerprint.to_le_bytes())?;
    w.write_all(&tgt_fingerprint.to_le_bytes())?;
    let mut res = Ok(());
    model.visit(&mut |s| {
        if res.is_ok() {
            for &v in s {
                if let Err(e) = w.write_all(&(v as f32).to_le_bytes()) {
                    res = Err(e);
                    break;
                }
            }
        }
    });
    res
}

/// Reads a model from `path`, checking it against the given vocabulary
/// fingerprints.
pub fn load_model(path: &Path, src_fingerprint: u64, tgt_fingerprint: u64) -> Result<Model> {
    let file = File::open(path).map_err(|e| Error::io(path.display(), e))?;
    let mut r = BufReader::new(file);

    let magic = read_array::<4>(&mut r, path)?;
    if &magic != MAGIC {
        return Err(Error::format(path.display(), "not a model checkpoint"));
    }
    let kind_code = read_array::<1>(&mut r, path)?[0];
    let kind = ModelKind::from_code(kind_code)
        .map_err(|_| Error::format(path.display(), format!("unknown model kind code {kind_code}")))?;

    let mut dims = [0usize; 8];
    for d in &mut dims {
        *d = u32::from_le_bytes(read_array::<4>(&mut r, path)?) as usize;
    }
    let dims = ModelDims {
        src_vocab: dims[0],
        tgt_vocab: dims[1],
        emb: dims[2],
        enc_hidden: dims[3],
        spatial_dim: dims[4],
        global_dim: dims[5],
        latent_dim: dims[6],
        shared_dim: dims[7],
    };
    let mut hyper = [0.0f64; 3];
    for h in &mut hyper {
        *h = f64::from_le_bytes(read_array::<8>(&mut r, path)?);
    }
    let hyper = Hyper {
        lambda: hyper[0],
        margin: hyper[1],
        rho: hyper[2],
    };
    let src_fp = u64::from_le_bytes(read_array::<8>(&mut r, path)?);
    let tgt_fp = u64::from_le_bytes(read_array::<8>(&mut r, path)?);
    if src_fp != src_fingerprint {
        return Err(Error::format(
            path.display(),
            "source vocabulary does not match this checkpoint",
        ));
    }
    if tgt_fp != tgt_fingerprint {
        return Err(Error::format(
            path.display(),
            "target vocabulary does not match this checkpoint",
        ));
    }

    let mut model = Model::shaped(kind, dims, hyper)?;
    let mut res: Result<()> = Ok(());
    model.visit_mut(&mut |s| {
        if res.is_ok() {
            for v in s.iter_mut() {
                match read_array::<4>(&mut r, path) {
                    Ok(b) => *v = f32::from_le_bytes(b) as f64,
                    Err(e) => {
                        res = Err(e);
                        break;
                    }
                }
            }
        }
    });
    res?;

    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => Ok(model),
        Ok(_) => Err(Error::format(path.display(), "trailing bytes after the parameters")),
        Err(e) => Err(Error::io(path.display(), e)),
    }
}

fn read_array<const N: usize>(r: &mut impl Read, path: &Path) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(path.display(), "truncated checkpoint")
        } else {
            Error::io(path.display(), e)
        }
    })?;
    Ok(buf)
}

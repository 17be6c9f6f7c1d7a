//! Image feature files.
//!
//! Layout, all multi-byte values little endian:
//!
//! ```text
//! "MMTF"  magic
//! u32 x3  item count, rows per item, feature dimension
//! f32 ..  row-major feature values, one block of rows per item
//! ```
//!
//! One row per item stores pooled whole-image vectors; several rows store
//! per-location spatial features. Nothing may follow the last value.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

use super::{GlobalFeature, SpatialFeatures};

const MAGIC: &[u8; 4] = b"MMTF";

/// Image features for a corpus, one fixed-shape block per item.
#[derive(Debug, Clone)]
pub struct FeatureFile {
    rows_per_item: usize,
    dim: usize,
    items: Vec<Matrix>,
}

impl FeatureFile {
    /// Wraps per-item feature blocks, which must all share one shape.
    pub fn new(items: Vec<Matrix>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Argument("a feature file needs at least one item".into()))?;
        let (rows_per_item, dim) = first.shape();
        if rows_per_item == 0 || dim == 0 {
            return Err(Error::Argument("feature blocks must be non-empty".into()));
        }
        for (i, m) in items.iter().enumerate() {
            if m.shape() != (rows_per_item, dim) {
                return Err(Error::dim(
                    "feature items",
                    format!("{:?}", (rows_per_item, dim)),
                    format!("{:?} at item {i}", m.shape()),
                ));
            }
        }
        Ok(FeatureFile { rows_per_item, dim, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn rows_per_item(&self) -> usize {
        self.rows_per_item
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn item(&self, index: usize) -> Result<&Matrix> {
        self.items
            .get(index)
            .ok_or_else(|| Error::Argument(format!("feature item {index} out of range ({} items)", self.items.len())))
    }

    /// Item `index` as spatial locations.
    pub fn spatial(&self, index: usize) -> Result<SpatialFeatures> {
        Ok(SpatialFeatures { locations: self.item(index)?.clone() })
    }

    /// Item `index` as a pooled vector; only valid for one-row items.
    pub fn global(&self, index: usize) -> Result<GlobalFeature> {
        if self.rows_per_item != 1 {
            return Err(Error::Argument(format!(
                "global features need one row per item, this file has {}",
                self.rows_per_item
            )));
        }
        Ok(GlobalFeature { vector: self.item(index)?.row_vector(0) })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        for v in [self.items.len(), self.rows_per_item, self.dim] {
            if u32::try_from(v).is_err() {
                return Err(Error::Argument(format!("size {v} exceeds the format limit")));
            }
        }
        let file = File::create(path).map_err(|e| Error::io(path.display(), e))?;
        let mut w = BufWriter::new(file);
        self.write_body(&mut w)
            .and_then(|()| w.flush())
            .map_err(|e| Error::io(path.display(), e))
    }

    fn write_body(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.items.len(), self.rows_per_item, self.dim] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for item in &self.items {
            for &v in item.as_slice() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path.display(), e))?;
        let mut r = BufReader::new(file);

        let magic = read_array::<4>(&mut r, path)?;
        if &magic != MAGIC {
            return Err(Error::format(path.display(), "not a feature file"));
        }
        let count = u32::from_le_bytes(read_array::<4>(&mut r, path)?) as usize;
        let rows = u32::from_le_bytes(read_array::<4>(&mut r, path)?) as usize;
        let dim = u32::from_le_bytes(read_array::<4>(&mut r, path)?) as usize;
        if count == 0 || rows == 0 || dim == 0 {
            return Err(Error::format(path.display(), "empty feature file"));
        }

        let mut items = Vec::with_capacity(count);
        for _ in 0..count {
            let mut m = Matrix::zeros(rows, dim);
            for v in m.as_mut_slice() {
                *v = f32::from_le_bytes(read_array::<4>(&mut r, path)?) as f64;
            }
            items.push(m);
        }

        let mut probe = [0u8; 1];
        match r.read(&mut probe) {
            Ok(0) => Ok(FeatureFile { rows_per_item: rows, dim, items }),
            Ok(_) => Err(Error::format(path.display(), "trailing bytes after the features")),
            Err(e) => Err(Error::io(path.display(), e)),
        }
    }
}

fn read_array<const N: usize>(r: &mut impl Read, path: &Path) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(path.display(), "truncated feature file")
        } else {
            Error::io(path.display(), e)
        }
    })?;
    Ok(buf)
}

/// Helper for holding a pooled vector as a one-row block.
pub fn global_block(v: &Vector) -> Matrix {
    Matrix::from_rows(std::slice::from_ref(v)).expect("a single row always stacks")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn block(rows: usize, dim: usize, offset: f64) -> Matrix {
        let mut m = Matrix::zeros(rows, dim);
        m.as_mut_slice()
            .iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v = offset + 0.125 * i as f64);
        m
    }

    #[test]
    fn spatial_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let file = FeatureFile::new(vec![block(3, 4, 0.0), block(3, 4, -1.0)]).unwrap();
        file.save(&path).unwrap();
        let back = FeatureFile::load(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.rows_per_item(), 3);
        assert_eq!(back.dim(), 4);
        for i in 0..2 {
            assert_eq!(back.item(i).unwrap().as_slice(), file.item(i).unwrap().as_slice());
        }
        let s = back.spatial(1).unwrap();
        assert_eq!(s.locations.shape(), (3, 4));
        assert!(back.global(0).is_err());
    }

    #[test]
    fn global_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        let v = Vector::new(vec![0.5, -0.25, 0.75]);
        let file = FeatureFile::new(vec![global_block(&v)]).unwrap();
        file.save(&path).unwrap();
        let back = FeatureFile::load(&path).unwrap();
        assert_eq!(back.global(0).unwrap().vector.as_slice(), v.as_slice());
        assert!(back.global(1).is_err());
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        assert!(FeatureFile::new(vec![]).is_err());
        assert!(FeatureFile::new(vec![block(2, 3, 0.0), block(2, 4, 0.0)]).is_err());
        assert!(FeatureFile::new(vec![block(2, 3, 0.0), block(3, 3, 0.0)]).is_err());
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let file = FeatureFile::new(vec![block(2, 2, 0.0)]).unwrap();
        file.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'Z';
        fs::write(&path, &bad).unwrap();
        assert!(FeatureFile::load(&path).unwrap_err().to_string().contains("not a feature file"));

        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(FeatureFile::load(&path).unwrap_err().to_string().contains("truncated"));

        let mut extended = bytes.clone();
        extended.push(7);
        fs::write(&path, &extended).unwrap();
        assert!(FeatureFile::load(&path).unwrap_err().to_string().contains("trailing"));
    }
}

//! On-disk tensor container used for checkpoints and embedding files.
//!
//! Layout: an 8-byte little-endian manifest length, the manifest JSON, then
//! a raw payload of little-endian f64 values. The manifest lists each
//! tensor's name, shape and byte offset into the payload, plus an `extra`
//! JSON value for whatever metadata the caller wants to ride along.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nncore::Tensor;
use crate::Error;

const FORMAT: &str = "ter-container";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    extra: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

/// Write tensors and metadata to `path`. Tensor order is preserved and the
/// output is byte-deterministic for identical inputs.
pub fn write_container(
    path: &Path,
    tensors: &[(&str, &Tensor)],
    extra: &serde_json::Value,
) -> Result<(), Error> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for (name, t) in tensors {
        entries.push(TensorEntry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: "f64".to_string(),
            offset,
        });
        offset += (t.len() * 8) as u64;
    }
    let manifest = Manifest {
        format: FORMAT.to_string(),
        version: VERSION,
        extra: extra.clone(),
        tensors: entries,
    };
    let manifest_bytes = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    for (_, t) in tensors {
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a container back as (tensors in manifest order, extra metadata).
pub fn read_container(path: &Path) -> Result<(Vec<(String, Tensor)>, serde_json::Value), Error> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut len_bytes = [0u8; 8];
    r.read_exact(&mut len_bytes)?;
    let manifest_len = u64::from_le_bytes(len_bytes);
    if manifest_len > file_len.saturating_sub(8) {
        return Err(Error::Invalid(format!(
            "{}: not a tensor container (manifest length {} exceeds file size {})",
            path.display(),
            manifest_len,
            file_len
        )));
    }
    let manifest_len = manifest_len as usize;
    let mut manifest_bytes = vec![0u8; manifest_len];
    r.read_exact(&mut manifest_bytes)?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.format != FORMAT {
        return Err(Error::Invalid(format!(
            "{}: not a tensor container (format {:?})",
            path.display(),
            manifest.format
        )));
    }
    if manifest.version != VERSION {
        return Err(Error::Invalid(format!(
            "{}: unsupported container version {}",
            path.display(),
            manifest.version
        )));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;

    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        if e.dtype != "f64" {
            return Err(Error::Invalid(format!(
                "tensor {:?} has unsupported dtype {:?}",
                e.name, e.dtype
            )));
        }
        let count: usize = e.shape.iter().product();
        let start = e.offset as usize;
        let end = start + count * 8;
        if end > payload.len() {
            return Err(Error::Invalid(format!(
                "tensor {:?} extends past the payload ({} > {} bytes)",
                e.name,
                end,
                payload.len()
            )));
        }
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((e.name.clone(), Tensor::from_vec(&e.shape, data)));
    }
    Ok((tensors, manifest.extra))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_tensors_and_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.ter");
        let a = Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 3.25, 0.0, 1e-12, -7.75]);
        let b = Tensor::from_vec(&[1, 1], vec![42.0]);
        let extra = serde_json::json!({"kind": "test", "n": 3});
        write_container(&path, &[("a", &a), ("b", &b)], &extra).unwrap();
        let (tensors, meta) = read_container(&path).unwrap();
        assert_eq!(tensors.len(), 2);
        assert_eq!(tensors[0].0, "a");
        assert_eq!(tensors[0].1, a);
        assert_eq!(tensors[1].1, b);
        assert_eq!(meta["kind"], "test");
    }

    #[test]
    fn identical_inputs_produce_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("one.ter");
        let p2 = dir.path().join("two.ter");
        let t = Tensor::from_vec(&[2, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let extra = serde_json::json!({"seed": 7});
        write_container(&p1, &[("w", &t)], &extra).unwrap();
        write_container(&p2, &[("w", &t)], &extra).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ter");
        std::fs::write(&path, b"definitely not a container").unwrap();
        assert!(read_container(&path).is_err());
    }
}

//! Flat run-artifact container: one line of JSON header followed by a
//! little-endian `f32` blob.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::SampleMatrix;

pub fn write_blob<H: Serialize>(mut w: impl Write, header: &H, values: &[f32]) -> Result<()> {
    let json = serde_json::to_string(header)?;
    w.write_all(json.as_bytes())?;
    w.write_all(b"\n")?;
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_blob<H: DeserializeOwned>(r: impl Read) -> Result<(H, Vec<f32>)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(Error::Format("missing header terminator".into()));
    }
    let header = serde_json::from_slice(&line[..line.len() - 1])?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if rest.len() % 4 != 0 {
        return Err(Error::Format(format!("blob length {} not a multiple of 4", rest.len())));
    }
    let values = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, values))
}

pub fn write_blob_file<H: Serialize>(path: &Path, header: &H, values: &[f32]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_blob(&mut w, header, values)?;
    w.flush()?;
    Ok(())
}

pub fn read_blob_file<H: DeserializeOwned>(path: &Path) -> Result<(H, Vec<f32>)> {
    read_blob(File::open(path)?)
}

/// Header of a persisted sample matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixHeader {
    pub n: usize,
    pub d: usize,
    pub name: String,
    pub seeds: BTreeMap<String, u64>,
}

pub fn save_matrix(
    path: &Path,
    m: &SampleMatrix,
    name: &str,
    seeds: BTreeMap<String, u64>,
) -> Result<()> {
    let header = MatrixHeader {
        n: m.n(),
        d: m.d(),
        name: name.to_string(),
        seeds,
    };
    let values: Vec<f32> = m.as_slice().iter().map(|v| *v as f32).collect();
    write_blob_file(path, &header, &values)
}

/// Loads a matrix; non-finite entries are kept and the result is raw.
pub fn load_matrix(path: &Path) -> Result<(MatrixHeader, SampleMatrix)> {
    let (header, values): (MatrixHeader, Vec<f32>) = read_blob_file(path)?;
    if values.len() != header.n * header.d {
        return Err(Error::Format(format!(
            "{} values for a {}x{} matrix",
            values.len(),
            header.n,
            header.d
        )));
    }
    let data = ndarray::Array2::from_shape_vec(
        (header.n, header.d),
        values.into_iter().map(f64::from).collect(),
    )
    .map_err(|e| Error::Format(e.to_string()))?;
    let m = if data.iter().all(|v| v.is_finite()) {
        SampleMatrix::new(data)?
    } else {
        SampleMatrix::raw(data)
    };
    Ok((header, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let m = SampleMatrix::new(ndarray::array![[1.0, -2.5], [0.125, 3.0], [7.0, 8.0]]).unwrap();
        let seeds = BTreeMap::from([("data_seed".to_string(), 3u64)]);
        save_matrix(&path, &m, "toy", seeds.clone()).unwrap();
        let (h, back) = load_matrix(&path).unwrap();
        assert_eq!(h.n, 3);
        assert_eq!(h.d, 2);
        assert_eq!(h.seeds, seeds);
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_truncated_blob() {
        let mut buf = Vec::new();
        write_blob(&mut buf, &serde_json::json!({"n": 1}), &[1.0, 2.0]).unwrap();
        buf.pop();
        assert!(read_blob::<serde_json::Value>(&buf[..]).is_err());
    }
}

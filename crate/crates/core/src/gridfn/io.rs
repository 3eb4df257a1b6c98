use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CellBox, GridFunction, Mesh};
use crate::{Error, Result, Scalar};

const MAGIC: &[u8; 4] = b"HGF1";

/// Metadata stored ahead of the cell values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dim: usize,
    pub resolution: i32,
    pub window_lo: Vec<f64>,
    pub window_hi: Vec<f64>,
    pub support_lo: Vec<i64>,
    pub support_hi: Vec<i64>,
    pub complex: bool,
}

impl<T: Scalar> GridFunction<T> {
    pub fn header(&self) -> GridHeader {
        GridHeader {
            dim: self.dim(),
            resolution: self.mesh.resolution(),
            window_lo: self.mesh.window_lo(),
            window_hi: self.mesh.window_hi(),
            support_lo: self.bbox.lo.clone(),
            support_hi: self.bbox.hi.clone(),
            complex: T::IS_COMPLEX,
        }
    }

    fn from_header(header: &GridHeader, values: Vec<T>) -> Result<Self> {
        if header.complex && !T::IS_COMPLEX {
            return Err(Error::Parse("complex data cannot be read as real".into()));
        }
        let mesh = Mesh::new(
            header.dim,
            header.resolution,
            &header.window_lo,
            &header.window_hi,
        )?;
        let bbox = CellBox::new(header.support_lo.clone(), header.support_hi.clone());
        Self::from_values(&mesh, bbox, values)
    }

    /// One JSON header line, then one CSV row per stored cell (`re` or `re,im`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, &self.header())?;
        w.write_all(b"\n")?;
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for v in &self.values {
            if T::IS_COMPLEX {
                out.serialize((v.re(), v.im()))?;
            } else {
                out.serialize(v.re())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut first = String::new();
        r.read_line(&mut first)?;
        let header: GridHeader = serde_json::from_str(first.trim())?;
        let width = if header.complex { 2 } else { 1 };
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != width {
                return Err(Error::Parse(format!(
                    "row {}: expected {width} fields, found {}",
                    row + 2,
                    rec.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {:?}", row + 2, &rec[i])))
            };
            let im = if width == 2 { num(1)? } else { 0.0 };
            values.push(T::from_parts(num(0)?, im));
        }
        Self::from_header(&header, values)
    }

    /// Magic, little-endian `u32` header length, JSON header, then
    /// little-endian `f64` values (interleaved `re, im` when complex).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for v in &self.values {
            w.write_all(&v.re().to_le_bytes())?;
            if T::IS_COMPLEX {
                w.write_all(&v.im().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a grid function file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: GridHeader = serde_json::from_slice(&header)?;
        let n = CellBox::new(header.support_lo.clone(), header.support_hi.clone()).len();
        let mut next = || -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            let re = next()?;
            let im = if header.complex { next()? } else { 0.0 };
            values.push(T::from_parts(re, im));
        }
        Self::from_header(&header, values)
    }

    /// Writes CSV or binary depending on the extension (`.csv` or anything else).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        if path.extension().is_some_and(|e| e == "csv") {
            self.write_csv(file)
        } else {
            self.write_binary(file)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "csv") {
            Self::read_csv(file)
        } else {
            Self::read_binary(BufReader::new(file))
        }
    }
}

//! TPD1 binary tensor format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TPD1"            4 bytes magic 54 50 44 31
//! order             u8
//! dims              order × u32
//! mask              ceil(len / 8) bytes, bit k of byte k/8 (LSB first) is
//!                   entry k in linear order, 1 = observed
//! values            len × f64, missing entries written as 0.0
//! ```
//!
//! Linear order is mode-1 fastest, the same order used in memory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::tensor::{MaskedTensor4, Tensor4};

pub const MAGIC: [u8; 4] = *b"TPD1";

/// Order-agnostic content of a TPD1 file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl RawTensor {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Views a masked tensor as order 4, or order 3 when `as_order3` is set
    /// (requires `M = 1`).
    pub fn from_masked(t: &MaskedTensor4, as_order3: bool) -> Result<Self> {
        let d = t.dims();
        let dims = if as_order3 {
            if d[3] != 1 {
                return Err(Error::DimensionMismatch(format!(
                    "order-3 export needs M = 1, got {d:?}"
                )));
            }
            d[..3].to_vec()
        } else {
            d.to_vec()
        };
        Ok(Self {
            dims,
            values: t.values().data().to_vec(),
            mask: t.mask().to_vec(),
        })
    }

    /// Interprets an order-3 or order-4 file as a masked tensor.
    pub fn into_masked(self) -> Result<MaskedTensor4> {
        let dims = match self.dims.as_slice() {
            [a, b, c] => [*a, *b, *c, 1],
            [a, b, c, d] => [*a, *b, *c, *d],
            other => {
                return Err(Error::Format(format!(
                    "expected an order-3 or order-4 tensor, got order {}",
                    other.len()
                )))
            }
        };
        MaskedTensor4::new(Tensor4::new(dims, self.values)?, self.mask)
    }

    pub fn from_matrix(m: &DenseMatrix) -> Self {
        // nalgebra storage is column-major, i.e. mode-1 fastest.
        Self {
            dims: vec![m.nrows(), m.ncols()],
            values: m.as_slice().to_vec(),
            mask: vec![true; m.len()],
        }
    }

    pub fn into_matrix(self) -> Result<DenseMatrix> {
        match self.dims.as_slice() {
            [r, c] => Ok(DenseMatrix::from_column_slice(*r, *c, &self.values)),
            other => Err(Error::Format(format!(
                "expected an order-2 tensor, got order {}",
                other.len()
            ))),
        }
    }
}

pub fn write_tpd1<W: Write>(w: &mut W, t: &RawTensor) -> Result<()> {
    let len = t.len();
    if t.values.len() != len || t.mask.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "dims {:?} need {len} entries, got {} values and {} mask bits",
            t.dims,
            t.values.len(),
            t.mask.len()
        )));
    }
    let order = u8::try_from(t.dims.len())
        .map_err(|_| Error::InvalidArgument("tensor order exceeds 255".into()))?;
    w.write_all(&MAGIC)?;
    w.write_all(&[order])?;
    for &d in &t.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::InvalidArgument(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    let mut bits = vec![0u8; len.div_ceil(8)];
    for (k, &obs) in t.mask.iter().enumerate() {
        if obs {
            bits[k / 8] |= 1 << (k % 8);
        }
    }
    w.write_all(&bits)?;
    for (&v, &obs) in t.values.iter().zip(&t.mask) {
        let v = if obs { v } else { 0.0 };
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tpd1<R: Read>(r: &mut R) -> Result<RawTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:02x?}")));
    }
    let mut order = [0u8; 1];
    r.read_exact(&mut order)?;
    let mut dims = Vec::with_capacity(order[0] as usize);
    for _ in 0..order[0] {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        dims.push(u32::from_le_bytes(b) as usize);
    }
    let len: usize = dims.iter().product();
    let mut bits = vec![0u8; len.div_ceil(8)];
    r.read_exact(&mut bits)?;
    let mask: Vec<bool> = (0..len).map(|k| bits[k / 8] >> (k % 8) & 1 == 1).collect();
    let mut values = Vec::with_capacity(len);
    let mut b = [0u8; 8];
    for _ in 0..len {
        r.read_exact(&mut b)?;
        values.push(f64::from_le_bytes(b));
    }
    Ok(RawTensor { dims, values, mask })
}

pub fn write_file(path: impl AsRef<Path>, t: &RawTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tpd1(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn read_file(path: impl AsRef<Path>) -> Result<RawTensor> {
    let mut r = BufReader::new(File::open(path)?);
    read_tpd1(&mut r)
}

use std::io::{Read, Write};

use super::ScalarField;
use crate::error::{Error, Result};

/// A field read back from the flat binary layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RawField {
    pub dims: [usize; 3],
    pub origin: [f64; 3],
    pub h: f64,
    /// One value per lattice cell, x-fastest, `NaN` outside the mask.
    pub values: Vec<f64>,
}

pub(super) fn write_binary<W: Write>(field: &ScalarField, mut w: W) -> Result<()> {
    let d = field.domain();
    for n in d.dims {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for o in d.origin {
        w.write_all(&o.to_le_bytes())?;
    }
    w.write_all(&d.h.to_le_bytes())?;
    let total = d.dims[0] * d.dims[1] * d.dims[2];
    let mut buf = Vec::with_capacity(total * 8);
    for cell in 0..total {
        let v = field.at_cell(cell).unwrap_or(f64::NAN);
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_field_binary<R: Read>(mut r: R) -> Result<RawField> {
    let mut word = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        r.read_exact(&mut word)?;
        *d = usize::try_from(u64::from_le_bytes(word))
            .map_err(|_| Error::param("dims", "does not fit in memory"))?;
    }
    let mut origin = [0.0; 3];
    for o in origin.iter_mut() {
        r.read_exact(&mut word)?;
        *o = f64::from_le_bytes(word);
    }
    r.read_exact(&mut word)?;
    let h = f64::from_le_bytes(word);
    let total = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::param("dims", "overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != total * 8 {
        return Err(Error::param(
            "payload",
            format!("expected {} bytes, got {}", total * 8, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawField {
        dims,
        origin,
        h,
        values,
    })
}

pub(super) fn write_csv<W: Write>(field: &ScalarField, mut w: W) -> Result<()> {
    let d = field.domain();
    writeln!(w, "i,j,k,value")?;
    for (&cell, v) in d.cells().iter().zip(field.values()) {
        let (i, j, k) = d.unravel(cell);
        writeln!(w, "{i},{j},{k},{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

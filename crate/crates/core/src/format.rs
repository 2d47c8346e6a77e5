//! Binary and CSV dumps of sampled fields and sinograms.
//!
//! Field container, all integers and floats little-endian:
//!
//! ```text
//! magic  b"KPFIELD1"
//! n, m, N                      u64
//! L                            f64
//! coefficient count            u64   (sites × C(n, m))
//! coefficients                 f64 × count, row-major sites, coefficients fastest
//! ```
//!
//! A sinogram file starts with `b"KPSINO01"`, then n, k, m, plane count (u64),
//! then per plane its weight and the n×k frame row-major (f64), then one field
//! container per plane.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{KplaneError, Result};
use crate::exterior::basis_indices;
use crate::fields::{FormField, GridSpec};
use crate::grassmann::{Plane, PlaneSet};
use crate::xray::Sinogram;

const FIELD_MAGIC: &[u8; 8] = b"KPFIELD1";
const SINO_MAGIC: &[u8; 8] = b"KPSINO01";

fn put_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| KplaneError::Format("integer out of range".into()))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 8]) -> Result<()> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(KplaneError::Format(format!("bad magic {:?}", String::from_utf8_lossy(&b))));
    }
    Ok(())
}

pub fn write_field(w: &mut impl Write, field: &FormField) -> Result<()> {
    let g = field.grid();
    w.write_all(FIELD_MAGIC)?;
    put_u64(w, g.n)?;
    put_u64(w, field.degree())?;
    put_u64(w, g.points_per_axis)?;
    put_f64(w, g.half_width)?;
    put_u64(w, field.data().len())?;
    let mut buf = Vec::with_capacity(field.data().len() * 8);
    for v in field.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_field(r: &mut impl Read) -> Result<FormField> {
    expect_magic(r, FIELD_MAGIC)?;
    let n = get_u64(r)?;
    let m = get_u64(r)?;
    let npts = get_u64(r)?;
    let half_width = get_f64(r)?;
    let count = get_u64(r)?;
    let grid = GridSpec::new(n, half_width, npts).map_err(|e| KplaneError::Format(e.to_string()))?;
    if m > n {
        return Err(KplaneError::Format("degree exceeds dimension".into()));
    }
    let expected = grid.sites().checked_mul(crate::exterior::binomial(n, m));
    if expected != Some(count) {
        return Err(KplaneError::Format("coefficient count does not match the header".into()));
    }
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    FormField::new(grid, m, data)
}

pub fn write_sinogram(w: &mut impl Write, sino: &Sinogram) -> Result<()> {
    let planes = sino.planes();
    w.write_all(SINO_MAGIC)?;
    put_u64(w, planes.n())?;
    put_u64(w, planes.k())?;
    put_u64(w, sino.degree())?;
    put_u64(w, planes.len())?;
    for (plane, weight) in planes.iter() {
        put_f64(w, weight)?;
        let f = plane.frame();
        for i in 0..planes.n() {
            for j in 0..planes.k() {
                put_f64(w, f[(i, j)])?;
            }
        }
    }
    for slice in sino.slices() {
        write_field(w, slice)?;
    }
    Ok(())
}

pub fn read_sinogram(r: &mut impl Read) -> Result<Sinogram> {
    expect_magic(r, SINO_MAGIC)?;
    let n = get_u64(r)?;
    let k = get_u64(r)?;
    let m = get_u64(r)?;
    let count = get_u64(r)?;
    if k == 0 || k >= n || count == 0 {
        return Err(KplaneError::Format("invalid sinogram header".into()));
    }
    let mut planes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        weights.push(get_f64(r)?);
        let mut entries = vec![0.0; n * k];
        for e in entries.iter_mut() {
            *e = get_f64(r)?;
        }
        planes.push(Plane::from_frame(DMatrix::from_row_slice(n, k, &entries))?);
    }
    let set = PlaneSet::new(planes, weights, None)?;
    let slices = (0..count).map(|_| read_field(r)).collect::<Result<Vec<_>>>()?;
    let k_grid = *slices[0].grid();
    Sinogram::new(set, m, k_grid, slices)
}

/// One row per site: coordinates `x0..`, then coefficients labelled by
/// their multi-index.
pub fn write_field_csv(w: &mut impl Write, field: &FormField) -> Result<()> {
    let g = field.grid();
    let mut header: Vec<String> = (0..g.n).map(|i| format!("x{i}")).collect();
    for idx in basis_indices(g.n, field.degree())? {
        let label: String = idx.entries().iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_");
        header.push(if label.is_empty() { "c".to_string() } else { format!("c{label}") });
    }
    writeln!(w, "{}", header.join(","))?;
    let mut x = vec![0.0; g.n];
    for site in 0..g.sites() {
        g.site_point(site, &mut x);
        let row: Vec<String> = x.iter().chain(field.site(site)).map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_to_grid, AnalyticForm};
    use crate::grassmann::sample_haar;
    use crate::xray::{forward, PerpQuadrature};

    #[test]
    fn field_round_trip_and_layout() {
        let grid = GridSpec::new(2, 2.0, 8).unwrap();
        let f = sample_to_grid(&AnalyticForm::gaussian(2, &[1], 1.0, 1.0).unwrap(), grid).unwrap();
        let mut bytes = Vec::new();
        write_field(&mut bytes, &f).unwrap();
        assert_eq!(bytes.len(), 8 + 5 * 8 + 64 * 2 * 8);
        assert_eq!(&bytes[..8], b"KPFIELD1");
        assert_eq!(u64::from_le_bytes(bytes[40..48].try_into().unwrap()), 128);
        let first = f64::from_le_bytes(bytes[48..56].try_into().unwrap());
        assert_eq!(first, f.data()[0]);
        let back = read_field(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let f = FormField::zeros(GridSpec::new(1, 1.0, 8).unwrap(), 0);
        let mut bytes = Vec::new();
        write_field(&mut bytes, &f).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_field(&mut bad.as_slice()), Err(KplaneError::Format(_))));
        let mut short = bytes.clone();
        short.truncate(bytes.len() - 3);
        assert!(read_field(&mut short.as_slice()).is_err());
        let mut count = bytes;
        count[40] = 9;
        assert!(read_field(&mut count.as_slice()).is_err());
    }

    #[test]
    fn sinogram_round_trip() {
        let planes = sample_haar(3, 2, 3, 5).unwrap();
        let alpha = AnalyticForm::gaussian(3, &[0], 1.0, 1.0).unwrap();
        let sino = forward(&alpha, &planes, GridSpec::new(2, 2.0, 8).unwrap(), &PerpQuadrature::new(9, 2.0).unwrap()).unwrap();
        let mut bytes = Vec::new();
        write_sinogram(&mut bytes, &sino).unwrap();
        let back = read_sinogram(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.slices(), sino.slices());
        for (a, b) in back.planes().iter().zip(sino.planes().iter()) {
            assert_eq!(a.0.frame(), b.0.frame());
            assert_eq!(a.1, b.1);
        }
    }

    #[test]
    fn csv_rows() {
        let f = FormField::zeros(GridSpec::new(2, 1.0, 8).unwrap(), 1);
        let mut out = Vec::new();
        write_field_csv(&mut out, &f).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x0,x1,c0,c1");
        assert_eq!(lines.len(), 65);
        assert_eq!(lines[1].split(',').count(), 4);
    }
}

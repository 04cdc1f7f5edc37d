//! Binary matrix files with JSON sidecars, and plot exports.
//!
//! `CPLX1`: magic `CPLX1\0\0\0`, `u32` rows, `u32` cols (little-endian), then
//! row-major `f64` `(re, im)` pairs. `REAL1` is the same with magic
//! `REAL1\0\0\0` and one `f64` per entry. The sidecar lives at `<file>.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::{ContrastField, FarFieldMatrix};
use crate::grid::{DirectionSet, Grid};
use crate::imaging::ImagingMatrix;
use crate::scalar::{Cplx, Real};
use crate::support::SupportMask;

pub const CPLX_MAGIC: &[u8; 8] = b"CPLX1\0\0\0";
pub const REAL_MAGIC: &[u8; 8] = b"REAL1\0\0\0";

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write `bytes` to a temporary sibling and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn header(magic: &[u8; 8], rows: usize, cols: usize) -> Result<Vec<u8>> {
    let rows = u32::try_from(rows).map_err(|_| Error::invalid("matrix too large for the file format"))?;
    let cols = u32::try_from(cols).map_err(|_| Error::invalid("matrix too large for the file format"))?;
    let mut out = Vec::with_capacity(16);
    out.extend_from_slice(magic);
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    Ok(out)
}

fn write_with_sidecar(path: &Path, bytes: &[u8], meta: &Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    write_atomic(path, bytes)?;
    write_atomic(&sidecar_path(path), serde_json::to_string_pretty(meta)?.as_bytes())
}

pub fn encode_cplx(a: &Array2<Complex64>) -> Result<Vec<u8>> {
    let mut out = header(CPLX_MAGIC, a.nrows(), a.ncols())?;
    out.reserve(a.len() * 16);
    for z in a.iter() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    Ok(out)
}

pub fn encode_real(a: &Array2<f64>) -> Result<Vec<u8>> {
    let mut out = header(REAL_MAGIC, a.nrows(), a.ncols())?;
    out.reserve(a.len() * 8);
    for v in a.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn parse_header(bytes: &[u8], magic: &[u8; 8], width: usize) -> Result<(usize, usize)> {
    if bytes.len() < 16 {
        return Err(Error::Format("file shorter than the 16-byte header".into()));
    }
    if &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            String::from_utf8_lossy(magic)
        )));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let expect = 16 + rows * cols * width;
    if bytes.len() != expect {
        return Err(Error::Format(format!(
            "{rows}x{cols} matrix needs {expect} bytes, file has {}",
            bytes.len()
        )));
    }
    Ok((rows, cols))
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
}

pub fn decode_cplx(bytes: &[u8]) -> Result<Array2<Complex64>> {
    let (rows, cols) = parse_header(bytes, CPLX_MAGIC, 16)?;
    Ok(Array2::from_shape_fn((rows, cols), |(i, j)| {
        let o = 16 + (i * cols + j) * 16;
        Complex64::new(f64_at(bytes, o), f64_at(bytes, o + 8))
    }))
}

pub fn decode_real(bytes: &[u8]) -> Result<Array2<f64>> {
    let (rows, cols) = parse_header(bytes, REAL_MAGIC, 8)?;
    Ok(Array2::from_shape_fn((rows, cols), |(i, j)| f64_at(bytes, 16 + (i * cols + j) * 8)))
}

pub fn write_cplx1(path: &Path, a: &Array2<Complex64>, meta: &Value) -> Result<()> {
    write_with_sidecar(path, &encode_cplx(a)?, meta)
}

pub fn write_real1(path: &Path, a: &Array2<f64>, meta: &Value) -> Result<()> {
    write_with_sidecar(path, &encode_real(a)?, meta)
}

fn read_sidecar(path: &Path) -> Result<Value> {
    let side = sidecar_path(path);
    match fs::read_to_string(&side) {
        Ok(s) => Ok(serde_json::from_str(&s)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Value::Null),
        Err(e) => Err(e.into()),
    }
}

/// Matrix and sidecar (`Null` if absent).
pub fn read_cplx1(path: &Path) -> Result<(Array2<Complex64>, Value)> {
    Ok((decode_cplx(&fs::read(path)?)?, read_sidecar(path)?))
}

pub fn read_real1(path: &Path) -> Result<(Array2<f64>, Value)> {
    Ok((decode_real(&fs::read(path)?)?, read_sidecar(path)?))
}

/// Either kind of matrix file, detected by magic.
pub enum AnyMatrix {
    Complex(Array2<Complex64>),
    Real(Array2<f64>),
}

pub fn read_any(path: &Path) -> Result<(AnyMatrix, Value)> {
    let bytes = fs::read(path)?;
    let m = if bytes.starts_with(CPLX_MAGIC) {
        AnyMatrix::Complex(decode_cplx(&bytes)?)
    } else if bytes.starts_with(REAL_MAGIC) {
        AnyMatrix::Real(decode_real(&bytes)?)
    } else {
        return Err(Error::Format(format!("{} is neither CPLX1 nor REAL1", path.display())));
    };
    Ok((m, read_sidecar(path)?))
}

fn to_c64<T: Real>(a: &Array2<Cplx<T>>) -> Array2<Complex64> {
    a.mapv(|z| Complex64::new(z.re.as_f64(), z.im.as_f64()))
}

fn from_c64<T: Real>(a: &Array2<Complex64>) -> Array2<Cplx<T>> {
    a.mapv(|z| Cplx::new(T::lit(z.re), T::lit(z.im)))
}

fn field_f64(meta: &Value, key: &str) -> Result<f64> {
    meta.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::Format(format!("sidecar lacks numeric field {key:?}")))
}

fn field_usize(meta: &Value, key: &str) -> Result<usize> {
    meta.get(key)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| Error::Format(format!("sidecar lacks integer field {key:?}")))
}

fn grid_from(meta: &Value) -> Result<Grid<f64>> {
    Grid::new(field_f64(meta, "rho")?, field_usize(meta, "n")?)
}

fn check_dim(found: (usize, usize), expected: (usize, usize), what: &'static str) -> Result<()> {
    if found != expected {
        return Err(Error::DimensionMismatch { what, expected, found });
    }
    Ok(())
}

/// Contrast with sidecar `{kind, rho, n}`. Reconstructions need not vanish
/// outside the disk, so loading does not enforce it.
pub fn save_contrast<T: Real>(path: &Path, m: &ContrastField<T>, extra: Value) -> Result<()> {
    let mut meta = json!({"kind": "contrast", "rho": m.grid().rho().as_f64(), "n": m.grid().n()});
    merge(&mut meta, extra);
    write_cplx1(path, &to_c64(m.values()), &meta)
}

pub fn load_contrast<T: Real>(path: &Path) -> Result<ContrastField<T>> {
    let (a, meta) = read_cplx1(path)?;
    let grid = grid_from(&meta)?;
    check_dim(a.dim(), grid.shape(), "contrast file")?;
    ContrastField::unconstrained(grid.cast(), from_c64(&a))
}

/// Far field with sidecar `{kind, P, Q, k, delta, seed}`.
pub fn save_far_field<T: Real>(path: &Path, u: &FarFieldMatrix<T>, seed: Option<u64>) -> Result<()> {
    let meta = json!({
        "kind": "farfield",
        "P": u.p(),
        "Q": u.q(),
        "k": u.wave_number().as_f64(),
        "delta": u.noise_level().as_f64(),
        "seed": seed,
    });
    write_cplx1(path, &to_c64(u.values()), &meta)
}

pub fn load_far_field<T: Real>(path: &Path) -> Result<FarFieldMatrix<T>> {
    let (a, meta) = read_cplx1(path)?;
    let (p, q) = (field_usize(&meta, "P")?, field_usize(&meta, "Q")?);
    check_dim(a.dim(), (p, q), "far-field file")?;
    let delta = meta.get("delta").and_then(Value::as_f64).unwrap_or(0.0);
    FarFieldMatrix::new(
        from_c64(&a),
        T::lit(field_f64(&meta, "k")?),
        DirectionSet::new(q)?,
        DirectionSet::new(p)?,
        T::lit(delta),
    )
}

/// Imaging matrix with sidecar `{kind, rho, n, k0, P, Q, delta}`.
pub fn save_imaging<T: Real>(path: &Path, img: &ImagingMatrix<T>, data: &FarFieldMatrix<T>) -> Result<()> {
    let meta = json!({
        "kind": "imaging",
        "rho": img.grid().rho().as_f64(),
        "n": img.grid().n(),
        "k0": img.wave_number().as_f64(),
        "P": data.p(),
        "Q": data.q(),
        "delta": data.noise_level().as_f64(),
    });
    write_real1(path, &img.values().mapv(|v| v.as_f64()), &meta)
}

pub fn load_imaging<T: Real>(path: &Path) -> Result<ImagingMatrix<T>> {
    let (a, meta) = read_real1(path)?;
    let grid = grid_from(&meta)?;
    check_dim(a.dim(), grid.shape(), "imaging file")?;
    ImagingMatrix::new(grid.cast(), a.mapv(T::lit), T::lit(field_f64(&meta, "k0")?))
}

/// Mask as 0.0/1.0 with sidecar `{kind, rho, n}`.
pub fn save_mask<T: Real>(path: &Path, mask: &SupportMask<T>, extra: Value) -> Result<()> {
    let mut meta = json!({"kind": "mask", "rho": mask.grid().rho().as_f64(), "n": mask.grid().n()});
    merge(&mut meta, extra);
    write_real1(path, &mask.values().mapv(|b| if b { 1.0 } else { 0.0 }), &meta)
}

pub fn load_mask<T: Real>(path: &Path) -> Result<SupportMask<T>> {
    let (a, meta) = read_real1(path)?;
    let grid = grid_from(&meta)?;
    check_dim(a.dim(), grid.shape(), "mask file")?;
    SupportMask::from_real(grid.cast(), &a.mapv(T::lit))
}

fn merge(meta: &mut Value, extra: Value) {
    if let (Some(m), Value::Object(e)) = (meta.as_object_mut(), extra) {
        for (k, v) in e {
            m.insert(k, v);
        }
    }
}

/// Real matrix to plot: itself, or the modulus of a complex one.
pub fn plot_values(m: &AnyMatrix) -> Array2<f64> {
    match m {
        AnyMatrix::Real(a) => a.clone(),
        AnyMatrix::Complex(a) => a.mapv(|z| z.norm()),
    }
}

/// 16-bit binary PGM with min–max scaling; returns `(min, max)`. A constant
/// matrix maps to a uniform image of level 0.
pub fn encode_pgm(a: &Array2<f64>) -> (Vec<u8>, f64, f64) {
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (min, max) = if a.is_empty() { (0.0, 0.0) } else { (min, max) };
    let mut out = format!("P5\n{} {}\n65535\n", a.ncols(), a.nrows()).into_bytes();
    for &v in a.iter() {
        let level = if max > min {
            ((v - min) / (max - min) * 65535.0).round() as u16
        } else {
            0
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    (out, min, max)
}

/// Write the PGM and a sidecar with the scaling.
pub fn export_pgm(path: &Path, a: &Array2<f64>, source: &str) -> Result<()> {
    let (bytes, min, max) = encode_pgm(a);
    let meta = json!({"source": source, "min": min, "max": max, "maxval": 65535});
    write_with_sidecar(path, &bytes, &meta)
}

/// Row-major CSV using shortest round-trip formatting.
pub fn encode_csv(a: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in a.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn decode_csv(s: &str) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = s
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad CSV cell {c:?}: {e}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Format("ragged CSV rows".into()));
    }
    let flat: Vec<f64> = rows.concat();
    Array2::from_shape_vec((flat.len() / cols.max(1), cols), flat).map_err(|e| Error::Format(e.to_string()))
}

pub fn export_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    write_atomic(path, encode_csv(a).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cplx_roundtrip_and_header() {
        let a = Array2::from_shape_fn((3, 2), |(i, j)| Complex64::new(i as f64 + 0.1, -(j as f64) / 3.0));
        let bytes = encode_cplx(&a).unwrap();
        assert_eq!(&bytes[..8], CPLX_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 16 + 6 * 16);
        assert_eq!(decode_cplx(&bytes).unwrap(), a);
        assert!(decode_real(&bytes).is_err());
        assert!(decode_cplx(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn typed_files_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(3.0f64, 4).unwrap();
        let mut v = Array2::zeros((4, 4));
        v[[1, 2]] = Cplx::new(2.0, 0.5);
        let m = ContrastField::new(g, v).unwrap();
        let p = dir.path().join("m.cplx1");
        save_contrast(&p, &m, json!({"note": 1})).unwrap();
        assert_eq!(load_contrast::<f64>(&p).unwrap(), m);
        let meta = read_sidecar(&p).unwrap();
        assert_eq!(meta["note"], 1);

        let d = DirectionSet::new(3).unwrap();
        let u = FarFieldMatrix::new(Array2::from_elem((3, 3), Cplx::new(1.0, 2.0)), 15.0, d, d, 0.05).unwrap();
        let p = dir.path().join("u.cplx1");
        save_far_field(&p, &u, Some(9)).unwrap();
        assert_eq!(load_far_field::<f64>(&p).unwrap(), u);

        let mask = SupportMask::new(g, Array2::from_shape_fn((4, 4), |(i, _)| i == 1)).unwrap();
        let p = dir.path().join("s.real1");
        save_mask(&p, &mask, Value::Null).unwrap();
        assert_eq!(load_mask::<f64>(&p).unwrap(), mask);
    }

    #[test]
    fn pgm_levels() {
        let (bytes, min, max) = encode_pgm(&Array2::zeros((2, 3)));
        assert_eq!((min, max), (0.0, 0.0));
        let header = b"P5\n3 2\n65535\n";
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
        let mask = Array2::from_shape_fn((2, 2), |(i, j)| ((i + j) % 2) as f64);
        let (bytes, _, _) = encode_pgm(&mask);
        let body = &bytes[b"P5\n2 2\n65535\n".len()..];
        let mut levels: Vec<u16> = body.chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
        levels.sort();
        levels.dedup();
        assert_eq!(levels, vec![0, 65535]);
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let a = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 * 1.1).sin() * 10f64.powi(j as i32 - 2));
        assert_eq!(decode_csv(&encode_csv(&a)).unwrap(), a);
    }
}

//! The G16R raster container and its sidecar metadata document.
//!
//! Container layout: magic `G16R`, u32 LE width, u32 LE height, u8 dtype
//! (0 = u16, 1 = f32, 2 = u8), then the row-major payload. The sidecar
//! lives at `<path>.meta` as structured text.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::grid::Grid;

const MAGIC: &[u8; 4] = b"G16R";

#[derive(Debug, Clone, PartialEq)]
pub enum RasterData {
    U16(Vec<u16>),
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl RasterData {
    pub fn len(&self) -> usize {
        match self {
            RasterData::U16(v) => v.len(),
            RasterData::F32(v) => v.len(),
            RasterData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype_code(&self) -> u8 {
        match self {
            RasterData::U16(_) => 0,
            RasterData::F32(_) => 1,
            RasterData::U8(_) => 2,
        }
    }
}

/// Affine georeference: lon/lat of the top-left pixel's top-left corner plus
/// per-pixel degree spacing (lat spacing is negative for north-up rasters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoRef {
    pub origin_lon: f64,
    pub origin_lat: f64,
    pub lon_per_col: f64,
    pub lat_per_row: f64,
}

impl GeoRef {
    /// Lon/lat of a pixel-grid corner (fractional pixels allowed).
    pub fn corner_lonlat(&self, row: f64, col: f64) -> (f64, f64) {
        (self.origin_lon + col * self.lon_per_col, self.origin_lat + row * self.lat_per_row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductMeta {
    pub product_id: String,
    /// RFC 3339 acquisition timestamp.
    pub timestamp: String,
    /// Incidence angle at the first and last column, degrees.
    pub incidence_first_deg: f64,
    pub incidence_last_deg: f64,
    pub pixel_size_m: f64,
    pub georef: GeoRef,
}

impl ProductMeta {
    /// Linear incidence-angle ramp across columns.
    pub fn incidence_at_col(&self, col: usize, width: usize) -> f64 {
        if width <= 1 {
            return self.incidence_first_deg;
        }
        let t = col as f64 / (width - 1) as f64;
        self.incidence_first_deg + t * (self.incidence_last_deg - self.incidence_first_deg)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (
            self.incidence_first_deg.min(self.incidence_last_deg),
            self.incidence_first_deg.max(self.incidence_last_deg),
        );
        if lo < 30.0 || hi > 45.0 {
            return Err(DataError::IncidenceRange(self.incidence_first_deg, self.incidence_last_deg));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterProduct {
    pub width: usize,
    pub height: usize,
    pub data: RasterData,
    pub meta: ProductMeta,
}

impl RasterProduct {
    /// The raster as f32 display-scale values (u16/u8 pass through as-is).
    pub fn to_f32_grid(&self) -> Grid<f32> {
        let v: Vec<f32> = match &self.data {
            RasterData::U16(v) => v.iter().map(|&x| x as f32).collect(),
            RasterData::F32(v) => v.clone(),
            RasterData::U8(v) => v.iter().map(|&x| x as f32).collect(),
        };
        Grid::from_vec(self.width, self.height, v)
    }

    /// Footprint as a lon/lat axis-aligned rectangle (min/max corners).
    pub fn footprint(&self) -> (f64, f64, f64, f64) {
        let g = &self.meta.georef;
        let (lon0, lat0) = g.corner_lonlat(0.0, 0.0);
        let (lon1, lat1) = g.corner_lonlat(self.height as f64, self.width as f64);
        (lon0.min(lon1), lat0.min(lat1), lon0.max(lon1), lat0.max(lat1))
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta");
    PathBuf::from(s)
}

/// Write the bare container (no sidecar).
pub fn write_g16r(path: &Path, width: usize, height: usize, data: &RasterData) -> Result<()> {
    if data.len() != width * height {
        return Err(DataError::Container(format!(
            "payload has {} values for {}x{}",
            data.len(),
            width,
            height
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(&[data.dtype_code()])?;
    match data {
        RasterData::U16(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        RasterData::F32(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        RasterData::U8(v) => w.write_all(v)?,
    }
    w.flush()?;
    Ok(())
}

/// Read the bare container (no sidecar).
pub fn read_g16r(path: &Path) -> Result<(usize, usize, RasterData)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| DataError::Container("truncated payload reading magic".into()))?;
    if &magic != MAGIC {
        return Err(DataError::Container(format!("bad magic {:?}", magic)));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)
        .map_err(|_| DataError::Container("truncated payload reading width".into()))?;
    let width = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)
        .map_err(|_| DataError::Container("truncated payload reading height".into()))?;
    let height = u32::from_le_bytes(b4) as usize;
    let mut dt = [0u8; 1];
    r.read_exact(&mut dt)
        .map_err(|_| DataError::Container("truncated payload reading dtype".into()))?;
    let n = width * height;
    let truncated = |_| DataError::Container("truncated payload".into());
    let data = match dt[0] {
        0 => {
            let mut buf = vec![0u8; n * 2];
            r.read_exact(&mut buf).map_err(truncated)?;
            RasterData::U16(buf.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
        }
        1 => {
            let mut buf = vec![0u8; n * 4];
            r.read_exact(&mut buf).map_err(truncated)?;
            RasterData::F32(
                buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
            )
        }
        2 => {
            let mut buf = vec![0u8; n];
            r.read_exact(&mut buf).map_err(truncated)?;
            RasterData::U8(buf)
        }
        other => return Err(DataError::Container(format!("unknown dtype code {other}"))),
    };
    Ok((width, height, data))
}

/// Header-only read: (width, height, dtype code).
pub fn read_g16r_dims(path: &Path) -> Result<(usize, usize, u8)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut head = [0u8; 13];
    r.read_exact(&mut head)
        .map_err(|_| DataError::Container("truncated payload reading header".into()))?;
    if &head[..4] != MAGIC {
        return Err(DataError::Container(format!("bad magic {:?}", &head[..4])));
    }
    let width = u32::from_le_bytes([head[4], head[5], head[6], head[7]]) as usize;
    let height = u32::from_le_bytes([head[8], head[9], head[10], head[11]]) as usize;
    Ok((width, height, head[12]))
}

pub fn write_meta(path: &Path, meta: &ProductMeta) -> Result<()> {
    let text = toml::to_string_pretty(meta).map_err(|e| DataError::Sidecar(e.to_string()))?;
    std::fs::write(meta_path(path), text)?;
    Ok(())
}

pub fn read_meta(path: &Path) -> Result<ProductMeta> {
    let mp = meta_path(path);
    let text = std::fs::read_to_string(&mp)
        .map_err(|e| DataError::Sidecar(format!("missing sidecar {:?}: {e}", mp)))?;
    let meta: ProductMeta = toml::from_str(&text).map_err(|e| DataError::Sidecar(e.to_string()))?;
    meta.validate()?;
    Ok(meta)
}

pub fn save_raster(product: &RasterProduct, path: &Path) -> Result<()> {
    write_g16r(path, product.width, product.height, &product.data)?;
    write_meta(path, &product.meta)
}

pub fn load_raster(path: &Path) -> Result<RasterProduct> {
    let meta = read_meta(path)?;
    let (width, height, data) = read_g16r(path)?;
    Ok(RasterProduct { width, height, data, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ProductMeta {
        ProductMeta {
            product_id: "SYN-1".into(),
            timestamp: "2019-06-01T12:00:00Z".into(),
            incidence_first_deg: 31.0,
            incidence_last_deg: 44.0,
            pixel_size_m: 10.0,
            georef: GeoRef { origin_lon: 4.0, origin_lat: 61.0, lon_per_col: 1e-4, lat_per_row: -1e-4 },
        }
    }

    #[test]
    fn roundtrip_3x2_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.g16r");
        let product = RasterProduct {
            width: 3,
            height: 2,
            data: RasterData::U16(vec![0, 1, 150, 65535, 7, 42]),
            meta: meta(),
        };
        save_raster(&product, &p).unwrap();
        let back = load_raster(&p).unwrap();
        assert_eq!(back, product);
    }

    #[test]
    fn truncated_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.g16r");
        let product = RasterProduct {
            width: 4,
            height: 4,
            data: RasterData::U16(vec![9; 16]),
            meta: meta(),
        };
        save_raster(&product, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        let err = load_raster(&p).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.g16r");
        write_g16r(&p, 2, 2, &RasterData::U8(vec![1, 2, 3, 4])).unwrap();
        let err = load_raster(&p).unwrap_err().to_string();
        assert!(err.contains("sidecar"), "{err}");
    }

    #[test]
    fn incidence_range_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.g16r");
        let mut product = RasterProduct {
            width: 2,
            height: 1,
            data: RasterData::U16(vec![1, 2]),
            meta: meta(),
        };
        product.meta.incidence_first_deg = 10.0;
        product.meta.incidence_last_deg = 20.0;
        write_g16r(&p, 2, 1, &product.data).unwrap();
        write_meta(&p, &product.meta).unwrap();
        let err = load_raster(&p).unwrap_err().to_string();
        assert!(err.contains("[30, 45]"), "{err}");
    }

    #[test]
    fn incidence_ramp_is_linear_across_columns() {
        let m = meta();
        assert!((m.incidence_at_col(0, 101) - 31.0).abs() < 1e-9);
        assert!((m.incidence_at_col(100, 101) - 44.0).abs() < 1e-9);
        assert!((m.incidence_at_col(50, 101) - 37.5).abs() < 1e-9);
    }

    #[test]
    fn dtype_mismatch_code_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.g16r");
        write_g16r(&p, 1, 1, &RasterData::U8(vec![7])).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[12] = 9; // dtype byte
        std::fs::write(&p, &bytes).unwrap();
        let err = read_g16r(&p).unwrap_err().to_string();
        assert!(err.contains("dtype"), "{err}");
    }
}

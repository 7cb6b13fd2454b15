//! On-disk dataset layout: one G16R pair per sample plus a structured-text
//! manifest listing paths, splits, event ids, angles, and labels.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::category::CategoryLabel;
use crate::error::{DataError, Result};
use crate::grid::Grid;
use crate::patches::Split;
use crate::raster::{read_g16r, write_g16r, RasterData};
use crate::sample::Sample;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub vv_path: String,
    pub mask_path: String,
    pub split: Split,
    pub event_id: Option<u64>,
    pub incidence_angle: f64,
    pub label: Option<CategoryLabel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| DataError::Manifest(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DataError::Manifest(format!("{path:?}: {e}")))?;
        toml::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))
    }
}

/// Write samples under `dir` as `sample_NNNNN.{vv,mask}.g16r` plus
/// `manifest.toml`.
pub fn write_dataset(dir: &Path, samples: &[Sample], splits: &[Split]) -> Result<DatasetManifest> {
    assert_eq!(samples.len(), splits.len());
    std::fs::create_dir_all(dir)?;
    let mut records = Vec::with_capacity(samples.len());
    for (i, (s, split)) in samples.iter().zip(splits).enumerate() {
        let vv_name = format!("sample_{i:05}.vv.g16r");
        let mask_name = format!("sample_{i:05}.mask.g16r");
        write_g16r(
            &dir.join(&vv_name),
            s.vv.width(),
            s.vv.height(),
            &RasterData::F32(s.vv.data().to_vec()),
        )?;
        write_g16r(
            &dir.join(&mask_name),
            s.mask.width(),
            s.mask.height(),
            &RasterData::U8(s.mask.data().to_vec()),
        )?;
        records.push(SampleRecord {
            vv_path: vv_name,
            mask_path: mask_name,
            split: *split,
            event_id: s.event_id,
            incidence_angle: s.incidence_angle,
            label: s.categories,
        });
    }
    let manifest = DatasetManifest { records };
    manifest.save(&dir.join("manifest.toml"))?;
    Ok(manifest)
}

/// Load the samples of one split (or all of them with `split = None`).
pub fn load_dataset(dir: &Path, split: Option<Split>) -> Result<Vec<Sample>> {
    let manifest = DatasetManifest::load(&dir.join("manifest.toml"))?;
    let mut out = Vec::new();
    for rec in &manifest.records {
        if let Some(want) = split {
            if rec.split != want {
                continue;
            }
        }
        out.push(load_record(dir, rec)?);
    }
    Ok(out)
}

pub fn load_record(dir: &Path, rec: &SampleRecord) -> Result<Sample> {
    let (w, h, vv) = read_g16r(&dir.join(&rec.vv_path))?;
    let RasterData::F32(vv) = vv else {
        return Err(DataError::Manifest(format!("{} is not an f32 raster", rec.vv_path)));
    };
    let (mw, mh, mask) = read_g16r(&dir.join(&rec.mask_path))?;
    let RasterData::U8(mask) = mask else {
        return Err(DataError::Manifest(format!("{} is not a u8 raster", rec.mask_path)));
    };
    if (w, h) != (mw, mh) {
        return Err(DataError::Manifest(format!("{}: vv/mask size mismatch", rec.vv_path)));
    }
    Ok(Sample {
        vv: Grid::from_vec(w, h, vv),
        mask: Grid::from_vec(mw, mh, mask),
        event_id: rec.event_id,
        incidence_angle: rec.incidence_angle,
        categories: rec.label,
    })
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.toml")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize_dataset, SynthConfig};

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig { n_samples: 4, patch: 32, ..SynthConfig::default() };
        let samples = synthesize_dataset(&cfg).unwrap();
        let splits = vec![Split::Train, Split::Train, Split::Val, Split::Test];
        write_dataset(dir.path(), &samples, &splits).unwrap();

        let train = load_dataset(dir.path(), Some(Split::Train)).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(train[0], samples[0]);
        let all = load_dataset(dir.path(), None).unwrap();
        assert_eq!(all.len(), 4);
        assert_eq!(all[2], samples[2]);
    }
}

//! Per-class backscatter histograms (oil vs non-oil pixel values).

use crate::sample::Sample;

/// Display-scale factor: samples store VV divided by the 150 clip value.
const DISPLAY_SCALE: f64 = 150.0;

#[derive(Debug, Clone)]
pub struct ClassHistogram {
    pub bin_edges: Vec<f64>,
    /// Per-bin probability mass; each sums to 1 unless the class is empty.
    pub oil: Vec<f64>,
    pub sea: Vec<f64>,
    pub oil_count: usize,
    pub sea_count: usize,
    pub oil_empty: bool,
    pub sea_empty: bool,
}

impl ClassHistogram {
    pub fn mode_center(&self, oil: bool) -> Option<f64> {
        let h = if oil { &self.oil } else { &self.sea };
        let idx = h
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)?;
        Some((self.bin_edges[idx] + self.bin_edges[idx + 1]) / 2.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,oil,sea\n");
        for i in 0..self.oil.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.bin_edges[i],
                self.bin_edges[i + 1],
                self.oil[i],
                self.sea[i]
            ));
        }
        s
    }
}

/// Histogram of display-scale backscatter per class over `range`
/// (default [0, 500]); an empty class is flagged, not fatal.
pub fn backscatter_histogram(samples: &[Sample], bins: usize, range: Option<(f64, f64)>) -> ClassHistogram {
    assert!(bins >= 1, "need at least one bin");
    let (lo, hi) = range.unwrap_or((0.0, 500.0));
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut oil = vec![0.0f64; bins];
    let mut sea = vec![0.0f64; bins];
    let (mut n_oil, mut n_sea) = (0usize, 0usize);
    for s in samples {
        for (v, m) in s.vv.data().iter().zip(s.mask.data()) {
            let display = *v as f64 * DISPLAY_SCALE;
            if display < lo || display >= hi {
                continue;
            }
            let idx = (((display - lo) / width) as usize).min(bins - 1);
            if *m != 0 {
                oil[idx] += 1.0;
                n_oil += 1;
            } else {
                sea[idx] += 1.0;
                n_sea += 1;
            }
        }
    }
    if n_oil > 0 {
        oil.iter_mut().for_each(|v| *v /= n_oil as f64);
    }
    if n_sea > 0 {
        sea.iter_mut().for_each(|v| *v /= n_sea as f64);
    }
    ClassHistogram {
        bin_edges: edges,
        oil,
        sea,
        oil_count: n_oil,
        sea_count: n_sea,
        oil_empty: n_oil == 0,
        sea_empty: n_sea == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synthesize_dataset, ContrastLevel, SynthConfig};

    #[test]
    fn masses_sum_to_one() {
        let cfg = SynthConfig { n_samples: 10, ..SynthConfig::default() };
        let samples = synthesize_dataset(&cfg).unwrap();
        let h = backscatter_histogram(&samples, 64, None);
        assert!((h.oil.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((h.sea.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_class_flags_other_empty() {
        let cfg = SynthConfig { n_samples: 3, min_slicks: 0, max_slicks: 0, ..SynthConfig::default() };
        let samples = synthesize_dataset(&cfg).unwrap();
        let h = backscatter_histogram(&samples, 32, None);
        assert!(h.oil_empty);
        assert!(!h.sea_empty);
        assert_eq!(h.oil.iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn strong_contrast_mode_sits_left_of_sea_mode() {
        let cfg = SynthConfig {
            n_samples: 30,
            contrast: ContrastLevel::Strong,
            ..SynthConfig::default()
        };
        let samples = synthesize_dataset(&cfg).unwrap();
        let h = backscatter_histogram(&samples, 100, None);
        assert!(h.mode_center(true).unwrap() < h.mode_center(false).unwrap());
    }
}

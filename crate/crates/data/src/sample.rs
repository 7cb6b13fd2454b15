//! Training samples: a VV patch, its binary mask, and event metadata.

use crate::category::CategoryLabel;
use crate::grid::Grid;

/// Side length of extracted patches; at 40 m pixels one patch covers
/// 6.4 km x 6.4 km (about 41 km^2).
pub const PATCH_SIZE: usize = 160;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// VV backscatter scaled to [0, 1].
    pub vv: Grid<f32>,
    /// Binary oil mask, values in {0, 1}.
    pub mask: Grid<u8>,
    pub event_id: Option<u64>,
    /// Incidence angle at the patch center, degrees.
    pub incidence_angle: f64,
    pub categories: Option<CategoryLabel>,
}

impl Sample {
    pub fn oil_pixels(&self) -> usize {
        self.mask.data().iter().filter(|&&v| v != 0).count()
    }

    /// Half-resolution copy: 2x2 area mean for VV, any-oil max for the mask
    /// (keeps single-pixel slick threads alive).
    pub fn downsample2(&self) -> Sample {
        let (w, h) = (self.vv.width() / 2, self.vv.height() / 2);
        let mut vv = Grid::new(w, h, 0.0f32);
        let mut mask = Grid::new(w, h, 0u8);
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                let mut m = 0u8;
                for dr in 0..2 {
                    for dc in 0..2 {
                        acc += self.vv.get(2 * r + dr, 2 * c + dc);
                        m = m.max(self.mask.get(2 * r + dr, 2 * c + dc));
                    }
                }
                vv.set(r, c, acc / 4.0);
                mask.set(r, c, m);
            }
        }
        Sample { vv, mask, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downsample_halves_and_keeps_thin_masks() {
        let mut vv = Grid::new(4, 4, 0.0f32);
        vv.set(0, 0, 1.0);
        let mut mask = Grid::new(4, 4, 0u8);
        mask.set(1, 1, 1); // single pixel survives the 2x2 max
        let s = Sample { vv, mask, event_id: None, incidence_angle: 35.0, categories: None };
        let d = s.downsample2();
        assert_eq!(d.vv.width(), 2);
        assert_eq!(d.vv.get(0, 0), 0.25);
        assert_eq!(d.mask.get(0, 0), 1);
        assert_eq!(d.oil_pixels(), 1);
    }
}

//! Row-major 2-D grids, the raster-side counterpart of the tensor.

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.data[row * self.width + col] = v;
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.width..][..self.width]
    }

    /// Rectangular crop; the window must lie inside the grid.
    pub fn crop(&self, row0: usize, col0: usize, h: usize, w: usize) -> Grid<T> {
        assert!(row0 + h <= self.height && col0 + w <= self.width, "crop out of bounds");
        let mut data = Vec::with_capacity(h * w);
        for r in row0..row0 + h {
            data.extend_from_slice(&self.data[r * self.width + col0..][..w]);
        }
        Grid::from_vec(w, h, data)
    }

    pub fn map<U: Copy, F: Fn(T) -> U>(&self, f: F) -> Grid<U> {
        Grid::from_vec(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }
}

/// Mirror (symmetric) index fold: ...2,1,0 | 0,1,2... | n-1,n-2...
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i % period;
    if m < 0 {
        m += period;
    }
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_extracts_window() {
        let g = Grid::from_vec(4, 3, (0..12).collect());
        let c = g.crop(1, 1, 2, 2);
        assert_eq!(c.data(), &[5, 6, 9, 10]);
    }

    #[test]
    fn mirror_fold() {
        // n = 3: -2 -1 | 0 1 2 | 3 4
        assert_eq!(mirror_index(-1, 3), 0);
        assert_eq!(mirror_index(-2, 3), 1);
        assert_eq!(mirror_index(0, 3), 0);
        assert_eq!(mirror_index(2, 3), 2);
        assert_eq!(mirror_index(3, 3), 2);
        assert_eq!(mirror_index(4, 3), 1);
    }
}

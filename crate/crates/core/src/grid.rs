use crate::error::{Error, Result};

/// Mirror an out-of-range coordinate back into `[0, n)` without repeating the
/// edge sample: `-1 -> 1`, `n -> n-2`. Folds repeatedly for far offsets.
pub fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Dense row-major 2D scalar field. Serves as image, score map, and any other
/// per-pixel real-valued plane; all of them share this geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid_argument(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
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

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Sample with the mirror boundary rule applied to both coordinates.
    #[inline]
    pub fn get_reflect(&self, x: isize, y: isize) -> f64 {
        let xr = reflect_index(x, self.width);
        let yr = reflect_index(y, self.height);
        self.data[yr * self.width + xr]
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// (min, max) over all values; `None` for an empty grid.
    pub fn min_max(&self) -> Option<(f64, f64)> {
        if self.data.is_empty() {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        Some((lo, hi))
    }

    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel binary labels over the same geometry as [`Grid`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    /// Any nonzero byte counts as foreground.
    pub fn from_bytes(width: usize, height: usize, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(Error::invalid_argument(format!(
                "mask data length {} does not match {}x{}",
                bytes.len(),
                width,
                height
            )));
        }
        let data = bytes.into_iter().map(|b| u8::from(b != 0)).collect();
        Ok(BinaryMask {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(u8::from(f(x, y)));
            }
        }
        BinaryMask {
            width,
            height,
            data,
        }
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
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = u8::from(v);
    }

    #[inline]
    pub fn values(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&b| b != 0).count()
    }

    pub fn same_geometry(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_mirrors_without_repeating_edge() {
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(0, 5), 0);
        assert_eq!(reflect_index(4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(6, 5), 2);
    }

    #[test]
    fn reflect_folds_far_offsets() {
        assert_eq!(reflect_index(-1, 2), 1);
        assert_eq!(reflect_index(2, 2), 0);
        assert_eq!(reflect_index(3, 2), 1);
        assert_eq!(reflect_index(-3, 2), 1);
        assert_eq!(reflect_index(9, 4), 3);
    }

    #[test]
    fn reflect_degenerate_axis() {
        assert_eq!(reflect_index(-7, 1), 0);
        assert_eq!(reflect_index(3, 1), 0);
    }

    #[test]
    fn grid_roundtrip_and_minmax() {
        let g = Grid::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.get(1, 0), 2.0);
        assert_eq!(g.get(0, 1), 3.0);
        assert_eq!(g.min_max(), Some((1.0, 4.0)));
        assert!(g.all_finite());
    }

    #[test]
    fn grid_length_mismatch_rejected() {
        assert!(Grid::from_vec(3, 2, vec![0.0; 5]).is_err());
    }

    #[test]
    fn mask_binarizes_bytes() {
        let m = BinaryMask::from_bytes(2, 1, vec![0, 200]).unwrap();
        assert!(!m.get(0, 0));
        assert!(m.get(1, 0));
        assert_eq!(m.count_ones(), 1);
    }
}

use crate::error::{Error, Result};
use crate::grid::{reflect_index, Grid};

/// Copy the `side x side` window centered at `(cx, cy)` out of `image`,
/// mirroring coordinates that fall outside the image.
pub fn extract_patch(image: &Grid, cx: usize, cy: usize, side: usize) -> Result<Vec<f64>> {
    if side % 2 == 0 || side == 0 {
        return Err(Error::invalid_argument(format!(
            "window side must be odd, got {side}"
        )));
    }
    // A window is realizable by mirroring as long as it fits in the
    // reflected extent `2n - 1` on at least one axis.
    if side > 2 * image.width() - 1 && side > 2 * image.height() - 1 {
        return Err(Error::invalid_argument(format!(
            "window side {side} exceeds both image dimensions {}x{}",
            image.width(),
            image.height()
        )));
    }
    if cx >= image.width() || cy >= image.height() {
        return Err(Error::invalid_argument(format!(
            "center ({cx}, {cy}) lies outside {}x{}",
            image.width(),
            image.height()
        )));
    }
    let half = (side / 2) as isize;
    let mut out = Vec::with_capacity(side * side);
    for dy in -half..=half {
        for dx in -half..=half {
            out.push(image.get_reflect(cx as isize + dx, cy as isize + dy));
        }
    }
    Ok(out)
}

/// Add `scale * window` at `(cx, cy)`, folding out-of-range samples back into
/// the image exactly adjoint to mirrored extraction.
pub(crate) fn stamp_add(
    values: &mut [f64],
    width: usize,
    height: usize,
    cx: usize,
    cy: usize,
    window: &[f64],
    side: usize,
    scale: f64,
) {
    let half = (side / 2) as isize;
    let mut k = 0;
    for dy in -half..=half {
        let ty = reflect_index(cy as isize + dy, height);
        for dx in -half..=half {
            let tx = reflect_index(cx as isize + dx, width);
            values[ty * width + tx] += scale * window[k];
            k += 1;
        }
    }
}

/// Fold map of one pixel's window inside a working buffer.
///
/// For interior pixels the window maps one-to-one; near the border several
/// window cells fold onto the same image cell, which changes the effective
/// column norm of each atom. Requires `side <= min(width, height)` so every
/// folded coordinate stays inside the window's own bounding box.
pub(crate) struct WindowMap {
    side: usize,
    /// Buffer index for each of the `side*side` window cells.
    pub targets: Vec<usize>,
    /// Box-local compact index (`ly * side + lx`) of each window cell after
    /// folding; used to accumulate folded atom weights.
    local: Vec<u16>,
    /// True when no folding occurs (identity window).
    pub interior: bool,
}

impl WindowMap {
    pub fn new(side: usize) -> Self {
        assert!(side * side <= u16::MAX as usize + 1);
        WindowMap {
            side,
            targets: vec![0; side * side],
            local: vec![0; side * side],
            interior: false,
        }
    }

    /// Populate for the window centered at `(cx, cy)` in image coordinates,
    /// expressed in a buffer whose top-left corner sits at `(bx, by)` with
    /// row stride `bw`.
    pub fn fill(
        &mut self,
        width: usize,
        height: usize,
        bx: usize,
        by: usize,
        bw: usize,
        cx: usize,
        cy: usize,
    ) {
        let side = self.side;
        debug_assert!(side <= width && side <= height);
        let half = (side / 2) as isize;
        let x0 = cx as isize - half;
        let y0 = cy as isize - half;
        self.interior =
            x0 >= 0 && y0 >= 0 && (cx + side / 2) < width && (cy + side / 2) < height;
        let mut k = 0;
        if self.interior {
            for dy in 0..side {
                let row = (y0 as usize + dy - by) * bw + (x0 as usize - bx);
                for dx in 0..side {
                    self.targets[k] = row + dx;
                    self.local[k] = (dy * side + dx) as u16;
                    k += 1;
                }
            }
        } else {
            for dy in 0..side {
                let ty = reflect_index(y0 + dy as isize, height);
                let ly = (ty as isize - y0) as usize;
                debug_assert!(ly < side);
                for dx in 0..side {
                    let tx = reflect_index(x0 + dx as isize, width);
                    let lx = (tx as isize - x0) as usize;
                    debug_assert!(lx < side);
                    self.targets[k] = (ty - by) * bw + (tx - bx);
                    self.local[k] = (ly * side + lx) as u16;
                    k += 1;
                }
            }
        }
    }

    /// Squared norm of the folded copy of `atom` (exactly 1.0 for interior
    /// windows and unit atoms). `fold_scratch` must hold `side*side` zeros on
    /// entry and is restored to zeros before returning.
    pub fn folded_column_norm_sq(&self, atom: &[f64], fold_scratch: &mut [f64]) -> f64 {
        for (k, &l) in self.local.iter().enumerate() {
            fold_scratch[l as usize] += atom[k];
        }
        let mut norm_sq = 0.0;
        for &l in &self.local {
            let cell = &mut fold_scratch[l as usize];
            if *cell != 0.0 {
                norm_sq += *cell * *cell;
                *cell = 0.0;
            }
        }
        norm_sq
    }
}

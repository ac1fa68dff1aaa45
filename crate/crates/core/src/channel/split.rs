//! Interleaved train/test split over a rectangular location grid.

use super::{ChannelDataset, Location};
use crate::error::{invalid, Error, Result};

/// Rows and columns of a row-major location grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub rows: usize,
    pub cols: usize,
}

impl GridShape {
    /// Infers the shape from locations ordered row by row, where every row
    /// shares one `y` and rows repeat the same `x` sequence.
    pub fn infer(locations: &[Location]) -> Result<Self> {
        let first = locations.first().ok_or(Error::Empty("locations"))?;
        let y0 = first.coords[1];
        let cols = locations.iter().take_while(|l| l.coords[1] == y0).count();
        if locations.len() % cols != 0 {
            return Err(Error::GridMismatch(format!(
                "{} locations do not fill rows of {cols}",
                locations.len()
            )));
        }
        let rows = locations.len() / cols;
        for r in 0..rows {
            let row = &locations[r * cols..(r + 1) * cols];
            let y = row[0].coords[1];
            for (c, l) in row.iter().enumerate() {
                if l.coords[1] != y || l.coords[0] != locations[c].coords[0] {
                    return Err(Error::GridMismatch(format!("location {} breaks the row-major grid", l.q)));
                }
            }
        }
        Ok(Self { rows, cols })
    }
}

/// Positions (into the dataset's location list) of the two subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Splits the grid so that `ratio` is the training share of the kept
/// locations.
///
/// With `n = ratio / (1 - ratio)` written as `a·s` (`s` the largest divisor
/// of `n` not above `√n`), every `(a+1)`-th row is a test row placed midway
/// between `a` training rows, and test rows keep every `s`-th column.
/// `n` must be a positive integer.
pub fn split_grid(ds: &ChannelDataset, ratio: f64) -> Result<GridSplit> {
    split_locations(ds.locations(), ratio)
}

pub(crate) fn split_locations(locations: &[Location], ratio: f64) -> Result<GridSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n_real = ratio / (1.0 - ratio);
    let n = n_real.round();
    if n < 1.0 || (n_real - n).abs() > 1e-9 * n.max(1.0) {
        return Err(invalid(format!(
            "split ratio {ratio} gives a train:test ratio of {n_real}, which is not a whole number"
        )));
    }
    let n = n as usize;
    let s = (1..=n).filter(|d| n % d == 0 && d * d <= n).max().unwrap_or(1);
    let a = n / s;
    let shape = GridShape::infer(locations)?;
    let period = a + 1;
    let test_phase = a.div_ceil(2);
    let keep_col = s / 2;

    let mut split = GridSplit { train: Vec::new(), test: Vec::new() };
    for r in 0..shape.rows {
        let test_row = r % period == test_phase;
        for c in 0..shape.cols {
            let idx = r * shape.cols + c;
            if !test_row {
                split.train.push(idx);
            } else if c % s == keep_col {
                split.test.push(idx);
            }
        }
    }
    if split.test.is_empty() {
        return Err(invalid(format!("split ratio {ratio} leaves the test set empty on a {}-row grid", shape.rows)));
    }
    if split.train.is_empty() {
        return Err(invalid("split leaves the training set empty"));
    }
    Ok(split)
}

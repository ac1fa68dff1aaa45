//! Small complex-matrix helpers shared by the numerical modules.

use nalgebra::DMatrix;

use crate::C64;

/// Dense complex matrix (column-major, as stored by nalgebra).
pub type CMatrix = DMatrix<C64>;

/// Builds a matrix from a row-major slice.
pub fn from_row_major(rows: usize, cols: usize, data: &[C64]) -> CMatrix {
    assert_eq!(data.len(), rows * cols, "row-major buffer length");
    CMatrix::from_row_slice(rows, cols, data)
}

/// Flattens a matrix into a row-major vector.
pub fn to_row_major(m: &CMatrix) -> Vec<C64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest absolute deviation of `WᴴW` from `(1/L)·I`.
pub fn gram_deviation(w: &CMatrix) -> f64 {
    let l = w.ncols();
    let gram = w.adjoint() * w;
    let target = 1.0 / l as f64;
    let mut worst = 0.0f64;
    for i in 0..l {
        for j in 0..l {
            let expect = if i == j { C64::new(target, 0.0) } else { C64::new(0.0, 0.0) };
            worst = worst.max((gram[(i, j)] - expect).norm());
        }
    }
    worst
}

/// Numerical rank from singular values with a relative tolerance.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Solves the small Hermitian positive-definite system `A X = B` in place
/// (Gauss-Jordan with partial pivoting). `a` is `n×n`, `b` is `n×m`, both
/// row-major. Returns `false` when a pivot vanishes.
pub(crate) fn solve_in_place(a: &mut [C64], b: &mut [C64], n: usize, m: usize) -> bool {
    for col in 0..n {
        let mut piv = col;
        let mut best = a[col * n + col].norm();
        for r in col + 1..n {
            let v = a[r * n + col].norm();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if !(best > 0.0) || !best.is_finite() {
            return false;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            for c in 0..m {
                b.swap(col * m + c, piv * m + c);
            }
        }
        let inv = C64::new(1.0, 0.0) / a[col * n + col];
        for c in 0..n {
            a[col * n + c] *= inv;
        }
        for c in 0..m {
            b[col * m + c] *= inv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col];
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..n {
                let v = a[col * n + c];
                a[r * n + c] -= f * v;
            }
            for c in 0..m {
                let v = b[col * m + c];
                b[r * m + c] -= f * v;
            }
        }
    }
    true
}

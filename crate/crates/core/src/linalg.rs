//! Small dense matrices with determinant and linear-solve routines.
//!
//! Exact scalars use fraction-free (Bareiss) elimination for determinants and
//! first-nonzero pivoting for solves; floating scalars use partial pivoting.

use std::ops::{Index, IndexMut};

use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row vectors. Panics on ragged input.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].clone())
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(T::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
            })
            .collect()
    }

    pub fn mul(&self, other: &Matrix<T>) -> Matrix<T> {
        assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(T::zero(), |acc, k| {
                acc + self[(i, k)].clone() * other[(k, j)].clone()
            })
        })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Matrix<U> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64().abs()).fold(0.0, f64::max)
    }

    /// Determinant of a square matrix.
    pub fn det(&self) -> T {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        if T::EXACT {
            bareiss_det(self.clone())
        } else {
            pivoted_det(self.clone())
        }
    }

    /// Solves `self · x = rhs` for square `self`; `None` when singular.
    pub fn solve(&self, rhs: &[T]) -> Option<Vec<T>> {
        assert_eq!(self.rows, self.cols);
        assert_eq!(rhs.len(), self.rows);
        let n = self.rows;
        let mut a = self.clone();
        let mut b = rhs.to_vec();
        let singular_below = if T::EXACT { 0.0 } else { a.max_abs() * 1e-14 };
        for k in 0..n {
            let pivot = pick_pivot(&a, k, k)?;
            if !T::EXACT && a[(pivot, k)].as_f64().abs() <= singular_below {
                return None;
            }
            a.swap_rows(k, pivot);
            b.swap(k, pivot);
            for i in k + 1..n {
                if a[(i, k)].is_zero() {
                    continue;
                }
                let f = a[(i, k)].clone() / a[(k, k)].clone();
                for j in k..n {
                    let delta = f.clone() * a[(k, j)].clone();
                    a[(i, j)] = a[(i, j)].clone() - delta;
                }
                let delta = f * b[k].clone();
                b[i] = b[i].clone() - delta;
            }
        }
        let mut x = vec![T::zero(); n];
        for k in (0..n).rev() {
            let mut acc = b[k].clone();
            for j in k + 1..n {
                acc = acc - a[(k, j)].clone() * x[j].clone();
            }
            x[k] = acc / a[(k, k)].clone();
        }
        Some(x)
    }

    pub fn inverse(&self) -> Option<Matrix<T>> {
        let n = self.rows;
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let e: Vec<T> = (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect();
            cols.push(self.solve(&e)?);
        }
        Some(Self::from_fn(n, n, |i, j| cols[j][i].clone()))
    }
}

/// Row pivot for column `col` at or below `start`: largest magnitude for
/// floats, first nonzero for exact scalars.
fn pick_pivot<T: Scalar>(a: &Matrix<T>, col: usize, start: usize) -> Option<usize> {
    if T::EXACT {
        (start..a.rows).find(|&i| !a[(i, col)].is_zero())
    } else {
        let (best, mag) = (start..a.rows)
            .map(|i| (i, a[(i, col)].as_f64().abs()))
            .fold((start, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        (mag > 0.0).then_some(best)
    }
}

fn bareiss_det<T: Scalar>(mut a: Matrix<T>) -> T {
    let n = a.rows;
    if n == 0 {
        return T::one();
    }
    let mut negate = false;
    let mut prev = T::one();
    for k in 0..n - 1 {
        let Some(pivot) = pick_pivot(&a, k, k) else {
            return T::zero();
        };
        if pivot != k {
            a.swap_rows(k, pivot);
            negate = !negate;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let num = a[(i, j)].clone() * a[(k, k)].clone() - a[(i, k)].clone() * a[(k, j)].clone();
                a[(i, j)] = num / prev.clone();
            }
        }
        prev = a[(k, k)].clone();
    }
    let d = a[(n - 1, n - 1)].clone();
    if negate {
        -d
    } else {
        d
    }
}

fn pivoted_det<T: Scalar>(mut a: Matrix<T>) -> T {
    let n = a.rows;
    let mut det = T::one();
    for k in 0..n {
        let Some(pivot) = pick_pivot(&a, k, k) else {
            return T::zero();
        };
        if pivot != k {
            a.swap_rows(k, pivot);
            det = -det;
        }
        let p = a[(k, k)].clone();
        for i in k + 1..n {
            let f = a[(i, k)].clone() / p.clone();
            if f.is_zero() {
                continue;
            }
            for j in k + 1..n {
                let delta = f.clone() * a[(k, j)].clone();
                a[(i, j)] = a[(i, j)].clone() - delta;
            }
        }
        det = det * p;
    }
    det
}

/// Result of reducing an augmented system `[A | b]` to row echelon form.
#[derive(Clone, Debug)]
pub struct EchelonSolution<T> {
    pub rank: usize,
    pub consistent: bool,
    /// Particular solution with free variables set to zero (when consistent).
    pub particular: Vec<T>,
    /// Columns that carry a pivot.
    pub pivot_columns: Vec<usize>,
}

/// Gauss-Jordan reduction of a possibly rectangular system. Entries below
/// `rel · max|A|` count as zero for floating scalars.
pub fn row_reduce<T: Scalar>(a: &Matrix<T>, b: &[T], rel: f64) -> EchelonSolution<T> {
    let (m, n) = (a.rows, a.cols);
    let mut aug = Matrix::from_fn(m, n + 1, |i, j| if j < n { a[(i, j)].clone() } else { b[i].clone() });
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let negligible = |x: &T| if T::EXACT { x.is_zero() } else { x.as_f64().abs() <= rel * scale };
    let mut pivot_columns = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let Some(p) = pick_pivot(&aug, col, row) else { continue };
        if negligible(&aug[(p, col)]) {
            continue;
        }
        aug.swap_rows(row, p);
        let pv = aug[(row, col)].clone();
        for j in col..=n {
            aug[(row, j)] = aug[(row, j)].clone() / pv.clone();
        }
        for i in 0..m {
            if i == row || aug[(i, col)].is_zero() {
                continue;
            }
            let f = aug[(i, col)].clone();
            for j in col..=n {
                let delta = f.clone() * aug[(row, j)].clone();
                aug[(i, j)] = aug[(i, j)].clone() - delta;
            }
        }
        pivot_columns.push(col);
        row += 1;
    }
    let rhs_scale = b.iter().map(|x| x.as_f64().abs()).fold(scale, f64::max);
    let consistent = (row..m).all(|i| {
        let v = &aug[(i, n)];
        if T::EXACT {
            v.is_zero()
        } else {
            v.as_f64().abs() <= rel * rhs_scale * 10.0
        }
    });
    let mut particular = vec![T::zero(); n];
    for (r, &c) in pivot_columns.iter().enumerate() {
        particular[c] = aug[(r, n)].clone();
    }
    EchelonSolution { rank: pivot_columns.len(), consistent, particular, pivot_columns }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    /// Cofactor expansion along the first row; the oracle for small sizes.
    fn cofactor_det(a: &[Vec<f64>]) -> f64 {
        let n = a.len();
        if n == 1 {
            return a[0][0];
        }
        (0..n)
            .map(|j| {
                let minor: Vec<Vec<f64>> = a[1..]
                    .iter()
                    .map(|row| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &x)| x).collect())
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[0][j] * cofactor_det(&minor)
            })
            .sum()
    }

    #[test]
    fn det_small() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(m.det(), -2.0);
        let e = Matrix::from_rows(vec![vec![q(1), q(2)], vec![q(3), q(4)]]);
        assert_eq!(e.det(), q(-2));
    }

    #[test]
    fn bareiss_needs_row_swap() {
        let m = Matrix::from_rows(vec![
            vec![q(0), q(1), q(1)],
            vec![q(1), q(0), q(9)],
            vec![q(1), q(9), q(0)],
        ]);
        // 2·9 from the two-point bordered determinant.
        assert_eq!(m.det(), q(18));
        let singular = Matrix::from_rows(vec![vec![q(1), q(2)], vec![q(2), q(4)]]);
        assert_eq!(singular.det(), q(0));
    }

    #[test]
    fn det_matches_cofactor_oracle() {
        let rows = vec![
            vec![0.0, 1.0, 1.0, 1.0],
            vec![1.0, 0.0, 9.0, 25.0],
            vec![1.0, 9.0, 0.0, 16.0],
            vec![1.0, 25.0, 16.0, 0.0],
        ];
        let oracle = cofactor_det(&rows);
        assert_eq!(oracle, -576.0);
        let m = Matrix::from_rows(rows);
        assert!((m.det() - oracle).abs() < 1e-9);
    }

    #[test]
    fn solve_and_inverse() {
        let m = Matrix::from_rows(vec![vec![q(2), q(1)], vec![q(1), q(3)]]);
        let x = m.solve(&[q(3), q(5)]).unwrap();
        assert_eq!(x, vec![BigRational::new(4.into(), 5.into()), BigRational::new(7.into(), 5.into())]);
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv), Matrix::identity(2));
        let singular = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(singular.solve(&[1.0, 1.0]).is_none());
    }

    #[test]
    fn row_reduce_detects_rank_and_consistency() {
        let a = Matrix::from_rows(vec![vec![q(1), q(1)], vec![q(2), q(2)], vec![q(1), q(0)]]);
        let ok = row_reduce(&a, &[q(3), q(6), q(1)], 0.0);
        assert_eq!(ok.rank, 2);
        assert!(ok.consistent);
        assert_eq!(ok.particular, vec![q(1), q(2)]);
        let bad = row_reduce(&a, &[q(3), q(7), q(1)], 0.0);
        assert!(!bad.consistent);
        let under = row_reduce(&Matrix::from_rows(vec![vec![1.0, 1.0]]), &[2.0], 1e-12);
        assert_eq!(under.rank, 1);
        assert!(under.consistent);
    }
}

//! Dense exact linear algebra over [`ExactRational`].
//!
//! Sizes here are desk-scale (one connected block of an incidence matrix at
//! a time), so plain Gauss–Jordan elimination is used throughout.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::rationals::ExactRational;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<ExactRational>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ExactRational::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<ExactRational>>) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &ExactRational {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: ExactRational) {
        self.data[r * self.cols + c] = value;
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).clone());
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[ExactRational]) -> Vec<ExactRational> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter()
                    .zip(v)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `self · selfᵀ`.
    pub fn gram(&self) -> Self {
        let mut out = Self::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let ri = &self.data[i * self.cols..(i + 1) * self.cols];
                let rj = &self.data[j * self.cols..(j + 1) * self.cols];
                let dot: ExactRational = ri
                    .iter()
                    .zip(rj)
                    .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                    .map(|(a, b)| a * b)
                    .sum();
                out.set(j, i, dot.clone());
                out.set(i, j, dot);
            }
        }
        out
    }

    /// Reduced row echelon form in place; returns the pivot columns.
    fn rref(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..self.cols {
            if row == self.rows {
                break;
            }
            let Some(p) = (row..self.rows).find(|&r| !self.get(r, col).is_zero()) else {
                continue;
            };
            if p != row {
                for c in 0..self.cols {
                    self.data.swap(p * self.cols + c, row * self.cols + c);
                }
            }
            let inv = self.get(row, col).recip().expect("nonzero pivot");
            for c in col..self.cols {
                let v = self.get(row, c) * &inv;
                self.set(row, c, v);
            }
            for r in 0..self.rows {
                if r == row || self.get(r, col).is_zero() {
                    continue;
                }
                let factor = self.get(r, col).clone();
                for c in col..self.cols {
                    if self.get(row, c).is_zero() {
                        continue;
                    }
                    let v = self.get(r, c) - &(&factor * self.get(row, c));
                    self.set(r, c, v);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().rref().len()
    }

    /// A nonzero `x` with `self · x = 0`, or `None` when the columns are
    /// linearly independent.
    pub fn null_vector(&self) -> Option<Vec<ExactRational>> {
        let mut reduced = self.clone();
        let pivots = reduced.rref();
        let free = (0..self.cols).find(|c| !pivots.contains(c))?;
        let mut x = vec![ExactRational::zero(); self.cols];
        x[free] = ExactRational::one();
        for (row, &pc) in pivots.iter().enumerate() {
            x[pc] = -reduced.get(row, free);
        }
        Some(x)
    }

    /// Solves the square system `self · x = rhs`; `None` if singular.
    pub fn solve(&self, rhs: &[ExactRational]) -> Option<Vec<ExactRational>> {
        assert_eq!(self.rows, self.cols, "solve needs a square matrix");
        assert_eq!(rhs.len(), self.rows);
        let n = self.rows;
        let mut aug = Self::zeros(n, n + 1);
        for (r, b) in rhs.iter().enumerate() {
            for c in 0..n {
                aug.set(r, c, self.get(r, c).clone());
            }
            aug.set(r, n, b.clone());
        }
        let pivots = aug.rref();
        if pivots.len() < n || pivots.iter().enumerate().any(|(i, &p)| p != i) {
            return None;
        }
        Some((0..n).map(|r| aug.get(r, n).clone()).collect())
    }
}

/// Scales a nonzero rational vector to coprime integers with the first
/// nonzero entry positive.
pub fn integer_normalize(v: &[ExactRational]) -> Vec<BigInt> {
    let lcm = v.iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()));
    let scaled: Vec<BigInt> = v.iter().map(|x| x.numer() * (&lcm / x.denom())).collect();
    let gcd = scaled.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    if gcd.is_zero() {
        return scaled;
    }
    let sign = match scaled.iter().find(|x| !x.is_zero()) {
        Some(x) if x.is_negative() => -BigInt::one(),
        _ => BigInt::one(),
    };
    scaled.into_iter().map(|x| x / &gcd * &sign).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> Matrix {
        Matrix::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| ExactRational::from(x)).collect())
                .collect(),
        )
    }

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn rank_and_null_vector() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6], &[1, 0, 1]]);
        assert_eq!(a.rank(), 2);
        let x = a.null_vector().unwrap();
        assert!(a.mul_vec(&x).iter().all(ExactRational::is_zero));
        assert_eq!(integer_normalize(&x), ints(&[1, 1, -1]));

        let id = m(&[&[1, 0], &[0, 1]]);
        assert!(id.null_vector().is_none());
        assert_eq!(id.rank(), 2);
    }

    #[test]
    fn solve_square() {
        let a = m(&[&[2, 1], &[1, 3]]);
        let b = [ExactRational::from(3), ExactRational::from(5)];
        let x = a.solve(&b).unwrap();
        assert_eq!(
            x,
            vec![ExactRational::ratio(4, 5), ExactRational::ratio(7, 5)]
        );
        assert!(m(&[&[1, 2], &[2, 4]]).solve(&b).is_none());
    }

    #[test]
    fn gram_and_transpose() {
        let a = m(&[&[1, 1, 0], &[0, 1, 1]]);
        assert_eq!(a.gram(), m(&[&[2, 1], &[1, 2]]));
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn normalize_duplicate_rows_kernel() {
        let v = [ExactRational::ratio(-1, 3), ExactRational::ratio(1, 3)];
        assert_eq!(integer_normalize(&v), ints(&[1, -1]));
    }
}

//! Dense 64-bit vectors and row-major matrices.
//!
//! Just enough linear algebra for the recurrent model: dot products,
//! matrix-vector products in both orientations, and outer-product
//! accumulation for gradient updates. Dimensions are fixed at creation.

use std::ops::{Index, IndexMut};

#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector { data: vec![0.0; len] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    /// self += scale * other
    pub fn axpy(&mut self, scale: f64, other: &Vector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    pub fn add_assign(&mut self, other: &Vector) {
        self.axpy(1.0, other);
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.data.iter_mut() {
            *a *= s;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Vector {
        Vector { data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.data[i]
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector { data: iter.into_iter().collect() }
    }
}

/// Row-major dense matrix. Entry (r, c) lives at `data[r * cols + c]`,
/// which is also the serialization order.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.cols, x.len());
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = self.row(r);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.as_slice()) {
                acc += a * b;
            }
            out.push(acc);
        }
        Vector::from_vec(out)
    }

    /// y = Aᵀ x
    pub fn matvec_transpose(&self, x: &Vector) -> Vector {
        debug_assert_eq!(self.rows, x.len());
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            let xr = x[r];
            let row = self.row(r);
            for (o, a) in out.iter_mut().zip(row) {
                *o += xr * a;
            }
        }
        Vector::from_vec(out)
    }

    /// self += u vᵀ
    pub fn add_outer(&mut self, u: &Vector, v: &Vector) {
        debug_assert_eq!(self.rows, u.len());
        debug_assert_eq!(self.cols, v.len());
        for r in 0..self.rows {
            let ur = u[r];
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (a, b) in row.iter_mut().zip(v.as_slice()) {
                *a += ur * b;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_against_hand_computation() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Vector::from_vec(vec![1.0, 0.0, -1.0]);
        let y = a.matvec(&x);
        assert_eq!(y.as_slice(), &[-2.0, -2.0]);
    }

    #[test]
    fn matvec_transpose_against_hand_computation() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let y = a.matvec_transpose(&x);
        assert_eq!(y.as_slice(), &[9.0, 12.0, 15.0]);
    }

    #[test]
    fn add_outer_accumulates() {
        let mut a = Matrix::zeros(2, 2);
        let u = Vector::from_vec(vec![1.0, 2.0]);
        let v = Vector::from_vec(vec![3.0, 4.0]);
        a.add_outer(&u, &v);
        a.add_outer(&u, &v);
        assert_eq!(a.data(), &[6.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn row_major_layout() {
        let mut a = Matrix::zeros(2, 3);
        a[(1, 2)] = 7.0;
        assert_eq!(a.data()[5], 7.0);
    }
}

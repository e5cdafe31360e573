//! Small dense symmetric matrices and their spectral decomposition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An `n × n` symmetric matrix stored in full, mirrored on every write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.data[i * m.n + i] = v;
        }
        m
    }

    /// Builds from row slices; rejects ragged or asymmetric input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Precondition("matrix rows must form a square".into()));
        }
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            data.extend_from_slice(r);
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::Precondition(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// The 2×2 matrix `[[xx, xy], [xy, yy]]`.
    pub fn from_2x2(xx: f64, xy: f64, yy: f64) -> Self {
        Self {
            n: 2,
            data: vec![xx, xy, xy, yy],
        }
    }

    /// `Q · diag(d) · Qᵀ` where the columns of `Q` are `vectors`.
    pub fn from_spectral(d: &[f64], vectors: &[Vec<f64>]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|k| vectors[k][i] * d[k] * vectors[k][j]).sum();
                m.set(i, j, s);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn determinant(&self) -> f64 {
        match self.n {
            0 => 1.0,
            1 => self.data[0],
            2 => self.data[0] * self.data[3] - self.data[1] * self.data[2],
            _ => self.to_nalgebra().determinant(),
        }
    }

    /// `Qᵀ · A · Q` for a square `q` given row-major.
    pub fn congruent(&self, q: &[Vec<f64>]) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += q[k][i] * self.get(k, l) * q[l][j];
                    }
                }
                out.set(i, j, s);
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.n {
            2 => {
                let (lo, hi) = eigenvalues_2x2(self.data[0], self.data[1], self.data[3]);
                vec![lo, hi]
            }
            _ => self.eigen().values,
        }
    }

    pub fn eigen(&self) -> SymEigen {
        match self.n {
            0 => SymEigen {
                values: vec![],
                vectors: vec![],
            },
            1 => SymEigen {
                values: vec![self.data[0]],
                vectors: vec![vec![1.0]],
            },
            2 => eigen_2x2(self.data[0], self.data[1], self.data[3]),
            _ => {
                let eig = self.to_nalgebra().symmetric_eigen();
                let mut order: Vec<usize> = (0..self.n).collect();
                order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
                SymEigen {
                    values: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
                    vectors: order
                        .iter()
                        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
                        .collect(),
                }
            }
        }
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }
}

/// Closed-form eigenvalues `(low, high)` of `[[xx, xy], [xy, yy]]`.
///
/// The discriminant is written as a sum of squares so it can never go negative
/// through round-off.
#[inline]
pub fn eigenvalues_2x2(xx: f64, xy: f64, yy: f64) -> (f64, f64) {
    let mean = 0.5 * (xx + yy);
    let radius = (0.5 * (xx - yy)).hypot(xy);
    (mean - radius, mean + radius)
}

fn eigen_2x2(xx: f64, xy: f64, yy: f64) -> SymEigen {
    let (lo, hi) = eigenvalues_2x2(xx, xy, yy);
    let theta = 0.5 * (2.0 * xy).atan2(xx - yy);
    let (s, c) = theta.sin_cos();
    SymEigen {
        values: vec![lo, hi],
        vectors: vec![vec![-s, c], vec![c, s]],
    }
}

/// Rotation by `angle` as a row-major 2×2 matrix.
pub fn rotation_2d(angle: f64) -> Vec<Vec<f64>> {
    let (s, c) = angle.sin_cos();
    vec![vec![c, -s], vec![s, c]]
}

/// Principal square root of a symmetric positive semi-definite matrix.
pub fn sqrt_psd(m: &SymMatrix) -> SymMatrix {
    let e = m.eigen();
    let d: Vec<f64> = e.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    SymMatrix::from_spectral(&d, &e.vectors)
}

/// Inverse of a symmetric positive definite matrix via its spectrum.
pub fn inverse_spd(m: &SymMatrix) -> SymMatrix {
    let e = m.eigen();
    let d: Vec<f64> = e.values.iter().map(|v| 1.0 / v).collect();
    SymMatrix::from_spectral(&d, &e.vectors)
}

/// Symmetric product `A · B` for matrices known to commute or whose product is
/// symmetric; the result is symmetrised from the upper triangle.
pub fn product(a: &SymMatrix, b: &SymMatrix) -> SymMatrix {
    let n = a.dim();
    let mut out = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|k| a.get(i, k) * b.get(k, j)).sum();
            out.set(i, j, s);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_matches_general_path() {
        let m = SymMatrix::from_2x2(2.0, 1.0, 2.0);
        assert_eq!(m.eigenvalues(), vec![1.0, 3.0]);
        let e = m.eigen();
        let back = SymMatrix::from_spectral(&e.values, &e.vectors);
        for i in 0..2 {
            for j in 0..2 {
                assert!((back.get(i, j) - m.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn diagonal_2x2_vectors() {
        let e = SymMatrix::from_2x2(5.0, 0.0, 1.0).eigen();
        assert_eq!(e.values, vec![1.0, 5.0]);
        assert!((e.vectors[0][1].abs() - 1.0).abs() < 1e-15);
        assert!((e.vectors[1][0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn general_eigen_sorted_and_orthonormal() {
        let m = SymMatrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]]).unwrap();
        let e = m.eigen();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        assert!((e.values.iter().sum::<f64>() - m.trace()).abs() < 1e-12);
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|k| e.vectors[a][k] * e.vectors[b][k]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn asymmetric_rows_rejected() {
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.1, 1.0]]).is_err());
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0]]).is_err());
    }

    #[test]
    fn sqrt_and_inverse() {
        let m = SymMatrix::from_2x2(9.0, 0.0, 4.0);
        let r = sqrt_psd(&m);
        assert!((r.get(0, 0) - 3.0).abs() < 1e-14 && (r.get(1, 1) - 2.0).abs() < 1e-14);
        let inv = inverse_spd(&m);
        assert!((inv.get(0, 0) - 1.0 / 9.0).abs() < 1e-15);
    }
}

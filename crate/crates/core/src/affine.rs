//! Small dense matrices measured in the max-row-sum norm, pivot-free LU
//! factorization for near-identity matrices, the telescoping interpolants
//! that peel a triangular factor back to the identity one elbow at a time,
//! and the per-cube affine change of variables
//! `x ↦ x_Q + A(ℓ(Q) y + x − x_Q)`.

use std::fmt;
use std::ops::{Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::dyadic::DyadicCube;
use crate::{Error, Result};

/// Slack allowed when checking `‖A − I‖∞ + ‖y‖∞ ≤ η`.
pub const BUDGET_SLACK: f64 = 1e-12;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain(
                "matrix rows must form a nonempty square".into(),
            ));
        }
        Ok(Self {
            dim,
            entries: rows.concat(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `‖M − I‖∞`.
    pub fn deviation_from_identity(&self) -> f64 {
        (self - &Self::identity(self.dim)).inf_norm()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn is_upper_triangular(&self) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| self[(i, j)] == 0.0))
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.dim).all(|i| (i + 1..self.dim).all(|j| self[(i, j)] == 0.0))
    }

    pub fn diagonal_product(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).product()
    }

    /// Pivot-free Doolittle elimination `A = LU` with unit-diagonal `L`.
    ///
    /// Intended for `‖A − I‖∞ < 1`, where every leading principal minor is
    /// nonzero. A vanishing pivot reports [`Error::Factorization`].
    pub fn lu_factor(&self) -> Result<LuFactors> {
        let n = self.dim;
        let mut lower = Self::identity(n);
        let mut upper = Self::zeros(n);
        let scale = self.inf_norm().max(1.0);
        for k in 0..n {
            for j in k..n {
                let s: f64 = (0..k).map(|p| lower[(k, p)] * upper[(p, j)]).sum();
                upper[(k, j)] = self[(k, j)] - s;
            }
            let pivot = upper[(k, k)];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::Factorization {
                    index: k,
                    value: pivot,
                });
            }
            for i in k + 1..n {
                let s: f64 = (0..k).map(|p| lower[(i, p)] * upper[(p, k)]).sum();
                lower[(i, k)] = (self[(i, k)] - s) / pivot;
            }
        }
        Ok(LuFactors { lower, upper })
    }

    /// Determinant: product of the LU pivots in the near-identity regime,
    /// partial-pivoting elimination otherwise.
    pub fn determinant(&self) -> f64 {
        if self.deviation_from_identity() < 1.0 {
            if let Ok(lu) = self.lu_factor() {
                return lu.upper.diagonal_product();
            }
        }
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut det = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .unwrap();
            if a[p * n + k] == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    a.swap(p * n + j, k * n + j);
                }
                det = -det;
            }
            let pivot = a[k * n + k];
            det *= pivot;
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut inv = Self::identity(n).entries;
        let scale = self.inf_norm().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| a[x * n + k].abs().total_cmp(&a[y * n + k].abs()))
                .unwrap();
            let pivot = a[p * n + k];
            if !(pivot.abs() > 1e-14 * scale) {
                return Err(Error::Factorization {
                    index: k,
                    value: pivot,
                });
            }
            if p != k {
                for j in 0..n {
                    a.swap(p * n + j, k * n + j);
                    inv.swap(p * n + j, k * n + j);
                }
            }
            for j in 0..n {
                a[k * n + j] /= pivot;
                inv[k * n + j] /= pivot;
            }
            for i in 0..n {
                if i == k {
                    continue;
                }
                let f = a[i * n + k];
                if f != 0.0 {
                    for j in 0..n {
                        a[i * n + j] -= f * a[k * n + j];
                        inv[i * n + j] -= f * inv[k * n + j];
                    }
                }
            }
        }
        Ok(Self {
            dim: n,
            entries: inv,
        })
    }

    /// The interpolant `M_k`: entries in the first `k` rows and columns
    /// (upper) or the last `k` rows and columns (lower) are replaced by the
    /// identity's, so `M_0 = M` and `M_d = I`.
    pub fn telescope(&self, k: usize, direction: Triangle) -> Result<Self> {
        let d = self.dim;
        if k > d {
            return Err(Error::Domain(format!("telescope step {k} outside 0..={d}")));
        }
        let triangular = match direction {
            Triangle::Upper => self.is_upper_triangular(),
            Triangle::Lower => self.is_lower_triangular(),
        };
        if !triangular {
            return Err(Error::Domain(format!(
                "telescope expects a {direction:?}-triangular matrix"
            )));
        }
        let mut out = self.clone();
        for i in 0..d {
            for j in 0..d {
                // 1-based row/column numbers as in the elbow description
                let (r, c) = (i + 1, j + 1);
                let reset = match direction {
                    Triangle::Upper => r.min(c) <= k,
                    Triangle::Lower => r.max(c) > d - k,
                };
                if reset {
                    out[(i, j)] = if i == j { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for SquareMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.entries[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SquareMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.entries[i * self.dim + j]
    }
}

impl Sub for &SquareMatrix {
    type Output = SquareMatrix;
    fn sub(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim);
        SquareMatrix {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&rhs.entries)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &SquareMatrix {
    type Output = SquareMatrix;
    fn mul(self, rhs: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for p in 0..n {
                let a = self[(i, p)];
                if a != 0.0 {
                    for j in 0..n {
                        out[(i, j)] += a * rhs[(p, j)];
                    }
                }
            }
        }
        out
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.dim).map(|i| self.row(i)).collect();
        f.debug_list().entries(rows).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Triangle {
    Upper,
    Lower,
}

#[derive(Clone, Debug)]
pub struct LuFactors {
    pub lower: SquareMatrix,
    pub upper: SquareMatrix,
}

impl LuFactors {
    /// `max(‖L − I‖∞, ‖U − I‖∞)`.
    pub fn max_deviation(&self) -> f64 {
        self.lower
            .deviation_from_identity()
            .max(self.upper.deviation_from_identity())
    }

    pub fn product(&self) -> SquareMatrix {
        &self.lower * &self.upper
    }
}

/// A near-identity affine change of variables attached to a dyadic cube.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePerturbation {
    matrix: SquareMatrix,
    translation: Vec<f64>,
    eta: f64,
}

impl AffinePerturbation {
    /// Validates `‖A − I‖∞ + ‖y‖∞ ≤ η ≤ 1/2`.
    pub fn new(matrix: SquareMatrix, translation: Vec<f64>, eta: f64) -> Result<Self> {
        if translation.len() != matrix.dim() {
            return Err(Error::Domain(format!(
                "translation has length {}, matrix is {}×{}",
                translation.len(),
                matrix.dim(),
                matrix.dim()
            )));
        }
        if !(0.0..=0.5).contains(&eta) {
            return Err(Error::Domain(format!("eta {eta} outside [0, 1/2]")));
        }
        let used = budget(&matrix, &translation);
        if used > eta + BUDGET_SLACK {
            return Err(Error::Domain(format!(
                "‖A−I‖∞ + ‖y‖∞ = {used} exceeds eta {eta}"
            )));
        }
        Ok(Self {
            matrix,
            translation,
            eta,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: SquareMatrix::identity(dim),
            translation: vec![0.0; dim],
            eta: 0.0,
        }
    }

    pub fn translation_only(translation: Vec<f64>, eta: f64) -> Result<Self> {
        Self::new(SquareMatrix::identity(translation.len()), translation, eta)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn matrix(&self) -> &SquareMatrix {
        &self.matrix
    }

    pub fn translation(&self) -> &[f64] {
        &self.translation
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `‖A − I‖∞ + ‖y‖∞`.
    pub fn budget_used(&self) -> f64 {
        budget(&self.matrix, &self.translation)
    }

    pub fn is_identity(&self) -> bool {
        self.translation.iter().all(|&v| v == 0.0)
            && self.matrix == SquareMatrix::identity(self.dim())
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// `x_Q + A(ℓ(Q) y + x − x_Q)`.
    pub fn apply(&self, cube: &DyadicCube, x: &[f64]) -> Vec<f64> {
        assert_eq!(
            cube.dim(),
            self.dim(),
            "cube/perturbation dimension mismatch"
        );
        let center = cube.center();
        let side = cube.side();
        let z: Vec<f64> = (0..self.dim())
            .map(|i| side * self.translation[i] + x[i] - center[i])
            .collect();
        let az = self.matrix.mul_vec(&z);
        center.iter().zip(az).map(|(c, v)| c + v).collect()
    }

    /// Preimage of `p` under [`apply`](Self::apply):
    /// `x_Q − ℓ(Q) y + A^{-1}(p − x_Q)`.
    pub fn apply_inverse(&self, cube: &DyadicCube, p: &[f64]) -> Result<Vec<f64>> {
        let inv = self.matrix.inverse()?;
        let center = cube.center();
        let side = cube.side();
        let w: Vec<f64> = p.iter().zip(&center).map(|(a, c)| a - c).collect();
        let aw = inv.mul_vec(&w);
        Ok((0..self.dim())
            .map(|i| center[i] - side * self.translation[i] + aw[i])
            .collect())
    }
}

fn budget(matrix: &SquareMatrix, translation: &[f64]) -> f64 {
    matrix.deviation_from_identity() + translation.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> SquareMatrix {
        SquareMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn inf_norm_examples() {
        assert_eq!(SquareMatrix::zeros(3).inf_norm(), 0.0);
        assert_eq!(SquareMatrix::identity(4).inf_norm(), 1.0);
        let a = m(&[&[1.0, 0.1], &[0.05, 1.0]]);
        assert!((a.deviation_from_identity() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn lu_of_identity() {
        let lu = SquareMatrix::identity(3).lu_factor().unwrap();
        assert_eq!(lu.lower, SquareMatrix::identity(3));
        assert_eq!(lu.upper, SquareMatrix::identity(3));
    }

    #[test]
    fn lu_two_by_two_by_hand() {
        let a = m(&[&[1.0, 0.1], &[0.1, 1.0]]);
        let lu = a.lu_factor().unwrap();
        assert_eq!(lu.lower, m(&[&[1.0, 0.0], &[0.1, 1.0]]));
        assert!((lu.upper[(0, 1)] - 0.1).abs() < 1e-16);
        assert!((lu.upper[(1, 1)] - 0.99).abs() < 1e-15);
        assert_eq!(lu.upper[(1, 0)], 0.0);
        assert!(lu.max_deviation() <= 0.1 / 0.9);
    }

    #[test]
    fn zero_pivot_reported() {
        let a = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(
            a.lu_factor(),
            Err(Error::Factorization { index: 0, .. })
        ));
    }

    #[test]
    fn determinant_paths_agree() {
        let a = m(&[&[1.1, 0.2, -0.1], &[0.05, 0.9, 0.1], &[0.0, 0.1, 1.05]]);
        let lu = a.lu_factor().unwrap();
        let by_lu = lu.upper.diagonal_product();
        assert!((a.determinant() - by_lu).abs() < 1e-14);
        let far = m(&[&[0.0, 2.0], &[3.0, 1.0]]);
        assert!((far.determinant() + 6.0).abs() < 1e-14);
        let tri = m(&[&[2.0, 5.0], &[0.0, 3.0]]);
        assert_eq!(tri.determinant(), 6.0);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = m(&[&[1.1, 0.2, -0.1], &[0.05, 0.9, 0.1], &[0.3, 0.1, 1.05]]);
        let prod = &a * &a.inverse().unwrap();
        assert!(prod.deviation_from_identity() < 1e-14);
        assert!(m(&[&[1.0, 2.0], &[2.0, 4.0]]).inverse().is_err());
    }

    #[test]
    fn telescope_endpoints_and_middle() {
        let u = m(&[&[1.1, 0.2, 0.3], &[0.0, 0.9, 0.4], &[0.0, 0.0, 1.2]]);
        assert_eq!(u.telescope(0, Triangle::Upper).unwrap(), u);
        assert_eq!(
            u.telescope(3, Triangle::Upper).unwrap(),
            SquareMatrix::identity(3)
        );
        let u1 = u.telescope(1, Triangle::Upper).unwrap();
        assert_eq!(
            u1,
            m(&[&[1.0, 0.0, 0.0], &[0.0, 0.9, 0.4], &[0.0, 0.0, 1.2]])
        );
        assert!(u.telescope(4, Triangle::Upper).is_err());
        assert!(u.telescope(1, Triangle::Lower).is_err());

        let l = u.transpose();
        let l1 = l.telescope(1, Triangle::Lower).unwrap();
        assert_eq!(
            l1,
            m(&[&[1.1, 0.0, 0.0], &[0.2, 0.9, 0.0], &[0.0, 0.0, 1.0]])
        );
        assert_eq!(
            l.telescope(3, Triangle::Lower).unwrap(),
            SquareMatrix::identity(3)
        );
    }

    #[test]
    fn apply_map_examples() {
        let q = DyadicCube::unit(1);
        let id = AffinePerturbation::identity(1);
        assert_eq!(id.apply(&q, &[0.3]), vec![0.3]);
        let p = AffinePerturbation::translation_only(vec![0.1], 0.1).unwrap();
        assert!((p.apply(&q, &[0.3])[0] - 0.4).abs() < 1e-15);

        let q2 = DyadicCube::unit(2);
        let a = m(&[&[1.0, 0.1], &[0.1, 1.0]]);
        let p = AffinePerturbation::new(a, vec![0.0, 0.0], 0.1).unwrap();
        assert_eq!(p.apply(&q2, &q2.center()), q2.center());
        let x = vec![0.2, 0.9];
        let back = p.apply_inverse(&q2, &p.apply(&q2, &x)).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-15 && (back[1] - x[1]).abs() < 1e-15);
    }

    #[test]
    fn budget_enforced() {
        let a = m(&[&[1.2, 0.0], &[0.0, 1.0]]);
        assert!(AffinePerturbation::new(a.clone(), vec![0.0, 0.1], 0.25).is_err());
        assert!(AffinePerturbation::new(a, vec![0.0, 0.05], 0.25).is_ok());
        assert!(AffinePerturbation::new(SquareMatrix::identity(1), vec![0.0], 0.6).is_err());
    }
}

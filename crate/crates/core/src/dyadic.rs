//! Dyadic cubes and the `d`-dimensional Haar system.
//!
//! A dyadic cube at scale `n` with integer corner `j` is the product
//! `∏ [j_i 2^n, (j_i + 1) 2^n)`. All cube geometry is kept in integers
//! (scale exponent and corner), so membership and nesting tests are exact.
//!
//! Haar functions are indexed by a cube and a bitmask `k` in `1..2^d`: bit `i`
//! set means the `i`-th cartesian factor is the one-dimensional Haar leg
//! (`+1` on the left half, `-1` on the right half), bit clear means it is the
//! indicator of the factor interval.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest supported `|scale|`; keeps `2^scale` and products of it exact.
pub const MAX_ABS_SCALE: i32 = 50;

/// `2^(e/2)` for an integer `e`, computed the same way everywhere so that
/// normalizations of rescaled Haar functions agree bit-for-bit.
pub fn pow2_half(e: i64) -> f64 {
    let whole = pow2(e.div_euclid(2) as i32);
    if e.rem_euclid(2) == 0 {
        whole
    } else {
        whole * std::f64::consts::SQRT_2
    }
}

/// Exact `2^e`.
pub fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    scale: i32,
    corner: Vec<i64>,
}

impl DyadicCube {
    pub fn new(scale: i32, corner: Vec<i64>) -> Result<Self> {
        if corner.is_empty() {
            return Err(Error::Domain("cube dimension must be positive".into()));
        }
        if scale.abs() > MAX_ABS_SCALE {
            return Err(Error::Domain(format!(
                "cube scale {scale} outside ±{MAX_ABS_SCALE}"
            )));
        }
        Ok(Self { scale, corner })
    }

    /// `[0,1)^d`.
    pub fn unit(dim: usize) -> Self {
        Self {
            scale: 0,
            corner: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.corner.len()
    }

    pub fn scale(&self) -> i32 {
        self.scale
    }

    pub fn corner(&self) -> &[i64] {
        &self.corner
    }

    /// Sidelength `ℓ(Q) = 2^n`.
    pub fn side(&self) -> f64 {
        pow2(self.scale)
    }

    /// Lebesgue measure `|Q| = 2^(nd)`.
    pub fn volume(&self) -> f64 {
        pow2(self.scale * self.dim() as i32)
    }

    /// Lower corner coordinate along `axis`.
    pub fn lower(&self, axis: usize) -> f64 {
        self.corner[axis] as f64 * self.side()
    }

    /// Upper (excluded) corner coordinate along `axis`.
    pub fn upper(&self, axis: usize) -> f64 {
        (self.corner[axis] + 1) as f64 * self.side()
    }

    /// Midpoint of the factor interval `I_axis(Q)`.
    pub fn mid(&self, axis: usize) -> f64 {
        (self.corner[axis] as f64 + 0.5) * self.side()
    }

    /// Geometric center `x_Q`.
    pub fn center(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mid(i)).collect()
    }

    /// Half-open membership test.
    pub fn contains_point(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| x[i] >= self.lower(i) && x[i] < self.upper(i))
    }

    /// `other ⊆ self`.
    pub fn contains_cube(&self, other: &DyadicCube) -> bool {
        if other.dim() != self.dim() || other.scale > self.scale {
            return false;
        }
        let shift = (self.scale - other.scale) as u32;
        other
            .corner
            .iter()
            .zip(&self.corner)
            .all(|(&c, &p)| c >> shift == p)
    }

    pub fn is_disjoint(&self, other: &DyadicCube) -> bool {
        !(self.contains_cube(other) || other.contains_cube(self))
    }

    /// The `2^d` children at scale `n - 1`, in lexicographic corner order.
    pub fn children(&self) -> Vec<DyadicCube> {
        let d = self.dim();
        let mut out = Vec::with_capacity(1 << d);
        for mask in 0..(1usize << d) {
            // first axis is the most significant digit, giving lexicographic order
            let corner = (0..d)
                .map(|i| 2 * self.corner[i] + ((mask >> (d - 1 - i)) & 1) as i64)
                .collect();
            out.push(DyadicCube {
                scale: self.scale - 1,
                corner,
            });
        }
        out
    }

    pub fn parent(&self) -> DyadicCube {
        DyadicCube {
            scale: self.scale + 1,
            corner: self.corner.iter().map(|c| c.div_euclid(2)).collect(),
        }
    }

    /// All dyadic cubes of the given (finer or equal) scale inside `self`,
    /// in lexicographic corner order.
    pub fn descendants_at(&self, scale: i32) -> Vec<DyadicCube> {
        assert!(scale <= self.scale);
        let per_axis = 1i64 << (self.scale - scale);
        let d = self.dim();
        let total = (per_axis as usize).pow(d as u32);
        let mut out = Vec::with_capacity(total);
        let mut offset = vec![0i64; d];
        for _ in 0..total {
            out.push(DyadicCube {
                scale,
                corner: (0..d)
                    .map(|i| self.corner[i] * per_axis + offset[i])
                    .collect(),
            });
            for i in (0..d).rev() {
                offset[i] += 1;
                if offset[i] < per_axis {
                    break;
                }
                offset[i] = 0;
            }
        }
        out
    }
}

impl fmt::Debug for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for DyadicCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "×")?;
            }
            write!(f, "[{}, {})", self.lower(i), self.upper(i))?;
        }
        Ok(())
    }
}

/// One tensor-product Haar function `h_{(Q),k}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HaarIndex {
    cube: DyadicCube,
    k: u32,
}

impl HaarIndex {
    pub fn new(cube: DyadicCube, k: u32) -> Result<Self> {
        let d = cube.dim();
        if d >= 32 || k == 0 || k >= (1u32 << d) {
            return Err(Error::Domain(format!(
                "Haar selector k={k} outside 1..{} for d={d}",
                1u64 << d.min(63)
            )));
        }
        Ok(Self { cube, k })
    }

    pub fn cube(&self) -> &DyadicCube {
        &self.cube
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.cube.dim()
    }

    /// Whether factor `axis` carries the Haar leg.
    pub fn has_haar_leg(&self, axis: usize) -> bool {
        (self.k >> axis) & 1 == 1
    }

    /// `|Q|^{-1/2}`.
    pub fn normalization(&self) -> f64 {
        pow2_half(-(self.cube.scale as i64) * self.dim() as i64)
    }

    /// Unnormalized `h^{(Q),k}(x)`, valued in `{-1, 0, 1}`.
    pub fn eval_unnormalized(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        let mut v = 1.0;
        for (i, &xi) in x.iter().enumerate() {
            let (lo, mid, hi) = (self.cube.lower(i), self.cube.mid(i), self.cube.upper(i));
            if !(xi >= lo && xi < hi) {
                return 0.0;
            }
            if self.has_haar_leg(i) && xi >= mid {
                v = -v;
            }
        }
        v
    }

    /// Normalized `h_{(Q),k}(x) = h^{(Q),k}(x) / |Q|^{1/2}`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let u = self.eval_unnormalized(x);
        if u == 0.0 {
            0.0
        } else {
            u * self.normalization()
        }
    }

    /// Sign of the unnormalized function on the child of `Q` selected by
    /// `child_bits` (bit `i` set means the upper half along axis `i`).
    pub fn child_sign(&self, child_bits: u32) -> f64 {
        if (self.k & child_bits).count_ones().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

/// All `(Q, k)` with `Q ⊆ region` and `n_min ≤ scale(Q) ≤ n_max`, ordered by
/// decreasing scale, then corner, then `k`.
pub fn enumerate_window(
    dim: usize,
    n_max: i32,
    n_min: i32,
    region: &DyadicCube,
) -> Result<Vec<HaarIndex>> {
    if n_min > n_max {
        return Err(Error::Domain(format!("empty scale range {n_max}..{n_min}")));
    }
    if region.dim() != dim {
        return Err(Error::Domain(format!(
            "region has dimension {}, expected {dim}",
            region.dim()
        )));
    }
    if region.scale() != n_max {
        return Err(Error::Domain(format!(
            "region scale {} differs from n_max {n_max}",
            region.scale()
        )));
    }
    if n_min < -MAX_ABS_SCALE {
        return Err(Error::Domain(format!("scale {n_min} too fine")));
    }
    let per_cube = (1u32 << dim) - 1;
    let mut out = Vec::new();
    for scale in (n_min..=n_max).rev() {
        for cube in region.descendants_at(scale) {
            for k in 1..=per_cube {
                out.push(HaarIndex {
                    cube: cube.clone(),
                    k,
                });
            }
        }
    }
    Ok(out)
}

/// Maximum absolute discrepancy between `h_{(Q),k}(x)` and its rescaled
/// form `2^{-nd/2} h_{(Q_0),k}(2^{-n} x - j)` over the sample points.
pub fn self_similarity_check(index: &HaarIndex, sample_points: &[Vec<f64>]) -> f64 {
    let cube = index.cube();
    let d = cube.dim();
    let n = cube.scale();
    let reference = HaarIndex {
        cube: DyadicCube::unit(d),
        k: index.k,
    };
    let factor = pow2_half(-(n as i64) * d as i64);
    let inv_side = pow2(-n);
    let mut worst = 0.0f64;
    for x in sample_points {
        let lhs = index.eval(x);
        let y: Vec<f64> = (0..d)
            .map(|i| inv_side * x[i] - cube.corner()[i] as f64)
            .collect();
        let rhs = reference.eval_unnormalized(&y);
        let rhs = if rhs == 0.0 { 0.0 } else { factor * rhs };
        worst = worst.max((lhs - rhs).abs());
    }
    worst
}

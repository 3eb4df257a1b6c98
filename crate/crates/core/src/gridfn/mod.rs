//! Piecewise-constant functions on a uniform dyadic mesh.
//!
//! A [`Mesh`] fixes the dimension, the resolution `J` (cells of side `2^-J`)
//! and an axis-aligned window with dyadic corners. A [`GridFunction`] stores
//! dense values only on a bounding [`CellBox`] of its support; every cell
//! outside that box, and everything outside the window, is zero. Functions
//! combine only when their meshes are equal.

mod io;
mod mollify;
mod perturb;
mod tv;

pub use io::GridHeader;
pub use mollify::{GridKernel, MollifierKind, MollifierSpec};

use serde::{Deserialize, Serialize};

use crate::dyadic::{pow2, DyadicCube, HaarIndex};
use crate::{Error, Result, Scalar};

/// Uniform mesh of cells `∏ [c_i 2^-J, (c_i + 1) 2^-J)` over a window.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mesh {
    dim: usize,
    resolution: i32,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl Mesh {
    /// Window `∏ [lo_i, hi_i)`; every corner must be a multiple of `2^-J`.
    pub fn new(dim: usize, resolution: i32, window_lo: &[f64], window_hi: &[f64]) -> Result<Self> {
        if dim == 0 || window_lo.len() != dim || window_hi.len() != dim {
            return Err(Error::Domain(
                "window corners must have length dim > 0".into(),
            ));
        }
        if resolution.abs() > 40 {
            return Err(Error::Domain(format!(
                "resolution {resolution} outside ±40"
            )));
        }
        let to_cells = |x: f64| -> Result<i64> {
            let c = x * pow2(resolution);
            if c.fract() != 0.0 || !c.is_finite() {
                return Err(Error::Alignment(format!(
                    "window corner {x} is not a multiple of 2^-{resolution}"
                )));
            }
            Ok(c as i64)
        };
        let lo = window_lo
            .iter()
            .map(|&x| to_cells(x))
            .collect::<Result<Vec<_>>>()?;
        let hi = window_hi
            .iter()
            .map(|&x| to_cells(x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_cells(dim, resolution, lo, hi)
    }

    pub fn from_cells(dim: usize, resolution: i32, lo: Vec<i64>, hi: Vec<i64>) -> Result<Self> {
        if lo.len() != dim || hi.len() != dim || lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(Error::Domain("window must be a nonempty box".into()));
        }
        Ok(Self {
            dim,
            resolution,
            lo,
            hi,
        })
    }

    /// Window `[-1, 2)^d`.
    pub fn with_default_window(dim: usize, resolution: i32) -> Result<Self> {
        Self::new(dim, resolution, &vec![-1.0; dim], &vec![2.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> i32 {
        self.resolution
    }

    pub fn cell_size(&self) -> f64 {
        pow2(-self.resolution)
    }

    pub fn cell_volume(&self) -> f64 {
        pow2(-self.resolution * self.dim as i32)
    }

    pub fn window(&self) -> CellBox {
        CellBox::new(self.lo.clone(), self.hi.clone())
    }

    pub fn window_lo(&self) -> Vec<f64> {
        self.lo
            .iter()
            .map(|&c| c as f64 * self.cell_size())
            .collect()
    }

    pub fn window_hi(&self) -> Vec<f64> {
        self.hi
            .iter()
            .map(|&c| c as f64 * self.cell_size())
            .collect()
    }

    /// Absolute index of the cell containing `x` (half-open convention).
    pub fn cell_of(&self, x: &[f64]) -> Vec<i64> {
        let scale = pow2(self.resolution);
        x.iter().map(|&v| (v * scale).floor() as i64).collect()
    }

    pub fn midpoint(&self, cell: &[i64]) -> Vec<f64> {
        let h = self.cell_size();
        cell.iter().map(|&c| (c as f64 + 0.5) * h).collect()
    }

    /// Cells covering a dyadic cube, provided the cube is mesh-aligned.
    pub fn cube_cells(&self, cube: &DyadicCube) -> Result<CellBox> {
        let shift = cube.scale() + self.resolution;
        if shift < 0 {
            return Err(Error::Alignment(format!(
                "cube {cube} is finer than the mesh 2^-{}",
                self.resolution
            )));
        }
        let per = 1i64 << shift;
        let lo: Vec<i64> = cube.corner().iter().map(|&c| c * per).collect();
        let hi: Vec<i64> = lo.iter().map(|&c| c + per).collect();
        Ok(CellBox::new(lo, hi))
    }

    pub(crate) fn check_inside(&self, what: impl FnOnce() -> String, b: &CellBox) -> Result<()> {
        if b.is_empty() || self.window().contains_box(b) {
            Ok(())
        } else {
            Err(Error::WindowOverflow {
                what: what(),
                needed_lo: b.lo.clone(),
                needed_hi: b.hi.clone(),
                window_lo: self.lo.clone(),
                window_hi: self.hi.clone(),
            })
        }
    }
}

/// Half-open box of absolute cell indices `∏ [lo_i, hi_i)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl CellBox {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            lo: vec![0; dim],
            hi: vec![0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(a, b)| a >= b)
    }

    pub fn extent(&self, axis: usize) -> usize {
        (self.hi[axis] - self.lo[axis]).max(0) as usize
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (0..self.dim()).map(|i| self.extent(i)).product()
        }
    }

    pub fn contains(&self, cell: &[i64]) -> bool {
        cell.iter()
            .enumerate()
            .all(|(i, &c)| c >= self.lo[i] && c < self.hi[i])
    }

    pub fn contains_box(&self, other: &CellBox) -> bool {
        other.is_empty()
            || (0..self.dim()).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn intersect(&self, other: &CellBox) -> CellBox {
        CellBox {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(a, b)| *a.max(b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(a, b)| *a.min(b))
                .collect(),
        }
    }

    pub fn intersects(&self, other: &CellBox) -> bool {
        !self.intersect(other).is_empty()
    }

    /// Smallest box containing both; empty boxes are ignored.
    pub fn hull(&self, other: &CellBox) -> CellBox {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        CellBox {
            lo: self
                .lo
                .iter()
                .zip(&other.lo)
                .map(|(a, b)| *a.min(b))
                .collect(),
            hi: self
                .hi
                .iter()
                .zip(&other.hi)
                .map(|(a, b)| *a.max(b))
                .collect(),
        }
    }

    pub fn expand(&self, r: i64) -> CellBox {
        CellBox {
            lo: self.lo.iter().map(|c| c - r).collect(),
            hi: self.hi.iter().map(|c| c + r).collect(),
        }
    }

    /// Row-major strides (last axis contiguous).
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.extent(i + 1);
        }
        s
    }

    /// Linear offset of an absolute cell index known to lie in the box.
    pub fn offset(&self, cell: &[i64]) -> usize {
        let strides = self.strides();
        cell.iter()
            .enumerate()
            .map(|(i, &c)| (c - self.lo[i]) as usize * strides[i])
            .sum()
    }

    /// Visits every row along the last axis: `f(start_cell, row_len)`.
    pub fn for_each_row(&self, mut f: impl FnMut(&[i64], usize)) {
        if self.is_empty() {
            return;
        }
        let d = self.dim();
        let row_len = self.extent(d - 1);
        let mut idx = self.lo.clone();
        loop {
            f(&idx, row_len);
            let mut axis = d - 1;
            loop {
                if axis == 0 {
                    return;
                }
                axis -= 1;
                idx[axis] += 1;
                if idx[axis] < self.hi[axis] {
                    break;
                }
                idx[axis] = self.lo[axis];
            }
        }
    }

    /// Visits every cell in row-major order.
    pub fn for_each_cell(&self, mut f: impl FnMut(&[i64])) {
        let d = self.dim();
        let mut cell = vec![0i64; d];
        self.for_each_row(|start, len| {
            cell.copy_from_slice(start);
            for t in 0..len as i64 {
                cell[d - 1] = start[d - 1] + t;
                f(&cell);
            }
        });
    }
}

/// Piecewise-constant function on a [`Mesh`], dense on its support box.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T = f64> {
    mesh: Mesh,
    bbox: CellBox,
    values: Vec<T>,
}

impl<T: Scalar> GridFunction<T> {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            mesh: mesh.clone(),
            bbox: CellBox::empty(mesh.dim()),
            values: Vec::new(),
        }
    }

    /// Dense values on `bbox` in row-major order.
    pub fn from_values(mesh: &Mesh, bbox: CellBox, values: Vec<T>) -> Result<Self> {
        if bbox.dim() != mesh.dim() {
            return Err(Error::MeshMismatch(
                "support box dimension differs from mesh".into(),
            ));
        }
        if values.len() != bbox.len() {
            return Err(Error::LengthMismatch {
                expected: bbox.len(),
                got: values.len(),
            });
        }
        mesh.check_inside(|| "grid function support".into(), &bbox)?;
        let bbox = if bbox.is_empty() {
            CellBox::empty(mesh.dim())
        } else {
            bbox
        };
        Ok(Self {
            mesh: mesh.clone(),
            bbox,
            values,
        })
    }

    /// Samples `f` at the midpoint of every cell of `bbox`.
    pub fn from_midpoints(mesh: &Mesh, bbox: CellBox, f: impl Fn(&[f64]) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(bbox.len());
        bbox.for_each_cell(|c| values.push(f(&mesh.midpoint(c))));
        Self::from_values(mesh, bbox, values)
    }

    /// Exact representation of `h_{(Q),k}`; requires `2^-J` to divide `ℓ(Q)/2`.
    pub fn from_haar(index: &HaarIndex, mesh: &Mesh) -> Result<Self> {
        let bbox = haar_cells(index, mesh)?;
        Self::from_midpoints(mesh, bbox, |x| T::from_real(index.eval(x)))
    }

    /// Unnormalized `h^{(Q),k}` with values in `{-1, 0, 1}`.
    pub fn from_haar_unnormalized(index: &HaarIndex, mesh: &Mesh) -> Result<Self> {
        let bbox = haar_cells(index, mesh)?;
        Self::from_midpoints(mesh, bbox, |x| T::from_real(index.eval_unnormalized(x)))
    }

    /// `χ_Q` for a mesh-aligned cube.
    pub fn indicator(cube: &DyadicCube, mesh: &Mesh) -> Result<Self> {
        let bbox = mesh.cube_cells(cube)?;
        mesh.check_inside(|| format!("indicator of {cube}"), &bbox)?;
        let n = bbox.len();
        Self::from_values(mesh, bbox, vec![T::from_real(1.0); n])
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn support_box(&self) -> &CellBox {
        &self.bbox
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value_at_cell(&self, cell: &[i64]) -> T {
        if self.bbox.contains(cell) {
            self.values[self.bbox.offset(cell)]
        } else {
            T::zero()
        }
    }

    /// Value at an arbitrary point, by cell lookup.
    pub fn value_at_point(&self, x: &[f64]) -> T {
        self.value_at_cell(&self.mesh.cell_of(x))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            mesh: self.mesh.clone(),
            bbox: self.bbox.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// `∫ f dx`.
    pub fn integral(&self) -> T {
        let mut s = T::zero();
        for &v in &self.values {
            s += v;
        }
        s.scale(self.mesh.cell_volume())
    }

    fn check_mesh(&self, other: &Self) -> Result<()> {
        if self.mesh == other.mesh {
            Ok(())
        } else {
            Err(Error::MeshMismatch(format!(
                "{:?} vs {:?}",
                self.mesh, other.mesh
            )))
        }
    }

    /// `⟨f, g⟩ = ∫ f ḡ dx`, summed over the overlap of the support boxes.
    pub fn inner_product(&self, other: &Self) -> Result<T> {
        self.check_mesh(other)?;
        Ok(self.inner_product_unchecked(other))
    }

    pub(crate) fn inner_product_unchecked(&self, other: &Self) -> T {
        let inter = self.bbox.intersect(&other.bbox);
        if inter.is_empty() {
            return T::zero();
        }
        let (sa, sb) = (self.bbox.strides(), other.bbox.strides());
        let mut total = T::zero();
        inter.for_each_row(|start, len| {
            let oa = offset_with(&self.bbox, &sa, start);
            let ob = offset_with(&other.bbox, &sb, start);
            let (ra, rb) = (&self.values[oa..oa + len], &other.values[ob..ob + len]);
            let mut row = T::zero();
            for (a, b) in ra.iter().zip(rb) {
                row += *a * b.conj();
            }
            total += row;
        });
        total.scale(self.mesh.cell_volume())
    }

    pub fn l2_norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.mesh.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sqr().sqrt()
    }

    /// `self + c·other` on the hull of both supports.
    pub fn axpy(&self, c: T, other: &Self) -> Result<Self> {
        self.check_mesh(other)?;
        let hull = self.bbox.hull(&other.bbox);
        let mut out = Self {
            mesh: self.mesh.clone(),
            bbox: hull.clone(),
            values: vec![T::zero(); hull.len()],
        };
        out.accumulate(T::from_real(1.0), self);
        out.accumulate(c, other);
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(T::from_real(1.0), other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(T::from_real(-1.0), other)
    }

    /// `self += c·other`; `other`'s support must lie in `self`'s box.
    pub(crate) fn accumulate(&mut self, c: T, other: &Self) {
        if other.bbox.is_empty() {
            return;
        }
        debug_assert!(self.bbox.contains_box(&other.bbox));
        let (so, sd) = (other.bbox.strides(), self.bbox.strides());
        let mut src = 0usize;
        other.bbox.for_each_row(|start, len| {
            let dst = offset_with(&self.bbox, &sd, start);
            let _ = &so;
            for t in 0..len {
                self.values[dst + t] += c * other.values[src + t];
            }
            src += len;
        });
    }

    /// `Σ c_i f_i` over functions sharing one mesh.
    pub fn linear_combination(mesh: &Mesh, terms: &[(T, &Self)]) -> Result<Self> {
        let mut hull = CellBox::empty(mesh.dim());
        for (c, f) in terms {
            if f.mesh != *mesh {
                return Err(Error::MeshMismatch(
                    "linear combination across meshes".into(),
                ));
            }
            if !c.is_zero() {
                hull = hull.hull(&f.bbox);
            }
        }
        let mut out = Self {
            mesh: mesh.clone(),
            bbox: hull.clone(),
            values: vec![T::zero(); hull.len()],
        };
        for (c, f) in terms {
            if !c.is_zero() {
                out.accumulate(*c, f);
            }
        }
        Ok(out.trimmed())
    }

    /// Shrinks the support box to the nonzero cells.
    pub fn trimmed(&self) -> Self {
        let d = self.dim();
        let mut lo = vec![i64::MAX; d];
        let mut hi = vec![i64::MIN; d];
        let mut i = 0usize;
        self.bbox.for_each_cell(|c| {
            if !self.values[i].is_zero() {
                for a in 0..d {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a] + 1);
                }
            }
            i += 1;
        });
        if lo[0] == i64::MAX {
            return Self::zeros(&self.mesh);
        }
        let nb = CellBox::new(lo, hi);
        if nb == self.bbox {
            return self.clone();
        }
        let mut values = Vec::with_capacity(nb.len());
        let strides = self.bbox.strides();
        nb.for_each_row(|start, len| {
            let o = offset_with(&self.bbox, &strides, start);
            values.extend_from_slice(&self.values[o..o + len]);
        });
        Self {
            mesh: self.mesh.clone(),
            bbox: nb,
            values,
        }
    }

    /// Largest absolute cell value.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute pointwise difference over the whole window.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// Real-valued copy, discarding imaginary parts.
    pub fn to_real(&self) -> GridFunction<f64> {
        GridFunction {
            mesh: self.mesh.clone(),
            bbox: self.bbox.clone(),
            values: self.values.iter().map(|v| v.re()).collect(),
        }
    }

    /// Iterates `(cell, value)` over the stored box.
    pub fn for_each_value(&self, mut f: impl FnMut(&[i64], T)) {
        let mut i = 0usize;
        self.bbox.for_each_cell(|c| {
            f(c, self.values[i]);
            i += 1;
        });
    }
}

impl GridFunction<f64> {
    pub fn to_complex(&self) -> GridFunction<num_complex::Complex64> {
        GridFunction {
            mesh: self.mesh.clone(),
            bbox: self.bbox.clone(),
            values: self
                .values
                .iter()
                .map(|&v| num_complex::Complex64::new(v, 0.0))
                .collect(),
        }
    }
}

fn haar_cells(index: &HaarIndex, mesh: &Mesh) -> Result<CellBox> {
    let cube = index.cube();
    if cube.dim() != mesh.dim() {
        return Err(Error::MeshMismatch(format!(
            "Haar index of dimension {} on a {}-dimensional mesh",
            cube.dim(),
            mesh.dim()
        )));
    }
    if cube.scale() - 1 + mesh.resolution() < 0 {
        return Err(Error::Alignment(format!(
            "Haar breakpoints of {cube} are not on the 2^-{} mesh",
            mesh.resolution()
        )));
    }
    let bbox = mesh.cube_cells(cube)?;
    mesh.check_inside(|| format!("Haar function on {cube}"), &bbox)?;
    Ok(bbox)
}

pub(crate) fn offset_with(b: &CellBox, strides: &[usize], cell: &[i64]) -> usize {
    cell.iter()
        .enumerate()
        .map(|(i, &c)| (c - b.lo[i]) as usize * strides[i])
        .sum()
}

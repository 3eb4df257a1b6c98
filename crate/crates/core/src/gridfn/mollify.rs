use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{offset_with, CellBox, GridFunction, Mesh};
use crate::dyadic::pow2;
use crate::{Error, Result, Scalar};

/// Grid kernel weights are rounded to multiples of `2^-WEIGHT_BITS`.
pub const WEIGHT_BITS: i32 = 40;

/// Shape of a mollifier on `[-1, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MollifierKind {
    /// `χ_{[-1,1]^d}`.
    Box,
    /// `(1 − ‖u‖∞²)₊`.
    Bump,
    /// `n^d` samples on equal sub-boxes of `[-1, 1]^d`, row-major.
    Table {
        dim: usize,
        n: usize,
        values: Vec<f64>,
    },
}

/// Nonnegative mollifier supported in `[-1, 1]^d`; unit mass is enforced
/// when the kernel is sampled on a mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifierSpec {
    #[serde(flatten)]
    kind: MollifierKind,
}

impl MollifierSpec {
    pub fn box_kernel() -> Self {
        Self {
            kind: MollifierKind::Box,
        }
    }

    pub fn bump() -> Self {
        Self {
            kind: MollifierKind::Bump,
        }
    }

    pub fn from_table(dim: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || n == 0 {
            return Err(Error::Domain("sample table needs dim ≥ 1 and n ≥ 1".into()));
        }
        let expected = n.pow(dim as u32);
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "kernel sample {v} is not a nonnegative number"
            )));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain("kernel table has zero mass".into()));
        }
        Ok(Self {
            kind: MollifierKind::Table { dim, n, values },
        })
    }

    /// Reads a headerless CSV of nonnegative samples; the total count must be
    /// `n^dim` for some `n`. Rows are concatenated in file order.
    pub fn from_csv_table<R: Read>(reader: R, dim: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for field in rec.iter().filter(|f| !f.is_empty()) {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!(
                        "kernel table line {}: bad number {field:?}",
                        line + 1
                    ))
                })?;
                values.push(v);
            }
        }
        if dim == 0 {
            return Err(Error::Domain("dim must be positive".into()));
        }
        let n = (values.len() as f64).powf(1.0 / dim as f64).round() as usize;
        if n.pow(dim as u32) != values.len() {
            return Err(Error::Parse(format!(
                "kernel table has {} samples, not a perfect {dim}-th power",
                values.len()
            )));
        }
        Self::from_table(dim, n, values)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        Self::from_csv_table(std::fs::File::open(path)?, dim)
    }

    pub fn kind(&self) -> &MollifierKind {
        &self.kind
    }

    /// Unnormalized density at `u`; zero outside `[-1, 1]^d`.
    pub fn density(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| v.abs() > 1.0) {
            return 0.0;
        }
        match &self.kind {
            MollifierKind::Box => 1.0,
            MollifierKind::Bump => {
                let m = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (1.0 - m * m).max(0.0)
            }
            MollifierKind::Table { n, values, .. } => {
                let n = *n;
                let mut idx = 0usize;
                for &v in u {
                    let i = (((v + 1.0) * 0.5 * n as f64).floor() as usize).min(n - 1);
                    idx = idx * n + i;
                }
                values[idx]
            }
        }
    }

    /// Cell weights of `ψ_δ` on `mesh`: the mass of `ψ_δ` over each offset
    /// cell `∏ [(m_i − ½)h, (m_i + ½)h)`, renormalized to sum 1 and rounded
    /// to multiples of `2^-WEIGHT_BITS`.
    pub fn kernel(&self, mesh: &Mesh, delta: f64) -> Result<GridKernel> {
        let d = mesh.dim();
        if let MollifierKind::Table { dim, .. } = &self.kind {
            if *dim != d {
                return Err(Error::MeshMismatch(format!(
                    "{dim}-dimensional kernel table on a {d}-dimensional mesh"
                )));
            }
        }
        let r = delta * pow2(mesh.resolution());
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::Resolution(format!(
                "kernel width {delta} is below the cell size 2^-{}",
                mesh.resolution()
            )));
        }
        let radius = (r - 0.5).ceil() as i64;
        let side = (2 * radius + 1) as usize;
        let len = side.pow(d as u32);
        let mut weights = vec![0.0; len];

        match &self.kind {
            MollifierKind::Box => {
                let w1: Vec<f64> = (-radius..=radius)
                    .map(|m| {
                        let m = m as f64;
                        ((m + 0.5).min(r) - (m - 0.5).max(-r)).max(0.0) / (2.0 * r)
                    })
                    .collect();
                for (flat, w) in weights.iter_mut().enumerate() {
                    let mut rem = flat;
                    let mut prod = 1.0;
                    for _ in 0..d {
                        prod *= w1[rem % side];
                        rem /= side;
                    }
                    *w = prod;
                }
            }
            _ => {
                let q: usize = match d {
                    1 => 32,
                    2 => 8,
                    _ => 4,
                };
                let mut u = vec![0.0; d];
                for (flat, w) in weights.iter_mut().enumerate() {
                    let mut m = vec![0i64; d];
                    let mut rem = flat;
                    for i in (0..d).rev() {
                        m[i] = (rem % side) as i64 - radius;
                        rem /= side;
                    }
                    let mut acc = 0.0;
                    for sub in 0..q.pow(d as u32) {
                        let mut s = sub;
                        for i in (0..d).rev() {
                            let frac = ((s % q) as f64 + 0.5) / q as f64;
                            u[i] = (m[i] as f64 - 0.5 + frac) / r;
                            s /= q;
                        }
                        acc += self.density(&u);
                    }
                    *w = acc;
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Resolution(format!(
                "kernel of width {delta} has no mass on the mesh"
            )));
        }
        // Multiples of 2^-40 summing to exactly 1: sums of weights over
        // ±1 patterns are then exact, so constants are reproduced bitwise.
        let quantum = pow2(WEIGHT_BITS);
        for w in &mut weights {
            *w = (*w / total * quantum).round() / quantum;
        }
        let residual = 1.0 - weights.iter().sum::<f64>();
        let heaviest = (0..len)
            .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
            .expect("kernel has at least one cell");
        weights[heaviest] += residual;
        Ok(GridKernel {
            dim: d,
            radius,
            weights,
        })
    }
}

/// Discrete kernel on offsets `[-radius, radius]^d`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GridKernel {
    dim: usize,
    radius: i64,
    weights: Vec<f64>,
}

impl GridKernel {
    pub fn radius(&self) -> i64 {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offsets(&self) -> CellBox {
        CellBox::new(
            vec![-self.radius; self.dim],
            vec![self.radius + 1; self.dim],
        )
    }

    pub fn weight(&self, offset: &[i64]) -> f64 {
        let b = self.offsets();
        if b.contains(offset) {
            self.weights[b.offset(offset)]
        } else {
            0.0
        }
    }
}

impl<T: Scalar> GridFunction<T> {
    /// Discrete convolution with the grid-sampled `ψ_δ`.
    pub fn mollify(&self, psi: &MollifierSpec, delta: f64) -> Result<Self> {
        let kernel = psi.kernel(&self.mesh, delta)?;
        self.convolve(&kernel)
    }

    pub fn convolve(&self, kernel: &GridKernel) -> Result<Self> {
        if kernel.dim != self.dim() {
            return Err(Error::MeshMismatch(
                "kernel dimension differs from mesh".into(),
            ));
        }
        if self.bbox.is_empty() {
            return Ok(Self::zeros(&self.mesh));
        }
        let out_box = self.bbox.expand(kernel.radius);
        self.mesh
            .check_inside(|| "mollified function support".into(), &out_box)?;
        let mut out = vec![T::zero(); out_box.len()];
        let out_strides = out_box.strides();
        let d = self.dim();
        let mut shifted = vec![0i64; d];
        let mut k = 0usize;
        kernel.offsets().for_each_cell(|m| {
            let w = kernel.weights[k];
            k += 1;
            if w == 0.0 {
                return;
            }
            let mut src = 0usize;
            self.bbox.for_each_row(|start, len| {
                for i in 0..d {
                    shifted[i] = start[i] + m[i];
                }
                let dst = offset_with(&out_box, &out_strides, &shifted);
                for t in 0..len {
                    out[dst + t] += self.values[src + t].scale(w);
                }
                src += len;
            });
        });
        Ok(Self {
            mesh: self.mesh.clone(),
            bbox: out_box,
            values: out,
        }
        .trimmed())
    }
}

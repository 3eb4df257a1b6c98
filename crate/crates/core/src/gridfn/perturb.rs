use super::{offset_with, CellBox, GridFunction};
use crate::affine::AffinePerturbation;
use crate::dyadic::{pow2, DyadicCube};
use crate::{Error, Result, Scalar};

impl<T: Scalar> GridFunction<T> {
    /// `x ↦ f(x_Q + A(ℓ(Q)y + x − x_Q))`, sampled at cell midpoints.
    ///
    /// The output box covers every cell whose midpoint can land in the
    /// support of `f`; it must fit in the window.
    pub fn perturb(&self, cube: &DyadicCube, p: &AffinePerturbation) -> Result<Self> {
        let d = self.dim();
        if cube.dim() != d || p.dim() != d {
            return Err(Error::MeshMismatch(format!(
                "perturbation of dimension {} and cube {cube} on a {d}-dimensional mesh",
                p.dim()
            )));
        }
        if self.bbox.is_empty() {
            return Ok(Self::zeros(&self.mesh));
        }
        if p.is_identity() {
            return Ok(self.clone());
        }

        let h = self.mesh.cell_size();
        let inv_h = pow2(self.mesh.resolution());
        let (mut pre_lo, mut pre_hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
        let mut corner = vec![0.0; d];
        for bits in 0u32..(1 << d) {
            for i in 0..d {
                let c = if bits >> i & 1 == 1 {
                    self.bbox.hi[i]
                } else {
                    self.bbox.lo[i]
                };
                corner[i] = c as f64 * h;
            }
            let x = p.apply_inverse(cube, &corner)?;
            for i in 0..d {
                pre_lo[i] = pre_lo[i].min(x[i]);
                pre_hi[i] = pre_hi[i].max(x[i]);
            }
        }
        // Cells c with midpoint (c + ½)h inside the preimage hull.
        let strict = CellBox::new(
            pre_lo
                .iter()
                .map(|&v| (v * inv_h - 0.5).ceil() as i64)
                .collect(),
            pre_hi
                .iter()
                .map(|&v| (v * inv_h - 0.5).floor() as i64 + 1)
                .collect(),
        );
        self.mesh.check_inside(
            || format!("perturbation of the function attached to {cube}"),
            &strict,
        )?;
        let out_box = strict.expand(1).intersect(&self.mesh.window());

        let a = p.matrix();
        let center = cube.center();
        let shift: Vec<f64> = (0..d)
            .map(|i| cube.side() * p.translation()[i] - center[i])
            .collect();
        let src_strides = self.bbox.strides();
        let mut values = Vec::with_capacity(out_box.len());
        let mut z = vec![0.0; d];
        let mut target = vec![0i64; d];
        out_box.for_each_cell(|cell| {
            for i in 0..d {
                z[i] = shift[i] + (cell[i] as f64 + 0.5) * h;
            }
            let mut inside = true;
            for i in 0..d {
                let row = a.row(i);
                let mut s = 0.0;
                for j in 0..d {
                    s += row[j] * z[j];
                }
                let c = ((center[i] + s) * inv_h).floor() as i64;
                if c < self.bbox.lo[i] || c >= self.bbox.hi[i] {
                    inside = false;
                    break;
                }
                target[i] = c;
            }
            values.push(if inside {
                self.values[offset_with(&self.bbox, &src_strides, &target)]
            } else {
                T::zero()
            });
        });
        Ok(Self {
            mesh: self.mesh.clone(),
            bbox: out_box,
            values,
        }
        .trimmed())
    }
}

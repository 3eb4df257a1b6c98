use super::{CellBox, GridFunction};
use crate::Scalar;

impl<T: Scalar> GridFunction<T> {
    /// Variation along the axis-parallel line through the cells whose other
    /// coordinates are `offset` (absolute indices, axes in increasing order
    /// with `axis` skipped). Jumps into and out of the support are counted.
    pub fn axis_tv(&self, axis: usize, offset: &[i64]) -> f64 {
        let d = self.dim();
        assert!(axis < d && offset.len() + 1 == d, "axis/offset shape");
        if self.bbox.is_empty() {
            return 0.0;
        }
        let mut cell = Vec::with_capacity(d);
        cell.extend_from_slice(&offset[..axis]);
        cell.push(self.bbox.lo[axis]);
        cell.extend_from_slice(&offset[axis..]);
        if !self.bbox.contains(&cell) {
            return 0.0;
        }
        let base = self.bbox.offset(&cell);
        let stride = self.bbox.strides()[axis];
        line_variation((0..self.bbox.extent(axis)).map(|t| self.values[base + t * stride]))
    }

    /// Largest [`axis_tv`](Self::axis_tv) over every axis-parallel line.
    pub fn max_axis_tv(&self) -> f64 {
        if self.bbox.is_empty() {
            return 0.0;
        }
        let strides = self.bbox.strides();
        let mut best = 0.0f64;
        for axis in 0..self.dim() {
            let mut face = self.bbox.clone();
            face.hi[axis] = face.lo[axis] + 1;
            let n = self.bbox.extent(axis);
            face.for_each_cell(|c| {
                let base = self.bbox.offset(c);
                let tv = line_variation((0..n).map(|t| self.values[base + t * strides[axis]]));
                best = best.max(tv);
            });
        }
        best
    }

    /// Variation of `t ↦ f(y + t v)` sampled every `step`, over the part of
    /// the line meeting the support box plus one step on either side.
    ///
    /// A lower bound for the true variation; exact once `step` resolves
    /// every cell crossing.
    pub fn line_tv(&self, direction: &[f64], base: &[f64], step: f64) -> f64 {
        let d = self.dim();
        assert!(direction.len() == d && base.len() == d, "line dimension");
        assert!(
            direction.iter().any(|&v| v != 0.0),
            "direction must be nonzero"
        );
        assert!(step > 0.0 && step.is_finite(), "step must be positive");
        let Some((t0, t1)) = clip_line(&self.bbox, self.mesh.cell_size(), direction, base) else {
            return 0.0;
        };
        let n = ((t1 - t0) / step).ceil() as usize + 2;
        let mut x = vec![0.0; d];
        line_variation((0..=n).map(|i| {
            let t = t0 - step + i as f64 * step;
            for k in 0..d {
                x[k] = base[k] + t * direction[k];
            }
            self.value_at_point(&x)
        }))
    }
}

/// Variation of a finite sequence padded with zeros at both ends.
fn line_variation<T: Scalar>(values: impl Iterator<Item = T>) -> f64 {
    let mut prev = T::zero();
    let mut tv = 0.0;
    for v in values {
        tv += (v - prev).abs();
        prev = v;
    }
    tv + prev.abs()
}

/// Parameter interval where `y + t v` lies in the closed hull of the box.
fn clip_line(b: &CellBox, h: f64, v: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if b.is_empty() {
        return None;
    }
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..v.len() {
        let (lo, hi) = (b.lo[i] as f64 * h, b.hi[i] as f64 * h);
        if v[i] == 0.0 {
            if y[i] < lo || y[i] >= hi {
                return None;
            }
        } else {
            let (a, c) = ((lo - y[i]) / v[i], (hi - y[i]) / v[i]);
            t0 = t0.max(a.min(c));
            t1 = t1.min(a.max(c));
        }
    }
    (t0 <= t1).then_some((t0, t1))
}

#[cfg(test)]
mod tests {
    use crate::dyadic::{DyadicCube, HaarIndex};
    use crate::gridfn::{GridFunction, Mesh};

    fn unnormalized(idx: &HaarIndex, mesh: &Mesh) -> GridFunction {
        GridFunction::from_haar_unnormalized(idx, mesh).unwrap()
    }

    #[test]
    fn haar_axis_variation_is_four() {
        let mesh = Mesh::with_default_window(1, 4).unwrap();
        let h = HaarIndex::new(DyadicCube::unit(1), 1).unwrap();
        assert_eq!(unnormalized(&h, &mesh).axis_tv(0, &[]), 4.0);
        assert_eq!(unnormalized(&h, &mesh).max_axis_tv(), 4.0);
    }

    #[test]
    fn indicator_and_zero() {
        let mesh = Mesh::with_default_window(1, 4).unwrap();
        let chi = GridFunction::<f64>::indicator(&DyadicCube::unit(1), &mesh).unwrap();
        assert_eq!(chi.axis_tv(0, &[]), 2.0);
        assert_eq!(GridFunction::<f64>::zeros(&mesh).axis_tv(0, &[]), 0.0);
        assert_eq!(
            GridFunction::<f64>::zeros(&mesh).line_tv(&[1.0], &[0.0], 0.01),
            0.0
        );
    }

    #[test]
    fn axis_line_matches_sampled_line() {
        let mesh = Mesh::with_default_window(2, 3).unwrap();
        let idx = HaarIndex::new(DyadicCube::unit(2), 3).unwrap();
        let f = unnormalized(&idx, &mesh);
        for row in 0..8i64 {
            let y = (row as f64 + 0.5) / 8.0;
            let sampled = f.line_tv(&[1.0, 0.0], &[0.0, y], 1.0 / 32.0);
            assert_eq!(sampled, f.axis_tv(0, &[row]));
            let sampled = f.line_tv(&[0.0, 1.0], &[y, 0.0], 1.0 / 32.0);
            assert_eq!(sampled, f.axis_tv(1, &[row]));
        }
        assert_eq!(f.axis_tv(0, &[20]), 0.0);
    }
}

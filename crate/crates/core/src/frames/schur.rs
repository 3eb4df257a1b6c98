use std::collections::HashMap;

use rayon::prelude::*;

use super::gram::overlapping_pairs;
use super::FamilySpec;
use crate::dyadic::{enumerate_window, pow2_half, DyadicCube};
use crate::gridfn::{CellBox, GridFunction, Mesh};
use crate::{Error, Result, Scalar};

impl<T: Scalar> FamilySpec<T> {
    /// `(max row sum)·(max column sum)` of `M(i, j) = |⟨ψ_i, e_j⟩|` against an
    /// orthonormal `reference` whose span contains every member.
    pub fn schur_diagnostic(&self, reference: &FamilySpec<T>) -> Result<f64> {
        if self.is_empty() || reference.is_empty() {
            return Err(Error::Domain("Schur diagnostic of an empty family".into()));
        }
        if self.mesh() != reference.mesh() {
            return Err(Error::MeshMismatch(
                "family and reference meshes differ".into(),
            ));
        }
        let a: Vec<&CellBox> = self.members().iter().map(|m| m.support_box()).collect();
        let b: Vec<&CellBox> = reference
            .members()
            .iter()
            .map(|m| m.support_box())
            .collect();
        let pairs = overlapping_pairs(&a, &b, false);
        let (fm, rm) = (self.members(), reference.members());
        let entries: Vec<(usize, usize, f64)> = pairs
            .par_iter()
            .map(|&(i, j)| (i, j, fm[i].inner_product_unchecked(&rm[j]).abs()))
            .collect();
        let mut rows = vec![0.0; self.len()];
        let mut cols = vec![0.0; reference.len()];
        for (i, j, v) in entries {
            rows[i] += v;
            cols[j] += v;
        }
        Ok(max(&rows) * max(&cols))
    }

    /// [`schur_diagnostic`](Self::schur_diagnostic) against the complete
    /// orthonormal basis of the mesh (see [`complete_haar_basis`]), with the
    /// coefficients computed by a local Haar pyramid instead of explicit
    /// inner products.
    pub fn schur_diagnostic_haar(&self) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::Domain("Schur diagnostic of an empty family".into()));
        }
        let mesh = self.mesh().expect("nonempty family has a mesh");
        let top = tile_exponent(mesh);
        let per_member: Vec<(f64, Vec<(Key, f64)>)> = self
            .members()
            .par_iter()
            .map(|f| {
                let coefs = pyramid(f, top);
                (coefs.iter().map(|c| c.1).sum(), coefs)
            })
            .collect();
        let mut cols: HashMap<Key, f64> = HashMap::new();
        let mut max_row = 0.0f64;
        for (row, coefs) in per_member {
            max_row = max_row.max(row);
            for (k, v) in coefs {
                *cols.entry(k).or_insert(0.0) += v;
            }
        }
        Ok(max_row * cols.values().copied().fold(0.0, f64::max))
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// (level in cells, block index, k); `k = 0` marks a top-level tile indicator.
type Key = (u32, Vec<i64>, u32);

/// Largest `m` such that tiles of `2^m` cells partition the window.
fn tile_exponent(mesh: &Mesh) -> u32 {
    let w = mesh.window();
    let mut m = 40u32;
    for i in 0..mesh.dim() {
        for c in [w.lo[i], w.hi[i]] {
            if c != 0 {
                m = m.min(c.trailing_zeros());
            }
        }
    }
    m
}

/// Absolute coefficients of `f` in the complete basis, zeros omitted.
fn pyramid<T: Scalar>(f: &GridFunction<T>, top: u32) -> Vec<(Key, f64)> {
    let d = f.dim();
    let mut out = Vec::new();
    if f.support_box().is_empty() {
        return out;
    }
    let cell_vol = f.mesh().cell_volume();
    let mut sbox = f.support_box().clone();
    let mut sums: Vec<T> = f.values().to_vec();
    for level in 0..top {
        let pbox = CellBox::new(
            sbox.lo.iter().map(|c| c.div_euclid(2)).collect(),
            sbox.hi.iter().map(|c| (c - 1).div_euclid(2) + 1).collect(),
        );
        let nkids = 1usize << d;
        let mut kids = vec![T::zero(); pbox.len() * nkids];
        let mut i = 0usize;
        sbox.for_each_cell(|c| {
            let parent: Vec<i64> = c.iter().map(|v| v.div_euclid(2)).collect();
            let bits = (0..d).fold(0usize, |b, a| b | ((c[a].rem_euclid(2) as usize) << a));
            kids[pbox.offset(&parent) * nkids + bits] += sums[i];
            i += 1;
        });
        // |Q|^{-1/2}·(cell volume) for a parent of 2^{level+1} cells per side.
        let norm = cell_vol * pow2_half(-(level as i64 + 1) * d as i64) / cell_vol.sqrt();
        let mut next = Vec::with_capacity(pbox.len());
        let mut p = 0usize;
        pbox.for_each_cell(|parent| {
            let group = &kids[p * nkids..(p + 1) * nkids];
            let mut total = T::zero();
            for &s in group {
                total += s;
            }
            next.push(total);
            for k in 1..nkids as u32 {
                let mut c = T::zero();
                for (bits, &s) in group.iter().enumerate() {
                    if (k & bits as u32).count_ones().is_multiple_of(2) {
                        c += s;
                    } else {
                        c += -s;
                    }
                }
                let v = c.abs() * norm;
                if v != 0.0 {
                    out.push(((level + 1, parent.to_vec(), k), v));
                }
            }
            p += 1;
        });
        sbox = pbox;
        sums = next;
    }
    let norm = cell_vol * pow2_half(-(top as i64) * d as i64) / cell_vol.sqrt();
    let mut i = 0usize;
    sbox.for_each_cell(|tile| {
        let v = sums[i].abs() * norm;
        if v != 0.0 {
            out.push(((top, tile.to_vec(), 0), v));
        }
        i += 1;
    });
    out
}

/// Orthonormal basis of all grid functions on the mesh window: normalized
/// indicators of the largest dyadic tiles partitioning the window, plus
/// every Haar function inside them down to the cell scale.
pub fn complete_haar_basis<T: Scalar>(mesh: &Mesh) -> Result<FamilySpec<T>> {
    let d = mesh.dim();
    let m = tile_exponent(mesh);
    let j = mesh.resolution();
    let tile_scale = m as i32 - j;
    let w = mesh.window();
    let tiles = CellBox::new(
        w.lo.iter().map(|c| c >> m).collect(),
        w.hi.iter().map(|c| c >> m).collect(),
    );
    let mut members = Vec::new();
    let mut labels = Vec::new();
    let mut corners = Vec::new();
    tiles.for_each_cell(|t| corners.push(t.to_vec()));
    for t in corners {
        let cube = DyadicCube::new(tile_scale, t)?;
        let chi = GridFunction::<T>::indicator(&cube, mesh)?;
        members.push(chi.scale(T::from_real(pow2_half(-(tile_scale as i64) * d as i64))));
        labels.push(None);
        if m > 0 {
            for idx in enumerate_window(d, tile_scale, 1 - j, &cube)? {
                members.push(GridFunction::from_haar(&idx, mesh)?);
                labels.push(Some(idx));
            }
        }
    }
    FamilySpec::with_labels(members, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::HaarIndex;

    #[test]
    fn complete_basis_is_orthonormal_and_spanning() {
        let mesh = Mesh::with_default_window(1, 3).unwrap();
        let basis = complete_haar_basis::<f64>(&mesh).unwrap();
        assert_eq!(basis.len(), 24);
        assert!(basis.gram_matrix().unwrap().max_deviation_from_identity() < 1e-14);
        let mesh2 = Mesh::with_default_window(2, 2).unwrap();
        assert_eq!(complete_haar_basis::<f64>(&mesh2).unwrap().len(), 144);
    }

    #[test]
    fn haar_family_gives_one() {
        let mesh = Mesh::with_default_window(2, 3).unwrap();
        let idx = enumerate_window(2, 0, -2, &DyadicCube::unit(2)).unwrap();
        let fam = FamilySpec::<f64>::haar(&idx, &mesh).unwrap();
        assert!((fam.schur_diagnostic(&fam).unwrap() - 1.0).abs() < 1e-14);
        assert!((fam.schur_diagnostic_haar().unwrap() - 1.0).abs() < 1e-14);
        let one = FamilySpec::<f64>::haar(&idx[..1], &mesh).unwrap();
        assert!((one.schur_diagnostic_haar().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pyramid_matches_explicit_reference() {
        let mesh = Mesh::with_default_window(2, 3).unwrap();
        let basis = complete_haar_basis::<f64>(&mesh).unwrap();
        let h = HaarIndex::new(DyadicCube::unit(2), 1).unwrap();
        let f = GridFunction::from_haar(&h, &mesh).unwrap();
        let g = GridFunction::from_midpoints(&mesh, CellBox::new(vec![-3, 2], vec![5, 9]), |x| {
            (3.0 * x[0]).sin() + x[1] * x[1]
        })
        .unwrap();
        let fam = FamilySpec::new(vec![f, g]).unwrap();
        let explicit = fam.schur_diagnostic(&basis).unwrap();
        let fast = fam.schur_diagnostic_haar().unwrap();
        assert!(
            (explicit - fast).abs() < 1e-12 * explicit,
            "{explicit} {fast}"
        );
    }
}

//! Finite families of grid functions: Gram matrices, Bessel bounds, the
//! Schur diagnostic, analysis/synthesis, and dyadic-average square functions.
//!
//! Every bound computed here belongs to the finite family at hand. For a
//! truncation of an infinite family it is the optimal bound of the
//! truncation, hence a lower bound for the full family.

mod eigen;
mod gram;
mod schur;

use std::collections::HashMap;

use rayon::prelude::*;

pub use eigen::{deflated_second, power_iteration, EigenEstimate, PowerOptions};
pub use gram::{GramSummary, SparseGram};
pub use schur::complete_haar_basis;

use crate::affine::AffinePerturbation;
use crate::dyadic::{DyadicCube, HaarIndex};
use crate::gridfn::{GridFunction, Mesh};
use crate::{Error, Result, Scalar};

/// Coefficients aligned with a family's member order.
pub type CoefficientVector<T = f64> = Vec<T>;

/// Ordered members sharing one mesh, optionally labelled by Haar index.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySpec<T = f64> {
    members: Vec<GridFunction<T>>,
    labels: Vec<Option<HaarIndex>>,
}

impl<T: Scalar> FamilySpec<T> {
    pub fn new(members: Vec<GridFunction<T>>) -> Result<Self> {
        let labels = vec![None; members.len()];
        Self::with_labels(members, labels)
    }

    pub fn with_labels(
        members: Vec<GridFunction<T>>,
        labels: Vec<Option<HaarIndex>>,
    ) -> Result<Self> {
        if labels.len() != members.len() {
            return Err(Error::LengthMismatch {
                expected: members.len(),
                got: labels.len(),
            });
        }
        if let Some(first) = members.first() {
            if let Some(bad) = members.iter().position(|m| m.mesh() != first.mesh()) {
                return Err(Error::MeshMismatch(format!(
                    "member {bad} does not share the family mesh"
                )));
            }
        }
        Ok(Self { members, labels })
    }

    /// `h_{(Q),k}` for each index, labelled.
    pub fn haar(indices: &[HaarIndex], mesh: &Mesh) -> Result<Self> {
        let members = indices
            .par_iter()
            .map(|i| GridFunction::from_haar(i, mesh))
            .collect::<Result<Vec<_>>>()?;
        Self::with_labels(members, indices.iter().cloned().map(Some).collect())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[GridFunction<T>] {
        &self.members
    }

    pub fn labels(&self) -> &[Option<HaarIndex>] {
        &self.labels
    }

    pub fn mesh(&self) -> Option<&Mesh> {
        self.members.first().map(|m| m.mesh())
    }

    /// Sub-family of the members at `keep`, in that order.
    pub fn subset(&self, keep: &[usize]) -> Self {
        Self {
            members: keep.iter().map(|&i| self.members[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
        }
    }

    /// Members whose label cube lies inside `region`; unlabelled members are dropped.
    pub fn restrict_to(&self, region: &DyadicCube) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                self.labels[i]
                    .as_ref()
                    .is_some_and(|l| region.contains_cube(l.cube()))
            })
            .collect();
        self.subset(&keep)
    }

    /// Concatenation of two families on the same mesh.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut members = self.members.clone();
        members.extend_from_slice(&other.members);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Self::with_labels(members, labels)
    }

    /// Memberwise `self_i + c·other_i`.
    pub fn axpy(&self, c: T, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        let members = self
            .members
            .par_iter()
            .zip(&other.members)
            .map(|(a, b)| a.axpy(c, b).map(|f| f.trimmed()))
            .collect::<Result<Vec<_>>>()?;
        Self::with_labels(members, self.labels.clone())
    }

    fn check_member_mesh(&self, f: &GridFunction<T>) -> Result<()> {
        match self.mesh() {
            Some(m) if m != f.mesh() => Err(Error::MeshMismatch(
                "function and family meshes differ".into(),
            )),
            _ => Ok(()),
        }
    }

    /// `⟨f, ψ_γ⟩` for every member.
    pub fn analyze(&self, f: &GridFunction<T>) -> Result<CoefficientVector<T>> {
        self.check_member_mesh(f)?;
        Ok(self
            .members
            .par_iter()
            .map(|m| f.inner_product_unchecked(m))
            .collect())
    }

    /// `Σ c_γ ψ_γ`.
    pub fn synthesize(&self, c: &[T]) -> Result<GridFunction<T>> {
        if c.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: c.len(),
            });
        }
        let mesh = self
            .mesh()
            .ok_or_else(|| Error::Domain("synthesis over an empty family".into()))?;
        let terms: Vec<(T, &GridFunction<T>)> = c.iter().copied().zip(&self.members).collect();
        GridFunction::linear_combination(mesh, &terms)
    }

    /// `f* = Σ ⟨f, ψ_γ⟩ φ_γ` with `ψ` = `self` and `φ` = `synthesis`, and
    /// `‖f − f*‖₂ / ‖f‖₂`.
    pub fn reconstruct_error(
        &self,
        f: &GridFunction<T>,
        synthesis: &FamilySpec<T>,
    ) -> Result<(GridFunction<T>, f64)> {
        if self.len() != synthesis.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: synthesis.len(),
            });
        }
        let norm = f.l2_norm();
        if norm == 0.0 {
            return Err(Error::Domain("relative error of the zero function".into()));
        }
        let f_star = synthesis.synthesize(&self.analyze(f)?)?;
        let err = f.sub(&f_star)?.l2_norm() / norm;
        Ok((f_star, err))
    }

    /// Min and max of `Σ|⟨p, ψ_γ⟩|² / ‖p‖₂²` over the probes.
    pub fn frame_bounds_empirical(&self, probes: &[GridFunction<T>]) -> Result<(f64, f64)> {
        if probes.is_empty() {
            return Err(Error::Domain("no probes".into()));
        }
        let ratios = probes
            .iter()
            .map(|p| {
                let n = p.l2_norm_sqr();
                if n == 0.0 {
                    return Err(Error::Domain("zero probe".into()));
                }
                let c = self.analyze(p)?;
                Ok(c.iter().map(|v| v.norm_sqr()).sum::<f64>() / n)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ))
    }
}

/// Grid measure of `Q*` (the perturbed indicator) and the determinant
/// prediction `|Q| / det A`.
pub fn perturbed_measure(
    cube: &DyadicCube,
    p: &AffinePerturbation,
    mesh: &Mesh,
) -> Result<(f64, f64)> {
    let chi = GridFunction::<f64>::indicator(cube, mesh)?.perturb(cube, p)?;
    Ok((chi.integral(), cube.volume() / p.determinant()))
}

/// `(Σ_Q |g_Q − g_{Q*}|² |Q|)^{1/2}` where `g_Q` is the average of `g` over
/// `Q` and `g_{Q*}` its average over the perturbed cube. Cubes without an
/// entry in `perturbations` are left unperturbed.
pub fn avg_square_function<T: Scalar>(
    g: &GridFunction<T>,
    perturbations: &HashMap<DyadicCube, AffinePerturbation>,
    cubes: &[DyadicCube],
) -> Result<f64> {
    let mesh = g.mesh();
    let terms = cubes
        .par_iter()
        .map(|q| -> Result<f64> {
            let Some(p) = perturbations.get(q).filter(|p| !p.is_identity()) else {
                return Ok(0.0);
            };
            let chi = GridFunction::<T>::indicator(q, mesh)?;
            let avg = g.inner_product_unchecked(&chi).scale(1.0 / q.volume());
            let chi_star = chi.perturb(q, p)?;
            let measure = chi_star.integral().re();
            if measure <= 0.0 {
                return Err(Error::DegeneratePerturbation(q.to_string()));
            }
            let avg_star = g.inner_product_unchecked(&chi_star).scale(1.0 / measure);
            Ok((avg - avg_star).norm_sqr() * q.volume())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::enumerate_window;

    fn haar_family(d: usize, j: i32, n_min: i32) -> (Mesh, FamilySpec) {
        let mesh = Mesh::with_default_window(d, j).unwrap();
        let idx = enumerate_window(d, 0, n_min, &DyadicCube::unit(d)).unwrap();
        let fam = FamilySpec::haar(&idx, &mesh).unwrap();
        (mesh, fam)
    }

    #[test]
    fn analysis_of_member_is_basis_vector() {
        let (_, fam) = haar_family(1, 4, -3);
        let c = fam.analyze(&fam.members()[5]).unwrap();
        for (i, v) in c.iter().enumerate() {
            assert_eq!(*v, if i == 5 { 1.0 } else { 0.0 });
        }
        let back = fam.synthesize(&c).unwrap();
        assert_eq!(back, fam.members()[5]);
    }

    #[test]
    fn zero_function_and_length_checks() {
        let (mesh, fam) = haar_family(1, 3, -2);
        let zero = GridFunction::<f64>::zeros(&mesh);
        assert!(fam.analyze(&zero).unwrap().iter().all(|&v| v == 0.0));
        assert!(fam.synthesize(&[1.0]).is_err());
        assert!(fam.reconstruct_error(&zero, &fam).is_err());
        assert!(fam.frame_bounds_empirical(&[]).is_err());
    }

    #[test]
    fn parseval_reconstruction() {
        let (_, fam) = haar_family(2, 3, -2);
        let c: Vec<f64> = (0..fam.len())
            .map(|i| ((i * 7919) % 13) as f64 - 6.0)
            .collect();
        let f = fam.synthesize(&c).unwrap();
        let (_, err) = fam.reconstruct_error(&f, &fam).unwrap();
        assert!(err < 1e-12);
        let (lo, hi) = fam.frame_bounds_empirical(&[f]).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sharpness_configuration() {
        for m in 3..=8 {
            let eta = crate::dyadic::pow2(-m);
            let mesh = Mesh::with_default_window(1, 8).unwrap();
            let g = GridFunction::<f64>::indicator(&DyadicCube::new(-m, vec![0]).unwrap(), &mesh)
                .unwrap();
            let unit = DyadicCube::unit(1);
            let mut perts = HashMap::new();
            perts.insert(
                unit.clone(),
                AffinePerturbation::translation_only(vec![-eta], eta).unwrap(),
            );
            let cubes: Vec<DyadicCube> = (0..=4).flat_map(|s| unit.descendants_at(-s)).collect();
            let r = avg_square_function(&g, &perts, &cubes).unwrap();
            assert_eq!(r, eta);
        }
    }

    #[test]
    fn identity_perturbations_vanish() {
        let mesh = Mesh::with_default_window(2, 4).unwrap();
        let g = GridFunction::<f64>::from_midpoints(
            &mesh,
            mesh.cube_cells(&DyadicCube::unit(2)).unwrap(),
            |x| x[0] - x[1],
        )
        .unwrap();
        let cubes = DyadicCube::unit(2).descendants_at(-1);
        let perts: HashMap<_, _> = cubes
            .iter()
            .map(|q| (q.clone(), AffinePerturbation::identity(2)))
            .collect();
        assert_eq!(avg_square_function(&g, &perts, &cubes).unwrap(), 0.0);
    }

    #[test]
    fn measure_matches_determinant_for_aligned_dilation() {
        let mesh = Mesh::with_default_window(1, 6).unwrap();
        let p = AffinePerturbation::new(
            crate::affine::SquareMatrix::diagonal(&[0.75]),
            vec![0.0],
            0.25,
        )
        .unwrap();
        let (grid, det) =
            perturbed_measure(&DyadicCube::new(-1, vec![0]).unwrap(), &p, &mesh).unwrap();
        assert!((grid - det).abs() <= mesh.cell_size(), "{grid} {det}");
    }
}

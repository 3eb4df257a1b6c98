//! AO norms of difference families as `η` varies, and log-log slope fits.

use haarstab::dyadic::{enumerate_window, DyadicCube, HaarIndex};
use haarstab::frames::FamilySpec;
use haarstab::gridfn::{GridFunction, Mesh, MollifierSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::generators::{perturbation_for, Generator};
use crate::mollified::mollified_haar;
use crate::LabError;

/// Measurements below this are treated as zero by the fit.
pub const UNDERFLOW: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    /// `(ln η, ln measurement)`.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

impl SlopeFit {
    /// Least-squares line through `(ln η, ln v)`, skipping `v < UNDERFLOW`.
    pub fn fit(etas: &[f64], values: &[f64]) -> Result<Self, LabError> {
        if etas.len() != values.len() {
            return Err(LabError::Fit(format!(
                "{} etas, {} values",
                etas.len(),
                values.len()
            )));
        }
        if values.iter().all(|&v| !(v >= UNDERFLOW)) {
            return Err(LabError::Underflow {
                threshold: UNDERFLOW,
            });
        }
        let points: Vec<(f64, f64)> = etas
            .iter()
            .zip(values)
            .filter(|(_, &v)| v >= UNDERFLOW)
            .map(|(&e, &v)| (e.ln(), v.ln()))
            .collect();
        if points.len() < 3 {
            return Err(LabError::Fit(format!(
                "{} usable points, need 3",
                points.len()
            )));
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return Err(LabError::Fit("all etas equal".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let residual = (points
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum::<f64>()
            / n)
            .sqrt();
        Ok(Self {
            points,
            slope,
            intercept,
            residual,
        })
    }
}

/// At least three values in `(0, 1/2]` spanning two octaves.
pub fn check_sweep_etas(etas: &[f64]) -> Result<(), LabError> {
    if etas.len() < 3 {
        return Err(LabError::Invalid(format!(
            "sweep needs 3 etas, got {}",
            etas.len()
        )));
    }
    if let Some(e) = etas.iter().find(|&&e| !(e > 0.0 && e <= 0.5)) {
        return Err(LabError::Invalid(format!("eta {e} outside (0, 1/2]")));
    }
    let lo = etas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = etas.iter().copied().fold(0.0, f64::max);
    if hi < 4.0 * lo {
        return Err(LabError::Invalid(format!(
            "etas span [{lo}, {hi}], less than two octaves"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum Perturbation {
    /// `h − det(A) h̃` with `A, y` from the generator.
    Affine(Generator),
    /// `h − h * ψ_{ηℓ(Q)}`.
    Mollified(MollifierSpec),
}

/// A Haar window `{(Q, k) : Q ⊆ region, n_min ≤ scale ≤ n_max}` on a mesh,
/// and how each member is perturbed.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub perturbation: Perturbation,
    pub dim: usize,
    pub resolution: i32,
    pub n_max: i32,
    pub n_min: i32,
    pub seed: u64,
    /// Round translations to the mesh.
    pub align: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub eta: f64,
    pub ao_norm: f64,
    pub bessel_bound: f64,
    pub schur_sq: f64,
    /// Bessel bound of the members inside the first child of the region.
    pub truncated_bound: f64,
    pub members: usize,
    pub iterations: usize,
    /// `ao_norm / η^{1/2}`.
    pub c_meas: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario: String,
    pub points: Vec<SweepPoint>,
    pub fit: SlopeFit,
    /// Largest `ao_norm / η^{1/2}` over the sweep.
    pub c_meas: f64,
}

impl Scenario {
    pub fn new(
        name: &str,
        perturbation: Perturbation,
        dim: usize,
        resolution: i32,
        n_min: i32,
    ) -> Self {
        Self {
            name: name.to_string(),
            perturbation,
            dim,
            resolution,
            n_max: 0,
            n_min,
            seed: 0,
            align: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn region(&self) -> DyadicCube {
        DyadicCube::new(self.n_max, vec![0; self.dim]).expect("scale in range")
    }

    pub fn mesh(&self) -> Result<Mesh, LabError> {
        Ok(Mesh::with_default_window(self.dim, self.resolution)?)
    }

    pub fn indices(&self) -> Result<Vec<HaarIndex>, LabError> {
        Ok(enumerate_window(
            self.dim,
            self.n_max,
            self.n_min,
            &self.region(),
        )?)
    }

    /// The perturbed counterpart of one Haar function.
    pub fn perturbed(
        &self,
        idx: &HaarIndex,
        mesh: &Mesh,
        eta: f64,
    ) -> Result<GridFunction, LabError> {
        match &self.perturbation {
            Perturbation::Affine(gen) => {
                let align = self.align.then_some(self.resolution);
                let p = perturbation_for(*gen, idx.cube(), eta, self.seed, align)?;
                let h = GridFunction::from_haar(idx, mesh)?;
                let moved = h.perturb(idx.cube(), &p)?;
                Ok(moved.scale(p.determinant()))
            }
            Perturbation::Mollified(psi) => mollified_haar(idx, mesh, psi, eta),
        }
    }

    /// `{h_γ − h̃_γ}` over the window.
    pub fn difference_family(&self, eta: f64) -> Result<FamilySpec, LabError> {
        let mesh = self.mesh()?;
        let idx = self.indices()?;
        let members = idx
            .par_iter()
            .map(|i| {
                let h = GridFunction::from_haar(i, &mesh)?;
                Ok(h.sub(&self.perturbed(i, &mesh, eta)?)?.trimmed())
            })
            .collect::<Result<Vec<_>, LabError>>()?;
        Ok(FamilySpec::with_labels(
            members,
            idx.into_iter().map(Some).collect(),
        )?)
    }

    pub fn measure(&self, eta: f64) -> Result<SweepPoint, LabError> {
        let fam = self.difference_family(eta)?;
        measure_family(&fam, &self.region(), eta)
    }
}

/// Bessel bound, Schur diagnostic and truncated bound of one family.
pub fn measure_family(
    fam: &FamilySpec,
    region: &DyadicCube,
    eta: f64,
) -> Result<SweepPoint, LabError> {
    let summary = fam.gram_summary(&Default::default())?;
    let schur_sq = fam.schur_diagnostic_haar()?;
    let sub = fam.restrict_to(&region.children()[0]);
    let truncated_bound = if sub.is_empty() {
        0.0
    } else {
        sub.bessel_bound()?.0
    };
    Ok(SweepPoint {
        eta,
        ao_norm: summary.ao_norm,
        bessel_bound: summary.bessel_bound,
        schur_sq,
        truncated_bound,
        members: fam.len(),
        iterations: summary.iterations,
        c_meas: summary.ao_norm / eta.sqrt(),
    })
}

/// Measures every `η` and fits the log-log slope of the AO norm.
pub fn sweep_eta(scenario: &Scenario, etas: &[f64]) -> Result<SweepReport, LabError> {
    check_sweep_etas(etas)?;
    let points = etas
        .par_iter()
        .map(|&e| scenario.measure(e))
        .collect::<Result<Vec<_>, LabError>>()?;
    let ao: Vec<f64> = points.iter().map(|p| p.ao_norm).collect();
    let fit = SlopeFit::fit(etas, &ao)?;
    let c_meas = points.iter().map(|p| p.c_meas).fold(0.0, f64::max);
    Ok(SweepReport {
        scenario: scenario.name.clone(),
        points,
        fit,
        c_meas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let etas = [1.0 / 256.0, 1.0 / 64.0, 1.0 / 16.0, 1.0 / 4.0];
        let vals: Vec<f64> = etas.iter().map(|e: &f64| 3.0 * e.powf(0.5)).collect();
        let f = SlopeFit::fit(&etas, &vals).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn fit_skips_underflow_and_reports_it() {
        let etas = [0.01, 0.02, 0.04, 0.08];
        assert!(matches!(
            SlopeFit::fit(&etas, &[0.0, 1e-14, 0.0, 0.0]),
            Err(LabError::Underflow { .. })
        ));
        assert!(matches!(
            SlopeFit::fit(&etas, &[0.0, 1e-3, 0.0, 2e-3]),
            Err(LabError::Fit(_))
        ));
        let f = SlopeFit::fit(&etas, &[0.0, 1.0, 2.0, 4.0]).unwrap();
        assert_eq!(f.points.len(), 3);
    }

    #[test]
    fn eta_list_preconditions() {
        assert!(check_sweep_etas(&[0.1, 0.2]).is_err());
        assert!(check_sweep_etas(&[0.1, 0.2, 0.3]).is_err());
        assert!(check_sweep_etas(&[0.1, 0.2, 0.6]).is_err());
        assert!(check_sweep_etas(&[0.05, 0.1, 0.2]).is_ok());
    }

    #[test]
    fn identity_sweep_underflows() {
        let s = Scenario::new("id", Perturbation::Affine(Generator::Identity), 1, 6, -3);
        let err = sweep_eta(&s, &[1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0]).unwrap_err();
        assert!(matches!(err, LabError::Underflow { .. }), "{err}");
    }

    #[test]
    fn adversarial_slope_near_half() {
        let s = Scenario::new(
            "adv",
            Perturbation::Affine(Generator::Adversarial1d),
            1,
            10,
            -3,
        );
        let etas: Vec<f64> = (3..=7).map(|m| haarstab::dyadic::pow2(-m)).collect();
        let r = sweep_eta(&s, &etas).unwrap();
        assert!((0.35..=0.65).contains(&r.fit.slope), "{}", r.fit.slope);
        for p in &r.points {
            assert!(p.schur_sq >= p.bessel_bound - 1e-10);
            assert!(p.truncated_bound <= p.bessel_bound * (1.0 + 1e-9));
        }
    }
}

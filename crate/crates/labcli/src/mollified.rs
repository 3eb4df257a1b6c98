//! Mollified Haar functions and the structural checks made on them.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use haarstab::dyadic::{pow2, pow2_half, DyadicCube, HaarIndex};
use haarstab::frames::FamilySpec;
use haarstab::gridfn::{GridFunction, Mesh, MollifierSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::sweep::{measure_family, Perturbation, Scenario, SweepPoint};
use crate::LabError;

/// `h_{(Q),k} * ψ_{ηℓ(Q)}`. The ±1 pattern is mollified before the
/// normalization is applied, so cubes of different scales go through
/// identical arithmetic.
pub fn mollified_haar(
    idx: &HaarIndex,
    mesh: &Mesh,
    psi: &MollifierSpec,
    eta: f64,
) -> Result<GridFunction, LabError> {
    let h = GridFunction::from_haar_unnormalized(idx, mesh)?;
    let phi = h.mollify(psi, eta * idx.cube().side())?;
    Ok(phi.scale(idx.normalization()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MollifiedReport {
    pub eta: f64,
    /// Nonzero cells of some `φ` outside `(1 + 2η)Q`.
    pub cells_outside: usize,
    /// Largest `∞`-distance, in units of `ℓ(Q)`, from a cell where `φ ≠ h`
    /// to the jump set of `h`.
    pub equality_radius: f64,
    /// Cells farther than `2ηℓ(Q)` from the jump set where `φ ≠ h`.
    pub cells_differing_far: usize,
    /// Largest `|φ_Q(x) − 2^{-nd/2} φ_{Q_0}(2^{-n}x − j)|`.
    pub self_similarity: f64,
    pub self_similarity_points: usize,
    pub family: SweepPoint,
}

/// Distance between `[lo, hi]` and `[a, b]`.
fn gap(lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    (a - hi).max(lo - b).max(0.0)
}

/// `∞`-distance from the closed cell to the jump set of `h_{(Q),k}`: the
/// faces of `Q` and, on each Haar axis, the mid-hyperplane inside `Q`.
fn cell_distance(idx: &HaarIndex, mesh: &Mesh, cell: &[i64]) -> f64 {
    let q = idx.cube();
    let h = mesh.cell_size();
    let d = q.dim();
    let mut best = f64::INFINITY;
    for axis in 0..d {
        let mut planes = vec![q.lower(axis), q.upper(axis)];
        if idx.has_haar_leg(axis) {
            planes.push(q.mid(axis));
        }
        let rest = (0..d)
            .filter(|&j| j != axis)
            .map(|j| {
                gap(
                    cell[j] as f64 * h,
                    (cell[j] + 1) as f64 * h,
                    q.lower(j),
                    q.upper(j),
                )
            })
            .fold(0.0, f64::max);
        let (lo, hi) = (cell[axis] as f64 * h, (cell[axis] + 1) as f64 * h);
        for v in planes {
            best = best.min(gap(lo, hi, v, v).max(rest));
        }
    }
    best
}

struct MemberCheck {
    outside: usize,
    radius: f64,
    far: usize,
}

fn check_member(
    idx: &HaarIndex,
    mesh: &Mesh,
    h: &GridFunction,
    phi: &GridFunction,
    eta: f64,
) -> MemberCheck {
    let q = idx.cube();
    let scale = pow2(mesh.resolution());
    let reach = eta * q.side() * scale;
    let mut out = MemberCheck {
        outside: 0,
        radius: 0.0,
        far: 0,
    };
    phi.for_each_value(|cell, v| {
        if v == 0.0 {
            return;
        }
        let inside = (0..q.dim()).all(|i| {
            cell[i] as f64 >= q.lower(i) * scale - reach
                && (cell[i] + 1) as f64 <= q.upper(i) * scale + reach
        });
        if !inside {
            out.outside += 1;
        }
    });
    let hull = phi.support_box().hull(h.support_box());
    hull.for_each_cell(|cell| {
        if phi.value_at_cell(cell) != h.value_at_cell(cell) {
            let dist = cell_distance(idx, mesh, cell);
            out.radius = out.radius.max(dist / q.side());
            if dist > 2.0 * eta * q.side() {
                out.far += 1;
            }
        }
    });
    out
}

/// Support, equality-radius, self-similarity and AO-norm checks for the
/// mollified Haar functions of a window.
/// Sample points are drawn from `scenario.seed`.
pub fn mollified_frame_report(
    scenario: &Scenario,
    eta: f64,
    samples: usize,
) -> Result<MollifiedReport, LabError> {
    let Perturbation::Mollified(psi) = &scenario.perturbation else {
        return Err(LabError::Invalid(format!(
            "{} is not a mollifier scenario",
            scenario.name
        )));
    };
    if !(eta > 0.0 && eta < 0.5) {
        return Err(LabError::Invalid(format!("eta {eta} outside (0, 1/2)")));
    }
    let (dim, resolution) = (scenario.dim, scenario.resolution);
    let mesh = scenario.mesh()?;
    let region = scenario.region();
    let idx = scenario.indices()?;
    let built = idx
        .par_iter()
        .map(|i| {
            let h = GridFunction::from_haar(i, &mesh)?;
            let phi = mollified_haar(i, &mesh, psi, eta)?;
            let check = check_member(i, &mesh, &h, &phi, eta);
            Ok((h.sub(&phi)?.trimmed(), phi, check))
        })
        .collect::<Result<Vec<_>, LabError>>()?;

    // One reference function per (scale, k) on the mesh where Q_0 spans as
    // many cells as Q does.
    let mut reference: HashMap<(i32, u32), GridFunction> = HashMap::new();
    for i in &idx {
        let key = (i.cube().scale(), i.k());
        if let Entry::Vacant(slot) = reference.entry(key) {
            let m0 = Mesh::with_default_window(dim, resolution + key.0)?;
            let unit = HaarIndex::new(DyadicCube::unit(dim), key.1)?;
            slot.insert(mollified_haar(&unit, &m0, psi, eta)?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let m = rng.gen_range(0..idx.len());
        let q = idx[m].cube();
        let n = q.scale();
        let x: Vec<f64> = (0..dim)
            .map(|a| q.lower(a) + rng.gen_range(-0.25..1.25) * q.side())
            .collect();
        let y: Vec<f64> = (0..dim)
            .map(|a| pow2(-n) * x[a] - q.corner()[a] as f64)
            .collect();
        let lhs = built[m].1.value_at_point(&x);
        let rhs =
            pow2_half(-(n as i64) * dim as i64) * reference[&(n, idx[m].k())].value_at_point(&y);
        worst = worst.max((lhs - rhs).abs());
    }

    let mut cells_outside = 0;
    let mut cells_differing_far = 0;
    let mut equality_radius = 0.0f64;
    for (_, _, c) in &built {
        cells_outside += c.outside;
        cells_differing_far += c.far;
        equality_radius = equality_radius.max(c.radius);
    }
    let members = built.into_iter().map(|b| b.0).collect();
    let fam = FamilySpec::with_labels(members, idx.into_iter().map(Some).collect())?;
    Ok(MollifiedReport {
        eta,
        cells_outside,
        equality_radius,
        cells_differing_far,
        self_similarity: worst,
        self_similarity_points: samples,
        family: measure_family(&fam, &region, eta)?,
    })
}

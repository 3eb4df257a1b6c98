//! Random families with bounded axis-line variation, zero mean and cube
//! support.

use haarstab::dyadic::{pow2_half, DyadicCube};
use haarstab::frames::FamilySpec;
use haarstab::gridfn::{GridFunction, Mesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::generators::cube_seed;
use crate::LabError;

/// Finest sub-mesh used for member values, in levels below the cube.
const MAX_LEVELS: i32 = 3;

/// A piecewise-constant function on a random sub-mesh of `cube` with mean
/// zero and every axis-parallel line variation at most one.
pub fn random_nbv0(
    cube: &DyadicCube,
    mesh: &Mesh,
    rng: &mut impl Rng,
) -> Result<GridFunction, LabError> {
    let cells = mesh.cube_cells(cube)?;
    let depth = mesh.resolution() + cube.scale();
    if depth < 1 {
        return Ok(GridFunction::zeros(mesh));
    }
    let levels = rng.gen_range(1..=depth.min(MAX_LEVELS));
    let shift = depth - levels;
    let d = cube.dim();
    let side = 1usize << levels;
    let mut coarse: Vec<f64> = (0..side.pow(d as u32))
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let mean = coarse.iter().sum::<f64>() / coarse.len() as f64;
    coarse.iter_mut().for_each(|v| *v -= mean);
    let mut values = Vec::with_capacity(cells.len());
    cells.for_each_cell(|c| {
        let mut at = 0usize;
        for i in 0..d {
            at = at * side + ((c[i] - cells.lo[i]) >> shift) as usize;
        }
        values.push(coarse[at]);
    });
    let f = GridFunction::from_values(mesh, cells, values)?;
    let tv = f.max_axis_tv();
    Ok(if tv > 0.0 { f.scale(1.0 / tv) } else { f })
}

/// `{f_Q / |Q|^{1/2}}` with one random member per cube `Q ⊆ region` of
/// scale `n_min..=scale(region)`.
pub fn random_family(
    mesh: &Mesh,
    region: &DyadicCube,
    n_min: i32,
    seed: u64,
) -> Result<FamilySpec, LabError> {
    let d = region.dim();
    let mut members = Vec::new();
    for n in (n_min..=region.scale()).rev() {
        for q in region.descendants_at(n) {
            let mut rng = ChaCha8Rng::seed_from_u64(cube_seed(seed, &q));
            let f = random_nbv0(&q, mesh, &mut rng)?;
            members.push(f.scale(pow2_half(-(n as i64) * d as i64)));
        }
    }
    Ok(FamilySpec::new(members)?)
}

/// `((1 + 1/√2) d)²`.
pub fn bessel_ceiling(d: usize) -> f64 {
    ((1.0 + std::f64::consts::FRAC_1_SQRT_2) * d as f64).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn members_are_normalized_and_mean_zero() {
        let mesh = Mesh::with_default_window(2, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [0, -1, -2] {
            let q = DyadicCube::new(n, vec![0, 0]).unwrap();
            for _ in 0..20 {
                let f = random_nbv0(&q, &mesh, &mut rng).unwrap();
                assert!((f.max_axis_tv() - 1.0).abs() < 1e-12);
                assert!(f.integral().abs() < 1e-12);
                let cells = mesh.cube_cells(&q).unwrap();
                assert!(cells.contains_box(f.support_box()));
            }
        }
    }

    #[test]
    fn single_cell_cube_gives_zero() {
        let mesh = Mesh::with_default_window(1, 2).unwrap();
        let q = DyadicCube::new(-2, vec![1]).unwrap();
        let f = random_nbv0(&q, &mesh, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn family_is_deterministic_and_bounded() {
        let mesh = Mesh::with_default_window(1, 7).unwrap();
        let unit = DyadicCube::unit(1);
        let a = random_family(&mesh, &unit, -4, 9).unwrap();
        let b = random_family(&mesh, &unit, -4, 9).unwrap();
        assert_eq!(a.members(), b.members());
        assert_eq!(a.len(), 31);
        let (bound, _) = a.bessel_bound().unwrap();
        assert!(bound <= bessel_ceiling(1));
    }
}

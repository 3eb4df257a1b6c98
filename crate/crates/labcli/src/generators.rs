//! Per-cube affine perturbations drawn from named families.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use haarstab::affine::{AffinePerturbation, SquareMatrix};
use haarstab::dyadic::{pow2, DyadicCube};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::LabError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// `(I, 0)` everywhere.
    Identity,
    /// `y` uniform in `[−η, η]^d`.
    Translation,
    /// Diagonal `A` and a translation sharing the budget.
    Diagonal,
    /// `I ± η e_{ij}` for one random pair `i ≠ j`, no translation.
    Shear,
    /// Random `A` and `y` with `‖A − I‖∞ + ‖y‖∞ = η`.
    General,
    /// `y = η e_1`, moving the Haar midpoint by `ηℓ(Q)`.
    #[serde(rename = "adversarial-1d")]
    Adversarial1d,
}

impl Generator {
    pub const ALL: [Generator; 6] = [
        Generator::Identity,
        Generator::Translation,
        Generator::Diagonal,
        Generator::Shear,
        Generator::General,
        Generator::Adversarial1d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Generator::Identity => "identity",
            Generator::Translation => "translation",
            Generator::Diagonal => "diagonal",
            Generator::Shear => "shear",
            Generator::General => "general",
            Generator::Adversarial1d => "adversarial-1d",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Generator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown generator {s:?}"))
    }
}

/// Seed for the stream belonging to `cube`; independent of `η` so a sweep
/// rescales the same unit draws.
pub fn cube_seed(seed: u64, cube: &DyadicCube) -> u64 {
    let mut h = splitmix(seed ^ splitmix(cube.scale() as i64 as u64));
    for &c in cube.corner() {
        h = splitmix(h ^ c as u64);
    }
    h
}

/// Seed of trial `index` under a master seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index.wrapping_add(0x5851_f42d)))
}

fn splitmix(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Round toward zero to a multiple of `2^-bits`.
fn truncate_to(v: f64, bits: i32) -> f64 {
    let q = pow2(bits);
    (v * q).trunc() / q
}

/// The perturbation `gen` assigns to `cube`. With `align = Some(J)` the
/// displacement `ℓ(Q)y` and the diagonal of a diagonal `A` are truncated to
/// multiples of `2^-J`, so aligned maps move mesh cells onto mesh cells.
pub fn perturbation_for(
    gen: Generator,
    cube: &DyadicCube,
    eta: f64,
    seed: u64,
    align: Option<i32>,
) -> Result<AffinePerturbation, LabError> {
    let d = cube.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cube_seed(seed, cube));
    let round_y = |y: Vec<f64>| match align {
        Some(j) => y
            .into_iter()
            .map(|v| truncate_to(v, j + cube.scale()))
            .collect(),
        None => y,
    };
    let p = match gen {
        Generator::Identity => AffinePerturbation::identity(d),
        Generator::Translation => {
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0) * eta).collect();
            AffinePerturbation::translation_only(round_y(y), eta)?
        }
        Generator::Diagonal => {
            let w: f64 = rng.gen_range(0.0..=1.0);
            let mut diag: Vec<f64> = (0..d)
                .map(|_| w * eta * rng.gen_range(-1.0..=1.0))
                .collect();
            if let Some(j) = align {
                diag.iter_mut().for_each(|s| *s = truncate_to(*s, j));
            }
            let y: Vec<f64> = (0..d)
                .map(|_| (1.0 - w) * eta * rng.gen_range(-1.0..=1.0))
                .collect();
            let diag: Vec<f64> = diag.iter().map(|s| 1.0 + s).collect();
            AffinePerturbation::new(SquareMatrix::diagonal(&diag), round_y(y), eta)?
        }
        Generator::Shear => {
            if d < 2 {
                return Err(LabError::Invalid("shear needs dim ≥ 2".into()));
            }
            let i = rng.gen_range(0..d);
            let j = (i + rng.gen_range(1..d)) % d;
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut a = SquareMatrix::identity(d);
            a[(i, j)] = sign * eta;
            AffinePerturbation::new(a, vec![0.0; d], eta)?
        }
        Generator::General => {
            let w: f64 = rng.gen_range(0.25..=0.75);
            let mut rows: Vec<Vec<f64>> = (0..d)
                .map(|_| (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect())
                .collect();
            let worst = rows
                .iter()
                .map(|r| r.iter().map(|v: &f64| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
                .max(f64::MIN_POSITIVE);
            for (i, r) in rows.iter_mut().enumerate() {
                r.iter_mut().for_each(|v| *v *= w * eta / worst);
                r[i] += 1.0;
            }
            let mut y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let ymax = y
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(f64::MIN_POSITIVE);
            y.iter_mut().for_each(|v| *v *= (1.0 - w) * eta / ymax);
            AffinePerturbation::new(SquareMatrix::from_rows(&rows)?, y, eta)?
        }
        Generator::Adversarial1d => {
            let mut y = vec![0.0; d];
            y[0] = eta;
            AffinePerturbation::translation_only(round_y(y), eta)?
        }
    };
    Ok(p)
}

/// [`perturbation_for`] over a list of cubes.
pub fn generate(
    gen: Generator,
    cubes: &[DyadicCube],
    eta: f64,
    seed: u64,
    align: Option<i32>,
) -> Result<HashMap<DyadicCube, AffinePerturbation>, LabError> {
    cubes
        .iter()
        .map(|q| Ok((q.clone(), perturbation_for(gen, q, eta, seed, align)?)))
        .collect()
}

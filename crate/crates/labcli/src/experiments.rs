//! One runner per [`Experiment`].

use haarstab::affine::SquareMatrix;
use haarstab::dyadic::DyadicCube;
use haarstab::frames::{avg_square_function, FamilySpec, GramSummary, PowerOptions};
use haarstab::gridfn::{GridFunction, Mesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;

use crate::config::{Experiment, ExperimentConfig};
use crate::generators::{derive_seed, generate, Generator};
use crate::mollified::mollified_frame_report;
use crate::nbv;
use crate::report::{num, Outcome, Table};
use crate::sweep::{
    check_sweep_etas, measure_family, sweep_eta, Perturbation, Scenario, SlopeFit, SweepPoint,
};
use crate::LabError;

/// Accepted range for fitted exponents of `η`.
pub const SLOPE_BAND: (f64, f64) = (0.35, 0.65);
/// Random span elements per frame check.
pub const PROBES: usize = 20;
pub const SELF_SIMILARITY_POINTS: usize = 1000;
/// Relative slack when comparing two power-iteration estimates.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Allowed growth of `measurement / η^{1/2}` as `η` shrinks.
pub const BLOWUP_FACTOR: f64 = 2.0;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    cfg.validate()?;
    let mut out = match cfg.experiment {
        Experiment::Orthonormality => orthonormality(cfg)?,
        Experiment::Lemma1Lu => lemma1_lu(cfg)?,
        Experiment::Theorem1Mollify => theorem1_mollify(cfg)?,
        Experiment::Theorem3Nbv => theorem3_nbv(cfg)?,
        Experiment::Theorem4Diagonal | Experiment::Theorem5Affine => affine_sweep(cfg)?,
        Experiment::Corollary3Reconstruct => corollary3_reconstruct(cfg)?,
        Experiment::Corollary5Sharpness => corollary5_sharpness(cfg)?,
        Experiment::Corollary5Random => corollary5_random(cfg)?,
    };
    out.set("config", serde_json::to_value(cfg)?);
    Ok(out)
}

fn scenario(cfg: &ExperimentConfig, perturbation: Perturbation, seed: u64) -> Scenario {
    Scenario {
        name: cfg.experiment.name().to_string(),
        perturbation,
        dim: cfg.dim,
        resolution: cfg.resolution,
        n_max: cfg.n_max,
        n_min: cfg.n_min,
        seed,
        align: cfg.align,
    }
}

/// `count` functions `Σ c_γ ψ_γ` with `c_γ` uniform in `[−1, 1]`.
pub fn random_span(
    fam: &FamilySpec,
    count: usize,
    seed: u64,
) -> Result<Vec<GridFunction>, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..fam.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            Ok(fam.synthesize(&c)?)
        })
        .collect()
}

/// Diagnostic dominance and truncation monotonicity for one family.
pub fn check_family(out: &mut Outcome, label: &str, p: &SweepPoint) {
    out.require(p.schur_sq >= p.bessel_bound - 1e-10, || {
        format!(
            "{label}: Schur diagnostic {} below Bessel bound {}",
            p.schur_sq, p.bessel_bound
        )
    });
    out.require(
        p.truncated_bound <= p.bessel_bound * (1.0 + MONOTONE_SLACK),
        || {
            format!(
                "{label}: truncated bound {} exceeds {}",
                p.truncated_bound, p.bessel_bound
            )
        },
    );
}

/// Finite constants that do not grow by more than [`BLOWUP_FACTOR`] from
/// the largest `η` down. Returns the largest.
fn check_constants(out: &mut Outcome, etas: &[f64], c: &[f64]) -> f64 {
    let worst = c.iter().copied().fold(0.0, f64::max);
    out.require(c.iter().all(|v| v.is_finite()), || {
        "measured constant is not finite".into()
    });
    if let Some(top) = etas
        .iter()
        .zip(c)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map(|p| *p.1)
    {
        out.require(worst <= BLOWUP_FACTOR * top + 1e-12, || {
            format!("measured constant grows from {top} to {worst} as eta shrinks")
        });
    }
    worst
}

fn check_slope(out: &mut Outcome, fit: &SlopeFit) {
    out.require((SLOPE_BAND.0..=SLOPE_BAND.1).contains(&fit.slope), || {
        format!(
            "slope {} outside [{}, {}]",
            fit.slope, SLOPE_BAND.0, SLOPE_BAND.1
        )
    });
}

fn orthonormality(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let s = scenario(cfg, Perturbation::Affine(Generator::Identity), cfg.seed);
    let fam = FamilySpec::haar(&s.indices()?, &s.mesh()?)?;
    let g = fam.gram_matrix()?;
    let summary = GramSummary::from_gram(&g, &PowerOptions::default())?;
    let mut table = Table::new(&["probe", "coefficient_energy", "norm_sq", "rel_error"]);
    let mut worst = 0.0f64;
    for (i, p) in random_span(&fam, PROBES, cfg.seed)?.iter().enumerate() {
        let energy: f64 = fam.analyze(p)?.iter().map(|v| v * v).sum();
        let norm = p.l2_norm_sqr();
        let rel = (energy - norm).abs() / norm;
        worst = worst.max(rel);
        table.push(vec![i.to_string(), num(energy), num(norm), num(rel)]);
    }
    let mut out = Outcome::new(cfg.experiment, table);
    let dev = g.max_deviation_from_identity();
    out.require(dev <= 1e-12, || {
        format!("Gram deviates from identity by {dev}")
    });
    out.require(worst <= 1e-10, || {
        format!("Parseval relative error {worst}")
    });
    out.set("members", fam.len());
    out.set("max_off_diagonal", g.max_off_diagonal());
    out.set("max_deviation_from_identity", dev);
    out.set("max_parseval_error", worst);
    out.set("gram", serde_json::to_value(&summary)?);
    out.set("c_meas", Value::Null);
    Ok(out)
}

/// `I + E` with `E` uniform, rescaled so `‖E‖∞ = η` exactly.
pub fn near_identity(d: usize, eta: f64, rng: &mut impl Rng) -> Result<SquareMatrix, LabError> {
    let mut rows: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    let worst = rows
        .iter()
        .map(|r| r.iter().map(|v: &f64| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for (i, r) in rows.iter_mut().enumerate() {
        r.iter_mut().for_each(|v| *v *= eta / worst);
        r[i] += 1.0;
    }
    Ok(SquareMatrix::from_rows(&rows)?)
}

fn lemma1_lu(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let trials = cfg.trials.unwrap_or(1000);
    let d = cfg.dim;
    let etas = cfg.etas();
    let rows = etas
        .par_iter()
        .enumerate()
        .map(|(i, &eta)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, i as u64));
            let (mut recon, mut dev, mut det_gap) = (0.0f64, 0.0f64, 0.0f64);
            for _ in 0..trials {
                let a = near_identity(d, eta, &mut rng)?;
                let lu = a.lu_factor()?;
                recon = recon.max((&lu.product() - &a).inf_norm());
                dev = dev.max(lu.max_deviation());
                det_gap = det_gap.max((1.0 - a.determinant()).abs());
            }
            Ok((eta, recon, dev, det_gap))
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let mut table = Table::new(&[
        "eta",
        "trials",
        "max_reconstruction_error",
        "max_factor_deviation",
        "deviation_bound",
        "max_det_gap",
        "c_meas",
    ]);
    let mut failures = Vec::new();
    let mut c_meas = 0.0f64;
    for &(eta, recon, dev, det_gap) in &rows {
        let bound = eta / (1.0 - eta);
        table.push(vec![
            num(eta),
            trials.to_string(),
            num(recon),
            num(dev),
            num(bound),
            num(det_gap),
            num(dev / eta),
        ]);
        c_meas = c_meas.max(dev / eta);
        if recon > 1e-12 {
            failures.push(format!("eta {eta}: reconstruction error {recon}"));
        }
        if dev > bound + 1e-12 {
            failures.push(format!("eta {eta}: factor deviation {dev} > {bound}"));
        }
    }
    let mut out = Outcome::new(cfg.experiment, table);
    out.failures = failures;
    out.set("trials", trials);
    out.set("c_meas", c_meas);
    Ok(out)
}

fn theorem1_mollify(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let psi = cfg.kernel.resolve(cfg.dim)?;
    let s = scenario(cfg, Perturbation::Mollified(psi), cfg.seed);
    let etas = cfg.etas();
    let reports = etas
        .par_iter()
        .map(|&e| mollified_frame_report(&s, e, SELF_SIMILARITY_POINTS))
        .collect::<Result<Vec<_>, LabError>>()?;
    let mut table = Table::new(&[
        "eta",
        "cells_outside",
        "equality_radius",
        "cells_differing_far",
        "self_similarity",
        "ao_norm",
        "bessel_bound",
        "schur_sq",
        "truncated_bound",
        "c_meas",
    ]);
    let mut out = Outcome::new(cfg.experiment, Table::default());
    for r in &reports {
        let p = &r.family;
        table.push(vec![
            num(r.eta),
            r.cells_outside.to_string(),
            num(r.equality_radius),
            r.cells_differing_far.to_string(),
            num(r.self_similarity),
            num(p.ao_norm),
            num(p.bessel_bound),
            num(p.schur_sq),
            num(p.truncated_bound),
            num(p.c_meas),
        ]);
        let eta = r.eta;
        out.require(r.cells_outside == 0, || {
            format!("eta {eta}: {} cells outside (1+2η)Q", r.cells_outside)
        });
        out.require(r.cells_differing_far == 0, || {
            format!(
                "eta {eta}: {} cells differ beyond 2ηℓ(Q)",
                r.cells_differing_far
            )
        });
        out.require(r.self_similarity == 0.0, || {
            format!("eta {eta}: self-similarity gap {}", r.self_similarity)
        });
        check_family(&mut out, &format!("eta {eta}"), p);
    }
    out.table = table;
    let c: Vec<f64> = reports.iter().map(|r| r.family.c_meas).collect();
    let c_meas = check_constants(&mut out, &etas, &c);
    let fit = if check_sweep_etas(&etas).is_ok() {
        let ao: Vec<f64> = reports.iter().map(|r| r.family.ao_norm).collect();
        let fit = SlopeFit::fit(&etas, &ao)?;
        check_slope(&mut out, &fit);
        serde_json::to_value(&fit)?
    } else {
        Value::Null
    };
    out.set("fit", fit);
    out.set("c_meas", c_meas);
    out.set(
        "max_equality_radius",
        reports
            .iter()
            .map(|r| r.equality_radius)
            .fold(0.0, f64::max),
    );
    out.set("reports", serde_json::to_value(&reports)?);
    Ok(out)
}

fn theorem3_nbv(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let trials = cfg.trials.unwrap_or(200);
    let s = scenario(cfg, Perturbation::Affine(Generator::Identity), cfg.seed);
    let mesh = s.mesh()?;
    let region = s.region();
    let ceiling = nbv::bessel_ceiling(cfg.dim);
    let rows = (0..trials)
        .into_par_iter()
        .map(|t| {
            let fam =
                nbv::random_family(&mesh, &region, cfg.n_min, derive_seed(cfg.seed, t as u64))?;
            let (b, _) = fam.bessel_bound()?;
            Ok((b, fam.schur_diagnostic_haar()?))
        })
        .collect::<Result<Vec<_>, LabError>>()?;
    let mut table = Table::new(&["trial", "bessel_bound", "schur_sq", "ceiling"]);
    let mut out = Outcome::new(cfg.experiment, Table::default());
    for (t, &(b, schur)) in rows.iter().enumerate() {
        table.push(vec![t.to_string(), num(b), num(schur), num(ceiling)]);
        out.require(b <= ceiling, || {
            format!("trial {t}: Bessel bound {b} > {ceiling}")
        });
        out.require(schur >= b - 1e-10, || {
            format!("trial {t}: Schur diagnostic {schur} < {b}")
        });
    }
    out.table = table;
    let max_b = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    out.set("trials", trials);
    out.set("ceiling", ceiling);
    out.set("max_bessel_bound", max_b);
    out.set("c_meas", max_b.sqrt());
    Ok(out)
}

fn sweep_table(points: &[SweepPoint]) -> Table {
    let mut table = Table::new(&[
        "eta",
        "ao_norm",
        "bessel_bound",
        "schur_sq",
        "truncated_bound",
        "members",
        "iterations",
        "c_meas",
    ]);
    for p in points {
        table.push(vec![
            num(p.eta),
            num(p.ao_norm),
            num(p.bessel_bound),
            num(p.schur_sq),
            num(p.truncated_bound),
            p.members.to_string(),
            p.iterations.to_string(),
            num(p.c_meas),
        ]);
    }
    table
}

fn affine_sweep(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let gen = cfg.generator();
    let s = scenario(cfg, Perturbation::Affine(gen), cfg.seed);
    let etas = cfg.etas();
    let (points, fit) = if check_sweep_etas(&etas).is_ok() {
        let r = sweep_eta(&s, &etas)?;
        (r.points, Some(r.fit))
    } else {
        let p = etas
            .par_iter()
            .map(|&e| s.measure(e))
            .collect::<Result<Vec<_>, LabError>>()?;
        (p, None)
    };
    let mut out = Outcome::new(cfg.experiment, sweep_table(&points));
    for p in &points {
        check_family(&mut out, &format!("eta {}", p.eta), p);
    }
    let c: Vec<f64> = points.iter().map(|p| p.c_meas).collect();
    let c_meas = check_constants(&mut out, &etas, &c);
    if let Some(f) = &fit {
        check_slope(&mut out, f);
    }
    out.set("generator", gen.name());
    out.set("fit", serde_json::to_value(&fit)?);
    out.set("c_meas", c_meas);
    Ok(out)
}

/// Perturbed Haar functions of a scenario as a labelled family.
fn perturbed_family(s: &Scenario, mesh: &Mesh, eta: f64) -> Result<FamilySpec, LabError> {
    let idx = s.indices()?;
    let members = idx
        .par_iter()
        .map(|i| s.perturbed(i, mesh, eta))
        .collect::<Result<Vec<_>, LabError>>()?;
    Ok(FamilySpec::with_labels(
        members,
        idx.into_iter().map(Some).collect(),
    )?)
}

/// Frame bounds and reconstruction error with independently perturbed
/// analysis and synthesis families.
pub struct ReconstructionPoint {
    pub eta: f64,
    pub delta: f64,
    pub frame_lo: f64,
    pub frame_hi: f64,
    pub max_rel_error: f64,
    /// Analysis and synthesis difference families, then the two perturbed
    /// families themselves.
    pub families: Vec<SweepPoint>,
}

pub fn reconstruction_point(
    analysis: &Scenario,
    synthesis: &Scenario,
    eta: f64,
    probes: &[GridFunction],
) -> Result<ReconstructionPoint, LabError> {
    let mesh = analysis.mesh()?;
    let region = analysis.region();
    let haar = FamilySpec::haar(&analysis.indices()?, &mesh)?;
    let psi = perturbed_family(analysis, &mesh, eta)?;
    let phi = perturbed_family(synthesis, &mesh, eta)?;
    let mut families = Vec::new();
    for f in [&psi, &phi] {
        let diff = haar.axpy(-1.0, f)?;
        families.push(measure_family(&diff, &region, eta)?);
    }
    for f in [&psi, &phi] {
        families.push(measure_family(f, &region, eta)?);
    }
    let delta = families[0].ao_norm.max(families[1].ao_norm);
    let (frame_lo, frame_hi) = psi.frame_bounds_empirical(probes)?;
    let mut max_rel_error = 0.0f64;
    for p in probes {
        max_rel_error = max_rel_error.max(psi.reconstruct_error(p, &phi)?.1);
    }
    Ok(ReconstructionPoint {
        eta,
        delta,
        frame_lo,
        frame_hi,
        max_rel_error,
        families,
    })
}

/// Additive tolerance on the frame-bound and reconstruction checks.
pub const FRAME_TOLERANCE: f64 = 0.02;

fn corollary3_reconstruct(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let gen = cfg.generator();
    let analysis = scenario(cfg, Perturbation::Affine(gen), derive_seed(cfg.seed, 0));
    let synthesis = scenario(cfg, Perturbation::Affine(gen), derive_seed(cfg.seed, 1));
    let haar = FamilySpec::haar(&analysis.indices()?, &analysis.mesh()?)?;
    let probes = random_span(&haar, PROBES, derive_seed(cfg.seed, 2))?;
    let etas = cfg.etas();
    let mut table = Table::new(&[
        "eta",
        "delta",
        "frame_lo",
        "frame_hi",
        "lower_bound",
        "upper_bound",
        "max_rel_error",
        "error_bound",
        "c_meas",
    ]);
    let mut out = Outcome::new(cfg.experiment, Table::default());
    let mut c = Vec::new();
    for &eta in &etas {
        let r = reconstruction_point(&analysis, &synthesis, eta, &probes)?;
        let d = r.delta;
        let (lower, upper, err_bound) = ((1.0 - d).powi(2), (1.0 + d).powi(2), d * (2.0 + d));
        table.push(vec![
            num(eta),
            num(d),
            num(r.frame_lo),
            num(r.frame_hi),
            num(lower),
            num(upper),
            num(r.max_rel_error),
            num(err_bound),
            num(d / eta.sqrt()),
        ]);
        c.push(d / eta.sqrt());
        out.require(
            r.frame_lo >= lower - FRAME_TOLERANCE && r.frame_hi <= upper + FRAME_TOLERANCE,
            || {
                format!(
                    "eta {eta}: frame bounds [{}, {}] outside [{lower}, {upper}]",
                    r.frame_lo, r.frame_hi
                )
            },
        );
        out.require(r.max_rel_error <= err_bound + FRAME_TOLERANCE, || {
            format!(
                "eta {eta}: reconstruction error {} > {err_bound}",
                r.max_rel_error
            )
        });
        for (name, p) in [
            "analysis difference",
            "synthesis difference",
            "analysis",
            "synthesis",
        ]
        .iter()
        .zip(&r.families)
        {
            check_family(&mut out, &format!("eta {eta} {name}"), p);
        }
    }
    out.table = table;
    let c_meas = check_constants(&mut out, &etas, &c);
    out.set("generator", gen.name());
    out.set("probes", PROBES);
    out.set("c_meas", c_meas);
    Ok(out)
}

/// `(Σ_Q |g_Q − g_{Q*}|² |Q|)^{1/2}` for `g = χ_{[0, η)}` when only `[0, 1)`
/// is moved, by `−η`. Returns the value and `‖g‖₂²`.
pub fn sharpness_value(resolution: i32, n_min: i32, eta: f64) -> Result<(f64, f64), LabError> {
    let m = -eta.log2();
    if m.fract() != 0.0 || m < 1.0 {
        return Err(LabError::Invalid(format!(
            "eta {eta} is not 2^-m with m ≥ 1"
        )));
    }
    let mesh = Mesh::with_default_window(1, resolution)?;
    let g = GridFunction::<f64>::indicator(&DyadicCube::new(-(m as i32), vec![0])?, &mesh)?;
    let unit = DyadicCube::unit(1);
    let cubes: Vec<DyadicCube> = (n_min..=0)
        .rev()
        .flat_map(|s| unit.descendants_at(s))
        .collect();
    let mut perts = std::collections::HashMap::new();
    perts.insert(
        unit,
        haarstab::affine::AffinePerturbation::translation_only(vec![-eta], eta)?,
    );
    Ok((avg_square_function(&g, &perts, &cubes)?, g.l2_norm_sqr()))
}

fn corollary5_sharpness(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let etas = cfg.etas();
    let mut table = Table::new(&["eta", "value", "g_norm", "ratio"]);
    let mut out = Outcome::new(cfg.experiment, Table::default());
    let mut worst = 0.0f64;
    for &eta in &etas {
        let (v, norm_sq) = sharpness_value(cfg.resolution, cfg.n_min, eta)?;
        let ratio = v / (eta * norm_sq).sqrt();
        worst = worst.max((ratio - 1.0).abs());
        table.push(vec![num(eta), num(v), num(norm_sq.sqrt()), num(ratio)]);
        out.require((ratio - 1.0).abs() <= 1e-12, || {
            format!("eta {eta}: ratio {ratio}")
        });
    }
    out.table = table;
    out.set("max_ratio_error", worst);
    out.set("c_meas", 1.0 + worst);
    Ok(out)
}

/// Piecewise constant on the cubes of scale `n_min` inside the region,
/// values uniform in `[−1, 1]`.
fn random_steps(s: &Scenario, mesh: &Mesh, seed: u64) -> Result<GridFunction, LabError> {
    let region = s.region();
    let cells = mesh.cube_cells(&region)?;
    let shift = s.resolution + s.n_min;
    let side = 1usize << (s.n_max - s.n_min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarse: Vec<f64> = (0..side.pow(s.dim as u32))
        .map(|_| rng.gen_range(-1.0..=1.0))
        .collect();
    let mut values = Vec::with_capacity(cells.len());
    cells.for_each_cell(|c| {
        let at = (0..s.dim).fold(0usize, |at, i| {
            at * side + ((c[i] - cells.lo[i]) >> shift) as usize
        });
        values.push(coarse[at]);
    });
    Ok(GridFunction::from_values(mesh, cells, values)?)
}

fn corollary5_random(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let gen = cfg.generator();
    let s = scenario(cfg, Perturbation::Affine(gen), cfg.seed);
    let mesh = s.mesh()?;
    let g = random_steps(&s, &mesh, derive_seed(cfg.seed, 0))?;
    let norm_sq = g.l2_norm_sqr();
    let region = s.region();
    let cubes: Vec<DyadicCube> = (cfg.n_min..=cfg.n_max)
        .rev()
        .flat_map(|n| region.descendants_at(n))
        .collect();
    let etas = cfg.etas();
    let values = etas
        .par_iter()
        .map(|&eta| {
            let perts = generate(gen, &cubes, eta, cfg.seed, cfg.align_resolution())?;
            Ok(avg_square_function(&g, &perts, &cubes)?)
        })
        .collect::<Result<Vec<f64>, LabError>>()?;
    let mut table = Table::new(&["eta", "value", "g_norm", "ratio"]);
    let mut c = Vec::new();
    for (&eta, &v) in etas.iter().zip(&values) {
        let ratio = v / (eta * norm_sq).sqrt();
        c.push(ratio);
        table.push(vec![num(eta), num(v), num(norm_sq.sqrt()), num(ratio)]);
    }
    let mut out = Outcome::new(cfg.experiment, table);
    let c_meas = check_constants(&mut out, &etas, &c);
    let fit = if check_sweep_etas(&etas).is_ok() {
        SlopeFit::fit(&etas, &values).ok()
    } else {
        None
    };
    out.set("generator", gen.name());
    out.set("fit", serde_json::to_value(&fit)?);
    out.set("c_meas", c_meas);
    Ok(out)
}

//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use haarstab::dyadic::{pow2, DyadicCube};
use haarstab::gridfn::{Mesh, MollifierSpec};
use haarstab_lab::config::{Experiment, ExperimentConfig};
use haarstab_lab::experiments::{
    self, random_span, reconstruction_point, FRAME_TOLERANCE, MONOTONE_SLACK, SLOPE_BAND,
};
use haarstab_lab::generators::derive_seed;
use haarstab_lab::mollified::mollified_frame_report;
use haarstab_lab::nbv;
use haarstab_lab::sweep::{measure_family, sweep_eta, Perturbation, Scenario, SweepPoint};
use haarstab_lab::{Generator, LabError};
use rayon::prelude::*;

/// Families measured along the way, re-checked by criterion 8.
type Ledger = Vec<(String, SweepPoint)>;

type Check = fn(&mut Ledger) -> Result<Vec<String>, LabError>;

fn etas(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|m| pow2(-m)).collect()
}

fn config(e: Experiment, dim: usize, resolution: i32, n_min: i32) -> ExperimentConfig {
    ExperimentConfig {
        dim,
        resolution,
        n_min,
        ..ExperimentConfig::new(e)
    }
}

/// Runs a configured experiment; its failures become ours.
fn run_experiment(
    cfg: &ExperimentConfig,
    failures: &mut Vec<String>,
) -> Result<serde_json::Value, LabError> {
    let out = experiments::run(cfg)?;
    for f in &out.failures {
        failures.push(format!("{} d={}: {f}", cfg.experiment, cfg.dim));
    }
    Ok(out.summary_json())
}

fn num(v: &serde_json::Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn orthonormality(_: &mut Ledger) -> Result<Vec<String>, LabError> {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (d, j, n_min) in [(1, 8, -6), (2, 6, -4)] {
        let s = run_experiment(
            &config(Experiment::Orthonormality, d, j, n_min),
            &mut failures,
        )?;
        notes.push(format!(
            "d={d}: {} members, off-diag {:e}, parseval {:e}",
            s["members"],
            num(&s["max_off_diagonal"]),
            num(&s["max_parseval_error"])
        ));
    }
    finish(failures, notes)
}

fn lemma1(_: &mut Ledger) -> Result<Vec<String>, LabError> {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for d in 2..=6 {
        let cfg = ExperimentConfig {
            trials: Some(1000),
            eta_list: vec![0.05, 0.25, 0.5],
            seed: d as u64,
            ..config(Experiment::Lemma1Lu, d, 0, 0)
        };
        let s = run_experiment(&cfg, &mut failures)?;
        worst = worst.max(num(&s["c_meas"]));
    }
    finish(
        failures,
        vec![format!("max ‖L−I‖,‖U−I‖ over η: {worst:.4}·η")],
    )
}

fn sharpness(_: &mut Ledger) -> Result<Vec<String>, LabError> {
    let mut failures = Vec::new();
    let cfg = ExperimentConfig {
        eta_list: etas(3, 8),
        ..config(Experiment::Corollary5Sharpness, 1, 8, -8)
    };
    let s = run_experiment(&cfg, &mut failures)?;
    finish(
        failures,
        vec![format!(
            "max |ratio − 1| = {:e}",
            num(&s["max_ratio_error"])
        )],
    )
}

fn scaling(ledger: &mut Ledger) -> Result<Vec<String>, LabError> {
    let list = etas(3, 8);
    let scenarios = [
        Scenario::new(
            "translation d=1",
            Perturbation::Affine(Generator::Adversarial1d),
            1,
            12,
            -4,
        ),
        Scenario::new(
            "diagonal d=2",
            Perturbation::Affine(Generator::Diagonal),
            2,
            10,
            -2,
        ),
        Scenario::new(
            "shear d=2",
            Perturbation::Affine(Generator::Shear),
            2,
            10,
            -2,
        ),
        Scenario::new(
            "general d=2",
            Perturbation::Affine(Generator::General),
            2,
            10,
            -2,
        ),
        Scenario::new(
            "mollified d=1",
            Perturbation::Mollified(MollifierSpec::box_kernel()),
            1,
            12,
            -4,
        ),
    ];
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for s in &scenarios {
        let r = sweep_eta(s, &list)?;
        let slope = r.fit.slope;
        if !(SLOPE_BAND.0..=SLOPE_BAND.1).contains(&slope) {
            failures.push(format!("{}: slope {slope:.3}", s.name));
        }
        if !r.c_meas.is_finite() {
            failures.push(format!("{}: C_meas not finite", s.name));
        }
        for p in &r.points {
            if p.ao_norm > r.c_meas * p.eta.sqrt() * (1.0 + 1e-12) {
                failures.push(format!(
                    "{} η={}: {} > C_meas·η^½",
                    s.name, p.eta, p.ao_norm
                ));
            }
            ledger.push((format!("{} η={}", s.name, p.eta), p.clone()));
        }
        notes.push(format!(
            "{} (J={}): slope {slope:.3}, C_meas {:.3}",
            s.name, s.resolution, r.c_meas
        ));
    }
    finish(failures, notes)
}

fn nbv_families(ledger: &mut Ledger) -> Result<Vec<String>, LabError> {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (d, j, n_min) in [(1usize, 8, -5), (2, 6, -3)] {
        let mesh = Mesh::with_default_window(d, j)?;
        let region = DyadicCube::unit(d);
        let ceiling = nbv::bessel_ceiling(d);
        let points = (0..200u64)
            .into_par_iter()
            .map(|t| {
                let fam =
                    nbv::random_family(&mesh, &region, n_min, derive_seed(100 + d as u64, t))?;
                measure_family(&fam, &region, 1.0)
            })
            .collect::<Result<Vec<_>, LabError>>()?;
        let mut worst = 0.0f64;
        for (t, p) in points.into_iter().enumerate() {
            worst = worst.max(p.bessel_bound);
            if p.bessel_bound > ceiling {
                failures.push(format!("d={d} trial {t}: {} > {ceiling}", p.bessel_bound));
            }
            if p.bessel_bound > p.schur_sq + 1e-10 {
                failures.push(format!(
                    "d={d} trial {t}: {} > Schur {}",
                    p.bessel_bound, p.schur_sq
                ));
            }
            ledger.push((format!("nbv d={d} trial {t}"), p));
        }
        notes.push(format!("d={d}: max B {worst:.4} ≤ {ceiling:.4}"));
    }
    finish(failures, notes)
}

fn mollified_structure(ledger: &mut Ledger) -> Result<Vec<String>, LabError> {
    let mut failures = Vec::new();
    let mut radius = 0.0f64;
    for (kname, psi) in [
        ("box", MollifierSpec::box_kernel()),
        ("bump", MollifierSpec::bump()),
    ] {
        for (d, j, n_min) in [(1usize, 8, -4), (2, 6, -2)] {
            let s = Scenario::new(kname, Perturbation::Mollified(psi.clone()), d, j, n_min)
                .with_seed(7);
            for eta in [1.0 / 16.0, 1.0 / 8.0] {
                let r = mollified_frame_report(&s, eta, 1000)?;
                let tag = format!("{kname} d={d} η={eta}");
                if r.cells_outside > 0 {
                    failures.push(format!("{tag}: {} cells outside (1+2η)Q", r.cells_outside));
                }
                if r.cells_differing_far > 0 {
                    failures.push(format!(
                        "{tag}: {} cells differ beyond 2ηℓ(Q)",
                        r.cells_differing_far
                    ));
                }
                if r.self_similarity != 0.0 {
                    failures.push(format!(
                        "{tag}: self-similarity gap {:e}",
                        r.self_similarity
                    ));
                }
                radius = radius.max(r.equality_radius / eta);
                ledger.push((tag, r.family));
            }
        }
    }
    finish(
        failures,
        vec![format!("equality radius ≤ {radius:.3}·ηℓ(Q)")],
    )
}

fn reconstruction(ledger: &mut Ledger) -> Result<Vec<String>, LabError> {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (d, j, n_min) in [(1usize, 8, -4), (2, 6, -2)] {
        let a = Scenario::new(
            "analysis",
            Perturbation::Affine(Generator::General),
            d,
            j,
            n_min,
        )
        .with_seed(11);
        let b = Scenario::new(
            "synthesis",
            Perturbation::Affine(Generator::General),
            d,
            j,
            n_min,
        )
        .with_seed(12);
        let haar = haarstab::frames::FamilySpec::haar(&a.indices()?, &a.mesh()?)?;
        let probes = random_span(&haar, 20, 13)?;
        for eta in [pow2(-6), pow2(-4)] {
            let r = reconstruction_point(&a, &b, eta, &probes)?;
            let dl = r.delta;
            let tag = format!("d={d} η={eta}");
            if r.frame_lo < (1.0 - dl).powi(2) - FRAME_TOLERANCE
                || r.frame_hi > (1.0 + dl).powi(2) + FRAME_TOLERANCE
            {
                failures.push(format!(
                    "{tag}: frame bounds [{}, {}] with δ={dl}",
                    r.frame_lo, r.frame_hi
                ));
            }
            if r.max_rel_error > dl * (2.0 + dl) + FRAME_TOLERANCE {
                failures.push(format!("{tag}: error {} with δ={dl}", r.max_rel_error));
            }
            notes.push(format!(
                "{tag}: δ {dl:.3}, bounds [{:.3}, {:.3}], err {:.3}",
                r.frame_lo, r.frame_hi, r.max_rel_error
            ));
            for (i, p) in r.families.into_iter().enumerate() {
                ledger.push((format!("reconstruct {tag} family {i}"), p));
            }
        }
    }
    finish(failures, notes)
}

fn dominance(ledger: &mut Ledger) -> Result<Vec<String>, LabError> {
    let mut failures = Vec::new();
    for (tag, p) in ledger.iter() {
        if p.schur_sq < p.bessel_bound - 1e-10 {
            failures.push(format!(
                "{tag}: Schur {} < B {}",
                p.schur_sq, p.bessel_bound
            ));
        }
        if p.truncated_bound > p.bessel_bound * (1.0 + MONOTONE_SLACK) {
            failures.push(format!(
                "{tag}: truncated {} > B {}",
                p.truncated_bound, p.bessel_bound
            ));
        }
    }
    if ledger.is_empty() {
        failures.push("no families were recorded".into());
    }
    finish(failures, vec![format!("{} families", ledger.len())])
}

fn finish(failures: Vec<String>, notes: Vec<String>) -> Result<Vec<String>, LabError> {
    if failures.is_empty() {
        Ok(notes)
    } else {
        Err(LabError::Invalid(failures.join("; ")))
    }
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, Check, u64); 8] = [
        (1, "orthonormality and Parseval", orthonormality, 30),
        (2, "LU factor bounds", lemma1, 5),
        (3, "square-function sharpness", sharpness, 10),
        (4, "eta^1/2 scaling", scaling, 300),
        (5, "NBV0 Bessel bounds", nbv_families, 120),
        (6, "mollified Haar structure", mollified_structure, 60),
        (7, "frame reconstruction", reconstruction, 120),
        (8, "Schur dominance and truncation", dominance, 60),
    ];
    let mut ledger = Ledger::new();
    let mut all_pass = true;
    for (id, name, check, limit) in criteria {
        let start = Instant::now();
        let result = check(&mut ledger);
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(limit);
        let pass = result.is_ok() && !over;
        all_pass &= pass;
        let detail = match &result {
            Ok(notes) => notes.join("; "),
            Err(e) => e.to_string(),
        };
        let timing = if over {
            format!("{:.1}s, over the {limit}s limit", elapsed.as_secs_f64())
        } else {
            format!("{:.1}s", elapsed.as_secs_f64())
        };
        println!(
            "{} criterion {id} ({name}) [{timing}]: {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

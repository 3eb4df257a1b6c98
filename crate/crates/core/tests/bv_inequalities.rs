use haarstab::affine::{AffinePerturbation, SquareMatrix};
use haarstab::dyadic::{pow2, DyadicCube};
use haarstab::gridfn::{CellBox, GridFunction, Mesh, MollifierSpec};
use proptest::prelude::*;

/// Right-continuous step function: `values[i]` on `[breaks[i], breaks[i+1])`,
/// zero outside `[breaks[0], breaks[last])`.
#[derive(Clone, Debug)]
struct Steps {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl Steps {
    fn eval(&self, x: f64) -> f64 {
        if x < self.breaks[0] || x >= *self.breaks.last().unwrap() {
            return 0.0;
        }
        let i = self.breaks.partition_point(|&b| b <= x) - 1;
        self.values[i]
    }

    /// `∫_a^b f`.
    fn integral(&self, a: f64, b: f64) -> f64 {
        let mut s = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            let lo = self.breaks[i].max(a);
            let hi = self.breaks[i + 1].min(b);
            if hi > lo {
                s += v * (hi - lo);
            }
        }
        s
    }

    /// Jumps at break points in `(a, b]`, including the outer ones.
    fn variation(&self, a: f64, b: f64) -> f64 {
        let mut tv = 0.0;
        for (i, &x) in self.breaks.iter().enumerate() {
            if x > a && x <= b {
                let left = if i == 0 { 0.0 } else { self.values[i - 1] };
                let right = self.values.get(i).copied().unwrap_or(0.0);
                tv += (right - left).abs();
            }
        }
        tv
    }

    fn total_variation(&self) -> f64 {
        self.variation(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `x ↦ f(αx + β)` for `α > 0`.
    fn compose_affine(&self, alpha: f64, beta: f64) -> Steps {
        Steps {
            breaks: self.breaks.iter().map(|b| (b - beta) / alpha).collect(),
            values: self.values.clone(),
        }
    }
}

fn steps_strategy() -> impl Strategy<Value = Steps> {
    (2usize..12)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(-0.5f64..1.5, n + 1),
                prop::collection::vec(-1.0f64..1.0, n),
            )
        })
        .prop_map(|(mut breaks, values)| {
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let values = values[..breaks.len() - 1].to_vec();
            let mut s = Steps { breaks, values };
            let tv = s.total_variation();
            if tv > 0.0 {
                for v in &mut s.values {
                    *v /= tv;
                }
            }
            s
        })
}

fn mesh1(j: i32) -> Mesh {
    Mesh::with_default_window(1, j).unwrap()
}

fn cells(lo: i64, hi: i64) -> CellBox {
    CellBox::new(vec![lo], vec![hi])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mean_zero_pairing(
        f in prop::collection::vec(-2.0f64..2.0, 4..40),
        b in prop::collection::vec(-1.0f64..1.0, 4..40),
    ) {
        let n = f.len().min(b.len());
        let mesh = mesh1(6);
        let mean = b[..n].iter().sum::<f64>() / n as f64;
        let bz: Vec<f64> = b[..n].iter().map(|v| v - mean).collect();
        let ff = GridFunction::from_values(&mesh, cells(3, 3 + n as i64), f[..n].to_vec()).unwrap();
        let bb = GridFunction::from_values(&mesh, cells(3, 3 + n as i64), bz.clone()).unwrap();
        let lhs = ff.inner_product(&bb).unwrap().abs();
        let v_inside: f64 = f[..n].windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        let b1: f64 = bz.iter().map(|v| v.abs()).sum::<f64>() * mesh.cell_size();
        prop_assert!(lhs <= 0.5 * v_inside * b1 + 1e-12, "{} > {}", lhs, 0.5 * v_inside * b1);
    }

    #[test]
    fn interval_symmetric_difference(a in -16i64..32, b in -16i64..32, a2 in -16i64..32, b2 in -16i64..32) {
        let mesh = mesh1(4);
        let ind = |lo: i64, hi: i64| {
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            GridFunction::from_values(&mesh, cells(lo, hi), vec![1.0; (hi - lo) as usize]).unwrap()
        };
        let (p, q) = (ind(a, b), ind(a2, b2));
        let l1: f64 = p.sub(&q).unwrap().values().iter().map(|v| v.abs()).sum::<f64>() * mesh.cell_size();
        let h = mesh.cell_size();
        let bound = ((a.min(b) - a2.min(b2)).abs() + (a.max(b) - a2.max(b2)).abs()) as f64 * h;
        prop_assert!(l1 <= bound + 1e-15);
    }

    #[test]
    fn perturbed_pairing_bound(
        f in steps_strategy(),
        s_num in 0i64..=16,
        sign_a in prop::bool::ANY,
        tau_frac in 0.0f64..1.0,
        m in 1i32..=4,
        j_lo in 0.0f64..1.0,
        j_len in 0.0f64..1.0,
    ) {
        // I = [0, 1); α dyadic, |1 − α| + |τ| ≤ η.
        let eta = pow2(-m);
        let s = (s_num as f64 / 16.0) * eta;
        let alpha = if sign_a { 1.0 + s } else { 1.0 - s };
        let tau = (eta - s) * (2.0 * tau_frac - 1.0);
        let len = eta + j_len * (1.0 - eta);
        let lo = j_lo * (1.0 - len);
        let (jl, jm, jr) = (lo, lo + len / 2.0, lo + len);
        let x_i = 0.5;
        let beta = alpha * (tau - x_i) + x_i;
        let composed = f.compose_affine(alpha, beta);
        let g_pair = |a: f64, b: f64| f.integral(a, b) - alpha * composed.integral(a, b);
        let lhs = (g_pair(jl, jm) - g_pair(jm, jr)).abs();
        let v = f.variation(lo - len, lo + 2.0 * len);
        prop_assert!(lhs <= 2.0 * eta * v + 1e-12, "{} > {}", lhs, 2.0 * eta * v);
    }

    #[test]
    fn map_displacement(x in 0.0f64..1.0, s_frac in 0.0f64..1.0, t_frac in -1.0f64..1.0, eta in 0.0f64..=0.5, up in prop::bool::ANY) {
        let s = s_frac * eta;
        let alpha = if up { 1.0 + s } else { 1.0 - s };
        let tau = (eta - s) * t_frac;
        let p = AffinePerturbation::new(SquareMatrix::diagonal(&[alpha]), vec![tau], eta).unwrap();
        let cube = DyadicCube::unit(1);
        let y = p.apply(&cube, &[x])[0];
        prop_assert!((x - y).abs() <= eta * cube.side() + 1e-15);
    }

    #[test]
    fn mollification_contracts(vals in prop::collection::vec(-1.0f64..1.0, 16), bump in prop::bool::ANY, r in 1i32..=3) {
        let mesh = Mesh::with_default_window(2, 4).unwrap();
        let f = GridFunction::from_values(&mesh, CellBox::new(vec![4, 4], vec![8, 8]), vals).unwrap();
        let psi = if bump { MollifierSpec::bump() } else { MollifierSpec::box_kernel() };
        let g = f.mollify(&psi, r as f64 / 16.0).unwrap();
        prop_assert!(g.l2_norm() <= f.l2_norm() * (1.0 + 1e-12));
        prop_assert!((g.integral() - f.integral()).abs() <= 1e-12);
    }

    #[test]
    fn variation_subadditive(a in prop::collection::vec(-1.0f64..1.0, 36), b in prop::collection::vec(-1.0f64..1.0, 30)) {
        let mesh = Mesh::with_default_window(2, 3).unwrap();
        let f = GridFunction::from_values(&mesh, CellBox::new(vec![0, 0], vec![6, 6]), a).unwrap();
        let g = GridFunction::from_values(&mesh, CellBox::new(vec![2, -1], vec![7, 5]), b).unwrap();
        let sum = f.add(&g).unwrap();
        for axis in 0..2 {
            for off in -2..9 {
                let lhs = sum.axis_tv(axis, &[off]);
                prop_assert!(lhs <= f.axis_tv(axis, &[off]) + g.axis_tv(axis, &[off]) + 1e-12);
            }
        }
    }
}

#[test]
fn step_oracle_agrees_with_grid_on_aligned_translations() {
    let mesh = mesh1(6);
    let h = mesh.cell_size();
    let vals = [0.25, -0.5, 0.125, 0.0, 0.375, -0.25, 0.5, 0.125];
    let f = GridFunction::from_values(&mesh, cells(0, 64), (0..64).map(|i| vals[i / 8]).collect())
        .unwrap();
    let steps = Steps {
        breaks: (0..=8).map(|i| i as f64 / 8.0).collect(),
        values: vals.to_vec(),
    };
    for shift in [-5i64, 3, 8, 17] {
        let tau = shift as f64 * h;
        let p = AffinePerturbation::translation_only(vec![tau], 0.5).unwrap();
        let g = f.perturb(&DyadicCube::unit(1), &p).unwrap();
        let oracle = steps.compose_affine(1.0, tau);
        for c in -64..128 {
            let x = (c as f64 + 0.5) * h;
            assert_eq!(g.value_at_cell(&[c]), oracle.eval(x));
        }
        assert_eq!(g.axis_tv(0, &[]), oracle.total_variation());
    }
}

#[test]
fn inner_product_with_translate_matches_overlap_oracle() {
    // ⟨h, h(· − τ)⟩ for h = h_[0,1): overlap integrals of the two halves.
    let mesh = mesh1(8);
    let idx = haarstab::dyadic::HaarIndex::new(DyadicCube::unit(1), 1).unwrap();
    let h = GridFunction::<f64>::from_haar(&idx, &mesh).unwrap();
    let steps = Steps {
        breaks: vec![0.0, 0.5, 1.0],
        values: vec![1.0, -1.0],
    };
    for tau in [0.25, 0.125, -0.375, 0.5, -0.0625] {
        let p = AffinePerturbation::translation_only(vec![-tau], 0.5).unwrap();
        let shifted = h.perturb(&DyadicCube::unit(1), &p).unwrap();
        let moved = steps.compose_affine(1.0, -tau);
        let mut oracle = 0.0;
        for (i, v) in moved.values.iter().enumerate() {
            oracle += v * steps.integral(moved.breaks[i], moved.breaks[i + 1]);
        }
        assert_eq!(h.inner_product(&shifted).unwrap(), oracle, "τ = {tau}");
    }
    // τ = 1/4: signs agree on [1/4, 1/2) and [3/4, 1), disagree on [1/2, 3/4).
    let p = AffinePerturbation::translation_only(vec![-0.25], 0.25).unwrap();
    let s = h.perturb(&DyadicCube::unit(1), &p).unwrap();
    assert_eq!(h.inner_product(&s).unwrap(), 0.25 - 0.25 + 0.25);
}

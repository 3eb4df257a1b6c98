use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SparseGram;
use crate::{Error, Result, Scalar};

/// Stopping rule for [`power_iteration`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerOptions {
    /// Relative change of the Rayleigh quotient regarded as converged.
    pub tolerance: f64,
    /// Consecutive converged steps required.
    pub stable_iterations: usize,
    pub max_iterations: usize,
    /// Independent random starts; the largest estimate wins.
    pub restarts: usize,
    pub seed: u64,
    /// Vectors iterated together. With `b` columns the top estimate
    /// converges like `(λ_{b+1}/λ₁)^{2k}`, so clustered leading
    /// eigenvalues do not stall it.
    #[serde(default = "default_block")]
    pub block: usize,
}

fn default_block() -> usize {
    4
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            stable_iterations: 3,
            max_iterations: 20_000,
            restarts: 2,
            seed: 0x5eed_0001,
            block: default_block(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenEstimate<T = f64> {
    pub value: f64,
    /// Unit vector of the last iterate.
    pub vector: Vec<T>,
    pub iterations: usize,
    pub last_change: f64,
}

/// Largest eigenvalue of a positive semidefinite Hermitian matrix.
///
/// Block power iteration: a few random vectors are multiplied by `G` and
/// re-orthonormalized each step, and the estimate is the largest Rayleigh
/// quotient on their span.
pub fn power_iteration<T: Scalar>(
    g: &SparseGram<T>,
    opts: &PowerOptions,
) -> Result<EigenEstimate<T>> {
    best_of_restarts(g.size(), opts, |x| g.mul_vec(x))
}

/// Second eigenvalue, by iterating on `G − λ₁ v₁ v₁*`.
pub fn deflated_second<T: Scalar>(
    g: &SparseGram<T>,
    top: &EigenEstimate<T>,
    opts: &PowerOptions,
) -> Result<EigenEstimate<T>> {
    let v1 = &top.vector;
    best_of_restarts(g.size(), opts, |x| {
        let c = dot(x, v1).scale(top.value);
        let mut y = g.mul_vec(x);
        for (yi, vi) in y.iter_mut().zip(v1) {
            *yi = *yi - c * *vi;
        }
        y
    })
}

fn best_of_restarts<T: Scalar>(
    n: usize,
    opts: &PowerOptions,
    apply: impl Fn(&[T]) -> Vec<T>,
) -> Result<EigenEstimate<T>> {
    if n == 0 {
        return Err(Error::Domain("eigenvalue of an empty matrix".into()));
    }
    let width = opts.block.clamp(1, n);
    let mut best: Option<EigenEstimate<T>> = None;
    for r in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
        let start: Vec<Vec<T>> = (0..width)
            .map(|_| {
                (0..n)
                    .map(|_| {
                        let re = rng.gen_range(-1.0..1.0);
                        let im = if T::IS_COMPLEX {
                            rng.gen_range(-1.0..1.0)
                        } else {
                            0.0
                        };
                        T::from_parts(re, im)
                    })
                    .collect()
            })
            .collect();
        let est = iterate(start, opts, &apply)?;
        if best.as_ref().is_none_or(|b| est.value > b.value) {
            best = Some(est);
        }
    }
    Ok(best.expect("at least one start"))
}

fn iterate<T: Scalar>(
    start: Vec<Vec<T>>,
    opts: &PowerOptions,
    apply: &impl Fn(&[T]) -> Vec<T>,
) -> Result<EigenEstimate<T>> {
    let n = start[0].len();
    let mut basis = orthonormalize(start);
    let mut prev = f64::NAN;
    let mut stable = 0usize;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let images: Vec<Vec<T>> = basis.iter().map(|v| apply(v)).collect();
        let (lambda, coef) = top_ritz(&basis, &images);
        let next = orthonormalize(images);
        if next.is_empty() || lambda <= 0.0 {
            let mut vector = basis
                .into_iter()
                .next()
                .unwrap_or_else(|| vec![T::zero(); n]);
            if normalize(&mut vector) == 0.0 {
                vector[0] = T::from_real(1.0);
            }
            return Ok(EigenEstimate {
                value: 0.0,
                vector,
                iterations: it,
                last_change: 0.0,
            });
        }
        change = if lambda == prev {
            0.0
        } else {
            (lambda - prev).abs() / lambda.abs().max(f64::MIN_POSITIVE)
        };
        stable = if change <= opts.tolerance {
            stable + 1
        } else {
            0
        };
        prev = lambda;
        if stable >= opts.stable_iterations {
            let mut vector = vec![T::zero(); n];
            for (c, v) in coef.iter().zip(&basis) {
                for (x, y) in vector.iter_mut().zip(v) {
                    *x += *c * *y;
                }
            }
            normalize(&mut vector);
            return Ok(EigenEstimate {
                value: lambda,
                vector,
                iterations: it,
                last_change: change,
            });
        }
        basis = next;
    }
    Err(Error::Convergence {
        iterations: opts.max_iterations,
        last_change: change,
        estimate: prev,
    })
}

/// Modified Gram-Schmidt; columns that are numerically dependent on the
/// earlier ones, or negligible next to the largest, are dropped.
fn orthonormalize<T: Scalar>(cols: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let scale = cols
        .iter()
        .map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut out: Vec<Vec<T>> = Vec::with_capacity(cols.len());
    if scale == 0.0 {
        return out;
    }
    for mut c in cols {
        for _ in 0..2 {
            for q in &out {
                let p = dot(&c, q);
                for (x, y) in c.iter_mut().zip(q) {
                    *x = *x - p * *y;
                }
            }
        }
        let norm = c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-13 * scale {
            for x in c.iter_mut() {
                *x = x.scale(1.0 / norm);
            }
            out.push(c);
        }
    }
    out
}

/// Largest eigenvalue of `Vᴴ G V` and its eigenvector in the basis `V`.
fn top_ritz<T: Scalar>(basis: &[Vec<T>], images: &[Vec<T>]) -> (f64, Vec<T>) {
    let m = basis.len();
    // H = A + iB, embedded as the real symmetric [[A, −B], [B, A]].
    let w = if T::IS_COMPLEX { 2 * m } else { m };
    let mut a = vec![vec![0.0; w]; w];
    for i in 0..m {
        for j in 0..m {
            let h = dot(&images[j], &basis[i]);
            let hc = dot(&images[i], &basis[j]).conj();
            let (re, im) = (0.5 * (h.re() + hc.re()), 0.5 * (h.im() + hc.im()));
            a[i][j] = re;
            if T::IS_COMPLEX {
                a[m + i][m + j] = re;
                a[m + i][j] = im;
                a[i][m + j] = -im;
            }
        }
    }
    let (values, vectors) = jacobi_eigen(a);
    let top = (0..w)
        .max_by(|&p, &q| values[p].total_cmp(&values[q]))
        .expect("nonempty block");
    let coef = (0..m)
        .map(|i| {
            let im = if T::IS_COMPLEX {
                vectors[m + i][top]
            } else {
                0.0
            };
            T::from_parts(vectors[i][top], im)
        })
        .collect();
    (values[top], coef)
}

/// Cyclic Jacobi for a small real symmetric matrix. Returns the
/// eigenvalues and the eigenvectors as columns.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let total: f64 = a.iter().flatten().map(|x| x * x).sum();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= 1e-30 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (xp, xq) = (row[p], row[q]);
                    row[p] = c * xp - s * xq;
                    row[q] = s * xp + c * xq;
                }
                let (rp, rq) = (a[p].clone(), a[q].clone());
                for (k, (xp, xq)) in rp.into_iter().zip(rq).enumerate() {
                    a[p][k] = c * xp - s * xq;
                    a[q][k] = s * xp + c * xq;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// `Σ a_i conj(b_i)`.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * y.conj();
    }
    s
}

fn normalize<T: Scalar>(v: &mut [T]) -> f64 {
    let n = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x = x.scale(1.0 / n);
        }
    }
    n
}

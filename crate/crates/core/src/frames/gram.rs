use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::{power_iteration, PowerOptions};
use super::FamilySpec;
use crate::gridfn::CellBox;
use crate::{Error, Result, Scalar};

/// Symmetric (Hermitian) sparse matrix stored as full rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGram<T = f64> {
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseGram<T> {
    /// Builds from upper-triangle entries `(i, j, v)` with `i ≤ j`.
    pub fn from_upper(n: usize, entries: impl IntoIterator<Item = (usize, usize, T)>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for (i, j, v) in entries {
            if v.is_zero() {
                continue;
            }
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v.conj()));
            }
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
        }
        Self { rows }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match self.rows[i].binary_search_by_key(&j, |e| e.0) {
            Ok(p) => self.rows[i][p].1,
            Err(_) => T::zero(),
        }
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.rows
            .par_iter()
            .map(|r| {
                let mut s = T::zero();
                for &(j, v) in r {
                    s += v * x[j];
                }
                s
            })
            .collect()
    }

    /// Largest absolute off-diagonal entry.
    pub fn max_off_diagonal(&self) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().filter(move |e| e.0 != i).map(|e| e.1.abs()))
            .fold(0.0, f64::max)
    }

    /// Largest absolute deviation from the identity matrix.
    pub fn max_deviation_from_identity(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, r) in self.rows.iter().enumerate() {
            let mut saw_diag = false;
            for &(j, v) in r {
                let target = if i == j { T::from_real(1.0) } else { T::zero() };
                saw_diag |= i == j;
                worst = worst.max((v - target).abs());
            }
            if !saw_diag {
                worst = worst.max(1.0);
            }
        }
        worst
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.size()];
        for (new, &old) in keep.iter().enumerate() {
            pos[old] = new;
        }
        let rows = keep
            .iter()
            .map(|&old| {
                let mut r: Vec<(usize, T)> = self.rows[old]
                    .iter()
                    .filter(|e| pos[e.0] != usize::MAX)
                    .map(|&(j, v)| (pos[j], v))
                    .collect();
                r.sort_by_key(|e| e.0);
                r
            })
            .collect();
        Self { rows }
    }

    /// Coordinate-format CSV: `row,col,re,im`, one line per stored entry.
    pub fn write_coo_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["row", "col", "re", "im"])?;
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, v) in r {
                out.serialize((i, j, v.re(), v.im()))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Index pairs whose boxes intersect, found by a sweep along axis 0.
/// With `symmetric`, `b` is ignored and pairs `(i, j)`, `i ≤ j`, come from `a` alone.
pub(crate) fn overlapping_pairs(
    a: &[&CellBox],
    b: &[&CellBox],
    symmetric: bool,
) -> Vec<(usize, usize)> {
    let order = |boxes: &[&CellBox]| {
        let mut idx: Vec<usize> = (0..boxes.len()).filter(|&i| !boxes[i].is_empty()).collect();
        idx.sort_by_key(|&i| boxes[i].lo[0]);
        idx
    };
    let (oa, ob) = (order(a), order(b));
    let mut pairs = Vec::new();
    if symmetric {
        for (p, &i) in oa.iter().enumerate() {
            pairs.push((i, i));
            for &j in &oa[p + 1..] {
                if a[j].lo[0] >= a[i].hi[0] {
                    break;
                }
                if a[i].intersects(a[j]) {
                    pairs.push((i.min(j), i.max(j)));
                }
            }
        }
    } else {
        for &i in &oa {
            for &j in &ob {
                if b[j].lo[0] >= a[i].hi[0] {
                    break;
                }
                if a[i].intersects(b[j]) {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs
}

impl<T: Scalar> FamilySpec<T> {
    /// Gram matrix `G(i, j) = ⟨ψ_i, ψ_j⟩`; pairs with disjoint support boxes are skipped.
    pub fn gram_matrix(&self) -> Result<SparseGram<T>> {
        if self.is_empty() {
            return Err(Error::Domain("Gram matrix of an empty family".into()));
        }
        let boxes: Vec<&CellBox> = self.members().iter().map(|m| m.support_box()).collect();
        let pairs = overlapping_pairs(&boxes, &boxes, true);
        let m = self.members();
        let entries: Vec<(usize, usize, T)> = pairs
            .par_iter()
            .map(|&(i, j)| (i, j, m[i].inner_product_unchecked(&m[j])))
            .collect();
        Ok(SparseGram::from_upper(self.len(), entries))
    }

    /// Optimal Bessel bound of the finite family and its square root.
    pub fn bessel_bound(&self) -> Result<(f64, f64)> {
        let s = self.gram_summary(&PowerOptions::default())?;
        Ok((s.bessel_bound, s.ao_norm))
    }

    pub fn gram_summary(&self, opts: &PowerOptions) -> Result<GramSummary> {
        let g = self.gram_matrix()?;
        GramSummary::from_gram(&g, opts)
    }
}

/// Bessel bound and iteration metadata of a finite family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramSummary {
    pub size: usize,
    pub nnz: usize,
    pub bessel_bound: f64,
    pub ao_norm: f64,
    pub schur_sq: Option<f64>,
    pub iterations: usize,
    pub last_change: f64,
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl GramSummary {
    pub fn from_gram<T: Scalar>(g: &SparseGram<T>, opts: &PowerOptions) -> Result<Self> {
        let est = power_iteration(g, opts)?;
        let b = est.value.max(0.0);
        Ok(Self {
            size: g.size(),
            nnz: g.nnz(),
            bessel_bound: b,
            ao_norm: b.sqrt(),
            schur_sq: None,
            iterations: est.iterations,
            last_change: est.last_change,
            tolerance: opts.tolerance,
            restarts: opts.restarts,
            seed: opts.seed,
        })
    }

    pub fn with_schur(mut self, schur_sq: f64) -> Self {
        self.schur_sq = Some(schur_sq);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::{enumerate_window, DyadicCube, HaarIndex};
    use crate::gridfn::{GridFunction, Mesh};

    #[test]
    fn haar_gram_is_identity() {
        let mesh = Mesh::with_default_window(2, 3).unwrap();
        let idx = enumerate_window(2, 0, -2, &DyadicCube::unit(2)).unwrap();
        let fam = FamilySpec::<f64>::haar(&idx, &mesh).unwrap();
        let g = fam.gram_matrix().unwrap();
        assert_eq!(g.size(), 63);
        assert!(g.max_deviation_from_identity() < 1e-14);
        let (b, ao) = fam.bessel_bound().unwrap();
        assert!((b - 1.0).abs() < 1e-10 && (ao - 1.0).abs() < 1e-10);
    }

    #[test]
    fn duplicate_member_doubles() {
        let mesh = Mesh::with_default_window(1, 4).unwrap();
        let h = HaarIndex::new(DyadicCube::new(-1, vec![1]).unwrap(), 1).unwrap();
        let f = GridFunction::<f64>::from_haar(&h, &mesh)
            .unwrap()
            .scale(3.0);
        let fam = FamilySpec::new(vec![f.clone(), f]).unwrap();
        let (b, _) = fam.bessel_bound().unwrap();
        assert!((b - 18.0).abs() < 1e-9, "{b}");
    }

    #[test]
    fn disjoint_pair_is_diagonal() {
        let mesh = Mesh::with_default_window(1, 2).unwrap();
        let a =
            GridFunction::<f64>::indicator(&DyadicCube::new(-1, vec![0]).unwrap(), &mesh).unwrap();
        let b =
            GridFunction::<f64>::indicator(&DyadicCube::new(-1, vec![3]).unwrap(), &mesh).unwrap();
        let g = FamilySpec::new(vec![a, b]).unwrap().gram_matrix().unwrap();
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.get(0, 1), 0.0);
        assert_eq!(g.get(1, 1), 0.5);
    }

    #[test]
    fn coo_export() {
        let g = SparseGram::<f64>::from_upper(2, [(0, 0, 1.0), (0, 1, 0.5), (1, 1, 2.0)]);
        let mut buf = Vec::new();
        g.write_coo_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("1,0,0.5,0.0"));
    }

    #[test]
    fn summary_json_roundtrip() {
        let g = SparseGram::<f64>::from_upper(1, [(0, 0, 4.0)]);
        let s = GramSummary::from_gram(&g, &PowerOptions::default())
            .unwrap()
            .with_schur(4.0);
        let back: GramSummary = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        assert!((s.ao_norm - 2.0).abs() < 1e-12);
    }
}

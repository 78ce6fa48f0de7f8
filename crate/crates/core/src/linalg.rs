//! Dense-band symmetric storage, an unpivoted LDLᵀ factorization with
//! inertia reporting, and the Dirichlet elimination map.
//!
//! Every system solved in this crate is symmetric with bandwidth equal to
//! one grid column, so a band factorization is exact, cheap at desk scale,
//! and exposes the pivot signs the eigen solvers use to certify shifts.

use sprs::CsMat;

use crate::error::{Error, Result};

/// Relative pivot size below which a factorization is declared singular.
const PIVOT_FLOOR: f64 = 1e-13;

/// Maps global dofs to the compact numbering of unconstrained ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    free: Vec<usize>,
    slot: Vec<Option<usize>>,
}

impl DofMap {
    pub fn from_mask(fixed: &[bool]) -> Self {
        let mut free = Vec::new();
        let slot = fixed
            .iter()
            .enumerate()
            .map(|(g, &c)| {
                if c {
                    None
                } else {
                    free.push(g);
                    Some(free.len() - 1)
                }
            })
            .collect();
        DofMap { free, slot }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_total(&self) -> usize {
        self.slot.len()
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn slot(&self, global: usize) -> Option<usize> {
        self.slot[global]
    }

    pub fn restrict(&self, global: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&g| global[g]).collect()
    }

    /// Scatters free values into a global vector that is zero elsewhere.
    pub fn extend(&self, local: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.slot.len()];
        for (k, &g) in self.free.iter().enumerate() {
            out[g] = local[k];
        }
        out
    }
}

/// Symmetric band matrix; only the lower band is stored, row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBanded {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.bw + 1) + self.bw + j - i
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.at(i, j)]
        }
    }

    /// Adds `v` to entry `(i, j)` (and implicitly `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.bw, "entry ({i}, {j}) outside band {}", self.bw);
        let k = self.at(i, j);
        self.data[k] += v;
    }

    /// Restriction of a symmetric CSR matrix to the free dofs.
    ///
    /// Only the lower triangle of `mat` is read.
    pub fn from_csr(mat: &CsMat<f64>, dofs: &DofMap) -> Self {
        let mut bw = 0;
        let mut entries = Vec::new();
        for (row, vec) in mat.outer_iterator().enumerate() {
            let Some(i) = dofs.slot(row) else { continue };
            for (col, &v) in vec.iter() {
                if let Some(j) = dofs.slot(col) {
                    if j <= i && v != 0.0 {
                        bw = bw.max(i - j);
                        entries.push((i, j, v));
                    }
                }
            }
        }
        let mut out = SymBanded::zeros(dofs.n_free(), bw);
        for (i, j, v) in entries {
            out.add(i, j, v);
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = &self.data[self.at(i, j0)..=self.at(i, i)];
            let mut acc = 0.0;
            for (k, &a) in row.iter().enumerate() {
                let j = j0 + k;
                acc += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
            y[i] += acc;
        }
        y
    }

    /// Factors `self = L D Lᵀ` without pivoting.
    ///
    /// Fails with [`Error::SingularOperator`] when a pivot falls below
    /// `1e-13` times the largest diagonal magnitude. Negative pivots are
    /// allowed and counted; they give the number of negative eigenvalues.
    pub fn factor(&self) -> Result<BandedLdl> {
        let (n, bw) = (self.n, self.bw);
        let scale = (0..n).map(|i| self.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * (bw + 1)];
        let mut d = vec![0.0; n];
        let mut t = vec![0.0; bw];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let width = i - j0;
            // t[j - j0] = L[i][j] * D[j]
            for jj in 0..width {
                let j = j0 + jj;
                let mut s = self.data[self.at(i, j)];
                let k0 = j0.max(j.saturating_sub(bw));
                let row_j = j * (bw + 1) + bw - j;
                for k in k0..j {
                    s -= t[k - j0] * l[row_j + k];
                }
                t[jj] = s;
            }
            let row_i = i * (bw + 1) + bw - i;
            let mut di = self.data[self.at(i, i)];
            for jj in 0..width {
                let j = j0 + jj;
                let lij = t[jj] / d[j];
                l[row_i + j] = lij;
                di -= t[jj] * lij;
            }
            if !(di.abs() > PIVOT_FLOOR * scale) {
                return Err(Error::SingularOperator { index: i, pivot: di });
            }
            d[i] = di;
        }
        Ok(BandedLdl { n, bw, l, d })
    }
}

/// `L D Lᵀ` factors of a [`SymBanded`] matrix.
#[derive(Debug, Clone)]
pub struct BandedLdl {
    n: usize,
    bw: usize,
    l: Vec<f64>,
    d: Vec<f64>,
}

impl BandedLdl {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of negative pivots, equal to the number of negative eigenvalues.
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&p| p < 0.0).count()
    }

    /// `(row, pivot)` of the pivot with the smallest magnitude.
    pub fn smallest_pivot(&self) -> (usize, f64) {
        self.d
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap_or((0, 0.0))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        assert_eq!(x.len(), n);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let base = i * (bw + 1) + bw - i;
            let mut s = x[i];
            for j in j0..i {
                s -= self.l[base + j] * x[j];
            }
            x[i] = s;
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let xi = x[i];
            let j0 = i.saturating_sub(bw);
            let base = i * (bw + 1) + bw - i;
            for j in j0..i {
                x[j] -= self.l[base + j] * xi;
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

/// `y = A x` for a CSR matrix.
pub fn csr_apply(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.rows()];
    sprs::prod::mul_acc_mat_vec_csr(a.view(), x, &mut y[..]);
    y
}

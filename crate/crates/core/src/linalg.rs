//! Dense symmetric matrices and their Cholesky factors.

use crate::error::{Error, Result};

/// Diagonal jitter tried once when a factorization fails.
pub const JITTER: f64 = 1e-12;

/// Square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    /// Fills the matrix from `f(i, j)` for `j ≤ i` and mirrors it.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(n: usize, mut f: F) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = A`, stored packed by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    packed: Vec<f64>,
    jittered: bool,
}

#[inline]
fn offset(i: usize) -> usize {
    i * (i + 1) / 2
}

fn factor_strict(a: &SymMatrix, jitter: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    let mut l = vec![0.0; offset(n)];
    for i in 0..n {
        let ri = offset(i);
        for j in 0..=i {
            let rj = offset(j);
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l[ri + k] * l[rj + k];
            }
            if i == j {
                sum += jitter;
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::Factorization {
                        index: i + 1,
                        pivot: sum,
                    });
                }
                l[ri + i] = sum.sqrt();
            } else {
                l[ri + j] = sum / l[rj + j];
            }
        }
    }
    Ok(l)
}

impl Cholesky {
    /// Factors a positive definite matrix.
    ///
    /// On failure a jitter of [`JITTER`] is added to the diagonal once; if that
    /// also fails the error names the first non-positive leading minor (1-based).
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        match factor_strict(a, 0.0) {
            Ok(packed) => Ok(Self {
                n: a.dim(),
                packed,
                jittered: false,
            }),
            Err(first) => match factor_strict(a, JITTER) {
                Ok(packed) => Ok(Self {
                    n: a.dim(),
                    packed,
                    jittered: true,
                }),
                Err(_) => Err(first),
            },
        }
    }

    /// Factors a positive semidefinite matrix; a pivot below `tol · a_ii`
    /// (in absolute value, so rounding may make it slightly negative) zeroes its
    /// column instead of failing.
    pub fn factor_semidefinite(a: &SymMatrix, tol: f64) -> Result<Self> {
        let n = a.dim();
        let mut l = vec![0.0; offset(n)];
        for i in 0..n {
            let floor = tol * a.get(i, i).abs();
            let ri = offset(i);
            for j in 0..=i {
                let rj = offset(j);
                let mut sum = a.get(i, j);
                for k in 0..j {
                    sum -= l[ri + k] * l[rj + k];
                }
                if i == j {
                    if sum < -floor.max(f64::MIN_POSITIVE) || !sum.is_finite() {
                        return Err(Error::Factorization {
                            index: i + 1,
                            pivot: sum,
                        });
                    }
                    l[ri + i] = if sum > floor { sum.sqrt() } else { 0.0 };
                } else {
                    let d = l[rj + j];
                    l[ri + j] = if d > 0.0 { sum / d } else { 0.0 };
                }
            }
        }
        Ok(Self {
            n,
            packed: l,
            jittered: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Whether the diagonal jitter was needed.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.packed[offset(i) + j]
        }
    }

    /// Row `i` of `L`, entries `0..=i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.packed[offset(i)..offset(i) + i + 1]
    }

    /// `out = L z`.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).iter().zip(z).map(|(l, z)| l * z).sum();
        }
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_fn(self.n, |i, j| {
            self.row(j).iter().zip(self.row(i)).map(|(a, b)| a * b).sum()
        })
    }

    /// `‖L Lᵀ - A‖_F / ‖A‖_F`.
    pub fn relative_residual(&self, a: &SymMatrix) -> f64 {
        let r = self.reconstruct();
        let mut num = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let d = r.get(i, j) - a.get(i, j);
                num += d * d;
            }
        }
        num.sqrt() / a.frobenius()
    }
}

/// Low-rank factor `G` (`n × r`) with `G Gᵀ ≈ A` from a diagonally pivoted
/// Cholesky of a positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotedCholesky {
    n: usize,
    rank: usize,
    /// row-major `n × rank`
    g: Vec<f64>,
}

impl PivotedCholesky {
    /// Pivots the first `leading` indices in their natural order, then greedily
    /// by largest remaining diagonal; stops once that falls below `tol · max diag`.
    /// Column `k < leading` of `G` only depends on indices `≤ k`.
    pub fn factor(a: &SymMatrix, tol: f64, leading: usize) -> Result<Self> {
        let n = a.dim();
        let mut d: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
        let scale = d.iter().cloned().fold(0.0_f64, f64::max);
        let floor = tol * scale;
        let mut used = vec![false; n];
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for k in 0..n {
            let p = if k < leading.min(n) {
                k
            } else {
                match (0..n).filter(|&i| !used[i]).max_by(|&i, &j| d[i].total_cmp(&d[j])) {
                    Some(p) => p,
                    None => break,
                }
            };
            if !d[p].is_finite() || d[p] < -floor.max(f64::MIN_POSITIVE) * 1e3 {
                return Err(Error::Factorization { index: p + 1, pivot: d[p] });
            }
            if d[p] <= floor {
                if k < leading {
                    used[p] = true;
                    cols.push(vec![0.0; n]);
                    continue;
                }
                break;
            }
            let piv = d[p].sqrt();
            let mut col = vec![0.0; n];
            for i in 0..n {
                if used[i] {
                    continue;
                }
                let mut s = a.get(i, p);
                for c in &cols {
                    s -= c[i] * c[p];
                }
                col[i] = s / piv;
            }
            col[p] = piv;
            used[p] = true;
            for i in 0..n {
                if !used[i] {
                    d[i] -= col[i] * col[i];
                }
            }
            cols.push(col);
        }
        let rank = cols.len();
        let mut g = vec![0.0; n * rank];
        for (k, c) in cols.iter().enumerate() {
            for i in 0..n {
                g[i * rank + k] = c[i];
            }
        }
        Ok(Self { n, rank, g })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.g[i * self.rank + k]
    }

    /// `out = G z[..rank]`.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        debug_assert!(z.len() >= self.rank);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.g[i * self.rank..(i + 1) * self.rank];
            *o = row.iter().zip(z).map(|(g, z)| g * z).sum();
        }
    }

    /// `‖G Gᵀ - A‖_F / ‖A‖_F`.
    pub fn relative_residual(&self, a: &SymMatrix) -> f64 {
        let mut num = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let gg: f64 = (0..self.rank).map(|k| self.get(i, k) * self.get(j, k)).sum();
                let d = gg - a.get(i, j);
                num += d * d;
            }
        }
        num.sqrt() / a.frobenius()
    }
}

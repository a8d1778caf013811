//! Sparse storage, Jacobi-preconditioned CG, banded Cholesky and a dense
//! generalized symmetric eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in triplets {
            assert!(i < n_rows && j < n_cols, "triplet ({i},{j}) out of bounds");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n_rows {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, i)).collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    /// Principal submatrix on `rows × cols` (index lists, new numbering in
    /// list order).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n_cols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let mut trip = Vec::new();
        for (ri, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if map[c] != usize::MAX {
                    trip.push((ri, map[c], v));
                }
            }
        }
        Self::from_triplets(rows.len(), cols.len(), trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest `|i − j|` over stored nonzeros.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n_rows {
            for (j, _) in self.row(i) {
                bw = bw.max(i.abs_diff(j));
            }
        }
        bw
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                d = d.max((v - self.get(j, i)).abs());
            }
        }
        d
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solver diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CgInfo {
    pub iterations: usize,
    pub final_residual: f64,
    pub method: String,
    #[serde(skip)]
    pub history: Vec<f64>,
}

/// Jacobi-preconditioned conjugate gradients; stops when
/// `‖b − Ax‖ ≤ tol ‖b‖`.
pub fn pcg(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgInfo)> {
    let n = a.n_rows;
    let bnorm = dot(b, b).sqrt();
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let info = |it, res, history| CgInfo { iterations: it, final_residual: res, method: "jacobi-pcg".into(), history };
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], info(0, 0.0, vec![0.0])));
    }
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = a.mul_vec(&x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = vec![dot(&r, &r).sqrt() / bnorm];
    for it in 1..=max_iter {
        if *history.last().unwrap() <= tol {
            let res = *history.last().unwrap();
            return Ok((x, info(it - 1, res, history)));
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            let res = *history.last().unwrap();
            return Err(Error::CgStagnation { iterations: it, residual: res, history });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = r[i] * dinv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        history.push(dot(&r, &r).sqrt() / bnorm);
    }
    // recompute the true residual before giving up
    let ax = a.mul_vec(&x);
    let res = ax.iter().zip(b).map(|(p, q)| (q - p) * (q - p)).sum::<f64>().sqrt() / bnorm;
    if res <= tol {
        return Ok((x, info(max_iter, res, history)));
    }
    Err(Error::CgStagnation { iterations: max_iter, residual: res, history })
}

/// Cholesky factor of a symmetric positive definite band matrix, stored
/// row-wise as `L[i][i−bw..=i]`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows;
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut data = vec![0.0; n * w];
        // slot (i, j) with i − bw ≤ j ≤ i lives at i*w + (j + bw − i)
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[i * w + (j + bw - i)] = v;
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = data[i * w + (j + bw - i)];
                for k in k0..j {
                    s -= data[i * w + (k + bw - i)] * data[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::SingularBlock(format!("nonpositive pivot {s:e} at row {i}")));
                    }
                    data[i * w + bw] = s.sqrt();
                } else {
                    data[i * w + (j + bw - i)] = s / data[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[i * w + (k + bw - i)] * b[k];
            }
            b[i] = s / self.data[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= self.data[k * w + (i + bw - k)] * b[k];
            }
            b[i] = s / self.data[i * w + bw];
        }
    }
}

/// Symmetric-definite pencil `K v = μ M v`: eigenvalues ascending and
/// `M`-orthonormal eigenvectors as columns.
pub fn generalized_sym_eigen(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = m.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotSpd { eigenvalue: m.clone().symmetric_eigenvalues().min() })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::SingularBlock("mass factor".into()))?;
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    let back = linv.transpose();
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &(&back * eig.eigenvectors.column(i)));
    }
    Ok((vals, vecs))
}

//! Sparse symmetric matrices and a simplicial sparse Cholesky factorization.
//!
//! Matrices are stored in compressed sparse column form with both triangles
//! present. The factorization is up-looking (row by row of L) over an
//! elimination tree, preceded by a reverse Cuthill-McKee fill-reducing
//! ordering in which near-dense columns are deferred to the end of the
//! elimination order. All orderings and summations are deterministic.

use std::io::Write;

use crate::error::{Error, Result};

/// Symmetric sparse matrix (both triangles stored, CSC, rows sorted).
#[derive(Debug, Clone)]
pub struct SparseSpd {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSpd {
    /// Build from triplets; duplicate entries are summed. The caller supplies
    /// a symmetric entry set (both (i,j) and (j,i) for off-diagonals).
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "triplet ({i}, {j}) out of bounds for dimension {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite matrix entry at ({i}, {j})"
                )));
            }
        }
        let mut counts = vec![0usize; n + 1];
        for &(_, j, _) in entries {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let mut rows = vec![0usize; entries.len()];
        let mut vals = vec![0.0f64; entries.len()];
        let mut cursor = counts.clone();
        for &(i, j, v) in entries {
            let p = cursor[j];
            rows[p] = i;
            vals[p] = v;
            cursor[j] += 1;
        }
        // sort rows within each column and merge duplicates
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        for j in 0..n {
            let mut slice: Vec<(usize, f64)> = (counts[j]..counts[j + 1])
                .map(|p| (rows[p], vals[p]))
                .collect();
            slice.sort_by_key(|e| e.0);
            for (r, v) in slice {
                if let Some(last) = row_idx.last() {
                    if *last == r && row_idx.len() > col_ptr[j] {
                        *values.last_mut().unwrap() += v;
                        continue;
                    }
                }
                row_idx.push(r);
                values.push(v);
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Ok(SparseSpd {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Diagonal matrix.
    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseSpd {
            n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Entries of column `j` as (row, value) pairs, rows ascending.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.col_ptr[j]..self.col_ptr[j + 1]).map(move |p| (self.row_idx[p], self.values[p]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.column(j)
            .find(|&(r, _)| r == i)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.get(j, j)).collect()
    }

    /// Max |A_ij - A_ji| over the stored pattern.
    pub fn symmetry_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                if i < j {
                    worst = worst.max((v - self.get(j, i)).abs());
                }
            }
        }
        worst
    }

    pub fn scale(&self, c: f64) -> SparseSpd {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }

    /// A + B (pattern union).
    pub fn add(&self, other: &SparseSpd) -> Result<SparseSpd> {
        if self.n != other.n {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch in sparse add: {} vs {}",
                self.n, other.n
            )));
        }
        let mut col_ptr = vec![0usize; self.n + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for j in 0..self.n {
            let mut a = self.col_ptr[j];
            let mut b = other.col_ptr[j];
            let (ae, be) = (self.col_ptr[j + 1], other.col_ptr[j + 1]);
            while a < ae || b < be {
                let ra = if a < ae { self.row_idx[a] } else { usize::MAX };
                let rb = if b < be { other.row_idx[b] } else { usize::MAX };
                if ra == rb {
                    row_idx.push(ra);
                    values.push(self.values[a] + other.values[b]);
                    a += 1;
                    b += 1;
                } else if ra < rb {
                    row_idx.push(ra);
                    values.push(self.values[a]);
                    a += 1;
                } else {
                    row_idx.push(rb);
                    values.push(other.values[b]);
                    b += 1;
                }
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Ok(SparseSpd {
            n: self.n,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// A with `d` added to the diagonal.
    pub fn add_diag(&self, d: &[f64]) -> Result<SparseSpd> {
        self.add(&SparseSpd::from_diag(d))
    }

    /// Scale row i by r[i] (used for C^{-1} G with diagonal C).
    pub fn scale_rows(&self, r: &[f64]) -> SparseSpd {
        let mut out = self.clone();
        for p in 0..out.values.len() {
            out.values[p] *= r[out.row_idx[p]];
        }
        out
    }

    /// Sparse-sparse product A * B (Gustavson's algorithm).
    pub fn mul_sparse(&self, other: &SparseSpd) -> Result<SparseSpd> {
        if self.n != other.n {
            return Err(Error::InvalidInput(
                "dimension mismatch in sparse multiply".into(),
            ));
        }
        let n = self.n;
        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        let mut accum = vec![0.0f64; n];
        let mut marked = vec![usize::MAX; n];
        let mut pattern: Vec<usize> = Vec::new();
        for j in 0..n {
            pattern.clear();
            for (k, bkj) in other.column(j) {
                for (i, aik) in self.column(k) {
                    if marked[i] != j {
                        marked[i] = j;
                        accum[i] = 0.0;
                        pattern.push(i);
                    }
                    accum[i] += aik * bkj;
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                row_idx.push(i);
                values.push(accum[i]);
            }
            col_ptr[j + 1] = row_idx.len();
        }
        Ok(SparseSpd {
            n,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let xj = x[j];
            if xj != 0.0 {
                for (i, v) in self.column(j) {
                    y[i] += v * xj;
                }
            }
        }
        y
    }

    /// x^T A x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Text dump, one `i j value` line per stored entry.
    pub fn write_triplets(&self, mut w: impl Write) -> Result<()> {
        for j in 0..self.n {
            for (i, v) in self.column(j) {
                writeln!(w, "{i} {j} {v}")?;
            }
        }
        Ok(())
    }

    /// Factorize P A P^T = L L^T with the built-in fill-reducing ordering and
    /// a diagonal jitter ladder: 1e-12 * max|diag|, doubling until 1e-6 *
    /// max|diag|, after which the matrix is declared singular.
    pub fn factorize(&self) -> Result<CholFactor> {
        let perm = rcm_ordering(self.n, &self.col_ptr, &self.row_idx);
        self.factorize_with_ordering(perm)
    }

    pub fn factorize_with_ordering(&self, perm: Vec<usize>) -> Result<CholFactor> {
        let max_diag = (0..self.n)
            .map(|j| self.get(j, j).abs())
            .fold(0.0f64, f64::max);
        if max_diag == 0.0 && self.n > 0 {
            // jitter is relative to the diagonal; a zero diagonal is hopeless
            return try_factorize(self, &perm, 0.0).map_err(|_| Error::Singular);
        }
        let mut jitter = 0.0;
        loop {
            match try_factorize(self, &perm, jitter) {
                Ok(f) => return Ok(f),
                Err(_) => {
                    jitter = if jitter == 0.0 {
                        1e-12 * max_diag
                    } else {
                        2.0 * jitter
                    };
                    if jitter > 1e-6 * max_diag {
                        return Err(Error::Singular);
                    }
                }
            }
        }
    }
}

/// Sparse Cholesky factor of P A P^T for a fixed permutation P.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    /// perm[k] = original index placed at permuted position k.
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>, // diagonal entry first in each column
    log_det: f64,
    jitter: f64,
}

impl CholFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// log det A (= 2 sum log L_kk).
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal jitter that was required (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn forward(&self, x: &mut [f64]) {
        for j in 0..self.n {
            let p0 = self.col_ptr[j];
            let xj = x[j] / self.values[p0];
            x[j] = xj;
            for p in (p0 + 1)..self.col_ptr[j + 1] {
                x[self.row_idx[p]] -= self.values[p] * xj;
            }
        }
    }

    fn backward(&self, x: &mut [f64]) {
        for j in (0..self.n).rev() {
            let p0 = self.col_ptr[j];
            let mut s = x[j];
            for p in (p0 + 1)..self.col_ptr[j + 1] {
                s -= self.values[p] * x[self.row_idx[p]];
            }
            x[j] = s / self.values[p0];
        }
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = (0..self.n).map(|k| b[self.perm[k]]).collect();
        self.forward(&mut x);
        self.backward(&mut x);
        let mut out = vec![0.0; self.n];
        for k in 0..self.n {
            out[self.perm[k]] = x[k];
        }
        out
    }

    /// One draw from N(0, A^{-1}) given an iid standard normal vector `u`:
    /// solve L^T v = u and undo the permutation.
    pub fn sample_zero_mean(&self, u: &[f64]) -> Vec<f64> {
        let mut v = u.to_vec();
        self.backward(&mut v);
        let mut out = vec![0.0; self.n];
        for k in 0..self.n {
            out[self.perm[k]] = v[k];
        }
        out
    }

    pub fn inv_perm(&self) -> &[usize] {
        &self.inv_perm
    }
}

/// Reverse Cuthill-McKee ordering with deferral of near-dense columns
/// (degree above `max(64, 10 * average degree)`), which are appended after
/// the sparse block so that dense couplings (e.g. absorbed fixed effects)
/// do not destroy the envelope.
pub fn rcm_ordering(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let degree: Vec<usize> = (0..n)
        .map(|j| {
            (col_ptr[j]..col_ptr[j + 1])
                .filter(|&p| row_idx[p] != j)
                .count()
        })
        .collect();
    let avg = (degree.iter().sum::<usize>() / n.max(1)).max(1);
    let dense_threshold = (10 * avg).max(64);
    let is_dense: Vec<bool> = degree.iter().map(|&d| d >= dense_threshold).collect();

    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    loop {
        // lowest-degree unvisited sparse vertex as the next BFS root
        let mut root = None;
        let mut best = usize::MAX;
        for v in 0..n {
            if !visited[v] && !is_dense[v] && degree[v] < best {
                best = degree[v];
                root = Some(v);
            }
        }
        let Some(root) = root else { break };
        visited[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = (col_ptr[v]..col_ptr[v + 1])
                .map(|p| row_idx[p])
                .filter(|&u| u != v && !visited[u] && !is_dense[u])
                .collect();
            nb.sort_by_key(|&u| (degree[u], u));
            nb.dedup();
            for u in nb {
                if !visited[u] {
                    visited[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    order.reverse();
    for v in 0..n {
        if is_dense[v] {
            order.push(v);
        }
    }
    debug_assert_eq!(order.len(), n);
    order
}

/// Elimination tree of the permuted matrix (upper-triangle column view).
fn etree(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<isize> {
    let mut parent = vec![-1isize; n];
    let mut ancestor = vec![-1isize; n];
    for k in 0..n {
        for p in col_ptr[k]..col_ptr[k + 1] {
            let mut i = row_idx[p] as isize;
            while i != -1 && (i as usize) < k {
                let next = ancestor[i as usize];
                ancestor[i as usize] = k as isize;
                if next == -1 {
                    parent[i as usize] = k as isize;
                    break;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row k of L (topological order: descendants before ancestors).
/// Returns the starting index into `stack`; the pattern is `stack[top..]`.
fn ereach(
    k: usize,
    col_entries: &[usize],
    parent: &[isize],
    mark: &mut [usize],
    stack: &mut [usize],
    path: &mut [usize],
) -> usize {
    let n = stack.len();
    let mut top = n;
    mark[k] = k + 1; // mark value k+1 means "visited during row k"
    for &i in col_entries {
        let mut j = i as isize;
        let mut len = 0;
        while j != -1 && (j as usize) < k && mark[j as usize] != k + 1 {
            path[len] = j as usize;
            len += 1;
            mark[j as usize] = k + 1;
            j = parent[j as usize];
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            stack[top] = path[len];
        }
    }
    top
}

fn try_factorize(a: &SparseSpd, perm: &[usize], jitter: f64) -> Result<CholFactor> {
    let n = a.n;
    let mut inv_perm = vec![0usize; n];
    for (k, &orig) in perm.iter().enumerate() {
        inv_perm[orig] = k;
    }

    // permuted matrix in CSC (both triangles, rows sorted)
    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(a.nnz());
    for j in 0..n {
        for (i, v) in a.column(j) {
            entries.push((inv_perm[i], inv_perm[j], v));
        }
    }
    let ap = SparseSpd::from_triplets(n, &entries)?;

    // upper-triangle row lists per column (rows < k), for etree/ereach
    let upper: Vec<Vec<usize>> = (0..n)
        .map(|k| ap.column(k).map(|(i, _)| i).filter(|&i| i < k).collect())
        .collect();
    let upper_ptr: Vec<usize> = {
        let mut v = vec![0usize; n + 1];
        for k in 0..n {
            v[k + 1] = v[k] + upper[k].len();
        }
        v
    };
    let upper_rows: Vec<usize> = upper.iter().flatten().copied().collect();
    let parent = etree(n, &upper_ptr, &upper_rows);

    // symbolic pass: column counts of L
    let mut counts = vec![1usize; n]; // diagonal
    {
        let mut mark = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut path = vec![0usize; n];
        for k in 0..n {
            let top = ereach(k, &upper[k], &parent, &mut mark, &mut stack, &mut path);
            for &j in &stack[top..] {
                counts[j] += 1;
            }
        }
    }
    let mut col_ptr = vec![0usize; n + 1];
    for j in 0..n {
        col_ptr[j + 1] = col_ptr[j] + counts[j];
    }
    let nnz = col_ptr[n];
    let mut row_idx = vec![0usize; nnz];
    let mut values = vec![0.0f64; nnz];
    let mut fill: Vec<usize> = col_ptr[..n].to_vec();

    // numeric pass (up-looking): row k of L solves L[0..k,0..k] y = Ap[0..k,k]
    let mut x = vec![0.0f64; n];
    let mut mark = vec![0usize; n];
    let mut stack = vec![0usize; n];
    let mut path = vec![0usize; n];
    let mut log_det = 0.0f64;
    for k in 0..n {
        let top = ereach(k, &upper[k], &parent, &mut mark, &mut stack, &mut path);
        let mut d = jitter;
        for (i, v) in ap.column(k) {
            if i < k {
                x[i] = v;
            } else if i == k {
                d += v;
            }
        }
        for t in top..n {
            let j = stack[t];
            let yj = x[j] / values[col_ptr[j]];
            x[j] = 0.0;
            for p in (col_ptr[j] + 1)..fill[j] {
                x[row_idx[p]] -= values[p] * yj;
            }
            d -= yj * yj;
            row_idx[fill[j]] = k;
            values[fill[j]] = yj;
            fill[j] += 1;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Singular);
        }
        let lkk = d.sqrt();
        row_idx[fill[k]] = k;
        values[fill[k]] = lkk;
        fill[k] += 1;
        log_det += 2.0 * lkk.ln();
    }
    // place diagonals first within each column: they were appended at the
    // position col_ptr[j] already (row k = j is the first entry written)
    Ok(CholFactor {
        n,
        perm: perm.to_vec(),
        inv_perm,
        col_ptr,
        row_idx,
        values,
        log_det,
        jitter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, seed: u64, density: f64) -> SparseSpd {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for i in 0..n {
            entries.push((i, i, 2.0 + n as f64));
            for j in (i + 1)..n {
                if rng.gen::<f64>() < density {
                    let v: f64 = rng.gen_range(-1.0..1.0);
                    entries.push((i, j, v));
                    entries.push((j, i, v));
                }
            }
        }
        SparseSpd::from_triplets(n, &entries).unwrap()
    }

    #[test]
    fn triplets_merge_duplicates() {
        let a = SparseSpd::from_triplets(2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn logdet_matches_dense_up_to_50() {
        for n in [1usize, 3, 10, 27, 50] {
            let a = random_spd(n, 42 + n as u64, 0.2);
            let f = a.factorize().unwrap();
            let dense = a.to_dense();
            let chol = dense.cholesky().expect("dense cholesky");
            let dense_logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            assert!(
                (f.log_det() - dense_logdet).abs() < 1e-8,
                "n={n}: {} vs {}",
                f.log_det(),
                dense_logdet
            );
        }
    }

    #[test]
    fn solve_matches_dense() {
        let n = 30;
        let a = random_spd(n, 7, 0.3);
        let f = a.factorize().unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.77).sin()).collect();
        let x = f.solve(&b);
        let dense = a.to_dense();
        let xd = dense
            .clone()
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&b))
            .unwrap();
        for i in 0..n {
            assert!((x[i] - xd[i]).abs() < 1e-9, "i={i}: {} vs {}", x[i], xd[i]);
        }
        // residual check
        let r = a.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn jitter_ladder_recovers_semidefinite() {
        // graph Laplacian of a path: PSD with one zero eigenvalue
        let n = 5;
        let mut entries = Vec::new();
        for i in 0..n - 1 {
            entries.push((i, i, 1.0));
            entries.push((i + 1, i + 1, 1.0));
            entries.push((i, i + 1, -1.0));
            entries.push((i + 1, i, -1.0));
        }
        let a = SparseSpd::from_triplets(n, &entries).unwrap();
        let f = a.factorize().unwrap();
        assert!(f.jitter() > 0.0);
    }

    #[test]
    fn zero_matrix_is_singular() {
        let a = SparseSpd::from_triplets(3, &[(0, 0, 0.0), (1, 1, 0.0), (2, 2, 0.0)]).unwrap();
        assert!(matches!(a.factorize(), Err(Error::Singular)));
    }

    #[test]
    fn sparse_product_matches_dense() {
        let a = random_spd(12, 3, 0.3);
        let b = random_spd(12, 4, 0.3);
        let c = a.mul_sparse(&b).unwrap();
        let cd = a.to_dense() * b.to_dense();
        let diff = (c.to_dense() - cd).abs().max();
        assert!(diff < 1e-12);
    }

    #[test]
    fn add_and_scale_rows() {
        let a = random_spd(8, 9, 0.4);
        let d: Vec<f64> = (0..8).map(|i| 1.0 + i as f64).collect();
        let s = a.scale_rows(&d);
        let expect = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&d))
            * a.to_dense();
        assert!((s.to_dense() - expect).abs().max() < 1e-14);

        let sum = a.add(&a).unwrap();
        assert!((sum.to_dense() - a.to_dense() * 2.0).abs().max() < 1e-14);
    }

    #[test]
    fn rcm_is_a_permutation_and_reduces_fill() {
        // 2-D grid graph, natural ordering has large bandwidth after shuffling
        let (nx, ny) = (12, 12);
        let n = nx * ny;
        let idx = |i: usize, j: usize| i + j * nx;
        let mut entries = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let v = idx(i, j);
                entries.push((v, v, 4.0));
                if i + 1 < nx {
                    entries.push((v, idx(i + 1, j), -1.0));
                    entries.push((idx(i + 1, j), v, -1.0));
                }
                if j + 1 < ny {
                    entries.push((v, idx(i, j + 1), -1.0));
                    entries.push((idx(i, j + 1), v, -1.0));
                }
            }
        }
        let a = SparseSpd::from_triplets(n, &entries).unwrap();
        let perm = rcm_ordering(n, &a.col_ptr, &a.row_idx);
        let mut seen = vec![false; n];
        for &p in &perm {
            assert!(!seen[p]);
            seen[p] = true;
        }
        let f = a.factorize().unwrap();
        let identity: Vec<usize> = (0..n).collect();
        let f_nat = a.factorize_with_ordering(identity).unwrap();
        assert!(f.values.len() <= f_nat.values.len());
        assert!((f.log_det() - f_nat.log_det()).abs() < 1e-8);
    }

    #[test]
    fn sample_covariance_diagonal() {
        // Q = diag(4, 9): sd of components 0.5 and 1/3
        let a = SparseSpd::from_diag(&[4.0, 9.0]);
        let f = a.factorize().unwrap();
        let n_draws = 100_000;
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for i in 0..n_draws {
            let mut rng = ChaCha8Rng::seed_from_u64(123);
            rng.set_stream(i as u64);
            let u: Vec<f64> = (0..2)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let x = f.sample_zero_mean(&u);
            for k in 0..2 {
                sums[k] += x[k];
                sq[k] += x[k] * x[k];
            }
        }
        let m = n_draws as f64;
        for (k, target) in [(0usize, 0.5f64), (1usize, 1.0 / 3.0)] {
            let var = sq[k] / m - (sums[k] / m).powi(2);
            let sd = var.sqrt();
            assert!(
                (sd - target).abs() / target < 0.05,
                "component {k}: sd {sd} vs {target}"
            );
        }
    }
}

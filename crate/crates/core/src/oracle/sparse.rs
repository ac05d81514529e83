//! Symmetric sparse matrices and an envelope (skyline) Cholesky solver with
//! reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Symmetric matrix in CSR form with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymSparse {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SymSparse {
    /// Builds from (row, col, value) triplets; duplicates are summed. The
    /// caller supplies both triangles.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len() / 2);
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len() / 2);
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        SymSparse {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from a precomputed pattern; `values` must align with `col_idx`.
    pub fn from_pattern(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(row_ptr.len(), n + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        SymSparse {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> SymSparse {
        let mut map = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &old in keep {
            let mut entries: Vec<(usize, f64)> = self
                .row(old)
                .filter(|&(c, _)| map[c] != usize::MAX)
                .map(|(c, v)| (map[c], v))
                .collect();
            entries.sort_unstable_by_key(|&(c, _)| c);
            for (c, v) in entries {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        SymSparse {
            n: keep.len(),
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Reverse Cuthill-McKee ordering of the matrix graph. Nodes in `tail` are
/// excluded from the traversal and appended last in the given order (used
/// for densely coupled rigid-body unknowns).
pub fn rcm_order(a: &SymSparse, tail: &[usize]) -> Vec<usize> {
    let n = a.dim();
    let mut excluded = vec![false; n];
    for &t in tail {
        excluded[t] = true;
    }
    let degree: Vec<usize> = (0..n)
        .map(|r| a.row(r).filter(|&(c, _)| c != r && !excluded[c]).count())
        .collect();
    let mut visited = excluded.clone();
    let mut order = Vec::with_capacity(n);
    let mut neighbors = Vec::new();

    let bfs_levels = |start: usize, visited: &[bool]| -> (usize, usize) {
        // Returns (last node reached, eccentricity) within the unvisited component.
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut last = start;
        while let Some(v) = q.pop_front() {
            last = v;
            for (c, _) in a.row(v) {
                if !visited[c] && dist[c] == usize::MAX {
                    dist[c] = dist[v] + 1;
                    q.push_back(c);
                }
            }
        }
        (last, dist[last])
    };

    while order.len() + tail.len() < n {
        // Lowest-degree unvisited node, then walk to a pseudo-peripheral node.
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree[v], v))
            .expect("unvisited node exists");
        let mut start = seed;
        let mut ecc = bfs_levels(start, &visited).1;
        for _ in 0..4 {
            let (far, _) = bfs_levels(start, &visited);
            let (_, far_ecc) = bfs_levels(far, &visited);
            if far_ecc > ecc {
                ecc = far_ecc;
                start = far;
            } else {
                break;
            }
        }
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            neighbors.clear();
            neighbors.extend(a.row(v).map(|(c, _)| c).filter(|&c| !visited[c]));
            neighbors.sort_unstable_by_key(|&c| (degree[c], c));
            for &c in &neighbors {
                if !visited[c] {
                    visited[c] = true;
                    order.push(c);
                }
            }
        }
        order[begin..].reverse();
    }
    order.extend_from_slice(tail);
    order
}

/// Envelope Cholesky factor `P A Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    /// perm[r] = original index of permuted row r.
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SymSparse, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        assert_eq!(perm.len(), n, "permutation length");
        let mut inv = vec![0usize; n];
        for (r, &o) in perm.iter().enumerate() {
            inv[o] = r;
        }
        let mut first = vec![0usize; n];
        for r in 0..n {
            first[r] = a
                .row(perm[r])
                .map(|(c, _)| inv[c])
                .filter(|&c| c <= r)
                .min()
                .unwrap_or(r);
        }
        let mut offset = Vec::with_capacity(n + 1);
        let mut total = 0usize;
        for r in 0..n {
            offset.push(total);
            total += r - first[r] + 1;
        }
        offset.push(total);
        let mut data = vec![0.0; total];
        for r in 0..n {
            for (c, v) in a.row(perm[r]) {
                let pc = inv[c];
                if pc <= r {
                    data[offset[r] + pc - first[r]] = v;
                }
            }
        }

        for r in 0..n {
            let fr = first[r];
            let row_start = offset[r];
            for c in fr..r {
                let fc = first[c];
                let k0 = fr.max(fc);
                let len = c - k0;
                let dot = {
                    let lr = &data[row_start + k0 - fr..row_start + k0 - fr + len];
                    let lc = &data[offset[c] + k0 - fc..offset[c] + k0 - fc + len];
                    dot(lr, lc)
                };
                let diag_c = data[offset[c] + c - fc];
                let idx = row_start + c - fr;
                data[idx] = (data[idx] - dot) / diag_c;
            }
            let row = &data[row_start..row_start + r - fr];
            let d = data[row_start + r - fr] - dot(row, row);
            let scale = data[row_start + r - fr].abs().max(f64::MIN_POSITIVE);
            if !(d > 1e-12 * scale) {
                return Err(Error::SingularSystem { pivot: perm[r] });
            }
            data[row_start + r - fr] = d.sqrt();
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for r in 0..n {
            let fr = self.first[r];
            let row = &self.data[self.offset[r]..self.offset[r + 1]];
            let s = dot(&row[..r - fr], &y[fr..r]);
            y[r] = (y[r] - s) / row[r - fr];
        }
        for r in (0..n).rev() {
            let fr = self.first[r];
            let row = &self.data[self.offset[r]..self.offset[r + 1]];
            y[r] /= row[r - fr];
            let xr = y[r];
            for (yc, l) in y[fr..r].iter_mut().zip(&row[..r - fr]) {
                *yc -= l * xr;
            }
        }
        let mut x = vec![0.0; n];
        for (r, &o) in self.perm.iter().enumerate() {
            x[o] = y[r];
        }
        x
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for k in 0..4 {
            acc[k] += a[4 * i + k] * b[4 * i + k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, density: f64, seed: u64) -> SymSparse {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, n as f64));
            for j in 0..i {
                if rng.random::<f64>() < density {
                    let v = rng.random_range(-1.0..1.0);
                    trip.push((i, j, v));
                    trip.push((j, i, v));
                }
            }
        }
        SymSparse::from_triplets(n, trip)
    }

    #[test]
    fn cholesky_matches_dense_solve() {
        let a = random_spd(60, 0.1, 7);
        let b: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        let perm = rcm_order(&a, &[]);
        let x = EnvelopeCholesky::factor(&a, perm).unwrap().solve(&b);
        let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_vec(b)).unwrap();
        for i in 0..60 {
            assert!((x[i] - dense[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rcm_is_a_permutation_with_tail_last() {
        let a = random_spd(40, 0.05, 3);
        let order = rcm_order(&a, &[5, 9]);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..40).collect::<Vec<_>>());
        assert_eq!(&order[38..], &[5, 9]);
    }

    #[test]
    fn singular_matrix_detected() {
        let a = SymSparse::from_triplets(
            2,
            vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)],
        );
        assert!(matches!(
            EnvelopeCholesky::factor(&a, vec![0, 1]),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let a = SymSparse::from_triplets(1, vec![(0, 0, 1.5), (0, 0, 2.0)]);
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.nnz(), 1);
    }
}

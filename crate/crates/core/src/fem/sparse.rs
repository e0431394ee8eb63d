//! Row-compressed sparse systems whose pattern is rebuilt explicitly when the
//! element connectivity changes (new contact pairs, released pairs).

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

static NEXT_PATTERN_ID: AtomicU64 = AtomicU64::new(1);

/// Symbolic structure of a square sparse matrix in CSR form with sorted columns.
#[derive(Debug)]
pub struct SparsityPattern {
    id: u64,
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern of `Σ_c 1_c 1_cᵀ` over the given cliques (lists of unknowns that
    /// couple densely, e.g. the free dofs of one element), computed row by
    /// row with Gustavson's marker technique.
    pub fn from_cliques<C: AsRef<[usize]>>(n: usize, cliques: &[C]) -> Self {
        // Transpose: unknown -> cliques containing it.
        let mut count = vec![0usize; n + 1];
        for c in cliques {
            for &i in c.as_ref() {
                count[i + 1] += 1;
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut fill = count.clone();
        let mut incident = vec![0usize; count[n]];
        for (ci, c) in cliques.iter().enumerate() {
            for &i in c.as_ref() {
                incident[fill[i]] = ci;
                fill[i] += 1;
            }
        }

        let mut marker = vec![usize::MAX; n];
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let start = cols.len();
            // The diagonal is always present so that isolated unknowns stay solvable.
            marker[i] = i;
            cols.push(i);
            for &ci in &incident[count[i]..count[i + 1]] {
                for &j in cliques[ci].as_ref() {
                    if marker[j] != i {
                        marker[j] = i;
                        cols.push(j);
                    }
                }
            }
            cols[start..].sort_unstable();
            row_ptr.push(cols.len());
        }
        SparsityPattern {
            id: NEXT_PATTERN_ID.fetch_add(1, Ordering::Relaxed),
            n,
            row_ptr,
            cols,
        }
    }

    /// Process-unique identifier, used to cache symbolic factorizations.
    #[inline]
    pub fn id(&self) -> u64 {
        self.id
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    #[inline]
    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of `(row, col)` in the value array.
    #[inline]
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let r = self.row(row);
        r.binary_search(&col).ok().map(|k| self.row_ptr[row] + k)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.n && col < self.n && self.find(row, col).is_some()
    }

    pub fn is_structurally_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).iter().all(|&j| self.find(j, i).is_some()))
    }
}

/// Matrix values over a shared pattern plus a right-hand side.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    pattern: Arc<SparsityPattern>,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl SparseSystem {
    pub fn new(pattern: Arc<SparsityPattern>) -> Self {
        let (nnz, n) = (pattern.nnz(), pattern.size());
        SparseSystem {
            pattern,
            values: vec![0.0; nnz],
            rhs: vec![0.0; n],
        }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.pattern.size()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        self.rhs.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Accumulates a single matrix entry.
    pub fn add(&mut self, row: usize, col: usize, value: f64) -> Result<()> {
        if row >= self.size() || col >= self.size() {
            return Err(Error::OutsidePattern { row, col });
        }
        let k = self
            .pattern
            .find(row, col)
            .ok_or(Error::OutsidePattern { row, col })?;
        self.values[k] += value;
        Ok(())
    }

    /// Scatters a dense element matrix `ke` (row-major, `m x m`) and vector
    /// `fe` into the system. `dofs[i]` is `None` for prescribed unknowns whose
    /// value `prescribed[i]` moves to the right-hand side (`b -= K_ij u_j`).
    pub fn add_element(
        &mut self,
        dofs: &[Option<usize>],
        ke: &[f64],
        fe: &[f64],
        prescribed: Option<&[f64]>,
    ) -> Result<()> {
        let m = dofs.len();
        debug_assert_eq!(ke.len(), m * m);
        debug_assert!(fe.is_empty() || fe.len() == m);
        // Check everything first so a failed scatter leaves the system untouched.
        for &ri in dofs.iter().flatten() {
            for &cj in dofs.iter().flatten() {
                if self.pattern.find(ri, cj).is_none() {
                    return Err(Error::OutsidePattern { row: ri, col: cj });
                }
            }
        }
        for (i, ri) in dofs.iter().enumerate() {
            let Some(ri) = *ri else { continue };
            if !fe.is_empty() {
                self.rhs[ri] += fe[i];
            }
            for (j, cj) in dofs.iter().enumerate() {
                let kij = ke[i * m + j];
                match cj {
                    Some(cj) => {
                        let k = self.pattern.find(ri, *cj).expect("checked above");
                        self.values[k] += kij;
                    }
                    None => {
                        if let Some(p) = prescribed {
                            self.rhs[ri] -= kij * p[j];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.size())
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|k| self.values[k] * x[p.cols[k]])
                    .sum()
            })
            .collect()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.find(row, col).map_or(0.0, |k| self.values[k])
    }

    /// Largest `|a_ij - a_ji|` over the pattern.
    pub fn asymmetry(&self) -> f64 {
        let p = &self.pattern;
        let mut worst: f64 = 0.0;
        for i in 0..p.size() {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.cols[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }
}

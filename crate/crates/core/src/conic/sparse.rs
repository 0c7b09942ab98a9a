/// Coordinate-format sparse matrix.
///
/// Entries are kept in insertion order; duplicates are summed by every
/// consumer (`mul_vec`, `transpose_mul`, the backend conversion).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    pub fn from_dense(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut m = Self::new(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), cols, "ragged dense matrix");
            for (c, &v) in row.iter().enumerate() {
                m.push(r, c, v);
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::new(n, n);
        for i in 0..n {
            m.push(i, i, 1.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Adds `value` at `(row, col)`. Exact zeros are dropped.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            row < self.rows && col < self.cols,
            "entry ({row}, {col}) outside {}x{}",
            self.rows,
            self.cols
        );
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Appends an empty row and returns its index.
    pub fn add_row(&mut self) -> usize {
        self.rows += 1;
        self.rows - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for &(r, c, v) in &self.entries {
            out[r] += v * x[c];
        }
        out
    }

    /// `selfᵀ u`.
    pub fn transpose_mul(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for &(r, c, v) in &self.entries {
            out[c] += v * u[r];
        }
        out
    }

    /// Copy with columns relocated through `map` into a matrix of `cols` columns.
    pub fn remap_cols(&self, cols: usize, map: impl Fn(usize) -> usize) -> Self {
        let mut m = Self::new(self.rows, cols);
        for &(r, c, v) in &self.entries {
            m.push(r, map(c), v);
        }
        m
    }

    /// Vertically stacks `other` below `self`; column counts must agree.
    pub fn vstack(&self, other: &SparseMatrix) -> Self {
        assert_eq!(self.cols, other.cols);
        let mut m = self.clone();
        m.rows += other.rows;
        m.entries
            .extend(other.entries.iter().map(|&(r, c, v)| (r + self.rows, c, v)));
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for &(r, c, v) in &self.entries {
            out[r][c] += v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_match_dense() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 0.0, 2.0], vec![0.0, -3.0, 0.5]], 3);
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![7.0, -4.5]);
        assert_eq!(m.transpose_mul(&[1.0, 2.0]), vec![1.0, -6.0, 3.0]);
    }

    #[test]
    fn duplicates_accumulate() {
        let mut m = SparseMatrix::new(1, 1);
        m.push(0, 0, 1.5);
        m.push(0, 0, 2.5);
        assert_eq!(m.mul_vec(&[2.0]), vec![8.0]);
        assert_eq!(m.to_dense(), vec![vec![4.0]]);
    }

    #[test]
    fn vstack_and_remap() {
        let a = SparseMatrix::identity(2);
        let b = SparseMatrix::from_dense(&[vec![1.0, 1.0]], 2);
        let s = a.vstack(&b);
        assert_eq!(s.rows(), 3);
        assert_eq!(s.mul_vec(&[1.0, 2.0]), vec![1.0, 2.0, 3.0]);
        let r = b.remap_cols(4, |c| c + 2);
        assert_eq!(r.mul_vec(&[0.0, 0.0, 1.0, 1.0]), vec![2.0]);
    }
}

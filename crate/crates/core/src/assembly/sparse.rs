use crate::error::{Error, Result};
use std::fmt::Write as _;

/// Square row-compressed sparse matrix with a sorted, duplicate-free pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Pattern-only matrix (values zero) from per-row column lists.
    pub fn from_rows(n: usize, rows: Vec<Vec<u32>>) -> SparseMatrix {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r.into_iter().map(|c| c as usize));
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        SparseMatrix { n, row_ptr, col_idx, values }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<SparseMatrix> {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch { what: "triplet index", expected: n, found: i.max(j) });
            }
            rows[i].push(j as u32);
        }
        let mut m = SparseMatrix::from_rows(n, rows);
        for &(i, j, v) in triplets {
            let p = m.position(i, j).expect("entry in pattern");
            m.values[p] += v;
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> SparseMatrix {
        SparseMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Columns and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Index into the value array of entry `(i, j)`, if it is in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]].binary_search(&j).ok().map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Coordinate text: a header line `n n nnz`, then one `row col value`
    /// line per stored entry (0-based, 17 significant digits).
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::with_capacity(32 * self.nnz() + 32);
        let _ = writeln!(s, "{} {} {}", self.n, self.n, self.nnz());
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (j, a) in c.iter().zip(v) {
                let _ = writeln!(s, "{i} {j} {a:.16e}");
            }
        }
        s
    }

    /// Parses [`SparseMatrix::to_coordinate_text`] output. Lines starting with
    /// `%` or `#` are comments; duplicate entries are summed.
    pub fn from_coordinate_text(text: &str) -> Result<SparseMatrix> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('%') && !l.starts_with('#'));
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 0, msg: "missing header".into() })?;
        let h: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |line: usize, s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Parse { line, msg: format!("expected a non-negative integer, found `{s}`") })
        };
        if h.len() != 3 {
            return Err(Error::Parse { line: hl, msg: "header must be `rows cols nnz`".into() });
        }
        let (nr, nc, nnz) = (parse_usize(hl, h[0])?, parse_usize(hl, h[1])?, parse_usize(hl, h[2])?);
        if nr != nc {
            return Err(Error::Parse { line: hl, msg: format!("matrix must be square, found {nr}x{nc}") });
        }
        let mut triplets = Vec::with_capacity(nnz.min(1 << 20));
        for (ln, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse { line: ln, msg: "entry must be `row col value`".into() });
            }
            let (i, j) = (parse_usize(ln, f[0])?, parse_usize(ln, f[1])?);
            let v: f64 =
                f[2].parse().map_err(|_| Error::Parse { line: ln, msg: format!("invalid value `{}`", f[2]) })?;
            if i >= nr || j >= nr {
                return Err(Error::Parse { line: ln, msg: format!("index ({i}, {j}) out of range for size {nr}") });
            }
            if !v.is_finite() {
                return Err(Error::Parse { line: ln, msg: "non-finite value".into() });
            }
            triplets.push((i, j, v));
        }
        if triplets.len() != nnz {
            return Err(Error::Parse {
                line: hl,
                msg: format!("header announces {nnz} entries, found {}", triplets.len()),
            });
        }
        SparseMatrix::from_triplets(nr, &triplets)
    }
}

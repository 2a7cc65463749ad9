//! Multifrontal LU on the symmetrized pattern. Pivots are searched among the
//! fully summed rows of each front only, so the symbolic structure never
//! changes; a pivot that vanishes is replaced by a small perturbation and
//! iterative refinement (or the caller's fallback) restores accuracy.

use super::ordering::{Graph, Ordering};
use crate::assembly::SparseMatrix;

/// Supernodes narrower than this are merged into their parent when the
/// padding stays small.
const RELAX_SMALL: usize = 16;
const RELAX_ZERO_FRACTION: f64 = 0.1;

/// Pattern-only analysis: postordered elimination order, supernode partition
/// and the row structure of every front.
#[derive(Clone, Debug)]
pub struct Symbolic {
    n: usize,
    nnz: usize,
    /// Step `k` eliminates original unknown `perm[k]`.
    pub(crate) perm: Vec<usize>,
    iperm: Vec<usize>,
    /// Supernode `s` owns steps `start[s]..start[s + 1]`.
    start: Vec<usize>,
    rows_ptr: Vec<usize>,
    /// Rows below each supernode's diagonal block, in step numbering, sorted.
    rows: Vec<usize>,
    nchild: Vec<usize>,
}

impl Symbolic {
    pub fn analyze(a: &SparseMatrix, ordering: &Ordering) -> Symbolic {
        let n = a.dim();
        let g = Graph::symmetric(a);
        let perm0 = &ordering.perm;
        let mut iperm0 = vec![0usize; n];
        for (k, &i) in perm0.iter().enumerate() {
            iperm0[i] = k;
        }

        let parent0 = etree(n, |k, f: &mut dyn FnMut(usize)| {
            for &j in g.neighbors(perm0[k]) {
                f(iperm0[j]);
            }
        });
        let post = postorder(&parent0);
        let perm: Vec<usize> = post.iter().map(|&k| perm0[k]).collect();
        let mut iperm = vec![0usize; n];
        for (k, &i) in perm.iter().enumerate() {
            iperm[i] = k;
        }
        let mut newpos = vec![0usize; n];
        for (k, &old) in post.iter().enumerate() {
            newpos[old] = k;
        }
        let parent: Vec<usize> =
            (0..n).map(|k| if parent0[post[k]] == NONE { NONE } else { newpos[parent0[post[k]]] }).collect();

        // column counts by row subtrees
        let mut count = vec![1usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            mark[k] = k;
            for &jo in g.neighbors(perm[k]) {
                let mut t = iperm[jo];
                if t > k {
                    continue;
                }
                while mark[t] != k {
                    mark[t] = k;
                    count[t] += 1;
                    t = parent[t];
                }
            }
        }

        let mut nkids = vec![0usize; n];
        for &p in &parent {
            if p != NONE {
                nkids[p] += 1;
            }
        }
        // fundamental supernodes
        let mut start = vec![0usize];
        for j in 1..n {
            let chain = parent[j - 1] == j && nkids[j] == 1 && count[j - 1] == count[j] + 1;
            if !chain {
                start.push(j);
            }
        }
        start.push(n);
        let start = relax(&start, &parent, &count);
        let ns = start.len() - 1;

        let mut sn_of = vec![0usize; n];
        for s in 0..ns {
            sn_of[start[s]..start[s + 1]].fill(s);
        }
        let sn_parent: Vec<usize> = (0..ns)
            .map(|s| {
                let p = parent[start[s + 1] - 1];
                if p == NONE {
                    NONE
                } else {
                    sn_of[p]
                }
            })
            .collect();
        let mut nchild = vec![0usize; ns];
        let mut kid_head = vec![NONE; ns];
        let mut kid_next = vec![NONE; ns];
        for s in (0..ns).rev() {
            let p = sn_parent[s];
            if p != NONE {
                nchild[p] += 1;
                kid_next[s] = kid_head[p];
                kid_head[p] = s;
            }
        }

        let mut rows_ptr = vec![0usize];
        let mut rows: Vec<usize> = Vec::new();
        let mut seen = vec![NONE; n];
        let mut buf = Vec::new();
        for s in 0..ns {
            let (f, l) = (start[s], start[s + 1]);
            buf.clear();
            for j in f..l {
                for &io in g.neighbors(perm[j]) {
                    let i = iperm[io];
                    if i >= l && seen[i] != s {
                        seen[i] = s;
                        buf.push(i);
                    }
                }
            }
            let mut c = kid_head[s];
            while c != NONE {
                for &i in &rows[rows_ptr[c]..rows_ptr[c + 1]] {
                    if i >= l && seen[i] != s {
                        seen[i] = s;
                        buf.push(i);
                    }
                }
                c = kid_next[c];
            }
            buf.sort_unstable();
            rows.extend_from_slice(&buf);
            rows_ptr.push(rows.len());
        }

        Symbolic { n, nnz: a.nnz(), perm, iperm, start, rows_ptr, rows, nchild }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub(crate) fn matches(&self, a: &SparseMatrix) -> bool {
        self.n == a.dim() && self.nnz == a.nnz()
    }

    /// Entries of `L` and `U` (diagonal counted in both) implied by the
    /// supernode partition.
    pub fn predicted_fill(&self) -> (usize, usize) {
        let mut total = 0;
        for s in 0..self.start.len() - 1 {
            let nc = self.start[s + 1] - self.start[s];
            let nr = self.rows_ptr[s + 1] - self.rows_ptr[s];
            total += nc * (nc + 1) / 2 + nc * nr;
        }
        (total, total)
    }

    fn front_rows(&self, s: usize) -> &[usize] {
        &self.rows[self.rows_ptr[s]..self.rows_ptr[s + 1]]
    }
}

const NONE: usize = usize::MAX;

/// Elimination tree (Liu's algorithm with path compression); `lower(k, f)`
/// calls `f` with the neighbors of step `k`.
fn etree(n: usize, lower: impl Fn(usize, &mut dyn FnMut(usize))) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        lower(k, &mut |mut i| {
            while i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                    break;
                }
                i = next;
            }
        });
    }
    parent
}

/// `post[k]` is the node placed at position `k`; children keep their
/// relative order.
fn postorder(parent: &[usize]) -> Vec<usize> {
    let n = parent.len();
    let mut head = vec![NONE; n];
    let mut next = vec![NONE; n];
    for j in (0..n).rev() {
        if parent[j] != NONE {
            next[j] = head[parent[j]];
            head[parent[j]] = j;
        }
    }
    let mut post = Vec::with_capacity(n);
    let mut stack = Vec::new();
    for root in 0..n {
        if parent[root] != NONE {
            continue;
        }
        stack.push(root);
        while let Some(&j) = stack.last() {
            let c = head[j];
            if c == NONE {
                stack.pop();
                post.push(j);
            } else {
                head[j] = next[c];
                stack.push(c);
            }
        }
    }
    post
}

/// Merges a supernode into the one that follows it when the latter is its
/// parent, both are small and the explicit zeros added stay below a fixed
/// fraction of the merged block. Inside a merged chain every column's parent
/// is the next column, so column `j` of block `[f, l)` stores
/// `(l - 1 - j) + count[l - 1]` entries.
fn relax(start: &[usize], parent: &[usize], count: &[usize]) -> Vec<usize> {
    let ns = start.len() - 1;
    let mut out = vec![0usize];
    let mut cur_first = start[0];
    for s in 1..ns {
        let (f, l) = (start[s], start[s + 1]);
        if parent[f - 1] == f && f - cur_first <= RELAX_SMALL && l - f <= RELAX_SMALL {
            let below = count[l - 1];
            let (mut stored, mut zeros) = (0usize, 0usize);
            for j in cur_first..l {
                let col = (l - 1 - j) + below;
                stored += col;
                zeros += col - count[j];
            }
            if (zeros as f64) <= RELAX_ZERO_FRACTION * stored as f64 {
                continue;
            }
        }
        out.push(f);
        cur_first = f;
    }
    out.push(start[ns]);
    out
}

/// Numeric factors of one matrix.
pub(crate) struct FrontFactors {
    n: usize,
    start: Vec<usize>,
    rows_ptr: Vec<usize>,
    rows: Vec<usize>,
    perm: Vec<usize>,
    /// Per supernode: offset of the `nc x m` top block and the `nr x nc`
    /// lower block in `vals`.
    top: Vec<usize>,
    low: Vec<usize>,
    vals: Vec<f64>,
    /// Local row swap applied at each step.
    swaps: Vec<u32>,
    pub(crate) nnz_l: usize,
    pub(crate) nnz_u: usize,
    pub(crate) off_diagonal: usize,
    /// Pivots below the threshold relative to their front column.
    pub(crate) weak: usize,
    /// Pivots that vanished and were replaced by a perturbation.
    pub(crate) perturbed: usize,
}

/// Scaled matrix `S A S` in step numbering, rows and columns.
struct Permuted {
    rp: Vec<usize>,
    rc: Vec<usize>,
    rv: Vec<f64>,
    cp: Vec<usize>,
    cr: Vec<usize>,
    cv: Vec<f64>,
}

fn permute(a: &SparseMatrix, sym: &Symbolic, scale: &[f64]) -> Permuted {
    let n = a.dim();
    let mut rp = vec![0usize; n + 1];
    let mut cp = vec![0usize; n + 1];
    for i in 0..n {
        let ni = sym.iperm[i];
        let (c, _) = a.row(i);
        rp[ni + 1] = c.len();
        for &j in c {
            cp[sym.iperm[j] + 1] += 1;
        }
    }
    for k in 0..n {
        rp[k + 1] += rp[k];
        cp[k + 1] += cp[k];
    }
    let nnz = a.nnz();
    let (mut rc, mut rv) = (vec![0usize; nnz], vec![0.0; nnz]);
    let (mut cr, mut cv) = (vec![0usize; nnz], vec![0.0; nnz]);
    let mut cfill = cp.clone();
    // visit rows in step order so each column list comes out sorted
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for k in 0..n {
        let i = sym.perm[k];
        let (c, v) = a.row(i);
        pairs.clear();
        pairs.extend(c.iter().zip(v).map(|(&j, &x)| (sym.iperm[j], x * scale[i] * scale[j])));
        pairs.sort_unstable_by_key(|p| p.0);
        for (t, &(j, x)) in pairs.iter().enumerate() {
            rc[rp[k] + t] = j;
            rv[rp[k] + t] = x;
            cr[cfill[j]] = k;
            cv[cfill[j]] = x;
            cfill[j] += 1;
        }
    }
    Permuted { rp, rc, rv, cp, cr, cv }
}

impl FrontFactors {
    /// Returns `Err(step)` when a pivot comes out non-finite.
    pub(crate) fn factor(a: &SparseMatrix, sym: &Symbolic, scale: &[f64], tol: f64) -> Result<FrontFactors, usize> {
        let n = sym.n;
        let b = permute(a, sym, scale);
        let anorm = b.rv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let perturb = f64::EPSILON.sqrt() * anorm.max(f64::MIN_POSITIVE);
        let ns = sym.start.len() - 1;

        let mut top = Vec::with_capacity(ns);
        let mut low = Vec::with_capacity(ns);
        let (fill_l, _) = sym.predicted_fill();
        let mut vals: Vec<f64> = Vec::with_capacity(2 * fill_l);
        let mut swaps = vec![0u32; n];
        let mut loc = vec![0usize; n];
        let mut front: Vec<f64> = Vec::new();
        let mut stack: Vec<(usize, Vec<f64>)> = Vec::new();
        let (mut off_diagonal, mut weak, mut perturbed) = (0, 0, 0);
        let (mut nnz_l, mut nnz_u) = (0, 0);

        for s in 0..ns {
            let (f, l) = (sym.start[s], sym.start[s + 1]);
            let nc = l - f;
            let rows = sym.front_rows(s);
            let nr = rows.len();
            let m = nc + nr;
            for c in 0..nc {
                loc[f + c] = c;
            }
            for (t, &r) in rows.iter().enumerate() {
                loc[r] = nc + t;
            }
            front.clear();
            front.resize(m * m, 0.0);

            for j in f..l {
                let cj = j - f;
                for p in b.cp[j]..b.cp[j + 1] {
                    let r = b.cr[p];
                    if r >= f {
                        front[loc[r] * m + cj] += b.cv[p];
                    }
                }
                for p in b.rp[j]..b.rp[j + 1] {
                    let c = b.rc[p];
                    if c >= l {
                        front[cj * m + loc[c]] += b.rv[p];
                    }
                }
            }
            for _ in 0..sym.nchild[s] {
                let (c, upd) = stack.pop().expect("child update present");
                let crow = sym.front_rows(c);
                let k = crow.len();
                for (a_, &ra) in crow.iter().enumerate() {
                    let base = loc[ra] * m;
                    let src = &upd[a_ * k..(a_ + 1) * k];
                    for (&rb, &v) in crow.iter().zip(src) {
                        front[base + loc[rb]] += v;
                    }
                }
            }

            // panel factorization with pivots among the fully summed rows
            for c in 0..nc {
                let mut colmax = 0.0f64;
                for r in c..m {
                    colmax = colmax.max(front[r * m + c].abs());
                }
                let mut best = c;
                let mut best_val = front[c * m + c].abs();
                if best_val < tol * colmax {
                    for r in c + 1..nc {
                        let v = front[r * m + c].abs();
                        if v > best_val {
                            best = r;
                            best_val = v;
                        }
                    }
                }
                if best_val < tol * colmax {
                    weak += 1;
                }
                swaps[f + c] = best as u32;
                if best != c {
                    off_diagonal += 1;
                    let (lo, hi) = front.split_at_mut(best * m);
                    lo[c * m..c * m + m].swap_with_slice(&mut hi[..m]);
                }
                let mut piv = front[c * m + c];
                if !piv.is_finite() {
                    return Err(f + c);
                }
                if piv.abs() < perturb {
                    piv = if piv < 0.0 { -perturb } else { perturb };
                    front[c * m + c] = piv;
                    perturbed += 1;
                }
                let (head, tail) = front.split_at_mut((c + 1) * m);
                let prow = &head[c * m + c + 1..c * m + nc];
                for r in 0..m - c - 1 {
                    let row = &mut tail[r * m..r * m + nc];
                    let lv = row[c] / piv;
                    row[c] = lv;
                    if lv != 0.0 {
                        for (x, &u) in row[c + 1..].iter_mut().zip(prow) {
                            *x -= lv * u;
                        }
                    }
                }
            }
            // U12 = L11^{-1} F12, then the Schur complement update
            if nr > 0 {
                let (upper, lower) = front.split_at_mut(nc * m);
                for r in 1..nc {
                    let (done, rest) = upper.split_at_mut(r * m);
                    let row = &mut rest[..m];
                    for c in 0..r {
                        let lv = row[c];
                        if lv != 0.0 {
                            let src = &done[c * m + nc..c * m + m];
                            for (x, &u) in row[nc..].iter_mut().zip(src) {
                                *x -= lv * u;
                            }
                        }
                    }
                }
                schur_update(upper, lower, nc, m);
            }

            top.push(vals.len());
            vals.extend_from_slice(&front[..nc * m]);
            low.push(vals.len());
            for r in nc..m {
                vals.extend_from_slice(&front[r * m..r * m + nc]);
            }
            nnz_l += nc * (nc + 1) / 2 + nr * nc;
            nnz_u += nc * (nc + 1) / 2 + nr * nc;
            if nr > 0 {
                let mut upd = Vec::with_capacity(nr * nr);
                for r in nc..m {
                    upd.extend_from_slice(&front[r * m + nc..r * m + m]);
                }
                stack.push((s, upd));
            }
        }

        Ok(FrontFactors {
            n,
            start: sym.start.clone(),
            rows_ptr: sym.rows_ptr.clone(),
            rows: sym.rows.clone(),
            perm: sym.perm.clone(),
            top,
            low,
            vals,
            swaps,
            nnz_l,
            nnz_u,
            off_diagonal,
            weak,
            perturbed,
        })
    }

    /// Solves with the scaled matrix: `x = (S A S)^{-1} y`, both in original
    /// numbering.
    pub(crate) fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let mut y: Vec<f64> = self.perm.iter().map(|&i| rhs[i]).collect();
        let ns = self.start.len() - 1;
        for s in 0..ns {
            let (f, l) = (self.start[s], self.start[s + 1]);
            let nc = l - f;
            let rows = &self.rows[self.rows_ptr[s]..self.rows_ptr[s + 1]];
            let m = nc + rows.len();
            for c in 0..nc {
                let t = self.swaps[f + c] as usize;
                if t != c {
                    y.swap(f + c, f + t);
                }
            }
            let top = &self.vals[self.top[s]..self.top[s] + nc * m];
            for r in 1..nc {
                let row = &top[r * m..r * m + r];
                let acc: f64 = row.iter().zip(&y[f..f + r]).map(|(a, b)| a * b).sum();
                y[f + r] -= acc;
            }
            let low = &self.vals[self.low[s]..self.low[s] + rows.len() * nc];
            for (i, &r) in rows.iter().enumerate() {
                let acc: f64 = low[i * nc..(i + 1) * nc].iter().zip(&y[f..l]).map(|(a, b)| a * b).sum();
                y[r] -= acc;
            }
        }
        for s in (0..ns).rev() {
            let (f, l) = (self.start[s], self.start[s + 1]);
            let nc = l - f;
            let rows = &self.rows[self.rows_ptr[s]..self.rows_ptr[s + 1]];
            let m = nc + rows.len();
            let top = &self.vals[self.top[s]..self.top[s] + nc * m];
            for r in (0..nc).rev() {
                let row = &top[r * m..r * m + m];
                let mut t = y[f + r];
                for (a, &i) in row[nc..].iter().zip(rows) {
                    t -= a * y[i];
                }
                for (a, b) in row[r + 1..nc].iter().zip(&y[f + r + 1..l]) {
                    t -= a * b;
                }
                y[f + r] = t / row[r];
            }
        }
        for (k, &i) in self.perm.iter().enumerate() {
            out[i] = y[k];
        }
        debug_assert_eq!(y.len(), self.n);
    }
}

/// `F22 -= L21 U12` with rows of the front stored contiguously.
fn schur_update(upper: &[f64], lower: &mut [f64], nc: usize, m: usize) {
    const BLOCK: usize = 32;
    let nr = m - nc;
    // block the inner dimension so the slice of U12 in use stays in cache
    let mut c0 = 0;
    while c0 < nc {
        let c1 = (c0 + BLOCK).min(nc);
        for r in 0..nr {
            let row = &mut lower[r * m..r * m + m];
            let (lpart, rpart) = row.split_at_mut(nc);
            for c in c0..c1 {
                let lv = lpart[c];
                if lv != 0.0 {
                    let src = &upper[c * m + nc..c * m + m];
                    for (x, &u) in rpart.iter_mut().zip(src) {
                        *x -= lv * u;
                    }
                }
            }
        }
        c0 = c1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pattern(n: usize, extra: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 4.0 + rng.random::<f64>())).collect();
        for _ in 0..extra {
            t.push((rng.random_range(0..n), rng.random_range(0..n), rng.random_range(-1.0..1.0)));
        }
        SparseMatrix::from_triplets(n, &t).unwrap()
    }

    /// Boolean elimination on the dense symmetrized pattern in step order.
    fn brute_force_structure(a: &SparseMatrix, perm: &[usize]) -> Vec<Vec<bool>> {
        let n = a.dim();
        let mut iperm = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            iperm[i] = k;
        }
        let mut m = vec![vec![false; n]; n];
        for i in 0..n {
            for &j in a.row(i).0 {
                m[iperm[i]][iperm[j]] = true;
                m[iperm[j]][iperm[i]] = true;
            }
        }
        for k in 0..n {
            let below: Vec<usize> = (k + 1..n).filter(|&i| m[i][k]).collect();
            for &i in &below {
                for &j in &below {
                    m[i][j] = true;
                }
            }
        }
        m
    }

    #[test]
    fn fronts_cover_the_exact_fill() {
        for seed in 0..20 {
            let a = random_pattern(40, 60, seed);
            let sym = Symbolic::analyze(&a, &Ordering::compute(&a, None));
            let exact = brute_force_structure(&a, &sym.perm);
            let mut exact_nnz = 0;
            for s in 0..sym.start.len() - 1 {
                let (f, l) = (sym.start[s], sym.start[s + 1]);
                let rows = sym.front_rows(s);
                for j in f..l {
                    for i in l..a.dim() {
                        if exact[i][j] {
                            assert!(rows.binary_search(&i).is_ok(), "seed {seed}: L({i},{j}) missing");
                        }
                    }
                }
            }
            for j in 0..a.dim() {
                exact_nnz += (j..a.dim()).filter(|&i| exact[i][j]).count();
            }
            let (pred, _) = sym.predicted_fill();
            assert!(pred >= exact_nnz);
            assert!(pred as f64 <= 1.5 * exact_nnz as f64, "seed {seed}: padding {pred} vs {exact_nnz}");
        }
    }

    #[test]
    fn steps_follow_their_elimination_tree_children() {
        let parent = etree(5, |k, f: &mut dyn FnMut(usize)| {
            // path 0-1-2 and an isolated pair 3-4
            for (a, b) in [(1, 0), (2, 1), (4, 3)] {
                if k == a {
                    f(b);
                }
            }
        });
        assert_eq!(parent, vec![1, 2, NONE, 4, NONE]);
        assert_eq!(postorder(&parent), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn solves_match_a_dense_oracle() {
        for seed in 0..10 {
            let n = 60;
            let a = random_pattern(n, 150, 100 + seed);
            let sym = Symbolic::analyze(&a, &Ordering::compute(&a, None));
            let ff = FrontFactors::factor(&a, &sym, &vec![1.0; n], 1e-3).unwrap();
            assert_eq!(ff.perturbed, 0);
            let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
            let mut x = vec![0.0; n];
            ff.solve(&b, &mut x);

            let mut dense = vec![0.0; n * n];
            for i in 0..n {
                let (c, v) = a.row(i);
                for (&j, &val) in c.iter().zip(v) {
                    dense[i * n + j] = val;
                }
            }
            assert!(crate::dense::invert_in_place(n, &mut dense));
            for i in 0..n {
                let xi: f64 = (0..n).map(|j| dense[i * n + j] * b[j]).sum();
                assert!((xi - x[i]).abs() <= 1e-10 * (1.0 + xi.abs()), "seed {seed} row {i}: {xi} vs {}", x[i]);
            }
        }
    }

    #[test]
    fn zero_diagonal_pivots_swap_within_the_front() {
        // a dense 2x2 block with a zero diagonal forces a row swap
        let t = vec![(0, 1, 2.0), (1, 0, 3.0), (1, 1, 1.0), (2, 2, 5.0), (0, 2, 1.0), (2, 0, 1.0)];
        let a = SparseMatrix::from_triplets(3, &t).unwrap();
        let sym = Symbolic::analyze(&a, &Ordering { perm: vec![0, 1, 2] });
        let ff = FrontFactors::factor(&a, &sym, &[1.0; 3], 0.1).unwrap();
        assert!(ff.off_diagonal >= 1);
        let x_true = [1.0, -2.0, 0.5];
        let b = a.matvec(&x_true);
        let mut x = [0.0; 3];
        ff.solve(&b, &mut x);
        for (p, q) in x.iter().zip(&x_true) {
            assert!((p - q).abs() < 1e-14);
        }
    }
}

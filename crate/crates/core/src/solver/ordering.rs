//! Fill-reducing symmetric orderings by nested dissection on the graph of
//! `A + A^T`. Separators come from cut lines through DOF coordinates when
//! those are known, and from BFS level sets otherwise.

use crate::assembly::SparseMatrix;
use std::collections::VecDeque;

const LEAF_SIZE: usize = 64;
/// Cut directions tried by the geometric bisection.
const DIRECTIONS: [[f64; 2]; 4] = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]];
const CANDIDATES: usize = 5;

/// Symmetric elimination order: step `k` eliminates unknown `perm[k]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ordering {
    pub perm: Vec<usize>,
}

impl Ordering {
    /// Nested-dissection order of `a`. `coords` gives a location per
    /// unknown; non-finite entries mark global unknowns ordered last.
    pub fn compute(a: &SparseMatrix, coords: Option<&[[f64; 2]]>) -> Ordering {
        let late: Vec<bool> = (0..a.dim()).map(|i| a.get(i, i) == 0.0).collect();
        Ordering { perm: nested_dissection(a, &late, coords) }
    }
}

/// Adjacency of `A + A^T` without self loops, in compressed form.
pub(crate) struct Graph {
    ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    pub(crate) fn symmetric(a: &SparseMatrix) -> Graph {
        let n = a.dim();
        let mut deg = vec![0usize; n];
        for i in 0..n {
            for &j in a.row(i).0 {
                if i != j {
                    deg[i] += 1;
                    deg[j] += 1;
                }
            }
        }
        let mut ptr = vec![0usize; n + 1];
        for i in 0..n {
            ptr[i + 1] = ptr[i] + deg[i];
        }
        let mut fill = ptr.clone();
        let mut adj = vec![0usize; ptr[n]];
        for i in 0..n {
            for &j in a.row(i).0 {
                if i != j {
                    adj[fill[i]] = j;
                    fill[i] += 1;
                    adj[fill[j]] = i;
                    fill[j] += 1;
                }
            }
        }
        let mut out_ptr = vec![0usize; n + 1];
        let mut w = 0;
        for i in 0..n {
            adj[ptr[i]..ptr[i + 1]].sort_unstable();
            let mut last = usize::MAX;
            for p in ptr[i]..ptr[i + 1] {
                let j = adj[p];
                if j != last {
                    adj[w] = j;
                    w += 1;
                    last = j;
                }
            }
            out_ptr[i + 1] = w;
        }
        adj.truncate(w);
        Graph { ptr: out_ptr, adj }
    }

    pub(crate) fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[self.ptr[i]..self.ptr[i + 1]]
    }

    fn n(&self) -> usize {
        self.ptr.len() - 1
    }
}

struct Dissector<'g> {
    g: &'g Graph,
    coords: Option<&'g [[f64; 2]]>,
    /// Label of the subproblem a node currently belongs to.
    label: Vec<u32>,
    next_label: u32,
    level: Vec<u32>,
    side: Vec<u8>,
    order: Vec<usize>,
}

/// Nested dissection followed by a pass that moves every node flagged in
/// `late` (zero diagonal) directly behind its last-ordered neighbor, so its
/// Schur complement diagonal is formed before it is pivoted.
pub(crate) fn nested_dissection(a: &SparseMatrix, late: &[bool], coords: Option<&[[f64; 2]]>) -> Vec<usize> {
    let g = Graph::symmetric(a);
    let n = g.n();
    if n == 0 {
        return Vec::new();
    }
    let avg = g.adj.len() as f64 / n as f64;
    let hub_limit = (10.0 * avg).max(200.0) as usize;
    let is_hub = |i: usize| {
        g.neighbors(i).len() > hub_limit || coords.is_some_and(|c| !(c[i][0].is_finite() && c[i][1].is_finite()))
    };
    let hubs: Vec<usize> = (0..n).filter(|&i| is_hub(i)).collect();
    let mut d = Dissector {
        g: &g,
        coords,
        label: vec![0; n],
        next_label: 1,
        level: vec![0; n],
        side: vec![0; n],
        order: Vec::with_capacity(n),
    };
    for &h in &hubs {
        d.label[h] = u32::MAX;
    }
    let nodes: Vec<usize> = (0..n).filter(|&i| d.label[i] == 0).collect();
    d.dissect(nodes);
    let body = d.order.len();
    d.order.extend(&hubs);
    debug_assert_eq!(d.order.len(), n);

    // delay zero-diagonal nodes until their neighbors are eliminated
    let mut pos = vec![0usize; n];
    for (k, &i) in d.order.iter().enumerate() {
        pos[i] = k;
    }
    let mut keyed: Vec<(usize, u8, usize)> = d.order[..body]
        .iter()
        .map(|&i| {
            if late[i] {
                let last = g.neighbors(i).iter().filter(|&&j| !late[j] && pos[j] < body).map(|&j| pos[j]).max();
                (last.unwrap_or(pos[i]).max(pos[i]), 1, i)
            } else {
                (pos[i], 0, i)
            }
        })
        .collect();
    keyed.sort_unstable();
    let mut out: Vec<usize> = keyed.into_iter().map(|(_, _, i)| i).collect();
    out.extend(&d.order[body..]);
    out
}

impl Dissector<'_> {
    fn relabel(&mut self, nodes: &[usize]) -> u32 {
        let l = self.next_label;
        self.next_label += 1;
        for &i in nodes {
            self.label[i] = l;
        }
        l
    }

    /// BFS restricted to `label`; returns visit order and fills `self.level`.
    fn bfs(&mut self, root: usize, label: u32) -> Vec<usize> {
        let mut seen = Vec::new();
        let mut queue = VecDeque::new();
        let mark = u32::MAX - 1;
        self.label[root] = mark;
        self.level[root] = 0;
        queue.push_back(root);
        while let Some(i) = queue.pop_front() {
            seen.push(i);
            for &j in self.g.neighbors(i) {
                if self.label[j] == label {
                    self.label[j] = mark;
                    self.level[j] = self.level[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        for &i in &seen {
            self.label[i] = label;
        }
        seen
    }

    fn dissect(&mut self, nodes: Vec<usize>) {
        // explicit stack: (nodes, emit as a block)
        let mut stack = vec![(nodes, false)];
        while let Some((nodes, emit)) = stack.pop() {
            if emit || nodes.len() <= LEAF_SIZE {
                self.order.extend_from_slice(&nodes);
                continue;
            }
            let label = self.relabel(&nodes);
            let split = match self.coords {
                Some(c) => self.split_geometric(&nodes, label, c),
                None => self.split_bfs(&nodes, label),
            };
            match split {
                Some((left, right, sep)) => {
                    stack.push((sep, true));
                    stack.push((right, false));
                    stack.push((left, false));
                }
                None => self.order.extend_from_slice(&nodes),
            }
        }
    }

    /// Separator from the best straight cut among a few directions and
    /// offsets around the median.
    fn split_geometric(
        &mut self,
        nodes: &[usize],
        label: u32,
        c: &[[f64; 2]],
    ) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let mut best: Option<(f64, [f64; 2], f64)> = None;
        let n = nodes.len();
        for dir in DIRECTIONS {
            let proj = |i: usize| dir[0] * c[i][0] + dir[1] * c[i][1];
            let mut vals: Vec<f64> = nodes.iter().map(|&i| proj(i)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            if vals.len() < 2 {
                continue;
            }
            let mid = vals.partition_point(|&v| v < vals[vals.len() / 2]).min(vals.len() - 2);
            let lo = mid.saturating_sub(CANDIDATES / 2);
            let hi = (lo + CANDIDATES).min(vals.len() - 1);
            for &cut in &vals[lo..hi] {
                let (sep, left, right) = self.evaluate_cut(nodes, label, |i| proj(i) <= cut);
                if left == 0 || right == 0 {
                    continue;
                }
                let imbalance = (left as f64 - right as f64).abs() / n as f64;
                let score = sep as f64 * (1.0 + 2.0 * imbalance);
                if best.is_none_or(|b| score < b.0) {
                    best = Some((score, dir, cut));
                }
            }
        }
        let (_, dir, cut) = best?;
        let proj = |i: usize| dir[0] * c[i][0] + dir[1] * c[i][1];
        self.evaluate_cut(nodes, label, |i| proj(i) <= cut);
        let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
        for &i in nodes {
            match self.side[i] {
                0 => left.push(i),
                1 => right.push(i),
                _ => sep.push(i),
            }
        }
        Some((left, right, sep))
    }

    /// Marks sides (0 left, 1 right, 2 separator) choosing the smaller
    /// one-sided separator; returns `(|sep|, |left|, |right|)`.
    fn evaluate_cut(&mut self, nodes: &[usize], label: u32, is_left: impl Fn(usize) -> bool) -> (usize, usize, usize) {
        for &i in nodes {
            self.side[i] = u8::from(!is_left(i));
        }
        let touches = |s: &[u8], i: usize, other: u8| {
            self.g.neighbors(i).iter().any(|&j| self.label[j] == label && s[j] == other)
        };
        let (mut sep_l, mut sep_r, mut n_l) = (0, 0, 0);
        for &i in nodes {
            if self.side[i] == 0 {
                n_l += 1;
                if touches(&self.side, i, 1) {
                    sep_l += 1;
                }
            } else if touches(&self.side, i, 0) {
                sep_r += 1;
            }
        }
        let from_left = sep_l <= sep_r;
        let (want, other) = if from_left { (0u8, 1u8) } else { (1u8, 0u8) };
        let flagged: Vec<usize> =
            nodes.iter().copied().filter(|&i| self.side[i] == want && touches(&self.side, i, other)).collect();
        for &i in &flagged {
            self.side[i] = 2;
        }
        let sep = flagged.len();
        let n_r = nodes.len() - n_l;
        if from_left {
            (sep, n_l - sep, n_r)
        } else {
            (sep, n_l, n_r - sep)
        }
    }

    fn split_bfs(&mut self, nodes: &[usize], label: u32) -> Option<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        let mut root = *nodes.iter().min().expect("non-empty");
        let mut visit = self.bfs(root, label);
        for _ in 0..4 {
            let far = *visit.last().expect("non-empty");
            let depth = self.level[far];
            let cand = visit
                .iter()
                .copied()
                .filter(|&i| self.level[i] == depth)
                .min_by_key(|&i| (self.g.neighbors(i).len(), i))
                .expect("non-empty");
            let next = self.bfs(cand, label);
            if self.level[*next.last().expect("non-empty")] <= depth {
                // levels now describe the rejected BFS
                visit = self.bfs(root, label);
                break;
            }
            root = cand;
            visit = next;
        }
        if visit.len() < nodes.len() {
            // disconnected: split off this component with an empty separator
            let l2 = self.relabel(&visit);
            let rest: Vec<usize> = nodes.iter().copied().filter(|&i| self.label[i] != l2).collect();
            return Some((visit, rest, Vec::new()));
        }
        let max_level = self.level[*visit.last().expect("non-empty")] as usize;
        if max_level < 2 {
            return None;
        }
        let mut counts = vec![0usize; max_level + 1];
        for &i in &visit {
            counts[self.level[i] as usize] += 1;
        }
        let half = nodes.len() / 2;
        let mut acc = 0;
        let mut mid = 1;
        for (l, cnt) in counts.iter().enumerate() {
            acc += cnt;
            if acc >= half {
                mid = l.clamp(1, max_level - 1);
                break;
            }
        }
        let mid = mid as u32;
        let (mut left, mut right, mut sep) = (Vec::new(), Vec::new(), Vec::new());
        for &i in &visit {
            let l = self.level[i];
            if l < mid {
                left.push(i);
            } else if l > mid {
                right.push(i);
            } else if self.g.neighbors(i).iter().any(|&j| self.label[j] == label && self.level[j] == mid + 1) {
                sep.push(i);
            } else {
                left.push(i);
            }
        }
        Some((left, right, sep))
    }
}

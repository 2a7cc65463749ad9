//! Conforming triangulations of the unit square.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

pub type Point = [f64; 2];

/// One edge of the triangulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    /// Endpoints, lower vertex index first.
    pub vertices: [usize; 2],
    /// Adjacent triangles in increasing order; the second is `None` on the boundary.
    pub triangles: [Option<usize>; 2],
    /// Unit normal pointing out of the lower-indexed adjacent triangle.
    pub normal: Point,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.triangles[1].is_none()
    }
}

/// Edge incidence and orientation tables of a triangulation.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub edges: Vec<Edge>,
    /// `triangle_edges[k][i]` is the edge opposite local vertex `i` of triangle `k`.
    pub triangle_edges: Vec<[usize; 3]>,
    /// `+1` when the global edge normal is the outward normal of the triangle.
    pub edge_signs: Vec<[f64; 3]>,
    pub boundary_vertices: Vec<usize>,
    pub boundary_edges: Vec<usize>,
}

impl Topology {
    /// Builds edge tables, failing on edges shared by more than two triangles.
    pub fn build(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<Topology> {
        let mut incidence: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
        for (k, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let a = tri[(i + 1) % 3];
                let b = tri[(i + 2) % 3];
                incidence.entry((a.min(b), a.max(b))).or_default().push((k, i));
            }
        }
        let mut edges = Vec::with_capacity(incidence.len());
        let mut triangle_edges = vec![[usize::MAX; 3]; triangles.len()];
        let mut edge_signs = vec![[0.0; 3]; triangles.len()];
        for (&(a, b), adj) in &incidence {
            if adj.len() > 2 {
                return Err(Error::NonConforming { a, b, count: adj.len() });
            }
            let e = edges.len();
            let (k0, i0) = adj[0];
            let other = adj.get(1).map(|&(k, _)| k);
            for (pos, &(k, i)) in adj.iter().enumerate() {
                triangle_edges[k][i] = e;
                edge_signs[k][i] = if pos == 0 { 1.0 } else { -1.0 };
            }
            let (pa, pb) = (vertices[a], vertices[b]);
            let c = vertices[triangles[k0][i0]];
            let t = [pb[0] - pa[0], pb[1] - pa[1]];
            let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
            let mut n = [t[1] / len, -t[0] / len];
            if (c[0] - pa[0]) * n[0] + (c[1] - pa[1]) * n[1] > 0.0 {
                n = [-n[0], -n[1]];
            }
            edges.push(Edge { vertices: [a, b], triangles: [Some(k0), other], normal: n });
        }
        let mut on_boundary = vec![false; vertices.len()];
        let mut boundary_edges = Vec::new();
        for (e, edge) in edges.iter().enumerate() {
            if edge.is_boundary() {
                boundary_edges.push(e);
                on_boundary[edge.vertices[0]] = true;
                on_boundary[edge.vertices[1]] = true;
            }
        }
        let boundary_vertices = (0..vertices.len()).filter(|&v| on_boundary[v]).collect();
        Ok(Topology { edges, triangle_edges, edge_signs, boundary_vertices, boundary_edges })
    }
}

/// A triangulation with refinement lineage.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub topology: Topology,
    /// Parent triangle on the previous level.
    pub parents: Vec<Option<usize>>,
    pub level: usize,
    /// Nominal mesh size `2^{-level}` of the canonical hierarchy.
    pub h: f64,
}

impl Mesh {
    /// Unit square split along both diagonals into four triangles.
    pub fn unit_square_initial() -> Mesh {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]];
        let triangles = vec![[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
        let topology = Topology::build(&vertices, &triangles).expect("initial mesh is conforming");
        Mesh { parents: vec![None; 4], vertices, triangles, topology, level: 0, h: 1.0 }
    }

    /// Initial mesh refined `level` times.
    pub fn unit_square(level: usize) -> Mesh {
        (0..level).fold(Mesh::unit_square_initial(), |m, _| m.refine_red())
    }

    /// Red refinement: every triangle is split into four congruent children.
    ///
    /// Child `4k + j` of triangle `k` is the corner child at local vertex `j`
    /// for `j < 3` and the middle child for `j = 3`. Midpoint of edge `e` gets
    /// vertex index `V + e`.
    pub fn refine_red(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.topology.edges.iter().map(|e| {
            let (a, b) = (self.vertices[e.vertices[0]], self.vertices[e.vertices[1]]);
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        }));
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut parents = Vec::with_capacity(4 * self.triangles.len());
        for (k, tri) in self.triangles.iter().enumerate() {
            // midpoint opposite local vertex i
            let m = self.topology.triangle_edges[k].map(|e| nv + e);
            triangles.push([tri[0], m[2], m[1]]);
            triangles.push([m[2], tri[1], m[0]]);
            triangles.push([m[1], m[0], tri[2]]);
            triangles.push([m[0], m[1], m[2]]);
            parents.extend([Some(k); 4]);
        }
        let topology = Topology::build(&vertices, &triangles).expect("red refinement is conforming");
        Mesh { vertices, triangles, topology, parents, level: self.level + 1, h: 0.5 * self.h }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.topology.edges
    }

    pub fn triangle_points(&self, k: usize) -> [Point; 3] {
        self.triangles[k].map(|v| self.vertices[v])
    }

    /// Signed area (positive for counterclockwise triangles).
    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.triangle_points(k);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn diameter(&self, k: usize) -> f64 {
        let p = self.triangle_points(k);
        (0..3).map(|i| dist(p[i], p[(i + 1) % 3])).fold(0.0, f64::max)
    }

    /// Largest element diameter.
    pub fn max_diameter(&self) -> f64 {
        (0..self.num_triangles()).map(|k| self.diameter(k)).fold(0.0, f64::max)
    }

    /// Shape-regularity measure `max_K h_K / rho_K` with
    /// `rho_K = 2 |K| / perimeter(K)`.
    pub fn chunkiness(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for k in 0..self.num_triangles() {
            let p = self.triangle_points(k);
            let area = self.area(k);
            let perimeter: f64 = (0..3).map(|i| dist(p[i], p[(i + 1) % 3])).sum();
            if !(area > 1e-300) || !perimeter.is_finite() {
                return Err(Error::DegenerateTriangle(k));
            }
            let rho = 2.0 * area / perimeter;
            worst = worst.max(self.diameter(k) / rho);
        }
        Ok(worst)
    }

    /// Plain-text dump: `V T E` header, then vertices, triangles and edges.
    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.num_vertices(), self.num_triangles(), self.num_edges());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.17e} {:.17e}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in self.edges() {
            let _ = writeln!(s, "{} {} {}", e.vertices[0], e.vertices[1], u8::from(e.is_boundary()));
        }
        s
    }

    /// Parses and validates a dump produced by [`Mesh::to_dump`]. The edge
    /// list must agree with the edges implied by the triangles.
    pub fn from_dump(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty input".into() })?;
        let counts = parse_fields::<usize>(header, hl + 1, 3)?;
        let (nv, nt, ne) = (counts[0], counts[1], counts[2]);

        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        let mut listed_edges = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if vertices.len() < nv {
                let f = parse_fields::<f64>(line, lineno, 2)?;
                if !f.iter().all(|x| x.is_finite()) {
                    return Err(Error::Parse { line: lineno, msg: "non-finite coordinate".into() });
                }
                vertices.push([f[0], f[1]]);
            } else if triangles.len() < nt {
                let f = parse_fields::<usize>(line, lineno, 3)?;
                if f.iter().any(|&v| v >= nv) || f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                    return Err(Error::Parse { line: lineno, msg: "invalid triangle vertex indices".into() });
                }
                triangles.push([f[0], f[1], f[2]]);
            } else if listed_edges.len() < ne {
                let f = parse_fields::<usize>(line, lineno, 3)?;
                if f[2] > 1 {
                    return Err(Error::Parse { line: lineno, msg: "boundary flag must be 0 or 1".into() });
                }
                listed_edges.push((f[0].min(f[1]), f[0].max(f[1]), f[2] == 1));
            } else {
                return Err(Error::Parse { line: lineno, msg: "trailing data after edge list".into() });
            }
        }
        if vertices.len() != nv || triangles.len() != nt || listed_edges.len() != ne {
            return Err(Error::Parse { line: text.lines().count(), msg: "truncated mesh dump".into() });
        }
        if nt == 0 {
            return Err(Error::Parse { line: 1, msg: "mesh has no triangles".into() });
        }
        let topology = Topology::build(&vertices, &triangles)?;
        listed_edges.sort_unstable();
        let implied: Vec<_> = topology.edges.iter().map(|e| (e.vertices[0], e.vertices[1], e.is_boundary())).collect();
        if listed_edges != implied {
            return Err(Error::Parse { line: 1, msg: "edge list does not match triangle connectivity".into() });
        }
        let mut mesh = Mesh { parents: vec![None; nt], vertices, triangles, topology, level: 0, h: 0.0 };
        for k in 0..nt {
            if !(mesh.area(k) > 0.0) {
                return Err(Error::DegenerateTriangle(k));
            }
        }
        mesh.h = mesh.max_diameter();
        Ok(mesh)
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, lineno: usize, n: usize) -> Result<Vec<T>> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != n {
        return Err(Error::Parse { line: lineno, msg: format!("expected {n} fields, found {}", fields.len()) });
    }
    fields
        .iter()
        .map(|f| f.parse::<T>().map_err(|_| Error::Parse { line: lineno, msg: format!("cannot parse `{f}`") }))
        .collect()
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

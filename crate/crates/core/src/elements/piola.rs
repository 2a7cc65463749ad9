use crate::mesh::{Mesh, Point};

/// Affine map `x = x0 + J x_hat` from the reference triangle onto a mesh cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub origin: Point,
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    pub inv: [[f64; 2]; 2],
}

impl AffineMap {
    pub fn from_points(p: [Point; 3]) -> Self {
        let jac = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        AffineMap { origin: p[0], jac, det, inv }
    }

    pub fn for_cell(mesh: &Mesh, k: usize) -> Self {
        Self::from_points(mesh.triangle_points(k))
    }

    pub fn identity() -> Self {
        Self::from_points([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    }

    pub fn map(&self, x: [f64; 2]) -> Point {
        let j = self.jac;
        [self.origin[0] + j[0][0] * x[0] + j[0][1] * x[1], self.origin[1] + j[1][0] * x[0] + j[1][1] * x[1]]
    }

    pub fn inverse_map(&self, x: Point) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        let i = self.inv;
        [i[0][0] * d[0] + i[0][1] * d[1], i[1][0] * d[0] + i[1][1] * d[1]]
    }

    /// Contravariant Piola transform of a reference value and divergence.
    pub fn piola(&self, v: [f64; 2], div: f64) -> ([f64; 2], f64) {
        let j = self.jac;
        let s = 1.0 / self.det;
        ([s * (j[0][0] * v[0] + j[0][1] * v[1]), s * (j[1][0] * v[0] + j[1][1] * v[1])], s * div)
    }

    /// Gradients of the barycentric coordinates on the physical cell.
    pub fn grad_lambda(&self) -> [[f64; 2]; 3] {
        let i = self.inv;
        // grad lambda_1 = J^{-T} e_1, grad lambda_2 = J^{-T} e_2
        let g1 = [i[0][0], i[0][1]];
        let g2 = [i[1][0], i[1][1]];
        [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2]
    }
}

/// Pushes reference RT values and divergences onto cell `k` of `mesh`
/// (Piola transform), multiplying the edge shape functions by the global
/// orientation sign of their edge. Only the edge DOFs carry signs; for RT1
/// the two interior shapes (indices 6 and 7) are returned in the reference
/// frame and must be combined with `J^{-1}` by the caller to become dual
/// to physical interior moments.
pub fn piola_push(mesh: &Mesh, k: usize, vals: &[[f64; 2]], divs: &[f64]) -> (Vec<[f64; 2]>, Vec<f64>) {
    let map = AffineMap::for_cell(mesh, k);
    let signs = mesh.topology.edge_signs[k];
    let per_edge = if vals.len() == 3 { 1 } else { 2 };
    vals.iter()
        .zip(divs)
        .enumerate()
        .map(|(j, (v, d))| {
            let s = if j < 3 * per_edge { signs[j / per_edge] } else { 1.0 };
            let (pv, pd) = map.piola(*v, *d);
            ([s * pv[0], s * pv[1]], s * pd)
        })
        .unzip()
}

//! Bilinear rectangle kernels shared by the energies and the solvers.
//!
//! Local corner order is SW, SE, NE, NW. Integrals use the 2x2 Gauss rule.

const G: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// Reference coordinates of the corners.
const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Reference coordinates of the Gauss points.
pub const GAUSS: [[f64; 2]; 4] = [[-G, -G], [G, -G], [G, G], [-G, G]];

/// Shape function values at reference point `(xi, eta)`.
#[inline]
pub fn shape(xi: f64, eta: f64) -> [f64; 4] {
    let mut n = [0.0; 4];
    for (k, c) in CORNERS.iter().enumerate() {
        n[k] = 0.25 * (1.0 + xi * c[0]) * (1.0 + eta * c[1]);
    }
    n
}

/// Physical shape-function gradients at `(xi, eta)` for a cell of size `hx x hy`.
#[inline]
pub fn shape_grad(xi: f64, eta: f64, hx: f64, hy: f64) -> [[f64; 2]; 4] {
    let mut d = [[0.0; 2]; 4];
    for (k, c) in CORNERS.iter().enumerate() {
        d[k][0] = 0.25 * c[0] * (1.0 + eta * c[1]) * 2.0 / hx;
        d[k][1] = 0.25 * c[1] * (1.0 + xi * c[0]) * 2.0 / hy;
    }
    d
}

/// Precomputed values for one cell size.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub hx: f64,
    pub hy: f64,
    /// Gauss weight (physical area per point).
    pub weight: f64,
    pub n: [[f64; 4]; 4],
    pub dn: [[[f64; 2]; 4]; 4],
}

impl Kernel {
    pub fn new(hx: f64, hy: f64) -> Self {
        let mut n = [[0.0; 4]; 4];
        let mut dn = [[[0.0; 2]; 4]; 4];
        for (q, p) in GAUSS.iter().enumerate() {
            n[q] = shape(p[0], p[1]);
            dn[q] = shape_grad(p[0], p[1], hx, hy);
        }
        Self {
            hx,
            hy,
            weight: 0.25 * hx * hy,
            n,
            dn,
        }
    }

    #[inline]
    pub fn value(&self, q: usize, vals: &[f64; 4]) -> f64 {
        let n = &self.n[q];
        n[0] * vals[0] + n[1] * vals[1] + n[2] * vals[2] + n[3] * vals[3]
    }

    #[inline]
    pub fn grad(&self, q: usize, vals: &[f64; 4]) -> [f64; 2] {
        let d = &self.dn[q];
        [
            d[0][0] * vals[0] + d[1][0] * vals[1] + d[2][0] * vals[2] + d[3][0] * vals[3],
            d[0][1] * vals[0] + d[1][1] * vals[1] + d[2][1] * vals[2] + d[3][1] * vals[3],
        ]
    }

    /// `sum_q w c_q grad N_a . grad N_b`.
    pub fn stiffness(&self, coeff: &[f64; 4]) -> [[f64; 4]; 4] {
        let mut k = [[0.0; 4]; 4];
        for q in 0..4 {
            let s = self.weight * coeff[q];
            let d = &self.dn[q];
            for a in 0..4 {
                for b in 0..4 {
                    k[a][b] += s * (d[a][0] * d[b][0] + d[a][1] * d[b][1]);
                }
            }
        }
        k
    }

    /// `sum_q w c_q N_a N_b`.
    pub fn mass(&self, coeff: &[f64; 4]) -> [[f64; 4]; 4] {
        let mut m = [[0.0; 4]; 4];
        for q in 0..4 {
            let s = self.weight * coeff[q];
            let n = &self.n[q];
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += s * n[a] * n[b];
                }
            }
        }
        m
    }
}

/// Gather the four nodal values of a cell.
#[inline]
pub fn gather(values: &[f64], nodes: &[usize; 4]) -> [f64; 4] {
    [
        values[nodes[0]],
        values[nodes[1]],
        values[nodes[2]],
        values[nodes[3]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_of_unity() {
        for p in GAUSS {
            let n = shape(p[0], p[1]);
            assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn stiffness_annihilates_constants() {
        let k = Kernel::new(0.3, 0.7).stiffness(&[1.0; 4]);
        for row in k {
            assert!(row.iter().sum::<f64>().abs() < 1e-14);
        }
    }

    #[test]
    fn mass_sums_to_area() {
        let m = Kernel::new(0.5, 0.25).mass(&[1.0; 4]);
        let total: f64 = m.iter().flatten().sum();
        assert!((total - 0.125).abs() < 1e-15);
    }
}

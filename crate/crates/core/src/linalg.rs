//! Sparse symmetric matrices on the grid pattern and a masked Jacobi PCG.

use std::sync::Arc;

use crate::grid::Grid;

/// Sparsity pattern of the bilinear element coupling on a grid.
#[derive(Debug)]
pub struct Pattern {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    /// Position in `cols` of each local `(a, b)` pair of each cell.
    slots: Vec<[usize; 16]>,
}

impl Pattern {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.num_nodes();
        let mut adj: Vec<Vec<usize>> = vec![Vec::with_capacity(9); n];
        for nodes in grid.cells() {
            for &a in nodes {
                adj[a].extend_from_slice(nodes);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for row in adj.iter_mut() {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let slots = grid
            .cells()
            .iter()
            .map(|nodes| {
                let mut s = [0; 16];
                for a in 0..4 {
                    let row = &cols[row_ptr[nodes[a]]..row_ptr[nodes[a] + 1]];
                    for b in 0..4 {
                        let k = row.binary_search(&nodes[b]).expect("pattern covers cell");
                        s[4 * a + b] = row_ptr[nodes[a]] + k;
                    }
                }
                s
            })
            .collect();
        Self { row_ptr, cols, slots }
    }

    pub fn num_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }
}

/// Symmetric matrix in CSR format sharing a [`Pattern`].
#[derive(Debug, Clone)]
pub struct Csr {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl Csr {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let nnz = pattern.cols.len();
        Self {
            pattern,
            values: vec![0.0; nnz],
        }
    }

    pub fn add_cell(&mut self, cell: usize, k: &[[f64; 4]; 4]) {
        let s = &self.pattern.slots[cell];
        for a in 0..4 {
            for b in 0..4 {
                self.values[s[4 * a + b]] += k[a][b];
            }
        }
    }

    pub fn add_diag(&mut self, row: usize, value: f64) {
        let p = &self.pattern;
        let range = p.row_ptr[row]..p.row_ptr[row + 1];
        let k = p.cols[range.clone()].binary_search(&row).expect("diagonal in pattern");
        self.values[range.start + k] += value;
    }

    pub fn num_rows(&self) -> usize {
        self.pattern.num_rows()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                s += self.values[k] * x[p.cols[k]];
            }
            *yi = s;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..self.num_rows())
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .find(|&k| p.cols[k] == i)
                    .map_or(0.0, |k| self.values[k])
            })
            .collect()
    }

    /// `x^T A x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.matvec(x, &mut y);
        dot(x, &y)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of a CG solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// Final free-residual norm relative to the initial free right-hand side.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` on the nodes where `free` is true, holding the others at
/// their current values in `x`. `x` is the initial guess.
pub fn pcg(a: &Csr, b: &[f64], x: &mut [f64], free: &[bool], tol: f64, max_iter: usize) -> CgStats {
    let n = a.num_rows();
    let d = a.diag();
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = if free[i] { b[i] - r[i] } else { 0.0 };
    }
    let scale = {
        // right-hand side seen by the free block
        let mut ax0 = vec![0.0; n];
        let fixed: Vec<f64> = (0..n).map(|i| if free[i] { 0.0 } else { x[i] }).collect();
        a.matvec(&fixed, &mut ax0);
        let s: f64 = (0..n)
            .filter(|&i| free[i])
            .map(|i| (b[i] - ax0[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        if s > 0.0 { s } else { 1.0 }
    };
    let precond = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = if free[i] && d[i] > 0.0 { r[i] / d[i] } else { 0.0 };
        }
    };
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / scale;
    let mut it = 0;
    while res > tol && it < max_iter {
        a.matvec(&p, &mut ap);
        for i in 0..n {
            if !free[i] {
                ap[i] = 0.0;
            }
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = dot(&r, &r).sqrt() / scale;
    }
    CgStats {
        iterations: it,
        relative_residual: res,
        converged: res <= tol,
    }
}

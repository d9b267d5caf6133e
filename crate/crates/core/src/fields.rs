//! Nodal fields, discrete gradients and blow-up rescaling.
//!
//! Blow-ups use dyadic scales `eps = 2^-k` around lattice nodes, so the
//! rescaled grid is a window of the source grid with spacing `h / eps` and
//! every rescaled node value is read from exactly one source node.

use std::sync::Arc;

use thiserror::Error;

use crate::element::{gather, Kernel};
use crate::grid::{BallMask, Grid, Point, SlitSpec};

/// Minimum number of source cells that `eps * r` has to span.
pub const MIN_WINDOW_CELLS: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("phase value {value} at node {node} outside [0, 1]")]
    OutOfBounds { node: usize, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("eps * r = {span} spans fewer than {MIN_WINDOW_CELLS} source cells (h = {h})")]
    WindowTooCoarse { span: f64, h: f64 },
    #[error("blow-up center {0:?} is not a grid node")]
    CenterOffLattice(Point),
    #[error("scale {0} is not of the form 2^-k with k >= 0")]
    NotDyadic(f64),
}

fn check_len(grid: &Grid, values: &[f64]) -> Result<(), FieldError> {
    if values.len() != grid.num_nodes() {
        return Err(FieldError::LengthMismatch {
            expected: grid.num_nodes(),
            got: values.len(),
        });
    }
    if let Some(p) = values.iter().position(|v| !v.is_finite()) {
        return Err(FieldError::NonFinite(p));
    }
    Ok(())
}

/// Scalar nodal field (antiplane displacement, loads, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, FieldError> {
        check_len(&grid, &values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.num_nodes();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.num_nodes())
            .map(|p| f(grid.node_position(p)))
            .collect();
        Self { grid, values }
    }

    /// Like [`ScalarField::from_fn`], but also passes the center of a cell
    /// using the node so that functions discontinuous across the slit can pick
    /// a side.
    pub fn from_fn_probe(grid: Arc<Grid>, f: impl Fn(Point, Point) -> f64) -> Self {
        let values = (0..grid.num_nodes())
            .map(|p| f(grid.node_position(p), grid.node_probe(p)))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value_at_node(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.node_at(i, j)]
    }

    /// `a * self + b * other`
    pub fn combine(&self, a: f64, other: &ScalarField, b: f64) -> Result<ScalarField, FieldError> {
        same_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        ScalarField::new(self.grid.clone(), values)
    }

    /// L2 error against an analytic function, 3x3 Gauss per cell.
    pub fn l2_error_fn(&self, exact: impl Fn(Point) -> f64) -> f64 {
        const P: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let g = &self.grid;
        let (hx, hy) = (g.hx(), g.hy());
        let mut sum = 0.0;
        for c in 0..g.num_cells() {
            let vals = gather(&self.values, &g.cell_nodes(c));
            let ctr = g.cell_center(c);
            for (a, xi) in P.iter().enumerate() {
                for (b, eta) in P.iter().enumerate() {
                    let n = crate::element::shape(*xi, *eta);
                    let uh: f64 = (0..4).map(|k| n[k] * vals[k]).sum();
                    let x = [ctr[0] + 0.5 * xi * hx, ctr[1] + 0.5 * eta * hy];
                    let e = uh - exact(x);
                    sum += W[a] * W[b] * 0.25 * hx * hy * e * e;
                }
            }
        }
        sum.sqrt()
    }
}

/// Damage field, `0 <= v <= 1` at every node (`v = 1` intact).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PhaseField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, FieldError> {
        check_len(&grid, &values)?;
        if let Some(p) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(FieldError::OutOfBounds {
                node: p,
                value: values[p],
            });
        }
        Ok(Self { grid, values })
    }

    pub fn intact(grid: Arc<Grid>) -> Self {
        Self::constant(grid, 1.0)
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        assert!((0.0..=1.0).contains(&c));
        let n = grid.num_nodes();
        Self {
            grid,
            values: vec![c; n],
        }
    }

    /// Samples `f` and clamps into `[0, 1]`.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> f64) -> Self {
        let values = (0..grid.num_nodes())
            .map(|p| f(grid.node_position(p)).clamp(0.0, 1.0))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<(), FieldError> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(FieldError::GridMismatch)
    }
}

/// Gradient of the bilinear interpolant at every cell center.
pub fn gradient(field: &ScalarField) -> Vec<[f64; 2]> {
    let g = field.grid();
    (0..g.num_cells())
        .map(|c| {
            let u = gather(field.values(), &g.cell_nodes(c));
            [
                ((u[1] - u[0]) + (u[2] - u[3])) / (2.0 * g.hx()),
                ((u[3] - u[0]) + (u[2] - u[1])) / (2.0 * g.hy()),
            ]
        })
        .collect()
}

/// Blow-up of a displacement (and optionally its damage field or slit) at a node.
#[derive(Debug, Clone)]
pub struct RescaledPair {
    pub eps: f64,
    pub center: Point,
    pub radius: f64,
    /// `eps^-1/2 (u(x0 + eps x) - u(x0))` on the blow-up grid.
    pub u: ScalarField,
    /// `v(x0 + eps x)`, when a damage field was supplied.
    pub v: Option<PhaseField>,
    /// `(K - x0) / eps` restricted to the window, when the source grid has a slit.
    pub slit: Option<SlitSpec>,
    /// Source physical node of each blow-up node.
    pub node_map: Vec<usize>,
}

impl RescaledPair {
    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }
}

pub(crate) fn check_dyadic(eps: f64) -> Result<(), FieldError> {
    let mantissa = eps.to_bits() & ((1u64 << 52) - 1);
    if eps > 0.0 && eps <= 1.0 && eps.is_normal() && mantissa == 0 {
        Ok(())
    } else {
        Err(FieldError::NotDyadic(eps))
    }
}

/// Window of source cells `[i0, i1) x [j0, j1)` used by a blow-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Window {
    pub center: (usize, usize),
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

/// Checks the blow-up preconditions and returns the source window covering
/// `x0 + eps [-half_width, half_width]^2`.
pub(crate) fn blowup_window(
    grid: &Grid,
    x0: Point,
    eps: f64,
    r: f64,
    half_width: f64,
) -> Result<Window, FieldError> {
    check_dyadic(eps)?;
    let (ci, cj) = grid.snap_to_node(x0).ok_or(FieldError::CenterOffLattice(x0))?;
    let h = grid.hx().max(grid.hy());
    let span = eps * r;
    if span < MIN_WINDOW_CELLS * h * (1.0 - 1e-12) {
        return Err(FieldError::WindowTooCoarse { span, h });
    }
    let mx = (eps * half_width / grid.hx() - 1e-9).ceil().max(1.0) as usize;
    let my = (eps * half_width / grid.hy() - 1e-9).ceil().max(1.0) as usize;
    Ok(Window {
        center: (ci, cj),
        i0: ci.saturating_sub(mx),
        i1: (ci + mx).min(grid.nx()),
        j0: cj.saturating_sub(my),
        j1: (cj + my).min(grid.ny()),
    })
}

/// Blow-up with an explicit window half-width (in blow-up units).
pub fn blowup_rescale_window(
    u: &ScalarField,
    v: Option<&PhaseField>,
    x0: Point,
    eps: f64,
    r: f64,
    half_width: f64,
) -> Result<RescaledPair, FieldError> {
    if let Some(v) = v {
        same_grid(u.grid(), v.grid())?;
    }
    let grid = u.grid();
    let w = blowup_window(grid, x0, eps, r, half_width)?;
    let x0 = grid.node_position(grid.node_at(w.center.0, w.center.1));
    let (win, map) = grid.window(w.i0, w.i1, w.j0, w.j1, x0, eps);
    let win = Arc::new(win);
    let u0 = u.value_at_node(w.center.0, w.center.1);
    let scale = 1.0 / eps.sqrt();
    let uv: Vec<f64> = map.iter().map(|&s| (u.values()[s] - u0) * scale).collect();
    let v_eps = v.map(|v| PhaseField {
        grid: win.clone(),
        values: map.iter().map(|&s| v.values()[s]).collect(),
    });
    let slit = win.slit().cloned();
    Ok(RescaledPair {
        eps,
        center: x0,
        radius: r,
        u: ScalarField {
            grid: win,
            values: uv,
        },
        v: v_eps,
        slit,
        node_map: map,
    })
}

/// `u_eps(x) = eps^-1/2 [u(x0 + eps x) - u(x0)]` on the window covering `B(0, r)`.
pub fn blowup_rescale(
    u: &ScalarField,
    x0: Point,
    eps: f64,
    r: f64,
) -> Result<RescaledPair, FieldError> {
    blowup_rescale_window(u, None, x0, eps, r, r)
}

/// Pure dilation `v_eps(x) = v(x0 + eps x)` of a damage field.
pub fn dilate(v: &PhaseField, x0: Point, eps: f64, r: f64) -> Result<PhaseField, FieldError> {
    let vals = dilate_values(v.grid(), v.values(), x0, eps, r, r)?;
    Ok(PhaseField {
        grid: vals.grid,
        values: vals.values,
    })
}

/// Pure dilation of any nodal field (used for body loads).
pub fn dilate_scalar(
    f: &ScalarField,
    x0: Point,
    eps: f64,
    r: f64,
) -> Result<ScalarField, FieldError> {
    dilate_values(f.grid(), f.values(), x0, eps, r, r)
}

fn dilate_values(
    grid: &Arc<Grid>,
    values: &[f64],
    x0: Point,
    eps: f64,
    r: f64,
    half_width: f64,
) -> Result<ScalarField, FieldError> {
    let w = blowup_window(grid, x0, eps, r, half_width)?;
    let x0 = grid.node_position(grid.node_at(w.center.0, w.center.1));
    let (win, map) = grid.window(w.i0, w.i1, w.j0, w.j1, x0, eps);
    Ok(ScalarField {
        grid: Arc::new(win),
        values: map.iter().map(|&s| values[s]).collect(),
    })
}

/// `sqrt( integral over the mask of (a - b)^2 )`.
pub fn l2_distance_on_ball(
    a: &ScalarField,
    b: &ScalarField,
    mask: &BallMask,
) -> Result<f64, FieldError> {
    same_grid(a.grid(), b.grid())?;
    let g = a.grid();
    let k = Kernel::new(g.hx(), g.hy());
    let mut sum = 0.0;
    for c in 0..g.num_cells() {
        let frac = mask.fraction(g, c);
        if frac == 0.0 {
            continue;
        }
        let nodes = g.cell_nodes(c);
        let da = gather(a.values(), &nodes);
        let db = gather(b.values(), &nodes);
        let d = [da[0] - db[0], da[1] - db[1], da[2] - db[2], da[3] - db[3]];
        let mut cell = 0.0;
        for q in 0..4 {
            let e = k.value(q, &d);
            cell += k.weight * e * e;
        }
        sum += frac * cell;
    }
    Ok(sum.sqrt())
}

/// Transfers nodal values from `fine` onto `coarse` when every coarse node is
/// also a node of the fine lattice (same origin offsets, integer spacing
/// ratio). Nodes without a counterpart come back as `None`.
pub fn inject(fine: &ScalarField, coarse: &Grid) -> Vec<Option<f64>> {
    let fg = fine.grid();
    (0..coarse.num_nodes())
        .map(|p| {
            let x = coarse.node_position(p);
            let probe = coarse.node_probe(p);
            // a point just inside the probing cell, next to the node
            let t = 1e-6;
            let pt = [x[0] + t * (probe[0] - x[0]), x[1] + t * (probe[1] - x[1])];
            let [fi, fj] = fg.lattice_coords(pt);
            if fi < 0.0 || fj < 0.0 || fi >= fg.nx() as f64 || fj >= fg.ny() as f64 {
                return None;
            }
            let cell = fj as usize * fg.nx() + fi as usize;
            let (ni, nj) = fg.snap_to_node(x)?;
            let nodes = fg.cell_nodes(cell);
            nodes
                .iter()
                .find(|&&n| fg.lattice_ij(n) == (ni, nj))
                .map(|&n| fine.values()[n])
        })
        .collect()
}

//! The boundary-load collapse: once a crack band separates a loaded piece from
//! the Dirichlet data, translating that piece lowers the energy without bound.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::gather;
use crate::energy::{
    elastic_energy, load_potential, surface_energy, EnergyError, LoadSpec, MaterialParams, Split,
    Traction,
};
use crate::fields::{FieldError, PhaseField, ScalarField};
use crate::grid::{Grid, GridError, Rect, Side};
use crate::stability::fit_slope;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemoError {
    #[error("the crack band does not separate the loaded boundary from the Dirichlet data")]
    NotDisconnecting,
    #[error("need at least two amplitudes")]
    TooFewAmplitudes,
    #[error("invalid demo setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// A strip clamped at the bottom, loaded by `g` on part of the top edge and
/// cut by a horizontal band of fully damaged material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StripSetup {
    pub rect: Rect,
    pub resolution: [usize; 2],
    /// Center height and thickness of the damaged band.
    pub band_y: f64,
    pub band_width: f64,
    /// Constant boundary load and the `[x0, x1]` part of the top edge carrying it.
    pub g: f64,
    pub load_segment: [f64; 2],
}

impl Default for StripSetup {
    fn default() -> Self {
        Self {
            rect: Rect::new(0.0, 0.0, 1.0, 0.5),
            resolution: [64, 32],
            band_y: 0.25,
            band_width: 0.0625,
            g: 1.0,
            load_segment: [0.0, 1.0],
        }
    }
}

/// Grid, damage field, loads and the translation mode `phi` of a strip setup.
#[derive(Debug, Clone)]
pub struct CollapseProblem {
    pub grid: Arc<Grid>,
    pub v: PhaseField,
    pub loads: LoadSpec,
    /// 1 above the band, 0 below, linear across it.
    pub phi: ScalarField,
}

impl StripSetup {
    pub fn build(&self) -> Result<CollapseProblem, DemoError> {
        let grid = Arc::new(Grid::build(self.rect, self.resolution, None)?);
        let lo = self.band_y - 0.5 * self.band_width;
        let hi = self.band_y + 0.5 * self.band_width;
        if !(lo > self.rect.y0 && hi < self.rect.y1 && self.band_width > 0.0) {
            return Err(DemoError::InvalidSetup("band must lie strictly inside the strip".into()));
        }
        let tol = 1e-12 * grid.hy();
        let v = PhaseField::from_fn(grid.clone(), |p| {
            if p[1] >= lo - tol && p[1] <= hi + tol {
                0.0
            } else {
                1.0
            }
        });
        let phi = ScalarField::from_fn(grid.clone(), |p| ((p[1] - lo) / (hi - lo)).clamp(0.0, 1.0));
        let [a, b] = self.load_segment;
        let g = self.g;
        let mut loads = LoadSpec::none(&grid).with_dirichlet_side(&grid, Side::Bottom, |_, _| 0.0);
        for e in grid.boundary_edges().into_iter().filter(|e| e.side == Side::Top) {
            let mid = 0.5 * (grid.node_position(e.nodes[0])[0] + grid.node_position(e.nodes[1])[0]);
            let ge = if mid >= a && mid <= b { g } else { 0.0 };
            loads.traction.push(Traction { side: Side::Top, nodes: e.nodes, length: e.length, g: [ge; 2] });
        }
        Ok(CollapseProblem { grid, v, loads, phi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseRow {
    pub amplitude: f64,
    pub elastic: f64,
    pub surface: f64,
    /// `int f u_c + int g u_c` (subtracted).
    pub load: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseTable {
    pub rows: Vec<CollapseRow>,
    /// Fitted slope of the energy against the amplitude.
    pub slope: f64,
    /// `-int g phi ds - int f phi dx`.
    pub expected_slope: f64,
    pub strictly_decreasing: bool,
}

/// Checks that no positive-stiffness path (with zero residual stiffness)
/// joins a loaded node to a Dirichlet node.
fn check_disconnected(grid: &Grid, v: &PhaseField, loads: &LoadSpec) -> Result<(), DemoError> {
    let n = grid.num_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for nodes in grid.cells() {
        if gather(v.values(), nodes).iter().any(|&x| x > 0.0) {
            for &q in &nodes[1..] {
                let (a, b) = (find(&mut parent, nodes[0]), find(&mut parent, q));
                parent[a] = b;
            }
        }
    }
    let mut loaded = vec![false; n];
    for t in &loads.traction {
        if t.g.iter().any(|&g| g != 0.0) {
            loaded[t.nodes[0]] = true;
            loaded[t.nodes[1]] = true;
        }
    }
    if let Some(f) = &loads.body {
        for (p, x) in f.iter().enumerate() {
            loaded[p] |= *x != 0.0;
        }
    }
    let mut clamped = vec![false; n];
    for p in 0..n {
        if loads.dirichlet[p].is_some() {
            let r = find(&mut parent, p);
            clamped[r] = true;
        }
    }
    for p in 0..n {
        if loaded[p] {
            let r = find(&mut parent, p);
            if clamped[r] {
                return Err(DemoError::NotDisconnecting);
            }
        }
    }
    Ok(())
}

/// Tabulates `E(c) = elastic(c phi) + surface(v) - load(c phi)` over the amplitudes.
pub fn demo_load_collapse(
    problem: &CollapseProblem,
    params: &MaterialParams,
    amplitudes: &[f64],
) -> Result<CollapseTable, DemoError> {
    if amplitudes.len() < 2 {
        return Err(DemoError::TooFewAmplitudes);
    }
    params.validate()?;
    let CollapseProblem { grid, v, loads, phi } = problem;
    loads.validate(grid)?;
    check_disconnected(grid, v, loads)?;
    let surface = surface_energy(v, params, None);
    let (b, t) = load_potential(phi, loads)?;
    let unit_load = b + t;
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &c in amplitudes {
        let u = ScalarField::new(grid.clone(), phi.values().iter().map(|x| c * x).collect())?;
        let elastic = elastic_energy(&u, Some(v), params, None, Split::Full)?;
        let (b, t) = load_potential(&u, loads)?;
        let load = b + t;
        rows.push(CollapseRow {
            amplitude: c,
            elastic,
            surface,
            load,
            energy: elastic + surface - load,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.amplitude).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let slope = fit_slope(&xs, &ys).ok_or(DemoError::TooFewAmplitudes)?;
    let strictly_decreasing = rows.windows(2).all(|w| w[1].energy < w[0].energy);
    Ok(CollapseTable {
        rows,
        slope,
        expected_slope: -unit_load,
        strictly_decreasing,
    })
}

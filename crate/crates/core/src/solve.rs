//! Staggered phase-field solver: displacement solve, box-constrained damage
//! solve and the alternating-minimization driver.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::{gather, Kernel};
use crate::energy::{total_phase_energy, EnergyError, EnergyLedger, LoadSpec, MaterialParams, Split};
use crate::fields::{same_grid, FieldError, PhaseField, ScalarField};
use crate::grid::Grid;
use crate::linalg::{dot, pcg, Csr, Pattern};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("a loaded region of {nodes} nodes is not connected to Dirichlet data")]
    FloatingDomain { nodes: usize },
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative residual target of the CG solves.
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    /// Stopping threshold for the objective decrease per cycle and for `max |dv|`;
    /// also the KKT target of the damage solve.
    pub altmin_tol: f64,
    pub altmin_max_iter: usize,
    pub active_set_max_sweeps: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            cg_tol: 1e-10,
            cg_max_iter: 20_000,
            altmin_tol: 1e-6,
            altmin_max_iter: 500,
            active_set_max_sweeps: 200,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), SolveError> {
        let ok = self.cg_tol > 0.0
            && self.altmin_tol > 0.0
            && self.cg_max_iter >= 1
            && self.altmin_max_iter >= 1
            && self.active_set_max_sweeps >= 1;
        if ok {
            Ok(())
        } else {
            Err(SolveError::InvalidSettings(
                "tolerances must be positive and iteration caps at least 1".into(),
            ))
        }
    }
}

/// Output of [`alternate_minimize`].
#[derive(Debug, Clone)]
pub struct StaggeredResult {
    pub u: ScalarField,
    pub v: PhaseField,
    pub ledger: EnergyLedger,
    /// Completed cycles (one displacement and one damage solve each).
    pub iterations: usize,
    pub converged: bool,
    /// Merged objective after every half-step, starting with the first
    /// displacement solve.
    pub objective_history: Vec<f64>,
    /// `max |v_k - v_{k-1}|` of the last cycle.
    pub fixed_point_residual: f64,
}

/// Matrix pattern and element kernel of one grid, reused across solves.
pub(crate) struct Assembler {
    grid: Arc<Grid>,
    pattern: Arc<Pattern>,
    kernel: Kernel,
}

impl Assembler {
    pub(crate) fn new(grid: &Arc<Grid>) -> Self {
        Self {
            grid: grid.clone(),
            pattern: Arc::new(Pattern::new(grid)),
            kernel: Kernel::new(grid.hx(), grid.hy()),
        }
    }

    /// Stiffness `mu (eta + v^2)` (or `mu` in sharp mode) at the Gauss points of a cell.
    fn stiffness_coeff(&self, v: Option<&[f64]>, nodes: &[usize; 4], params: &MaterialParams) -> [f64; 4] {
        let mu = params.modulus(Split::Full);
        match v {
            Some(v) => {
                let vv = gather(v, nodes);
                let mut c = [0.0; 4];
                for (q, cq) in c.iter_mut().enumerate() {
                    let vq = self.kernel.value(q, &vv);
                    *cq = mu * (params.eta + vq * vq);
                }
                c
            }
            None => [mu; 4],
        }
    }

    fn displacement_matrix(&self, v: Option<&[f64]>, params: &MaterialParams) -> (Csr, Vec<bool>) {
        let mut a = Csr::zeros(self.pattern.clone());
        let mut active = vec![false; self.grid.num_cells()];
        for (c, nodes) in self.grid.cells().iter().enumerate() {
            let coeff = self.stiffness_coeff(v, nodes, params);
            if coeff.iter().any(|&x| x > 0.0) {
                active[c] = true;
                a.add_cell(c, &self.kernel.stiffness(&coeff));
            }
        }
        (a, active)
    }

    /// Hessian `A` and linear term `b` of the damage subproblem
    /// `1/2 v^T A v - b^T v`.
    fn phase_system(&self, u: &[f64], params: &MaterialParams, split: Split) -> (Csr, Vec<f64>) {
        let mu = params.modulus(split);
        let k = &self.kernel;
        let bulk = params.g_c / (2.0 * params.delta);
        let grad = 2.0 * params.g_c * params.delta;
        let lap = k.stiffness(&[grad; 4]);
        let mass = k.mass(&[bulk; 4]);
        let mut a = Csr::zeros(self.pattern.clone());
        let mut b = vec![0.0; self.grid.num_nodes()];
        for (c, nodes) in self.grid.cells().iter().enumerate() {
            let uv = gather(u, nodes);
            let mut coeff = [0.0; 4];
            for (q, cq) in coeff.iter_mut().enumerate() {
                let g = k.grad(q, &uv);
                *cq = mu * (g[0] * g[0] + g[1] * g[1]);
            }
            let drive = k.mass(&coeff);
            let mut m = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] = drive[i][j] + mass[i][j] + lap[i][j];
                    b[nodes[i]] += mass[i][j];
                }
            }
            a.add_cell(c, &m);
        }
        (a, b)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Marks the unknowns of the displacement solve. Components of the
/// positive-stiffness graph without Dirichlet data are pinned at one node
/// (unloaded or self-equilibrated) or rejected (net load).
fn free_nodes(
    grid: &Grid,
    active: &[bool],
    loads: &LoadSpec,
    rhs: &[f64],
) -> Result<Vec<bool>, SolveError> {
    let n = grid.num_nodes();
    let mut uf = UnionFind::new(n);
    let mut touched = vec![false; n];
    for (c, nodes) in grid.cells().iter().enumerate() {
        if active[c] {
            for &p in nodes {
                touched[p] = true;
                uf.union(nodes[0], p);
            }
        }
    }
    let mut has_dirichlet = vec![false; n];
    let mut net = vec![0.0; n];
    let mut abs = vec![0.0; n];
    let mut size = vec![0usize; n];
    for p in 0..n {
        let r = uf.find(p);
        if loads.dirichlet[p].is_some() {
            has_dirichlet[r] = true;
        }
        net[r] += rhs[p];
        abs[r] += rhs[p].abs();
        size[r] += 1;
    }
    let mut free: Vec<bool> = (0..n).map(|p| touched[p] && loads.dirichlet[p].is_none()).collect();
    for p in 0..n {
        if !free[p] {
            continue;
        }
        let r = uf.find(p);
        if has_dirichlet[r] {
            continue;
        }
        if net[r].abs() > 1e-12 * abs[r].max(f64::MIN_POSITIVE) && abs[r] > 0.0 {
            return Err(SolveError::FloatingDomain { nodes: size[r] });
        }
        if r == p {
            free[p] = false;
        }
    }
    Ok(free)
}

fn check_phase_grid(grid: &Arc<Grid>, v: Option<&PhaseField>) -> Result<(), SolveError> {
    if let Some(v) = v {
        same_grid(grid, v.grid())?;
    }
    Ok(())
}

pub(crate) fn displacement_with(
    asm: &Assembler,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    loads: &LoadSpec,
    settings: &SolverSettings,
    init: Option<&[f64]>,
) -> Result<ScalarField, SolveError> {
    let grid = &asm.grid;
    let (a, active) = asm.displacement_matrix(v.map(|v| v.values()), params);
    let b = loads.load_vector(grid);
    let free = free_nodes(grid, &active, loads, &b)?;
    let mut x: Vec<f64> = match init {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; grid.num_nodes()],
    };
    for (p, d) in loads.dirichlet.iter().enumerate() {
        if let Some(d) = d {
            x[p] = *d;
        } else if !free[p] && init.is_none() {
            x[p] = 0.0;
        }
    }
    if free.iter().any(|&f| f) {
        let stats = pcg(&a, &b, &mut x, &free, settings.cg_tol, settings.cg_max_iter);
        if !stats.converged {
            return Err(SolveError::NoConvergence {
                what: "displacement CG",
                iterations: stats.iterations,
                residual: stats.relative_residual,
            });
        }
    }
    Ok(ScalarField::new(grid.clone(), x)?)
}

/// Minimizes `1/2 int mu (eta + v^2) |grad u|^2 - int f u - int g u` subject
/// to the Dirichlet data, with `v = None` selecting the sharp-crack energy.
pub fn solve_displacement(
    grid: &Arc<Grid>,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    loads: &LoadSpec,
    settings: &SolverSettings,
) -> Result<ScalarField, SolveError> {
    solve_displacement_from(grid, v, params, loads, settings, None)
}

/// [`solve_displacement`] with an initial guess for the free nodes.
pub fn solve_displacement_from(
    grid: &Arc<Grid>,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    loads: &LoadSpec,
    settings: &SolverSettings,
    init: Option<&ScalarField>,
) -> Result<ScalarField, SolveError> {
    params.validate()?;
    settings.validate()?;
    loads.validate(grid)?;
    check_phase_grid(grid, v)?;
    if let Some(u0) = init {
        same_grid(grid, u0.grid())?;
    }
    let asm = Assembler::new(grid);
    displacement_with(&asm, v, params, loads, settings, init.map(|u| u.values()))
}

/// Residual `K u - F` of the displacement equations; at Dirichlet nodes this
/// is the reaction.
pub fn reactions(
    u: &ScalarField,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    loads: &LoadSpec,
) -> Result<Vec<f64>, SolveError> {
    check_phase_grid(u.grid(), v)?;
    loads.validate(u.grid())?;
    let asm = Assembler::new(u.grid());
    Ok(reactions_with(&asm, u, v, params, loads))
}

pub(crate) fn reactions_with(
    asm: &Assembler,
    u: &ScalarField,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    loads: &LoadSpec,
) -> Vec<f64> {
    let (a, _) = asm.displacement_matrix(v.map(|v| v.values()), params);
    let mut r = vec![0.0; u.values().len()];
    a.matvec(u.values(), &mut r);
    let f = loads.load_vector(&asm.grid);
    for (ri, fi) in r.iter_mut().zip(&f) {
        *ri -= fi;
    }
    r
}

fn clamp_box(x: f64, upper: f64) -> f64 {
    x.max(0.0).min(upper)
}

fn quad_value(a: &Csr, b: &[f64], v: &[f64], scratch: &mut [f64]) -> f64 {
    a.matvec(v, scratch);
    0.5 * dot(v, scratch) - dot(b, v)
}

pub(crate) fn phase_with(
    asm: &Assembler,
    u: &ScalarField,
    params: &MaterialParams,
    v_upper: &PhaseField,
    split: Split,
    settings: &SolverSettings,
    init: Option<&[f64]>,
) -> Result<PhaseField, SolveError> {
    let n = asm.grid.num_nodes();
    let up = v_upper.values();
    let (a, b) = asm.phase_system(u.values(), params, split);
    let diag = a.diag();
    let mut v: Vec<f64> = match init {
        Some(v0) => v0.iter().zip(up).map(|(&x, &u)| clamp_box(x, u)).collect(),
        None => up.to_vec(),
    };
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut f = quad_value(&a, &b, &v, &mut scratch);
    let mut kkt = f64::INFINITY;
    for _ in 0..settings.active_set_max_sweeps {
        a.matvec(&v, &mut g);
        for i in 0..n {
            g[i] -= b[i];
        }
        kkt = (0..n)
            .map(|i| (v[i] - clamp_box(v[i] - g[i] / diag[i], up[i])).abs())
            .fold(0.0, f64::max);
        if kkt <= settings.altmin_tol {
            return Ok(PhaseField::new(asm.grid.clone(), v)?);
        }
        let free: Vec<bool> = (0..n)
            .map(|i| {
                up[i] > 0.0 && !(v[i] <= 0.0 && g[i] > 0.0) && !(v[i] >= up[i] && g[i] < 0.0)
            })
            .collect();
        let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
        let mut d = vec![0.0; n];
        pcg(&a, &rhs, &mut d, &free, settings.cg_tol, settings.cg_max_iter);
        let mut accepted = false;
        for dir in [&d, &rhs.iter().zip(&diag).map(|(r, q)| r / q).collect::<Vec<_>>()] {
            let mut alpha = 1.0;
            for _ in 0..40 {
                for i in 0..n {
                    trial[i] = clamp_box(v[i] + alpha * dir[i], up[i]);
                }
                let step: f64 = (0..n).map(|i| g[i] * (trial[i] - v[i])).sum();
                let ft = quad_value(&a, &b, &trial, &mut scratch);
                if step < 0.0 && ft <= f + 1e-4 * step {
                    std::mem::swap(&mut v, &mut trial);
                    f = ft;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            // no descent left at working precision
            return Ok(PhaseField::new(asm.grid.clone(), v)?);
        }
    }
    Err(SolveError::NoConvergence {
        what: "damage active-set",
        iterations: settings.active_set_max_sweeps,
        residual: kkt,
    })
}

/// Minimizes `1/2 int mu v^2 |grad u|^2 + G_c (1/(4 delta) int (1-v)^2 + delta int |grad v|^2)`
/// over `0 <= v <= v_upper`. With `Split::EqOnly` the driving modulus is `mu_eq`.
pub fn solve_phase(
    u: &ScalarField,
    params: &MaterialParams,
    v_upper: &PhaseField,
    split: Split,
    settings: &SolverSettings,
) -> Result<PhaseField, SolveError> {
    params.validate()?;
    settings.validate()?;
    same_grid(u.grid(), v_upper.grid())?;
    let asm = Assembler::new(u.grid());
    phase_with(&asm, u, params, v_upper, split, settings, None)
}

/// Starting point of a staggered solve.
#[derive(Debug, Clone)]
pub struct StaggeredStart<'a> {
    pub v: &'a PhaseField,
    /// Irreversibility bound; defaults to `v`.
    pub v_upper: Option<&'a PhaseField>,
    /// Initial displacement guess.
    pub u: Option<&'a ScalarField>,
}

/// Alternates displacement and damage solves with `v <= v_init` until the
/// stopping test holds or the cycle cap is reached.
pub fn alternate_minimize(
    grid: &Arc<Grid>,
    params: &MaterialParams,
    loads: &LoadSpec,
    v_init: &PhaseField,
    settings: &SolverSettings,
    split: Split,
) -> Result<StaggeredResult, SolveError> {
    let start = StaggeredStart {
        v: v_init,
        v_upper: None,
        u: None,
    };
    alternate_minimize_from(grid, params, loads, start, settings, split)
}

pub fn alternate_minimize_from(
    grid: &Arc<Grid>,
    params: &MaterialParams,
    loads: &LoadSpec,
    start: StaggeredStart<'_>,
    settings: &SolverSettings,
    split: Split,
) -> Result<StaggeredResult, SolveError> {
    params.validate()?;
    settings.validate()?;
    loads.validate(grid)?;
    same_grid(grid, start.v.grid())?;
    let v_upper = start.v_upper.unwrap_or(start.v);
    same_grid(grid, v_upper.grid())?;
    let asm = Assembler::new(grid);
    let objective = |u: &ScalarField, v: &PhaseField| -> Result<f64, SolveError> {
        Ok(total_phase_energy(u, v, params, Some(loads), None)?.merged_objective)
    };

    let mut v = PhaseField::new(
        grid.clone(),
        start
            .v
            .values()
            .iter()
            .zip(v_upper.values())
            .map(|(&x, &u)| clamp_box(x, u))
            .collect(),
    )?;
    let mut u = displacement_with(&asm, Some(&v), params, loads, settings, start.u.map(|u| u.values()))?;
    let mut history = vec![objective(&u, &v)?];
    let mut converged = false;
    let mut iterations = 0;
    let mut dv = f64::INFINITY;
    while iterations < settings.altmin_max_iter {
        let v_new = phase_with(&asm, &u, params, v_upper, split, settings, Some(v.values()))?;
        dv = v_new
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = v_new;
        history.push(objective(&u, &v)?);
        u = displacement_with(&asm, Some(&v), params, loads, settings, Some(u.values()))?;
        let prev = history[history.len() - 2];
        let obj = objective(&u, &v)?;
        history.push(obj);
        iterations += 1;
        let stalled = match split {
            Split::Full => prev - obj <= settings.altmin_tol * obj.abs().max(f64::MIN_POSITIVE),
            Split::EqOnly => true,
        };
        if stalled && dv <= settings.altmin_tol {
            converged = true;
            break;
        }
    }
    let ledger = total_phase_energy(&u, &v, params, Some(loads), None)?;
    Ok(StaggeredResult {
        u,
        v,
        ledger,
        iterations,
        converged,
        objective_history: history,
        fixed_point_residual: dv,
    })
}

/// Homogeneous damage level `1 / (1 + 4 delta e / G_c)` for `mu |grad u|^2 = 2 e`.
pub fn homogeneous_damage(params: &MaterialParams, e: f64) -> f64 {
    1.0 / (1.0 + 4.0 * params.delta * e / params.g_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::elastic_energy;
    use crate::grid::{Rect, Side};
    use std::f64::consts::PI;

    fn unit(n: usize) -> Arc<Grid> {
        Arc::new(Grid::build(Rect::unit(), [n, n], None).unwrap())
    }

    fn tight() -> SolverSettings {
        SolverSettings {
            cg_tol: 1e-12,
            altmin_tol: 1e-10,
            ..SolverSettings::default()
        }
    }

    fn all_sides(grid: &Grid, f: impl Fn(crate::grid::Point) -> f64 + Copy) -> LoadSpec {
        let mut l = LoadSpec::none(grid);
        for s in Side::ALL {
            l = l.with_dirichlet_side(grid, s, |p, _| f(p));
        }
        l
    }

    #[test]
    fn linear_data_extends_harmonically() {
        let g = unit(8);
        let loads = all_sides(&g, |p| p[0]);
        let v = PhaseField::intact(g.clone());
        let u = solve_displacement(&g, Some(&v), &MaterialParams::default(), &loads, &tight()).unwrap();
        for p in 0..g.num_nodes() {
            assert!((u.values()[p] - g.node_position(p)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn manufactured_solution_second_order() {
        let err = |n: usize| {
            let g = unit(n);
            let s = |p: crate::grid::Point| (PI * p[0]).sin() * (PI * p[1]).sin();
            let loads = all_sides(&g, |_| 0.0).with_body(&g, |p| 2.0 * PI * PI * s(p));
            let params = MaterialParams { eta: 0.0, ..MaterialParams::default() };
            let u = solve_displacement(&g, None, &params, &loads, &tight()).unwrap();
            u.l2_error_fn(s)
        };
        let ratio = err(16) / err(32);
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn floating_loaded_domain_is_rejected() {
        let g = unit(4);
        let loads = LoadSpec::none(&g).with_body(&g, |_| 1.0);
        let r = solve_displacement(&g, None, &MaterialParams::default(), &loads, &tight());
        assert!(matches!(r, Err(SolveError::FloatingDomain { .. })));
        // a self-equilibrated load is solvable up to a constant
        let loads = LoadSpec::none(&g).with_body(&g, |p| p[0] - 0.5);
        assert!(solve_displacement(&g, None, &MaterialParams::default(), &loads, &tight()).is_ok());
    }

    #[test]
    fn phase_without_drive_stays_intact() {
        let g = unit(8);
        let u = ScalarField::zeros(g.clone());
        let v = solve_phase(&u, &MaterialParams::default(), &PhaseField::intact(g), Split::Full, &tight()).unwrap();
        assert!(v.values().iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn phase_homogeneous_closed_form() {
        let g = unit(8);
        let params = MaterialParams { g_c: 1.0, delta: 0.1, ..MaterialParams::default() };
        // |grad u|^2 = 2e with u = s x
        let s: f64 = 3.0;
        let u = ScalarField::from_fn(g.clone(), |p| s * p[0]);
        let v = solve_phase(&u, &params, &PhaseField::intact(g), Split::Full, &tight()).unwrap();
        let expect = homogeneous_damage(&params, 0.5 * s * s);
        for x in v.values() {
            assert!((x - expect).abs() < 1e-9, "{x} vs {expect}");
        }
    }

    #[test]
    fn phase_zero_upper_bound() {
        let g = unit(6);
        let u = ScalarField::from_fn(g.clone(), |p| p[0] * p[1]);
        let v = solve_phase(&u, &MaterialParams::default(), &PhaseField::constant(g, 0.0), Split::Full, &tight()).unwrap();
        assert!(v.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn phase_respects_upper_bound_and_kkt() {
        let g = unit(16);
        let params = MaterialParams { delta: 0.05, ..MaterialParams::default() };
        let u = ScalarField::from_fn(g.clone(), |p| 20.0 * (p[0] - 0.5).powi(2));
        let up = PhaseField::from_fn(g.clone(), |p| if p[1] < 0.5 { 0.6 } else { 1.0 });
        let v = solve_phase(&u, &params, &up, Split::Full, &tight()).unwrap();
        for (x, b) in v.values().iter().zip(up.values()) {
            assert!(*x >= 0.0 && x <= b);
        }
    }

    #[test]
    fn zero_problem_converges_immediately() {
        let g = unit(8);
        let loads = all_sides(&g, |_| 0.0);
        let r = alternate_minimize(&g, &MaterialParams::default(), &loads, &PhaseField::intact(g.clone()), &tight(), Split::Full).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.u.values().iter().all(|&x| x == 0.0));
        assert!(r.v.values().iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn staggered_objective_is_monotone() {
        let g = unit(16);
        let params = MaterialParams { delta: 0.08, ..MaterialParams::default() };
        let loads = LoadSpec::none(&g)
            .with_dirichlet_side(&g, Side::Bottom, |_, _| -0.4)
            .with_dirichlet_side(&g, Side::Top, |_, _| 0.4);
        let r = alternate_minimize(&g, &params, &loads, &PhaseField::intact(g.clone()), &SolverSettings::default(), Split::Full).unwrap();
        for w in r.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{} -> {}", w[0], w[1]);
        }
        let recomputed = total_phase_energy(&r.u, &r.v, &params, Some(&loads), None).unwrap();
        assert!((recomputed.merged_objective - r.objective_history.last().unwrap()).abs() < 1e-12);
        let e = elastic_energy(&r.u, Some(&r.v), &params, None, Split::Full).unwrap();
        assert!(e > 0.0);
    }

    #[test]
    fn deterministic() {
        let g = unit(12);
        let loads = LoadSpec::none(&g)
            .with_dirichlet_side(&g, Side::Left, |_, _| 0.0)
            .with_dirichlet_side(&g, Side::Right, |_, _| 1.5);
        let run = || alternate_minimize(&g, &MaterialParams::default(), &loads, &PhaseField::intact(g.clone()), &SolverSettings::default(), Split::Full).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.u.values(), b.u.values());
        assert_eq!(a.v.values(), b.v.values());
    }
}

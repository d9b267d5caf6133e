//! Quasi-static evolution under a load program, with irreversibility, work
//! bookkeeping and per-step stability audits.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{total_phase_energy, EnergyError, EnergyLedger, LoadSpec, MaterialParams, Split};
use crate::fields::{same_grid, FieldError, PhaseField, ScalarField};
use crate::grid::{Grid, Point};
use crate::io::{self, IoError};
use crate::linalg::dot;
use crate::solve::{
    alternate_minimize_from, displacement_with, reactions_with, Assembler, SolveError,
    SolverSettings, StaggeredStart,
};
use crate::stability::{
    blowup_diagnose, check_ball_bound, competitor_test, energy_release_rate, extract_sif,
    griffith_verdict, slit_forward_angle, CompetitorFamily, StabilityError, StabilityReport,
    DEFAULT_TOL_BAND,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("load program has no steps")]
    ProgramEmpty,
    #[error("invalid load program: {0}")]
    InvalidProgram(String),
    #[error("no crack tip found")]
    NoTipFound,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Loads at a list of increasing times. Every step uses the same Dirichlet
/// node set and the same loaded edges.
#[derive(Debug, Clone)]
pub struct LoadProgram {
    pub times: Vec<f64>,
    pub loads: Vec<LoadSpec>,
}

impl LoadProgram {
    pub fn new(times: Vec<f64>, loads: Vec<LoadSpec>) -> Result<Self, EvolutionError> {
        let p = Self { times, loads };
        if p.times.is_empty() {
            return Err(EvolutionError::ProgramEmpty);
        }
        if p.times.len() != p.loads.len() {
            return Err(EvolutionError::InvalidProgram(format!(
                "{} times but {} load sets",
                p.times.len(),
                p.loads.len()
            )));
        }
        if p.times.iter().any(|t| !t.is_finite()) || p.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EvolutionError::InvalidProgram("times must be finite and strictly increasing".into()));
        }
        let first = &p.loads[0];
        let pattern = |l: &LoadSpec| -> (Vec<bool>, Vec<[usize; 2]>, bool) {
            (
                l.dirichlet.iter().map(Option::is_some).collect(),
                l.traction.iter().map(|t| t.nodes).collect(),
                l.body.is_some(),
            )
        };
        let reference = pattern(first);
        if p.loads.iter().any(|l| pattern(l) != reference) {
            return Err(EvolutionError::InvalidProgram("boundary partition changes over time".into()));
        }
        Ok(p)
    }

    pub fn from_fn(times: Vec<f64>, loads: impl Fn(f64) -> LoadSpec) -> Result<Self, EvolutionError> {
        let l = times.iter().map(|&t| loads(t)).collect();
        Self::new(times, l)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Settings of the per-tip stability audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    /// Tips to audit; detected automatically when absent.
    pub tips: Option<Vec<Point>>,
    /// Damage level below which a node counts as cracked.
    pub ridge_threshold: f64,
    /// Decreasing dyadic blow-up scales; those whose window is too coarse are skipped.
    pub eps_list: Vec<f64>,
    /// Blow-up ball radius.
    pub r: f64,
    /// SIF annulus `[r_in, r_out]`; defaults to `[4 h, r]` clipped to the domain.
    pub annulus: Option<[f64; 2]>,
    pub tol_band: f64,
    /// Ball-bound radii as fractions of `r`.
    pub ball_fractions: Vec<f64>,
    pub competitors: Option<CompetitorFamily>,
}

impl AuditSettings {
    /// The SIF annulus used at `tip`: the configured one (or `[4 h, r]`) with
    /// the inner radius raised to `3 h` and the outer one clipped to half the
    /// distance to the boundary.
    pub fn annulus_at(&self, grid: &Grid, tip: Point) -> [f64; 2] {
        let h = grid.hx().max(grid.hy());
        let [r_in, r_out] = self.annulus.unwrap_or([4.0 * h, self.r]);
        [r_in.max(3.0 * h), r_out.min(0.5 * boundary_distance(grid, tip))]
    }
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            tips: None,
            ridge_threshold: 0.1,
            eps_list: vec![1.0, 0.5, 0.25],
            r: 0.25,
            annulus: None,
            tol_band: DEFAULT_TOL_BAND,
            ball_fractions: vec![0.25, 0.5, 0.75, 1.0],
            competitors: None,
        }
    }
}

/// A candidate tip and the direction in which the crack would grow there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tip {
    pub at: Point,
    pub forward: f64,
}

fn boundary_distance(grid: &Grid, p: Point) -> f64 {
    let r = grid.rect();
    (p[0] - r.x0).min(r.x1 - p[0]).min(p[1] - r.y0).min(r.y1 - p[1])
}

/// Free slit ends away from the boundary, with the designated tip first.
fn slit_tips(grid: &Grid) -> Vec<Tip> {
    let Some(slit) = grid.slit() else {
        return Vec::new();
    };
    let h = grid.hx().max(grid.hy());
    let mut ends: Vec<Point> = Vec::new();
    if let Some(t) = slit.tip {
        ends.push(t);
    } else {
        let mut pts: Vec<Point> = slit.segments.iter().flat_map(|s| [s.a, s.b]).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        let same = |a: Point, b: Point| (a[0] - b[0]).abs() < 1e-9 * h && (a[1] - b[1]).abs() < 1e-9 * h;
        let mut k = 0;
        while k < pts.len() {
            let mut m = k + 1;
            while m < pts.len() && same(pts[k], pts[m]) {
                m += 1;
            }
            if m - k == 1 {
                ends.push(pts[k]);
            }
            k = m;
        }
    }
    ends.into_iter()
        .filter(|&p| boundary_distance(grid, p) > 0.5 * h)
        .filter_map(|p| slit_forward_angle(grid, p).map(|forward| Tip { at: p, forward }))
        .collect()
}

/// Ends of the cracked region `{v < threshold}`: each 8-connected lattice
/// component is reduced to its principal axis, and both extreme nodes along
/// that axis that lie away from the boundary are tips.
fn ridge_tips(v: &PhaseField, threshold: f64) -> Vec<Tip> {
    let g = v.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let h = g.hx().max(g.hy());
    let mut cracked = vec![false; g.num_lattice_nodes()];
    for p in 0..g.num_nodes() {
        if v.values()[p] < threshold {
            let (i, j) = g.lattice_ij(p);
            cracked[g.node_at(i, j)] = true;
        }
    }
    let mut seen = vec![false; cracked.len()];
    let mut tips = Vec::new();
    for start in 0..cracked.len() {
        if !cracked[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(a) = stack.pop() {
            comp.push(a);
            let (i, j) = ((a % (nx + 1)) as isize, (a / (nx + 1)) as isize);
            for di in -1..=1 {
                for dj in -1..=1 {
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni > nx as isize || nj > ny as isize {
                        continue;
                    }
                    let b = nj as usize * (nx + 1) + ni as usize;
                    if cracked[b] && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
        }
        if comp.len() < 2 {
            continue;
        }
        let pos: Vec<Point> = comp.iter().map(|&a| g.node_position(a)).collect();
        let n = pos.len() as f64;
        let c = [
            pos.iter().map(|p| p[0]).sum::<f64>() / n,
            pos.iter().map(|p| p[1]).sum::<f64>() / n,
        ];
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &pos {
            let d = [p[0] - c[0], p[1] - c[1]];
            sxx += d[0] * d[0];
            sxy += d[0] * d[1];
            syy += d[1] * d[1];
        }
        let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let e = [angle.cos(), angle.sin()];
        let proj = |p: &Point| (p[0] - c[0]) * e[0] + (p[1] - c[1]) * e[1];
        let off = |p: &Point| ((p[0] - c[0]) * e[1] - (p[1] - c[1]) * e[0]).abs();
        let pick = |sign: f64| {
            pos.iter()
                .copied()
                .max_by(|a, b| {
                    let ka = (sign * proj(a), -off(a));
                    let kb = (sign * proj(b), -off(b));
                    ka.partial_cmp(&kb).expect("finite coordinates")
                })
                .expect("nonempty component")
        };
        for (sign, dir) in [(1.0, angle), (-1.0, angle + std::f64::consts::PI)] {
            let p = pick(sign);
            if boundary_distance(g, p) > 2.0 * h {
                let forward = dir.sin().atan2(dir.cos());
                tips.push(Tip { at: p, forward });
            }
        }
    }
    tips
}

/// Candidate tips of a state: ends of the damaged region when `v` is given,
/// plus slit tips that are not already inside it.
pub fn detect_tips(grid: &Grid, v: Option<&PhaseField>, threshold: f64) -> Vec<Tip> {
    let mut tips = Vec::new();
    if let Some(v) = v {
        tips.extend(ridge_tips(v, threshold));
    }
    for t in slit_tips(grid) {
        let inside = v.is_some_and(|v| {
            grid.snap_to_node(t.at).is_some_and(|(i, j)| {
                grid.copies_at(i, j).iter().any(|&p| v.values()[p] < threshold)
            })
        });
        if !inside {
            tips.push(t);
        }
    }
    tips
}

/// Runs the local stability pipeline at every tip of `(u, v)`.
pub fn stability_audit(
    u: &ScalarField,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    audit: &AuditSettings,
    settings: &SolverSettings,
) -> Result<Vec<StabilityReport>, EvolutionError> {
    let grid = u.grid();
    if let Some(v) = v {
        same_grid(grid, v.grid())?;
    }
    let tips = match &audit.tips {
        Some(list) => list
            .iter()
            .map(|&at| Tip {
                at,
                forward: slit_forward_angle(grid, at).unwrap_or(0.0),
            })
            .collect(),
        None => detect_tips(grid, v, audit.ridge_threshold),
    };
    if tips.is_empty() {
        return Err(EvolutionError::NoTipFound);
    }
    tips.iter()
        .map(|t| audit_tip(u, v, params, audit, settings, *t))
        .collect()
}

fn audit_tip(
    u: &ScalarField,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    audit: &AuditSettings,
    settings: &SolverSettings,
    tip: Tip,
) -> Result<StabilityReport, EvolutionError> {
    let grid = u.grid();
    let h = grid.hx().max(grid.hy());
    let [r_in, r_out] = audit.annulus_at(grid, tip.at);
    let fit = extract_sif(u, tip.at, r_in, r_out, Some(tip.forward))?;
    let eps: Vec<f64> = audit
        .eps_list
        .iter()
        .copied()
        .filter(|e| e * audit.r >= crate::fields::MIN_WINDOW_CELLS * h * (1.0 - 1e-12))
        .collect();
    let mut report = StabilityReport {
        tip: tip.at,
        forward: tip.forward,
        k_fit: fit.k,
        fit_residual: fit.residual,
        err: energy_release_rate(fit.k),
        g_c: params.g_c,
        verdict: griffith_verdict(fit.k, params.g_c, audit.tol_band),
        blowup_eps: eps.clone(),
        blowup_cauchy: Vec::new(),
        blowup_rate: None,
        ball_bound_ok: true,
        ball_slope: None,
        competitor_margin: None,
        competitor_verdict: None,
        competitors: Vec::new(),
    };
    if eps.is_empty() {
        return Ok(report);
    }
    let diag = blowup_diagnose(u, v, tip.at, &eps, audit.r)?;
    report.blowup_cauchy = diag.cauchy.clone();
    report.blowup_rate = diag.rate;
    let radii: Vec<f64> = audit.ball_fractions.iter().map(|f| f * audit.r).collect();
    let fin = &diag.finest;
    let bound = check_ball_bound(&fin.u, fin.v.as_ref(), params.eta, params.g_c, &radii)?;
    report.ball_bound_ok = bound.all_ok;
    report.ball_slope = bound.slope;
    if let Some(family) = &audit.competitors {
        let out = competitor_test(&fin.u, fin.v.as_ref(), params, family, audit.r, Some(tip.forward), settings)?;
        report.competitor_margin = Some(out.margin);
        report.competitor_verdict = Some(out.verdict);
        report.competitors = out.rows;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    EnergyIncrease,
    NotConverged,
    IrreversibilityViolation,
    SolverFailure,
    AuditFailure,
}

/// Something noteworthy that happened during a run; the run continues where possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub kind: EventKind,
    pub detail: String,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub time: f64,
    pub u: ScalarField,
    pub v: PhaseField,
    pub ledger: EnergyLedger,
    pub audits: Vec<StabilityReport>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Arc<Grid>,
    pub steps: Vec<TrajectoryStep>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn totals(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.ledger.total).collect()
    }

    /// Whether `v` never increases at any node between consecutive steps.
    pub fn damage_monotone(&self) -> bool {
        self.steps.windows(2).all(|w| {
            w[1].v
                .values()
                .iter()
                .zip(w[0].v.values())
                .all(|(b, a)| b <= a)
        })
    }

    /// Largest step-to-step increase of the total energy relative to the
    /// energy scale `elastic + surface + |loads|` of the two steps.
    pub fn max_relative_increase(&self) -> f64 {
        self.steps
            .windows(2)
            .map(|w| (w[1].ledger.total - w[0].ledger.total) / energy_scale(&w[0].ledger, &w[1].ledger))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `energies.csv`, `events.json` and `step_%04d/{u.csv, v.csv, audit.json}`.
    pub fn write(&self, dir: &Path, vtk: bool) -> Result<(), IoError> {
        let rows: Vec<(usize, f64, EnergyLedger)> = self
            .steps
            .iter()
            .enumerate()
            .map(|(k, s)| (k, s.time, s.ledger))
            .collect();
        io::write_atomic(&dir.join("energies.csv"), io::ledger_csv(&rows)?.as_bytes())?;
        io::write_json(&dir.join("events.json"), &self.events)?;
        for (k, s) in self.steps.iter().enumerate() {
            let d = dir.join(format!("step_{k:04}"));
            io::write_field_csv(&d.join("u.csv"), s.u.values(), &self.grid)?;
            io::write_field_csv(&d.join("v.csv"), s.v.values(), &self.grid)?;
            io::write_json(&d.join("audit.json"), &s.audits)?;
            if vtk {
                io::write_vtk(&d.join("fields.vtk"), &self.grid, &[("u", s.u.values()), ("v", s.v.values())])?;
            }
        }
        Ok(())
    }
}

fn energy_scale(a: &EnergyLedger, b: &EnergyLedger) -> f64 {
    let s = |l: &EnergyLedger| {
        l.elastic + l.surface + l.body_load_potential.abs() + l.boundary_load_potential.abs()
    };
    s(a).max(s(b)).max(f64::MIN_POSITIVE)
}

/// Options of [`quasistatic_run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Initial damage; intact when absent.
    pub v_init: Option<PhaseField>,
    /// Keep `v` at its initial value (purely elastic run).
    pub freeze_damage: bool,
    pub audit: Option<AuditSettings>,
    /// Relative tolerance of the energy-decrease check.
    pub energy_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            v_init: None,
            freeze_damage: false,
            audit: None,
            energy_tol: 1e-8,
        }
    }
}

/// Steps through the program; each step minimizes with the previous damage
/// as upper bound. Work increments use the trapezoid rule:
/// `dW = -(F_k - F_{k-1}) . (u_k + u_{k-1}) / 2 + (R_k + R_{k-1}) / 2 . (g_k - g_{k-1})`
/// with `F` the consistent load vector and `R` the Dirichlet reactions.
pub fn quasistatic_run(
    grid: &Arc<Grid>,
    params: &MaterialParams,
    program: &LoadProgram,
    settings: &SolverSettings,
    split: Split,
    options: &RunOptions,
) -> Result<Trajectory, EvolutionError> {
    if program.is_empty() {
        return Err(EvolutionError::ProgramEmpty);
    }
    params.validate()?;
    settings.validate()?;
    for l in &program.loads {
        l.validate(grid)?;
    }
    let asm = Assembler::new(grid);
    let mut v_prev = match &options.v_init {
        Some(v) => {
            same_grid(grid, v.grid())?;
            v.clone()
        }
        None => PhaseField::intact(grid.clone()),
    };
    let mut traj = Trajectory {
        grid: grid.clone(),
        steps: Vec::with_capacity(program.len()),
        events: Vec::new(),
    };
    let mut prev: Option<(ScalarField, Vec<f64>, Vec<f64>, EnergyLedger)> = None;
    let mut work = 0.0;
    for (k, (&time, loads)) in program.times.iter().zip(&program.loads).enumerate() {
        let warm = prev.as_ref().map(|p| &p.0);
        let solved = if options.freeze_damage {
            displacement_with(&asm, Some(&v_prev), params, loads, settings, warm.map(|u| u.values())).map(|u| {
                (u, v_prev.clone(), 0, true, Vec::new())
            })
        } else {
            let start = StaggeredStart {
                v: &v_prev,
                v_upper: Some(&v_prev),
                u: warm,
            };
            alternate_minimize_from(grid, params, loads, start, settings, split)
                .map(|r| (r.u, r.v, r.iterations, r.converged, r.objective_history))
        };
        let (u, v, iterations, converged, history) = match solved {
            Ok(s) => s,
            Err(e) => {
                traj.events.push(Event {
                    step: k,
                    kind: EventKind::SolverFailure,
                    detail: e.to_string(),
                    value: f64::NAN,
                });
                break;
            }
        };
        if !converged {
            traj.events.push(Event {
                step: k,
                kind: EventKind::NotConverged,
                detail: format!("staggered solve stopped after {iterations} cycles"),
                value: iterations as f64,
            });
        }
        let excess = v
            .values()
            .iter()
            .zip(v_prev.values())
            .map(|(a, b)| a - b)
            .fold(0.0, f64::max);
        if excess > 0.0 {
            traj.events.push(Event {
                step: k,
                kind: EventKind::IrreversibilityViolation,
                detail: "damage healed".into(),
                value: excess,
            });
        }
        let reactions = reactions_with(&asm, &u, Some(&v), params, loads);
        let force = loads.load_vector(grid);
        if let Some((u0, r0, f0, _)) = &prev {
            let prev_loads = &program.loads[k - 1];
            let mean_u: Vec<f64> = u.values().iter().zip(u0.values()).map(|(a, b)| 0.5 * (a + b)).collect();
            let df: Vec<f64> = force.iter().zip(f0).map(|(a, b)| a - b).collect();
            let mut dw = -dot(&df, &mean_u);
            for (p, d) in loads.dirichlet.iter().enumerate() {
                if let (Some(g1), Some(g0)) = (d, prev_loads.dirichlet[p]) {
                    dw += 0.5 * (reactions[p] + r0[p]) * (g1 - g0);
                }
            }
            work += dw;
        }
        let ledger = total_phase_energy(&u, &v, params, Some(loads), None)?.with_work(work);
        if let Some((_, _, _, l0)) = &prev {
            let rise = (ledger.total - l0.total) / energy_scale(l0, &ledger);
            if rise > options.energy_tol {
                traj.events.push(Event {
                    step: k,
                    kind: EventKind::EnergyIncrease,
                    detail: "total energy increased".into(),
                    value: rise,
                });
            }
        }
        let audits = match &options.audit {
            Some(a) => match stability_audit(&u, Some(&v), params, a, settings) {
                Ok(r) => r,
                Err(EvolutionError::NoTipFound) => Vec::new(),
                Err(e) => {
                    traj.events.push(Event {
                        step: k,
                        kind: EventKind::AuditFailure,
                        detail: e.to_string(),
                        value: f64::NAN,
                    });
                    Vec::new()
                }
            },
            None => Vec::new(),
        };
        traj.steps.push(TrajectoryStep {
            time,
            u: u.clone(),
            v: v.clone(),
            ledger,
            audits,
            iterations,
            converged,
            objective_history: history,
        });
        v_prev = v;
        prev = Some((u, reactions, force, ledger));
    }
    Ok(traj)
}

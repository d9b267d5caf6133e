//! Local stability analysis at crack tips: singular fields, stress-intensity
//! fits, Griffith verdicts, blow-up diagnostics, scaling identities, the ball
//! bound and a finite competitor family.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{
    body_load_on, elastic_energy, griffith_ball_energy, surface_energy, EnergyError, LoadSpec,
    MaterialParams, Split,
};
use crate::fields::{
    blowup_rescale_window, dilate_scalar, inject, l2_distance_on_ball, FieldError, PhaseField,
    RescaledPair, ScalarField,
};
use crate::grid::{ball_mask, BallMask, Grid, Point};
use crate::solve::{solve_displacement, SolveError, SolverSettings};

/// Default half-width of the marginal band around `(pi/4) K^2 = G_c`.
pub const DEFAULT_TOL_BAND: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("no grid nodes inside the annulus {r_in} <= |x - tip| <= {r_out}")]
    AnnulusEmpty { r_in: f64, r_out: f64 },
    #[error("invalid annulus: {0}")]
    AnnulusInvalid(String),
    #[error("tip {0:?} is not a grid node")]
    TipOffLattice(Point),
    #[error("competitor family is empty")]
    FamilyEmpty,
    #[error("invalid competitor family: {0}")]
    InvalidFamily(String),
    #[error("scales must be decreasing, got {0:?}")]
    ScalesNotDecreasing(Vec<f64>),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// `K r^{1/2} sin(theta / 2)` with the crack running from `tip` in the
/// direction `forward + pi`. Points on the crack line take the side of `probe`.
pub fn singular_value(k: f64, tip: Point, forward: f64, p: Point, probe: Point) -> f64 {
    let (s, c) = forward.sin_cos();
    let rot = |q: Point| {
        let d = [q[0] - tip[0], q[1] - tip[1]];
        [c * d[0] + s * d[1], -s * d[0] + c * d[1]]
    };
    let d = rot(p);
    let r = d[0].hypot(d[1]);
    if r == 0.0 {
        return 0.0;
    }
    let mut theta = d[1].atan2(d[0]);
    if d[1].abs() <= 1e-12 * r && d[0] < 0.0 {
        let side = rot(probe)[1];
        theta = if side >= 0.0 { PI } else { -PI };
    }
    k * r.sqrt() * (0.5 * theta).sin()
}

/// Nodal singular field on a grid, respecting slit copies.
pub fn singular_field(grid: Arc<Grid>, k: f64, tip: Point, forward: f64) -> ScalarField {
    ScalarField::from_fn_probe(grid, |p, probe| singular_value(k, tip, forward, p, probe))
}

/// Direction (radians) in which the grid's slit would grow at `tip`, if the
/// tip is an end of the slit.
pub fn slit_forward_angle(grid: &Grid, tip: Point) -> Option<f64> {
    let slit = grid.slit()?;
    let tol = 1e-9 * grid.hx().max(grid.hy());
    let near = |a: Point, b: Point| (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol;
    slit.segments.iter().find_map(|s| {
        let other = if near(s.a, tip) {
            s.b
        } else if near(s.b, tip) {
            s.a
        } else {
            return None;
        };
        Some((tip[1] - other[1]).atan2(tip[0] - other[0]))
    })
}

/// Result of the annulus least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SifFit {
    pub k: f64,
    /// Relative RMS misfit.
    pub residual: f64,
    pub samples: usize,
    pub forward: f64,
}

/// Fits `u - u(tip) ~ K r^{1/2} sin(theta/2)` on the nodes of the annulus
/// `r_in <= |x - tip| <= r_out`. The crack direction defaults to the grid's
/// slit at `tip`, else the negative x axis.
pub fn extract_sif(
    u: &ScalarField,
    tip: Point,
    r_in: f64,
    r_out: f64,
    forward: Option<f64>,
) -> Result<SifFit, StabilityError> {
    let g = u.grid();
    let (ti, tj) = g.snap_to_node(tip).ok_or(StabilityError::TipOffLattice(tip))?;
    let h = g.hx().max(g.hy());
    if r_in < 3.0 * h * (1.0 - 1e-12) {
        return Err(StabilityError::AnnulusInvalid(format!(
            "inner radius {r_in} is below three cells ({})",
            3.0 * h
        )));
    }
    let rect = g.rect();
    let dist = (tip[0] - rect.x0)
        .min(rect.x1 - tip[0])
        .min(tip[1] - rect.y0)
        .min(rect.y1 - tip[1]);
    if !(r_out > r_in) || r_out > 0.5 * dist * (1.0 + 1e-12) {
        return Err(StabilityError::AnnulusInvalid(format!(
            "need {r_in} < r_out <= {}, got {r_out}",
            0.5 * dist
        )));
    }
    let forward = forward.or_else(|| slit_forward_angle(g, tip)).unwrap_or(0.0);
    let u0 = u.value_at_node(ti, tj);
    let (mut su, mut ss, mut uu, mut n) = (0.0, 0.0, 0.0, 0usize);
    let mut pairs = Vec::new();
    for p in 0..g.num_nodes() {
        let x = g.node_position(p);
        let d = (x[0] - tip[0]).hypot(x[1] - tip[1]);
        if d < r_in || d > r_out {
            continue;
        }
        let s = singular_value(1.0, tip, forward, x, g.node_probe(p));
        let w = u.values()[p] - u0;
        su += s * w;
        ss += s * s;
        uu += w * w;
        n += 1;
        pairs.push((s, w));
    }
    if n == 0 || ss == 0.0 {
        return Err(StabilityError::AnnulusEmpty { r_in, r_out });
    }
    let k = su / ss;
    let misfit: f64 = pairs.iter().map(|(s, w)| (w - k * s).powi(2)).sum();
    let residual = if uu > 0.0 { (misfit / uu).sqrt() } else { 0.0 };
    Ok(SifFit {
        k,
        residual,
        samples: n,
        forward,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
}

/// Energy release rate `(pi/4) K^2`.
pub fn energy_release_rate(k: f64) -> f64 {
    0.25 * PI * k * k
}

pub fn griffith_verdict(k: f64, g_c: f64, tol_band: f64) -> Verdict {
    let err = energy_release_rate(k);
    if err > g_c * (1.0 + tol_band) {
        Verdict::Unstable
    } else if err < g_c * (1.0 - tol_band) {
        Verdict::Stable
    } else {
        Verdict::Marginal
    }
}

/// Successive blow-ups at decreasing scales.
#[derive(Debug, Clone)]
pub struct BlowupDiagnosis {
    pub eps: Vec<f64>,
    /// L2 distance on `B(0, r)` between the blow-ups at `eps[k]` and `eps[k + 1]`,
    /// measured on the coarser of the two grids.
    pub cauchy: Vec<f64>,
    /// Slope of `log cauchy` against `log eps`, when defined.
    pub rate: Option<f64>,
    pub finest: RescaledPair,
}

fn check_decreasing(eps: &[f64]) -> Result<(), StabilityError> {
    if eps.is_empty() || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(StabilityError::ScalesNotDecreasing(eps.to_vec()));
    }
    Ok(())
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

pub fn blowup_diagnose(
    u: &ScalarField,
    v: Option<&PhaseField>,
    x0: Point,
    eps_list: &[f64],
    r: f64,
) -> Result<BlowupDiagnosis, StabilityError> {
    check_decreasing(eps_list)?;
    let pairs = eps_list
        .iter()
        .map(|&e| blowup_rescale_window(u, v, x0, e, r, r))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cauchy = Vec::with_capacity(pairs.len().saturating_sub(1));
    for w in pairs.windows(2) {
        let (fine, coarse) = (&w[0], &w[1]);
        let cg = coarse.grid();
        let values: Vec<f64> = inject(&fine.u, cg)
            .into_iter()
            .zip(coarse.u.values())
            .map(|(a, &b)| a.unwrap_or(b))
            .collect();
        let a = ScalarField::new(cg.clone(), values)?;
        let mask = ball_mask(cg, [0.0, 0.0], r);
        cauchy.push(l2_distance_on_ball(&a, &coarse.u, &mask)?);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = eps_list[1..]
        .iter()
        .zip(&cauchy)
        .filter(|(_, d)| **d > 0.0)
        .map(|(e, d)| (e.ln(), d.ln()))
        .unzip();
    let rate = fit_slope(&lx, &ly);
    Ok(BlowupDiagnosis {
        eps: eps_list.to_vec(),
        cauchy,
        rate,
        finest: pairs.into_iter().last().expect("nonempty scale list"),
    })
}

/// Both sides of one scaling identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityTerm {
    pub term: String,
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_diff: f64,
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

impl IdentityTerm {
    fn new(term: &str, eps: f64, lhs: f64, rhs: f64) -> Self {
        Self {
            term: term.to_string(),
            eps,
            lhs,
            rhs,
            rel_diff: rel_diff(lhs, rhs),
        }
    }
}

/// Rescaled phase-field identities on `B(0, r)` against `B(x0, eps r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub eps: f64,
    /// Rescaled regularization length `delta / eps`.
    pub alpha: f64,
    /// Whether `eta <= 1e-2 alpha`.
    pub eta_small: bool,
    pub terms: Vec<IdentityTerm>,
}

impl ScalingCheck {
    pub fn max_rel_diff(&self) -> f64 {
        self.terms.iter().map(|t| t.rel_diff).fold(0.0, f64::max)
    }
}

/// Checks `E_alpha[B(0,r)](u_eps, v_eps) = eps^-1 E_delta[B(x0, eps r)](u, v)`
/// term by term, plus the slit-length identity when the grid has a slit.
pub fn check_scaling_identity(
    u: &ScalarField,
    v: &PhaseField,
    params: &MaterialParams,
    x0: Point,
    eps: f64,
    r: f64,
) -> Result<ScalingCheck, StabilityError> {
    check_scaling_identity_masks(u, v, params, x0, eps, r, r)
}

/// [`check_scaling_identity`] with the source ball radius `eps * r_source`
/// decoupled from the blow-up radius `r`. Any mismatch breaks the identity.
pub fn check_scaling_identity_masks(
    u: &ScalarField,
    v: &PhaseField,
    params: &MaterialParams,
    x0: Point,
    eps: f64,
    r: f64,
    r_source: f64,
) -> Result<ScalingCheck, StabilityError> {
    let pair = blowup_rescale_window(u, Some(v), x0, eps, r, r)?;
    let v_eps = pair.v.as_ref().expect("damage field was supplied");
    let alpha = params.delta / eps;
    let rescaled = params.with_delta(alpha);
    let x0 = pair.center;
    let blow_mask = ball_mask(pair.grid(), [0.0, 0.0], r);
    let src_mask = ball_mask(u.grid(), x0, eps * r_source);

    let el_l = elastic_energy(&pair.u, Some(v_eps), &rescaled, Some(&blow_mask), Split::Full)?;
    let el_r = elastic_energy(u, Some(v), params, Some(&src_mask), Split::Full)? / eps;
    let su_l = surface_energy(v_eps, &rescaled, Some(&blow_mask));
    let su_r = surface_energy(v, params, Some(&src_mask)) / eps;
    let mut terms = vec![
        IdentityTerm::new("elastic", eps, el_l, el_r),
        IdentityTerm::new("surface", eps, su_l, su_r),
        IdentityTerm::new("phase_total", eps, el_l + su_l, el_r + su_r),
    ];
    if let Some(k) = u.grid().slit() {
        let l = k.dilate(x0, eps).length_in_ball([0.0, 0.0], r);
        let rr = k.length_in_ball(x0, eps * r_source) / eps;
        terms.push(IdentityTerm::new("slit_length", eps, l, rr));
    }
    Ok(ScalingCheck {
        eps,
        alpha,
        eta_small: params.eta <= 1e-2 * alpha,
        terms,
    })
}

/// `int_{B(0,r)} f_eps u_eps` against `eps^-5/2 int_{B(x0, eps r)} f (u - u(x0))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadScalingCheck {
    pub eps: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_diff: f64,
    /// Factor `eps^{3/2}` in front of the load term of the rescaled energy.
    pub load_coefficient: f64,
}

pub fn check_load_scaling(
    u: &ScalarField,
    f: &ScalarField,
    x0: Point,
    eps: f64,
    r: f64,
) -> Result<LoadScalingCheck, StabilityError> {
    let pair = blowup_rescale_window(u, None, x0, eps, r, r)?;
    let f_eps = dilate_scalar(f, x0, eps, r)?;
    let x0 = pair.center;
    let lhs = body_load_on(&pair.u, &f_eps, Some(&ball_mask(pair.grid(), [0.0, 0.0], r)))?;
    let g = u.grid();
    let (ci, cj) = g.snap_to_node(x0).ok_or(FieldError::CenterOffLattice(x0))?;
    let u0 = u.value_at_node(ci, cj);
    let shifted = ScalarField::new(g.clone(), u.values().iter().map(|x| x - u0).collect())?;
    let src = body_load_on(&shifted, f, Some(&ball_mask(g, x0, eps * r)))?;
    let rhs = src * eps.powf(-2.5);
    Ok(LoadScalingCheck {
        eps,
        lhs,
        rhs,
        rel_diff: rel_diff(lhs, rhs),
        load_coefficient: eps.powf(1.5),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallBoundRow {
    pub r: f64,
    pub energy: f64,
    /// `2 pi G_c r`.
    pub bound: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallBoundCheck {
    pub rows: Vec<BallBoundRow>,
    /// Regression slope of energy against `r`.
    pub slope: Option<f64>,
    pub all_ok: bool,
}

/// Elastic energy `1/2 int_{B(0,r)} (eta + v^2) |grad u|^2` (or the sharp form
/// without `v`) against `2 pi G_c r` for every radius.
pub fn check_ball_bound(
    u_hat: &ScalarField,
    v: Option<&PhaseField>,
    eta: f64,
    g_c: f64,
    r_list: &[f64],
) -> Result<BallBoundCheck, StabilityError> {
    let unit = MaterialParams {
        eta,
        mu_eq: 1.0,
        mu_neq: 0.0,
        ..MaterialParams::default()
    };
    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let mask = ball_mask(u_hat.grid(), [0.0, 0.0], r);
        let energy = elastic_energy(u_hat, v, &unit, Some(&mask), Split::Full)?;
        let bound = 2.0 * PI * g_c * r;
        rows.push(BallBoundRow {
            r,
            energy,
            bound,
            ok: energy <= bound,
        });
    }
    let rs: Vec<f64> = rows.iter().map(|x| x.r).collect();
    let es: Vec<f64> = rows.iter().map(|x| x.energy).collect();
    Ok(BallBoundCheck {
        slope: fit_slope(&rs, &es),
        all_ok: rows.iter().all(|x| x.ok),
        rows,
    })
}

/// Straight crack extensions from the tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompetitorFamily {
    /// Angles relative to the crack's forward direction, in `(-pi, pi)`.
    pub angles: Vec<f64>,
    pub lengths: Vec<f64>,
    /// Width of inserted damage bands, in cells (at least 2).
    #[serde(default = "default_band_cells")]
    pub band_cells: f64,
}

fn default_band_cells() -> f64 {
    2.0
}

impl CompetitorFamily {
    /// `angles x lengths` with `angles` spread over `[-pi/2, pi/2]` and
    /// lengths `r/8, r/4, r/2`.
    pub fn standard(n_angles: usize, r: f64) -> Self {
        let angles = if n_angles <= 1 {
            vec![0.0]
        } else {
            (0..n_angles)
                .map(|k| -0.5 * PI + PI * k as f64 / (n_angles - 1) as f64)
                .collect()
        };
        Self {
            angles,
            lengths: vec![r / 8.0, r / 4.0, r / 2.0],
            band_cells: 2.0,
        }
    }

    fn validate(&self, h: f64, r: f64) -> Result<(), StabilityError> {
        if self.angles.is_empty() || self.lengths.is_empty() {
            return Err(StabilityError::FamilyEmpty);
        }
        if self.angles.iter().any(|a| !(a.abs() < PI)) {
            return Err(StabilityError::InvalidFamily("angles must lie in (-pi, pi)".into()));
        }
        if self.lengths.iter().any(|&l| !(l > h && l <= 0.5 * r * (1.0 + 1e-12))) {
            return Err(StabilityError::InvalidFamily(format!(
                "lengths must lie in ({h}, {}]",
                0.5 * r
            )));
        }
        if !(self.band_cells >= 2.0) {
            return Err(StabilityError::InvalidFamily("band width below 2 cells".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompetitorVerdict {
    Unstable,
    StableWithinFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitorRow {
    pub angle: f64,
    /// Realized extension length (slit extensions snap to whole cells).
    pub length: f64,
    pub incumbent_energy: f64,
    pub competitor_energy: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorOutcome {
    pub rows: Vec<CompetitorRow>,
    pub incumbent_energy: f64,
    pub margin: f64,
    pub verdict: CompetitorVerdict,
}

/// Dirichlet data `u_hat` on all nodes with `|x| >= r`.
fn ball_dirichlet(grid: &Grid, values: impl Fn(usize) -> f64, r: f64) -> LoadSpec {
    let mut loads = LoadSpec::none(grid);
    for p in 0..grid.num_nodes() {
        let x = grid.node_position(p);
        if x[0].hypot(x[1]) >= r * (1.0 - 1e-12) {
            loads.dirichlet[p] = Some(values(p));
        }
    }
    loads
}

fn unit_modulus(params: &MaterialParams) -> MaterialParams {
    MaterialParams {
        mu_eq: 1.0,
        mu_neq: 0.0,
        ..*params
    }
}

/// `1/2 int_B (eta + v^2)|grad w|^2 + surface(v) + G_c H^1(slit ∩ B)`, with the
/// sharp form when `v` is absent.
fn ball_energy(
    w: &ScalarField,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    mask: &BallMask,
    r: f64,
) -> Result<f64, StabilityError> {
    match v {
        None => Ok(griffith_ball_energy(w, w.grid().slit(), params.g_c, r)),
        Some(v) => {
            let unit = unit_modulus(params);
            let el = elastic_energy(w, Some(v), &unit, Some(mask), Split::Full)?;
            let slit = w.grid().slit().map_or(0.0, |k| k.length_in_ball([0.0, 0.0], r));
            Ok(el + surface_energy(v, params, Some(mask)) + params.g_c * slit)
        }
    }
}

fn distance_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Compares the incumbent state on `B(0, r)` (tip at the origin) with straight
/// extensions from the tip; `forward` defaults to the slit direction. Each
/// competitor displacement is re-solved with `u_hat` held on `|x| >= r`; the
/// incumbent is re-solved with the same data.
/// Axis-aligned extensions of a sharp slit are realized as slit extensions,
/// all others as damage bands whose cost is measured by the surface energy.
pub fn competitor_test(
    u_hat: &ScalarField,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    family: &CompetitorFamily,
    r: f64,
    forward: Option<f64>,
    settings: &SolverSettings,
) -> Result<CompetitorOutcome, StabilityError> {
    let grid = u_hat.grid();
    let h = grid.hx().max(grid.hy());
    family.validate(h, r)?;
    let tip = [0.0, 0.0];
    let (ti, tj) = grid.snap_to_node(tip).ok_or(StabilityError::TipOffLattice(tip))?;
    let forward = forward.or_else(|| slit_forward_angle(grid, tip)).unwrap_or(0.0);
    let mask = ball_mask(grid, tip, r);
    let solve_params = MaterialParams { eta: params.eta.max(0.0), ..unit_modulus(params) };

    let loads = ball_dirichlet(grid, |p| u_hat.values()[p], r);
    let incumbent_u = solve_displacement(grid, v, &solve_params, &loads, settings)?;
    let incumbent = ball_energy(&incumbent_u, v, params, &mask, r)?;

    let mut rows = Vec::new();
    for &angle in &family.angles {
        let dir = forward + angle;
        let (s, c) = dir.sin_cos();
        let axis = if v.is_none() && (s.abs() < 1e-9 || c.abs() < 1e-9) {
            Some((c.round() as isize, s.round() as isize))
        } else {
            None
        };
        for &len in &family.lengths {
            let (energy, realized) = match axis {
                Some(step) => {
                    let hstep = if step.1 == 0 { grid.hx() } else { grid.hy() };
                    let cells = (len / hstep).round().max(1.0) as usize;
                    let Some((cg, map)) = grid.with_extension((ti, tj), step, cells) else {
                        return Err(StabilityError::InvalidFamily(format!(
                            "extension at angle {angle} of length {len} leaves the grid"
                        )));
                    };
                    let cg = Arc::new(cg);
                    let loads = ball_dirichlet(&cg, |p| u_hat.values()[map[p]], r);
                    let w = solve_displacement(&cg, None, &solve_params, &loads, settings)?;
                    let cmask = ball_mask(&cg, tip, r);
                    (ball_energy(&w, None, params, &cmask, r)?, cells as f64 * hstep)
                }
                None => {
                    let end = [len * c, len * s];
                    let half = 0.5 * (family.band_cells * h).max(0.5 * params.delta);
                    let base = v.map(|v| v.values().to_vec()).unwrap_or_else(|| vec![1.0; grid.num_nodes()]);
                    let band: Vec<f64> = (0..grid.num_nodes())
                        .map(|p| {
                            if distance_to_segment(grid.node_position(p), tip, end) <= half * (1.0 + 1e-12) {
                                0.0
                            } else {
                                base[p]
                            }
                        })
                        .collect();
                    let vb = PhaseField::new(grid.clone(), band)?;
                    let w = solve_displacement(grid, Some(&vb), &solve_params, &loads, settings)?;
                    (ball_energy(&w, Some(&vb), params, &mask, r)?, len)
                }
            };
            rows.push(CompetitorRow {
                angle,
                length: realized,
                incumbent_energy: incumbent,
                competitor_energy: energy,
                margin: energy - incumbent,
            });
        }
    }
    let margin = rows.iter().map(|x| x.margin).fold(f64::INFINITY, f64::min);
    let tol = 1e-9 * incumbent.abs().max(params.g_c * r);
    Ok(CompetitorOutcome {
        rows,
        incumbent_energy: incumbent,
        margin,
        verdict: if margin < -tol {
            CompetitorVerdict::Unstable
        } else {
            CompetitorVerdict::StableWithinFamily
        },
    })
}

/// Local stability summary at one tip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub tip: Point,
    /// Forward crack direction used by the fit (radians).
    pub forward: f64,
    pub k_fit: f64,
    pub fit_residual: f64,
    /// `(pi/4) k_fit^2`.
    pub err: f64,
    pub g_c: f64,
    pub verdict: Verdict,
    pub blowup_eps: Vec<f64>,
    pub blowup_cauchy: Vec<f64>,
    pub blowup_rate: Option<f64>,
    pub ball_bound_ok: bool,
    pub ball_slope: Option<f64>,
    pub competitor_margin: Option<f64>,
    pub competitor_verdict: Option<CompetitorVerdict>,
    pub competitors: Vec<CompetitorRow>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::blowup_rescale;
    use crate::grid::{Rect, SlitSpec};

    fn centered(n: usize, half: f64) -> Arc<Grid> {
        Arc::new(
            Grid::build(
                Rect::new(-half, -half, half, half),
                [n, n],
                Some(SlitSpec::straight([-half, 0.0], [0.0, 0.0])),
            )
            .unwrap(),
        )
    }

    #[test]
    fn singular_value_sides() {
        let up = singular_value(1.0, [0.0, 0.0], 0.0, [-1.0, 0.0], [-1.0, 0.1]);
        let down = singular_value(1.0, [0.0, 0.0], 0.0, [-1.0, 0.0], [-1.0, -0.1]);
        assert_eq!(up, 1.0);
        assert_eq!(down, -1.0);
        assert!(singular_value(2.0, [0.0, 0.0], 0.0, [4.0, 0.0], [4.0, 0.1]).abs() < 1e-15);
        // rotating the crack rotates the field
        let a = singular_value(1.0, [0.0, 0.0], 0.0, [0.3, 0.4], [0.3, 0.4]);
        let b = singular_value(1.0, [0.0, 0.0], 0.5 * PI, [-0.4, 0.3], [-0.4, 0.3]);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn slit_forward_direction() {
        let g = centered(16, 1.0);
        assert_eq!(slit_forward_angle(&g, [0.0, 0.0]), Some(0.0));
        assert_eq!(slit_forward_angle(&g, [0.5, 0.0]), None);
    }

    #[test]
    fn sif_exact_on_singular_field() {
        let g = centered(64, 1.0);
        for k in [0.0, 1.0, -2.5] {
            let u = singular_field(g.clone(), k, [0.0, 0.0], 0.0);
            let fit = extract_sif(&u, [0.0, 0.0], 0.1, 0.5, None).unwrap();
            assert!((fit.k - k).abs() < 1e-13);
            assert!(fit.residual < 1e-13);
        }
    }

    #[test]
    fn sif_with_smooth_part() {
        let g = centered(256, 1.0);
        let s = singular_field(g.clone(), 2.0, [0.0, 0.0], 0.0);
        let u = ScalarField::new(
            g.clone(),
            s.values().iter().enumerate().map(|(p, v)| v + g.node_position(p)[0]).collect(),
        )
        .unwrap();
        let fit = extract_sif(&u, [0.0, 0.0], 0.03, 0.1, None).unwrap();
        assert!((fit.k - 2.0).abs() / 2.0 < 0.03, "{}", fit.k);
    }

    #[test]
    fn sif_rejects_bad_annulus() {
        let g = centered(16, 1.0);
        let u = ScalarField::zeros(g);
        assert!(matches!(
            extract_sif(&u, [0.0, 0.0], 0.01, 0.5, None),
            Err(StabilityError::AnnulusInvalid(_))
        ));
        assert!(matches!(
            extract_sif(&u, [0.03, 0.0], 0.2, 0.5, None),
            Err(StabilityError::TipOffLattice(_))
        ));
    }

    #[test]
    fn verdict_bands() {
        assert_eq!(griffith_verdict(2.0, PI, DEFAULT_TOL_BAND), Verdict::Marginal);
        assert_eq!(griffith_verdict(1.0, 1.0, DEFAULT_TOL_BAND), Verdict::Stable);
        assert_eq!(griffith_verdict(0.0, 1.0, DEFAULT_TOL_BAND), Verdict::Stable);
        assert_eq!(griffith_verdict(2.0, 1.0, DEFAULT_TOL_BAND), Verdict::Unstable);
    }

    #[test]
    fn blowup_of_singular_field_is_stationary() {
        let g = centered(256, 1.0);
        let u = singular_field(g, 1.0, [0.0, 0.0], 0.0);
        let d = blowup_diagnose(&u, None, [0.0, 0.0], &[1.0, 0.5, 0.25], 0.5).unwrap();
        assert!(d.cauchy.iter().all(|&c| c < 1e-12), "{:?}", d.cauchy);
    }

    #[test]
    fn blowup_of_linear_field_vanishes() {
        let g = centered(256, 1.0);
        let u = ScalarField::from_fn(g, |p| p[0] + 2.0 * p[1]);
        let d = blowup_diagnose(&u, None, [0.0, 0.0], &[1.0, 0.5, 0.25, 0.125], 0.5).unwrap();
        assert!((d.rate.unwrap() - 0.5).abs() < 1e-2, "{:?}", d.rate);
        let finest_max = d.finest.u.values().iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(finest_max < 0.5 * (1.0f64 + 4.0).sqrt() * 0.125f64.sqrt() * 1.5);
    }

    #[test]
    fn identity_at_unit_scale_is_exact() {
        let g = centered(32, 1.0);
        let u = ScalarField::from_fn(g.clone(), |p| p[0] * p[1] + p[0].sin());
        let v = PhaseField::from_fn(g, |p| 0.5 + 0.4 * (3.0 * p[0]).cos());
        let c = check_scaling_identity(&u, &v, &MaterialParams::default(), [0.0, 0.0], 1.0, 0.5).unwrap();
        assert_eq!(c.max_rel_diff(), 0.0);
    }

    #[test]
    fn identity_holds_and_mismatch_is_caught() {
        let g = centered(128, 1.0);
        let u = ScalarField::from_fn(g.clone(), |p| p[0] * p[1] + (2.0 * p[0]).sin());
        let v = PhaseField::from_fn(g, |p| 0.5 + 0.4 * (3.0 * p[0] + p[1]).cos());
        let params = MaterialParams::default();
        for eps in [0.5, 0.25] {
            let c = check_scaling_identity(&u, &v, &params, [0.0, 0.0], eps, 0.5).unwrap();
            assert!(c.max_rel_diff() <= 1e-12, "{c:?}");
            assert_eq!(c.terms.len(), 4);
        }
        let bad = check_scaling_identity_masks(&u, &v, &params, [0.0, 0.0], 0.5, 0.5, 0.55).unwrap();
        assert!(bad.max_rel_diff() > 1e-3);
    }

    #[test]
    fn load_scaling_identity() {
        let g = centered(256, 1.0);
        let u = singular_field(g.clone(), 1.0, [0.0, 0.0], 0.0);
        let f = ScalarField::constant(g, 1.0);
        let c = check_load_scaling(&u, &f, [0.0, 0.0], 1.0, 0.5).unwrap();
        assert_eq!(c.rel_diff, 0.0);
        let c = check_load_scaling(&u, &f, [0.0, 0.0], 0.25, 0.5).unwrap();
        assert!(c.rel_diff <= 1e-12);
        let c2 = check_load_scaling(&u, &f, [0.0, 0.0], 0.125, 0.5).unwrap();
        assert!((c2.load_coefficient / c.load_coefficient - 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn ball_bound_cases() {
        let g = centered(256, 1.0);
        let zero = ScalarField::zeros(g.clone());
        let b = check_ball_bound(&zero, None, 0.0, 1.0, &[0.1, 0.2]).unwrap();
        assert!(b.all_ok);
        // constant gradient M: energy 1/2 M^2 pi r^2 exceeds 2 pi G_c r beyond r = 4 G_c / M^2
        let m = 4.0;
        let lin = ScalarField::from_fn(Arc::new(Grid::build(Rect::new(-1.0, -1.0, 1.0, 1.0), [256, 256], None).unwrap()), |p| m * p[0]);
        let b = check_ball_bound(&lin, None, 0.0, 1.0, &[0.1, 0.2, 0.4]).unwrap();
        assert!(b.rows[0].ok && b.rows[1].ok && !b.rows[2].ok);
    }

    #[test]
    fn rescaled_fit_matches() {
        let g = centered(256, 1.0);
        let u = singular_field(g, 1.3, [0.0, 0.0], 0.0);
        let a = extract_sif(&u, [0.0, 0.0], 0.1, 0.4, None).unwrap();
        let pair = blowup_rescale(&u, [0.0, 0.0], 0.25, 0.8).unwrap();
        let b = extract_sif(&pair.u, [0.0, 0.0], 0.1, 0.4, None).unwrap();
        assert!((a.k - b.k).abs() < 1e-13);
    }

    #[test]
    fn competitor_on_zero_field_costs_surface() {
        let g = centered(64, 1.0);
        let u = ScalarField::zeros(g);
        let fam = CompetitorFamily { angles: vec![0.0], lengths: vec![0.125, 0.25], band_cells: 2.0 };
        let out = competitor_test(&u, None, &MaterialParams::default(), &fam, 0.75, None, &SolverSettings::default()).unwrap();
        assert!((out.margin - 0.125).abs() < 1e-12);
        assert_eq!(out.verdict, CompetitorVerdict::StableWithinFamily);
    }
}

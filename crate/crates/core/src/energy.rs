//! Energy functionals: elastic, AT2 surface, load potentials and the Griffith
//! ball energy.
//!
//! All volume integrals use the 2x2 Gauss rule per cell. Ball-restricted
//! integrals scale each cell by its mask weight fraction, so rescaled grids
//! and their sources are integrated with matching rules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::{gather, Kernel};
use crate::fields::{same_grid, FieldError, PhaseField, ScalarField};
use crate::grid::{ball_mask, BallMask, Grid, Point, Side, SlitSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("invalid boundary partition: {0}")]
    BoundaryPartitionInvalid(String),
    #[error("invalid material parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Which part of the elastic energy is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// `W = W_eq + W_neq`, modulus `mu_eq + mu_neq`.
    #[default]
    Full,
    /// Only `W_eq`, modulus `mu_eq`.
    EqOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialParams {
    /// Fracture toughness.
    pub g_c: f64,
    /// Regularization length.
    pub delta: f64,
    /// Residual stiffness.
    pub eta: f64,
    pub mu_eq: f64,
    pub mu_neq: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            g_c: 1.0,
            delta: 0.05,
            eta: 1e-6,
            mu_eq: 1.0,
            mu_neq: 0.0,
        }
    }
}

impl MaterialParams {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let bad = |m: &str| Err(EnergyError::InvalidParams(m.to_string()));
        if !(self.g_c > 0.0 && self.g_c.is_finite()) {
            return bad("g_c must be positive");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if !(self.eta >= 0.0 && self.eta < 1.0) {
            return bad("eta must lie in [0, 1)");
        }
        if !(self.mu_eq >= 0.0 && self.mu_neq >= 0.0 && self.mu_eq + self.mu_neq > 0.0) {
            return bad("moduli must be nonnegative with a positive sum");
        }
        Ok(())
    }

    pub fn modulus(&self, split: Split) -> f64 {
        match split {
            Split::Full => self.mu_eq + self.mu_neq,
            Split::EqOnly => self.mu_eq,
        }
    }

    /// Copy with a different regularization length (the rescaled `alpha = delta / eps`).
    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }
}

/// A boundary-load edge: `g` sampled at both endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traction {
    pub side: Side,
    pub nodes: [usize; 2],
    pub length: f64,
    pub g: [f64; 2],
}

/// Body load, boundary loads and Dirichlet data.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSpec {
    /// Nodal body load `f`, or none.
    pub body: Option<Vec<f64>>,
    /// Neumann edges carrying a boundary load.
    pub traction: Vec<Traction>,
    /// Prescribed displacement per physical node.
    pub dirichlet: Vec<Option<f64>>,
}

impl LoadSpec {
    /// No loads and no Dirichlet data.
    pub fn none(grid: &Grid) -> Self {
        Self {
            body: None,
            traction: Vec::new(),
            dirichlet: vec![None; grid.num_nodes()],
        }
    }

    pub fn with_body(mut self, grid: &Grid, f: impl Fn(Point) -> f64) -> Self {
        self.body = Some((0..grid.num_nodes()).map(|p| f(grid.node_position(p))).collect());
        self
    }

    pub fn with_body_values(mut self, values: Vec<f64>) -> Self {
        self.body = Some(values);
        self
    }

    pub fn with_traction(mut self, grid: &Grid, side: Side, g: impl Fn(Point) -> f64) -> Self {
        for e in grid.boundary_edges().into_iter().filter(|e| e.side == side) {
            self.traction.push(Traction {
                side,
                nodes: e.nodes,
                length: e.length,
                g: [g(grid.node_position(e.nodes[0])), g(grid.node_position(e.nodes[1]))],
            });
        }
        self
    }

    /// Prescribes `value(position, probe)` on every node of the given side.
    pub fn with_dirichlet_side(
        mut self,
        grid: &Grid,
        side: Side,
        value: impl Fn(Point, Point) -> f64,
    ) -> Self {
        for e in grid.boundary_edges().into_iter().filter(|e| e.side == side) {
            for p in e.nodes {
                self.dirichlet[p] = Some(value(grid.node_position(p), grid.node_probe(p)));
            }
        }
        self
    }

    /// Prescribes `value(position, probe)` on every node where `pred` holds.
    pub fn with_dirichlet_where(
        mut self,
        grid: &Grid,
        pred: impl Fn(Point) -> bool,
        value: impl Fn(Point, Point) -> f64,
    ) -> Self {
        for p in 0..grid.num_nodes() {
            let x = grid.node_position(p);
            if pred(x) {
                self.dirichlet[p] = Some(value(x, grid.node_probe(p)));
            }
        }
        self
    }

    pub fn num_dirichlet(&self) -> usize {
        self.dirichlet.iter().filter(|d| d.is_some()).count()
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), EnergyError> {
        let n = grid.num_nodes();
        let invalid = |m: String| Err(EnergyError::BoundaryPartitionInvalid(m));
        if self.dirichlet.len() != n {
            return invalid(format!("{} Dirichlet slots for {n} nodes", self.dirichlet.len()));
        }
        if let Some(f) = &self.body {
            if f.len() != n {
                return invalid(format!("{} body-load values for {n} nodes", f.len()));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return invalid("non-finite body load".into());
            }
        }
        if self.dirichlet.iter().flatten().any(|x| !x.is_finite()) {
            return invalid("non-finite Dirichlet value".into());
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.traction {
            if t.nodes.iter().any(|&p| p >= n) || t.g.iter().any(|g| !g.is_finite()) {
                return invalid("traction edge out of range or non-finite".into());
            }
            let key = (t.nodes[0].min(t.nodes[1]), t.nodes[0].max(t.nodes[1]));
            if !seen.insert(key) {
                return invalid(format!("edge {:?} carries two boundary loads", t.nodes));
            }
            if self.dirichlet[t.nodes[0]].is_some() && self.dirichlet[t.nodes[1]].is_some() {
                return invalid(format!(
                    "edge {:?} is both Dirichlet and loaded",
                    t.nodes
                ));
            }
        }
        Ok(())
    }

    /// Consistent nodal load vector: `F . u = int f u dx + int g u ds`.
    pub fn load_vector(&self, grid: &Grid) -> Vec<f64> {
        let mut out = vec![0.0; grid.num_nodes()];
        if let Some(f) = &self.body {
            let k = Kernel::new(grid.hx(), grid.hy());
            for nodes in grid.cells() {
                let fv = gather(f, nodes);
                for q in 0..4 {
                    let fq = k.value(q, &fv) * k.weight;
                    for a in 0..4 {
                        out[nodes[a]] += fq * k.n[q][a];
                    }
                }
            }
        }
        for t in &self.traction {
            for (s, w) in EDGE_GAUSS {
                let n0 = 0.5 * (1.0 - s);
                let n1 = 0.5 * (1.0 + s);
                let gq = n0 * t.g[0] + n1 * t.g[1];
                let jw = 0.5 * t.length * w;
                out[t.nodes[0]] += jw * gq * n0;
                out[t.nodes[1]] += jw * gq * n1;
            }
        }
        out
    }
}

const EDGE_GAUSS: [(f64, f64); 2] = [(-0.577_350_269_189_625_8, 1.0), (0.577_350_269_189_625_8, 1.0)];

/// Itemized energies of a state.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub elastic: f64,
    pub surface: f64,
    /// `int f u dx` (positive sign; subtracted in the totals).
    pub body_load_potential: f64,
    /// `int g u ds` (positive sign; subtracted in the totals).
    pub boundary_load_potential: f64,
    /// `elastic + surface - body - boundary`.
    pub merged_objective: f64,
    pub work_cumulative: f64,
    /// `merged_objective - work_cumulative`.
    pub total: f64,
}

impl EnergyLedger {
    pub fn with_work(mut self, work: f64) -> Self {
        self.work_cumulative = work;
        self.total = self.merged_objective - work;
        self
    }

    pub fn entries(&self) -> [f64; 7] {
        [
            self.elastic,
            self.surface,
            self.body_load_potential,
            self.boundary_load_potential,
            self.merged_objective,
            self.work_cumulative,
            self.total,
        ]
    }
}

fn check_phase(u: &ScalarField, v: Option<&PhaseField>) -> Result<(), EnergyError> {
    if let Some(v) = v {
        same_grid(u.grid(), v.grid()).map_err(|_| EnergyError::GridMismatch)?;
    }
    Ok(())
}

fn mask_fraction(grid: &Grid, mask: Option<&BallMask>, cell: usize) -> f64 {
    match mask {
        Some(m) => m.fraction(grid, cell),
        None => 1.0,
    }
}

/// `1/2 mu int (eta + v^2) |grad u|^2`, or `1/2 mu int |grad u|^2` without `v`.
pub fn elastic_energy(
    u: &ScalarField,
    v: Option<&PhaseField>,
    params: &MaterialParams,
    mask: Option<&BallMask>,
    split: Split,
) -> Result<f64, EnergyError> {
    check_phase(u, v)?;
    let g = u.grid();
    let k = Kernel::new(g.hx(), g.hy());
    let mu = params.modulus(split);
    let mut total = 0.0;
    for (c, nodes) in g.cells().iter().enumerate() {
        let frac = mask_fraction(g, mask, c);
        if frac == 0.0 {
            continue;
        }
        let uv = gather(u.values(), nodes);
        let vv = v.map(|v| gather(v.values(), nodes));
        let mut cell = 0.0;
        for q in 0..4 {
            let gu = k.grad(q, &uv);
            let stiff = match &vv {
                Some(vv) => {
                    let vq = k.value(q, vv);
                    params.eta + vq * vq
                }
                None => 1.0,
            };
            cell += k.weight * stiff * (gu[0] * gu[0] + gu[1] * gu[1]);
        }
        total += frac * cell;
    }
    Ok(0.5 * mu * total)
}

/// Raw integrals `(int (1 - v)^2, int |grad v|^2)` over the mask.
pub fn surface_integrals(v: &PhaseField, mask: Option<&BallMask>) -> (f64, f64) {
    let g = v.grid();
    let k = Kernel::new(g.hx(), g.hy());
    let (mut bulk, mut grad) = (0.0, 0.0);
    for (c, nodes) in g.cells().iter().enumerate() {
        let frac = mask_fraction(g, mask, c);
        if frac == 0.0 {
            continue;
        }
        let vv = gather(v.values(), nodes);
        let dv = vv.map(|x| 1.0 - x);
        let (mut cb, mut cg) = (0.0, 0.0);
        for q in 0..4 {
            let d = k.value(q, &dv);
            let gv = k.grad(q, &vv);
            cb += k.weight * d * d;
            cg += k.weight * (gv[0] * gv[0] + gv[1] * gv[1]);
        }
        bulk += frac * cb;
        grad += frac * cg;
    }
    (bulk, grad)
}

/// AT2 surface energy `G_c ( 1/(4 delta) int (1 - v)^2 + delta int |grad v|^2 )`.
pub fn surface_energy(v: &PhaseField, params: &MaterialParams, mask: Option<&BallMask>) -> f64 {
    let (bulk, grad) = surface_integrals(v, mask);
    params.g_c * (bulk / (4.0 * params.delta) + params.delta * grad)
}

/// `int f u dx` over the mask for a nodal body load `f`.
pub fn body_load_on(u: &ScalarField, f: &ScalarField, mask: Option<&BallMask>) -> Result<f64, EnergyError> {
    same_grid(u.grid(), f.grid()).map_err(|_| EnergyError::GridMismatch)?;
    Ok(body_integral(u.grid(), u.values(), f.values(), mask))
}

fn body_integral(g: &Grid, u: &[f64], f: &[f64], mask: Option<&BallMask>) -> f64 {
    let k = Kernel::new(g.hx(), g.hy());
    let mut total = 0.0;
    for (c, nodes) in g.cells().iter().enumerate() {
        let frac = mask_fraction(g, mask, c);
        if frac == 0.0 {
            continue;
        }
        let uv = gather(u, nodes);
        let fv = gather(f, nodes);
        let mut cell = 0.0;
        for q in 0..4 {
            cell += k.weight * k.value(q, &fv) * k.value(q, &uv);
        }
        total += frac * cell;
    }
    total
}

/// `(int f u dx, int_{N} g u ds)`, both with a positive sign.
pub fn load_potential(u: &ScalarField, loads: &LoadSpec) -> Result<(f64, f64), EnergyError> {
    let g = u.grid();
    loads.validate(g)?;
    let body = match &loads.body {
        Some(f) => body_integral(g, u.values(), f, None),
        None => 0.0,
    };
    let mut boundary = 0.0;
    for t in &loads.traction {
        let u0 = u.values()[t.nodes[0]];
        let u1 = u.values()[t.nodes[1]];
        for (s, w) in EDGE_GAUSS {
            let n0 = 0.5 * (1.0 - s);
            let n1 = 0.5 * (1.0 + s);
            boundary += 0.5 * t.length * w * (n0 * t.g[0] + n1 * t.g[1]) * (n0 * u0 + n1 * u1);
        }
    }
    Ok((body, boundary))
}

/// Full ledger of `E_delta(u, v)` with optional loads. The elastic entry uses
/// the full modulus; the work entry is zero.
pub fn total_phase_energy(
    u: &ScalarField,
    v: &PhaseField,
    params: &MaterialParams,
    loads: Option<&LoadSpec>,
    mask: Option<&BallMask>,
) -> Result<EnergyLedger, EnergyError> {
    let elastic = elastic_energy(u, Some(v), params, mask, Split::Full)?;
    let surface = surface_energy(v, params, mask);
    let (body, boundary) = match loads {
        Some(l) => {
            l.validate(u.grid())?;
            let body = match &l.body {
                Some(f) => body_integral(u.grid(), u.values(), f, mask),
                None => 0.0,
            };
            let boundary = if mask.is_none() { load_potential(u, l)?.1 } else { 0.0 };
            (body, boundary)
        }
        None => (0.0, 0.0),
    };
    let merged = elastic + surface - body - boundary;
    Ok(EnergyLedger {
        elastic,
        surface,
        body_load_potential: body,
        boundary_load_potential: boundary,
        merged_objective: merged,
        work_cumulative: 0.0,
        total: merged,
    })
}

/// `1/2 int_{B(0,r)} |grad w|^2 + G_c H^1(kappa ∩ B(0,r))` for a sharp slit.
pub fn griffith_ball_energy(u_hat: &ScalarField, k_hat: Option<&SlitSpec>, g_c: f64, r: f64) -> f64 {
    let mask = ball_mask(u_hat.grid(), [0.0, 0.0], r);
    let unit = MaterialParams {
        mu_eq: 1.0,
        mu_neq: 0.0,
        ..MaterialParams::default()
    };
    let elastic = elastic_energy(u_hat, None, &unit, Some(&mask), Split::Full)
        .expect("no phase field, grids trivially match");
    let length = k_hat.map_or(0.0, |k| k.length_in_ball([0.0, 0.0], r));
    elastic + g_c * length
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Rect, Segment};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn unit(n: usize) -> Arc<Grid> {
        Arc::new(Grid::build(Rect::unit(), [n, n], None).unwrap())
    }

    fn params(eta: f64) -> MaterialParams {
        MaterialParams { eta, ..MaterialParams::default() }
    }

    #[test]
    fn uniform_gradient_elastic() {
        let g = unit(8);
        let u = ScalarField::from_fn(g.clone(), |p| p[0]);
        let v = PhaseField::intact(g);
        let e = elastic_energy(&u, Some(&v), &params(0.0), None, Split::Full).unwrap();
        assert!((e - 0.5).abs() < 1e-14);
        let e = elastic_energy(&u, None, &params(0.0), None, Split::Full).unwrap();
        assert!((e - 0.5).abs() < 1e-14);
    }

    #[test]
    fn broken_material_has_no_elastic_energy() {
        let g = unit(8);
        let u = ScalarField::from_fn(g.clone(), |p| p[0].sin() * p[1]);
        let v = PhaseField::constant(g, 0.0);
        assert_eq!(elastic_energy(&u, Some(&v), &params(0.0), None, Split::Full).unwrap(), 0.0);
    }

    #[test]
    fn split_is_additive() {
        let g = unit(8);
        let u = ScalarField::from_fn(g.clone(), |p| p[0] * p[1] + p[1].cos());
        let v = PhaseField::from_fn(g, |p| 0.2 + 0.5 * p[0]);
        let p = MaterialParams { mu_eq: 0.7, mu_neq: 1.3, ..params(1e-3) };
        let full = elastic_energy(&u, Some(&v), &p, None, Split::Full).unwrap();
        let eq = elastic_energy(&u, Some(&v), &p, None, Split::EqOnly).unwrap();
        let neq_only = MaterialParams { mu_eq: p.mu_neq, mu_neq: 0.0, ..p };
        let neq = elastic_energy(&u, Some(&v), &neq_only, None, Split::EqOnly).unwrap();
        assert!((full - (eq + neq)).abs() <= 1e-15 * full);
    }

    #[test]
    fn surface_energy_constant_states() {
        let g = unit(8);
        let p = params(0.0);
        assert!(surface_energy(&PhaseField::intact(g.clone()), &p, None).abs() < 1e-24);
        let s = surface_energy(&PhaseField::constant(g, 0.0), &p, None);
        assert!((s - p.g_c / (4.0 * p.delta)).abs() < 1e-12);
    }

    #[test]
    fn optimal_profile_costs_g_c_per_length() {
        // 1D oracle: v = 1 - exp(-|y|/(2 delta)) gives exactly G_c per unit length
        let delta = 0.02;
        let n = 8;
        let ny = 320; // h = 0.8 / 320 = delta / 8
        let g = Arc::new(Grid::build(Rect::new(0.0, -0.4, 1.0, 0.4), [n, ny], None).unwrap());
        let v = PhaseField::from_fn(g, |p| 1.0 - (-p[1].abs() / (2.0 * delta)).exp());
        let p = MaterialParams { g_c: 2.0, delta, ..params(0.0) };
        let s = surface_energy(&v, &p, None);
        assert!((s - 2.0).abs() / 2.0 < 0.05, "{s}");
    }

    #[test]
    fn load_potentials() {
        let g = unit(16);
        let one = ScalarField::constant(g.clone(), 1.0);
        let loads = LoadSpec::none(&g).with_body(&g, |_| 1.0);
        let (body, boundary) = load_potential(&one, &loads).unwrap();
        assert!((body - 1.0).abs() < 1e-14);
        assert_eq!(boundary, 0.0);
        let two = ScalarField::constant(g.clone(), 2.0);
        let loads = LoadSpec::none(&g).with_traction(&g, Side::Top, |_| 1.0);
        let (_, boundary) = load_potential(&two, &loads).unwrap();
        assert!((boundary - 2.0).abs() < 1e-14);
        let s = |p: Point| (PI * p[0]).sin() * (PI * p[1]).sin();
        let fine = unit(64);
        let loads = LoadSpec::none(&fine).with_body(&fine, s);
        let u = ScalarField::from_fn(fine, s);
        let (body, _) = load_potential(&u, &loads).unwrap();
        assert!((body - 0.25).abs() < 1e-3);
    }

    #[test]
    fn load_vector_matches_potential() {
        let g = unit(8);
        let loads = LoadSpec::none(&g)
            .with_body(&g, |p| p[0] + 2.0 * p[1])
            .with_traction(&g, Side::Right, |p| p[1] * p[1]);
        let u = ScalarField::from_fn(g.clone(), |p| (p[0] * 3.0).cos() + p[1]);
        let (b, t) = load_potential(&u, &loads).unwrap();
        let f = loads.load_vector(&g);
        let dot: f64 = f.iter().zip(u.values()).map(|(a, b)| a * b).sum();
        assert!((dot - (b + t)).abs() < 1e-13);
    }

    #[test]
    fn partition_overlap_rejected() {
        let g = unit(4);
        let loads = LoadSpec::none(&g)
            .with_traction(&g, Side::Top, |_| 1.0)
            .with_dirichlet_side(&g, Side::Top, |_, _| 0.0);
        let u = ScalarField::zeros(g);
        assert!(matches!(
            load_potential(&u, &loads),
            Err(EnergyError::BoundaryPartitionInvalid(_))
        ));
    }

    #[test]
    fn ledger_entries() {
        let g = unit(8);
        let z = total_phase_energy(&ScalarField::zeros(g.clone()), &PhaseField::intact(g.clone()), &params(0.0), None, None).unwrap();
        assert!(z.entries().iter().all(|e| e.abs() < 1e-24));
        let u = ScalarField::from_fn(g.clone(), |p| p[0]);
        let l = total_phase_energy(&u, &PhaseField::intact(g), &params(1e-6), None, None).unwrap();
        assert!((l.elastic - 0.5 * (1.0 + 1e-6)).abs() < 1e-14);
        assert!(l.surface.abs() < 1e-24);
        assert_eq!(l.total, l.merged_objective);
    }

    #[test]
    fn griffith_ball_energy_simple_cases() {
        let g = Arc::new(Grid::build(Rect::new(-1.0, -1.0, 1.0, 1.0), [32, 32], None).unwrap());
        let zero = ScalarField::zeros(g);
        assert_eq!(griffith_ball_energy(&zero, None, 1.0, 0.5), 0.0);
        let chord = SlitSpec::new(vec![Segment::new([-1.0, 0.0], [1.0, 0.0])], None);
        let e = griffith_ball_energy(&zero, Some(&chord), 2.0, 0.5);
        assert!((e - 2.0 * 2.0 * 0.5).abs() < 1e-14);
    }

    #[test]
    fn masked_energies_add_up() {
        let g = unit(32);
        let u = ScalarField::from_fn(g.clone(), |p| p[0] * p[1] * 3.0);
        let v = PhaseField::from_fn(g.clone(), |p| 0.5 + 0.4 * p[1]);
        let p = params(1e-3);
        let whole = ball_mask(&g, [0.5, 0.5], 5.0);
        let all = elastic_energy(&u, Some(&v), &p, None, Split::Full).unwrap();
        let masked = elastic_energy(&u, Some(&v), &p, Some(&whole), Split::Full).unwrap();
        assert!((all - masked).abs() < 1e-14);
        // complementary cell sets partition the integral
        let inner = ball_mask(&g, [0.5, 0.5], 0.3);
        let mut outer = inner.clone();
        for (w, a) in outer.cell_weights.iter_mut().zip(&whole.cell_weights) {
            *w = a - *w;
        }
        let a = elastic_energy(&u, Some(&v), &p, Some(&inner), Split::Full).unwrap();
        let b = elastic_energy(&u, Some(&v), &p, Some(&outer), Split::Full).unwrap();
        assert!((a + b - all).abs() < 1e-13);
    }
}

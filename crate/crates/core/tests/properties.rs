use std::sync::Arc;

use griffith_core::energy::{
    elastic_energy, load_potential, surface_energy, LoadSpec, MaterialParams, Split,
};
use griffith_core::fields::{blowup_rescale, dilate, PhaseField, ScalarField};
use griffith_core::grid::{Grid, Rect, Side, SlitSpec};
use griffith_core::solve::{solve_phase, SolverSettings};
use griffith_core::stability::{energy_release_rate, griffith_verdict, singular_value, Verdict};
use proptest::prelude::*;

fn square(n: usize) -> Arc<Grid> {
    Arc::new(Grid::build(Rect::unit(), [n, n], None).unwrap())
}

fn slit_box(n: usize) -> Arc<Grid> {
    Arc::new(
        Grid::build(
            Rect::new(-1.0, -1.0, 1.0, 1.0),
            [n, n],
            Some(SlitSpec::straight([-1.0, 0.0], [0.0, 0.0])),
        )
        .unwrap(),
    )
}

fn values(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn energies_are_nonnegative(u in values(81, -5.0, 5.0), v in values(81, 0.0, 1.0), eta in 0.0..0.5f64) {
        let g = square(8);
        let u = ScalarField::new(g.clone(), u).unwrap();
        let v = PhaseField::new(g, v).unwrap();
        let p = MaterialParams { eta, ..MaterialParams::default() };
        prop_assert!(elastic_energy(&u, Some(&v), &p, None, Split::Full).unwrap() >= 0.0);
        prop_assert!(surface_energy(&v, &p, None) >= 0.0);
    }

    #[test]
    fn elastic_energy_is_quadratic(u in values(81, -2.0, 2.0), v in values(81, 0.0, 1.0), c in -3.0..3.0f64) {
        let g = square(8);
        let v = PhaseField::new(g.clone(), v).unwrap();
        let p = MaterialParams::default();
        let scaled = ScalarField::new(g.clone(), u.iter().map(|x| c * x).collect()).unwrap();
        let u = ScalarField::new(g, u).unwrap();
        let a = elastic_energy(&scaled, Some(&v), &p, None, Split::Full).unwrap();
        let b = c * c * elastic_energy(&u, Some(&v), &p, None, Split::Full).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-12));
    }

    #[test]
    fn split_moduli_add(u in values(81, -2.0, 2.0), mu_eq in 0.1..2.0f64, mu_neq in 0.0..2.0f64) {
        let g = square(8);
        let u = ScalarField::new(g.clone(), u).unwrap();
        let v = PhaseField::constant(g, 0.7);
        let p = MaterialParams { mu_eq, mu_neq, ..MaterialParams::default() };
        let eq = elastic_energy(&u, Some(&v), &p, None, Split::EqOnly).unwrap();
        let neq = elastic_energy(&u, Some(&v), &MaterialParams { mu_eq: mu_neq, mu_neq: 0.0, ..p }, None, Split::EqOnly);
        let full = elastic_energy(&u, Some(&v), &p, None, Split::Full).unwrap();
        if mu_neq > 0.0 {
            prop_assert!((eq + neq.unwrap() - full).abs() <= 1e-12 * full.max(1e-12));
        }
    }

    #[test]
    fn load_potential_is_linear(a in values(81, -2.0, 2.0), b in values(81, -2.0, 2.0), s in -2.0..2.0f64, t in -2.0..2.0f64) {
        let g = square(8);
        let loads = LoadSpec::none(&g)
            .with_body(&g, |p| p[0] - 0.3 * p[1])
            .with_traction(&g, Side::Top, |p| 1.0 + p[0]);
        let mix = ScalarField::new(g.clone(), a.iter().zip(&b).map(|(x, y)| s * x + t * y).collect()).unwrap();
        let ua = ScalarField::new(g.clone(), a).unwrap();
        let ub = ScalarField::new(g, b).unwrap();
        let (m0, m1) = load_potential(&mix, &loads).unwrap();
        let (a0, a1) = load_potential(&ua, &loads).unwrap();
        let (b0, b1) = load_potential(&ub, &loads).unwrap();
        prop_assert!((m0 - (s * a0 + t * b0)).abs() < 1e-12);
        prop_assert!((m1 - (s * a1 + t * b1)).abs() < 1e-12);
    }

    #[test]
    fn singular_field_is_homogeneous(x in -1.0..1.0f64, y in 0.01..1.0f64, k in -3.0..3.0f64, e in 0.01..1.0f64, fwd in -3.0..3.0f64) {
        let p = [x, y];
        let q = [e * x, e * y];
        let a = singular_value(k, [0.0, 0.0], fwd, q, q) / e.sqrt();
        let b = singular_value(k, [0.0, 0.0], fwd, p, p);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn verdict_follows_release_rate(k in 0.0..3.0f64, g_c in 0.1..3.0f64) {
        let err = energy_release_rate(k);
        match griffith_verdict(k, g_c, 0.05) {
            Verdict::Stable => prop_assert!(err < 0.95 * g_c),
            Verdict::Unstable => prop_assert!(err > 1.05 * g_c),
            Verdict::Marginal => prop_assert!(err >= 0.95 * g_c && err <= 1.05 * g_c),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dilation_preserves_bounds(v in values(65 * 65, 0.0, 1.0), k in 0usize..3) {
        let g = Arc::new(Grid::build(Rect::new(-1.0, -1.0, 1.0, 1.0), [64, 64], None).unwrap());
        let v = PhaseField::new(g, v).unwrap();
        let eps = 0.5f64.powi(k as i32);
        let d = dilate(&v, [0.0, 0.0], eps, 1.0).unwrap();
        prop_assert!(d.values().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn phase_solution_respects_box(u in values(17 * 17, -3.0, 3.0), cap in values(17 * 17, 0.0, 1.0)) {
        let g = square(16);
        let u = ScalarField::new(g.clone(), u).unwrap();
        let upper = PhaseField::new(g, cap).unwrap();
        let v = solve_phase(&u, &MaterialParams::default(), &upper, Split::Full, &SolverSettings::default()).unwrap();
        prop_assert!(v.values().iter().zip(upper.values()).all(|(a, b)| *a >= 0.0 && a <= b));
    }

    #[test]
    fn blowups_compose(k in -2.0..2.0f64, a in -1.0..1.0f64, i in 0usize..2, j in 0usize..2) {
        let g = slit_box(512);
        let u = ScalarField::from_fn_probe(g, |p, probe| {
            singular_value(k, [0.0, 0.0], 0.0, p, probe) + a * p[0] + p[1] * p[1]
        });
        let (e1, e2) = (0.5f64.powi(i as i32 + 1), 0.5f64.powi(j as i32 + 1));
        let once = blowup_rescale(&u, [0.0, 0.0], e1 * e2, 0.5).unwrap();
        let first = blowup_rescale(&u, [0.0, 0.0], e1, 0.5 * e2).unwrap();
        let twice = blowup_rescale(&first.u, [0.0, 0.0], e2, 0.5).unwrap();
        let (og, tg) = (once.grid(), twice.grid());
        let side = |g: &Grid, p: usize| (g.node_probe(p)[1] - g.node_position(p)[1]).signum();
        let mut shared = 0;
        for p in 0..og.num_nodes() {
            let x = og.node_position(p);
            let Some((ti, tj)) = tg.snap_to_node(x) else { continue };
            let copies = tg.copies_at(ti, tj);
            let q = if copies.len() == 1 {
                copies[0]
            } else {
                match copies.into_iter().find(|&q| side(tg, q) == side(og, p)) {
                    Some(q) => q,
                    None => continue,
                }
            };
            shared += 1;
            let d = (once.u.values()[p] - twice.u.values()[q]).abs();
            prop_assert!(d <= 1e-12 * (1.0 + once.u.values()[p].abs()), "{d}");
        }
        prop_assert!(shared > 0);
    }
}

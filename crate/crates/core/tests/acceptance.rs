//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line with
//! the measured quantities; run with `--nocapture` to see them.

use std::f64::consts::PI;
use std::sync::Arc;

use griffith_core::demo::{demo_load_collapse, StripSetup};
use griffith_core::energy::{
    elastic_energy, surface_energy, LoadSpec, MaterialParams, Split,
};
use griffith_core::evolution::{quasistatic_run, LoadProgram, RunOptions, Trajectory};
use griffith_core::fields::{blowup_rescale, PhaseField, ScalarField};
use griffith_core::grid::{Grid, Rect, Side, SlitSpec};
use griffith_core::solve::{
    alternate_minimize, homogeneous_damage, solve_displacement, solve_phase, SolverSettings,
};
use griffith_core::stability::{
    blowup_diagnose, check_ball_bound, check_load_scaling, check_scaling_identity,
    competitor_test, energy_release_rate, extract_sif, singular_value, CompetitorFamily,
    CompetitorVerdict,
};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!(
        "criterion {n:>2} [{name}]: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn unit_params() -> MaterialParams {
    MaterialParams {
        eta: 0.0,
        ..MaterialParams::default()
    }
}

fn tight() -> SolverSettings {
    SolverSettings {
        cg_tol: 1e-12,
        ..SolverSettings::default()
    }
}

/// Slit unit square with the tip at `(tip_x, 1/2)` and `u_S(K)` centered at
/// `(1/2, 1/2)` prescribed on the outer boundary; returns the elastic solution.
fn singular_square(n: usize, tip_x: f64, k: f64) -> ScalarField {
    let tip = [tip_x, 0.5];
    let grid = Arc::new(
        Grid::build(Rect::unit(), [n, n], Some(SlitSpec::straight([0.0, 0.5], tip))).unwrap(),
    );
    let data = |p, probe| singular_value(k, [0.5, 0.5], 0.0, p, probe);
    let mut loads = LoadSpec::none(&grid);
    for side in Side::ALL {
        loads = loads.with_dirichlet_side(&grid, side, data);
    }
    solve_displacement(&grid, None, &unit_params(), &loads, &tight()).unwrap()
}

#[test]
fn criterion_01_sif_err_consistency() {
    let u = singular_square(256, 0.5, 1.0);
    let fit = extract_sif(&u, [0.5, 0.5], 0.05, 0.2, None).unwrap();
    let err = energy_release_rate(fit.k);
    let dk = (fit.k - 1.0).abs();
    let de = (err - PI / 4.0).abs() / (PI / 4.0);
    let pass = dk <= 0.03 && de <= 0.06;
    report(1, "SIF/ERR", pass, format!("K_fit={:.5} |dK|={dk:.2e} err={err:.5} rel={de:.2e}", fit.k));
    assert!(pass);
}

#[test]
fn criterion_02_finite_difference_err() {
    let n = 256;
    let h = 1.0 / n as f64;
    let k_fit = extract_sif(&singular_square(n, 0.5, 1.0), [0.5, 0.5], 0.05, 0.2, None)
        .unwrap()
        .k;
    let energy = |a: f64| {
        let u = singular_square(n, a, 1.0);
        elastic_energy(&u, None, &unit_params(), None, Split::Full).unwrap()
    };
    let (short, long) = (energy(0.5 - h), energy(0.5 + h));
    let g_fd = -(long - short) / (2.0 * h);
    let g_sif = energy_release_rate(k_fit);
    let rel = (g_fd - g_sif).abs() / g_sif;
    let pass = rel <= 0.08;
    report(2, "ERR oracle", pass, format!("G_fd={g_fd:.5} (pi/4)K_fit^2={g_sif:.5} rel={rel:.2e}"));
    assert!(pass);
}

#[test]
fn criterion_03_scaling_identities() {
    let grid = Arc::new(
        Grid::build(
            Rect::new(-1.0, -1.0, 1.0, 1.0),
            [256, 256],
            Some(SlitSpec::straight([-1.0, 0.0], [0.0, 0.0])),
        )
        .unwrap(),
    );
    let u = ScalarField::from_fn_probe(grid.clone(), |p, probe| {
        singular_value(1.3, [0.0, 0.0], 0.0, p, probe) + 0.4 * p[0] - p[1] * p[1] + (3.0 * p[0]).sin()
    });
    let v = PhaseField::from_fn(grid.clone(), |p| {
        1.0 - 0.8 * (-(p[0] * p[0] + 2.0 * p[1] * p[1]) / 0.02).exp()
    });
    let f = ScalarField::from_fn(grid.clone(), |p| (2.0 * p[0]).cos() + p[1] * p[1] + 0.3);
    let params = MaterialParams {
        delta: 0.01,
        eta: 1e-6,
        mu_eq: 0.7,
        mu_neq: 0.5,
        ..MaterialParams::default()
    };
    let mut worst = 0.0f64;
    let mut lines = Vec::new();
    for x0 in [[0.0, 0.0], [0.25, -0.125]] {
        for eps in [0.5, 0.25, 0.125] {
            let c = check_scaling_identity(&u, &v, &params, x0, eps, 0.5).unwrap();
            let l = check_load_scaling(&u, &f, x0, eps, 0.5).unwrap();
            let m = c.max_rel_diff().max(l.rel_diff);
            worst = worst.max(m);
            lines.push(format!("x0={x0:?} eps={eps} max_rel={m:.1e}"));
        }
    }
    let pass = worst <= 1e-12;
    report(3, "scaling identities", pass, format!("worst={worst:.2e} [{}]", lines.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_04_self_similarity() {
    let grid = Arc::new(
        Grid::build(
            Rect::new(-1.0, -1.0, 1.0, 1.0),
            [512, 512],
            Some(SlitSpec::straight([-1.0, 0.0], [0.0, 0.0])),
        )
        .unwrap(),
    );
    let k = 1.0;
    let u = ScalarField::from_fn_probe(grid.clone(), |p, probe| singular_value(k, [0.0, 0.0], 0.0, p, probe));
    let mut worst = 0.0f64;
    for eps in [0.5, 0.25, 0.125, 0.0625] {
        let pair = blowup_rescale(&u, [0.0, 0.0], eps, 0.5).unwrap();
        let g = pair.grid();
        for p in 0..g.num_nodes() {
            let exact = singular_value(k, [0.0, 0.0], 0.0, g.node_position(p), g.node_probe(p));
            worst = worst.max((pair.u.values()[p] - exact).abs());
        }
    }
    let smooth = ScalarField::from_fn_probe(grid.clone(), |p, probe| {
        singular_value(k, [0.0, 0.0], 0.0, p, probe) + p[0] + p[1] * p[1]
    });
    let d = blowup_diagnose(&smooth, None, [0.0, 0.0], &[0.5, 0.25, 0.125, 0.0625], 0.5).unwrap();
    let rate = d.rate.unwrap_or(f64::NAN);
    let pass = worst <= 1e-12 && rate >= 0.4;
    report(
        4,
        "self-similarity",
        pass,
        format!("max|u_eps-u_S|={worst:.2e} cauchy={:?} rate={rate:.3}", d.cauchy),
    );
    assert!(pass);
}

#[test]
fn criterion_05_ball_bound() {
    let grid = Arc::new(
        Grid::build(
            Rect::new(-1.0, -1.0, 1.0, 1.0),
            [256, 256],
            Some(SlitSpec::straight([-1.0, 0.0], [0.0, 0.0])),
        )
        .unwrap(),
    );
    let g_c = 1.0;
    let k = (4.0 * g_c / PI).sqrt();
    let u = ScalarField::from_fn_probe(grid, |p, probe| singular_value(k, [0.0, 0.0], 0.0, p, probe));
    let check = check_ball_bound(&u, None, 0.0, g_c, &[0.2, 0.4, 0.6, 0.8]).unwrap();
    let slope = check.slope.unwrap_or(f64::NAN);
    let rel = (slope - g_c).abs() / g_c;
    let pass = rel <= 0.05 && check.all_ok;
    report(5, "ball bound", pass, format!("slope={slope:.5} rel={rel:.2e} all_ok={}", check.all_ok));
    assert!(pass);
}

#[test]
fn criterion_06_at2_calibration() {
    // fully cracked line across a strip of width L = 1
    let delta = 0.02;
    let grid = Arc::new(Grid::build(Rect::new(0.0, 0.0, 1.0, 0.5), [512, 256], None).unwrap());
    let h = grid.hy();
    let params = MaterialParams {
        delta,
        ..MaterialParams::default()
    };
    let upper = PhaseField::from_fn(grid.clone(), |p| if (p[1] - 0.25).abs() < 0.5 * h { 0.0 } else { 1.0 });
    let u = ScalarField::zeros(grid.clone());
    let v = solve_phase(&u, &params, &upper, Split::Full, &tight()).unwrap();
    let surface = surface_energy(&v, &params, None);
    let band_rel = (surface - params.g_c).abs() / params.g_c;

    // homogeneous state: |grad u|^2 = 2e, no constraint
    let e: f64 = 3.0;
    let slope = (2.0 * e).sqrt();
    let small = Arc::new(Grid::build(Rect::unit(), [32, 32], None).unwrap());
    let u = ScalarField::from_fn(small.clone(), |p| slope * (0.6 * p[0] + 0.8 * p[1]));
    let v = solve_phase(&u, &params, &PhaseField::intact(small), Split::Full, &tight()).unwrap();
    let v_hom = 1.0 / (1.0 + 4.0 * delta * e / params.g_c);
    let hom_err = v.values().iter().map(|x| (x - v_hom).abs()).fold(0.0, f64::max);
    let formula_err = (homogeneous_damage(&params, e) - v_hom).abs();

    let pass = h <= delta / 8.0 && band_rel <= 0.10 && hom_err <= 1e-8 && formula_err <= 1e-15;
    report(
        6,
        "AT2 calibration",
        pass,
        format!("surface/(G_c L)={surface:.5} rel={band_rel:.2e} h/delta={:.3} |v-v_hom|={hom_err:.2e}", h / delta),
    );
    assert!(pass);
}

/// Notched strip `[0,1] x [0,1/2]`, notch from `(0, 1/4)` to `(1/4, 1/4)`,
/// clamped at the bottom and displaced by `U` at the top.
fn notched_strip(n: usize) -> Arc<Grid> {
    Arc::new(
        Grid::build(
            Rect::new(0.0, 0.0, 1.0, 0.5),
            [n, n / 2],
            Some(SlitSpec::straight([0.0, 0.25], [0.25, 0.25])),
        )
        .unwrap(),
    )
}

fn shear(grid: &Grid, top: f64) -> LoadSpec {
    LoadSpec::none(grid)
        .with_dirichlet_side(grid, Side::Bottom, |_, _| 0.0)
        .with_dirichlet_side(grid, Side::Top, |_, _| top)
}

fn strip_params(grid: &Grid) -> MaterialParams {
    MaterialParams {
        delta: 4.0 * grid.hx(),
        ..MaterialParams::default()
    }
}

#[test]
fn criterion_07_staggered_monotonicity() {
    let grid = notched_strip(128);
    let params = strip_params(&grid);
    let loads = shear(&grid, 1.2);
    let settings = SolverSettings::default();
    let v0 = PhaseField::intact(grid.clone());
    let full = alternate_minimize(&grid, &params, &loads, &v0, &settings, Split::Full).unwrap();
    let worst = full
        .objective_history
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);

    let eq = MaterialParams {
        mu_eq: 0.5,
        mu_neq: 0.5,
        ..params
    };
    let split = alternate_minimize(&grid, &eq, &loads, &v0, &settings, Split::EqOnly).unwrap();
    let pass = worst <= 1e-10
        && full.converged
        && split.converged
        && split.fixed_point_residual <= settings.altmin_tol;
    report(
        7,
        "staggered monotonicity",
        pass,
        format!(
            "half-steps={} max increase={worst:.2e} min v={:.3}; EqOnly cycles={} residual={:.2e}",
            full.objective_history.len(),
            full.v.min(),
            split.iterations,
            split.fixed_point_residual
        ),
    );
    assert!(pass);
}

fn elastic_control(grid: &Arc<Grid>, steps: usize) -> Trajectory {
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let program = LoadProgram::from_fn(times, |t| {
        LoadSpec::none(grid)
            .with_dirichlet_side(grid, Side::Bottom, |_, _| 0.0)
            .with_dirichlet_side(grid, Side::Top, |p, _| 0.3 * t * t * (1.0 + p[0]))
            .with_traction(grid, Side::Right, |p| t * (1.0 + p[1]))
            .with_body(grid, |p| (t * PI).sin() * p[0])
    })
    .unwrap();
    let options = RunOptions {
        freeze_damage: true,
        ..RunOptions::default()
    };
    quasistatic_run(grid, &strip_params(grid), &program, &tight(), Split::Full, &options).unwrap()
}

#[test]
fn criterion_08_quasistatic_checks() {
    let grid = notched_strip(128);
    let params = strip_params(&grid);
    let times: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let program = LoadProgram::from_fn(times, |t| shear(&grid, 2.0 * t)).unwrap();
    let settings = SolverSettings {
        altmin_tol: 1e-5,
        ..SolverSettings::default()
    };
    let run = quasistatic_run(&grid, &params, &program, &settings, Split::Full, &RunOptions::default()).unwrap();
    let monotone = run.damage_monotone();
    let increase = run.max_relative_increase();
    let last = run.steps.last().unwrap();

    let coarse = elastic_control(&grid, 10);
    let fine = elastic_control(&grid, 20);
    let imbalance = |t: &Trajectory| {
        let l = t.steps.last().unwrap().ledger;
        l.total.abs() / l.elastic.abs().max(l.work_cumulative.abs())
    };
    let (ic, if_) = (imbalance(&coarse), imbalance(&fine));
    // O(dt^2): the fine imbalance is bounded by a quarter of the coarse one,
    // or both sit at round-off level
    let balance_ok = if_ <= 0.25 * 1.1 * ic || (ic <= 1e-9 && if_ <= 1e-9);
    let pass = monotone && increase <= 0.02 && balance_ok && run.steps.len() == 21;
    report(
        8,
        "quasi-static",
        pass,
        format!(
            "steps={} monotone={monotone} max rel increase={increase:.2e} final min v={:.3} surface={:.4}; \
             elastic control imbalance dt=1/10: {ic:.2e}, dt=1/20: {if_:.2e}",
            run.steps.len() - 1,
            last.v.min(),
            last.ledger.surface
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_competitors() {
    let grid = Arc::new(
        Grid::build(
            Rect::new(-1.0, -1.0, 1.0, 1.0),
            [128, 128],
            Some(SlitSpec::straight([-1.0, 0.0], [0.0, 0.0])),
        )
        .unwrap(),
    );
    let params = MaterialParams::default();
    let r = 0.75;
    let family = CompetitorFamily::standard(5, r);
    let outcome = |ratio: f64| {
        let k = (ratio * params.g_c * 4.0 / PI).sqrt();
        let u = ScalarField::from_fn_probe(grid.clone(), |p, probe| singular_value(k, [0.0, 0.0], 0.0, p, probe));
        competitor_test(&u, None, &params, &family, r, None, &SolverSettings::default()).unwrap()
    };
    let hot = outcome(1.5);
    let cold = outcome(0.5);
    let cold_positive = cold.rows.iter().all(|x| x.margin > 0.0);
    let pass = hot.verdict == CompetitorVerdict::Unstable
        && cold.verdict == CompetitorVerdict::StableWithinFamily
        && cold_positive;
    report(
        9,
        "competitor surrogate",
        pass,
        format!(
            "1.5 G_c: {:?} margin={:.4}; 0.5 G_c: {:?} margin={:.4} ({} competitors)",
            hot.verdict,
            hot.margin,
            cold.verdict,
            cold.margin,
            cold.rows.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_load_collapse() {
    let setup = StripSetup::default();
    let problem = setup.build().unwrap();
    let amps = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0];
    let table = demo_load_collapse(&problem, &MaterialParams::default(), &amps).unwrap();
    // g = 1 on the whole top edge, phi = 1 there
    let oracle = -setup.g * (setup.load_segment[1] - setup.load_segment[0]);
    let rel = (table.slope - oracle).abs() / oracle.abs();
    let pass = table.rows.len() >= 5 && table.strictly_decreasing && rel <= 0.02;
    report(
        10,
        "load collapse",
        pass,
        format!(
            "amplitudes={} decreasing={} slope={:.6} oracle={oracle} rel={rel:.2e}",
            table.rows.len(),
            table.strictly_decreasing,
            table.slope
        ),
    );
    assert!(pass);
}

fn manufactured_error(n: usize) -> f64 {
    let grid = Arc::new(Grid::build(Rect::unit(), [n, n], None).unwrap());
    let mut loads = LoadSpec::none(&grid)
        .with_body(&grid, |p| 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin());
    for side in Side::ALL {
        loads = loads.with_dirichlet_side(&grid, side, |_, _| 0.0);
    }
    let u = solve_displacement(&grid, None, &unit_params(), &loads, &tight()).unwrap();
    u.l2_error_fn(|p| (PI * p[0]).sin() * (PI * p[1]).sin())
}

#[test]
fn criterion_11_manufactured_convergence() {
    let e = [manufactured_error(32), manufactured_error(64), manufactured_error(128)];
    let ratios = [e[0] / e[1], e[1] / e[2]];
    let pass = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    report(11, "manufactured solution", pass, format!("errors={:.3e}, {:.3e}, {:.3e} ratios={:.3}, {:.3}", e[0], e[1], e[2], ratios[0], ratios[1]));
    assert!(pass);
}

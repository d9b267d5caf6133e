use std::path::{Path, PathBuf};
use std::sync::Arc;

use griffith_core::demo::demo_load_collapse;
use griffith_core::evolution::{
    quasistatic_run, stability_audit, EventKind, RunOptions,
};
use griffith_core::fields::{PhaseField, ScalarField};
use griffith_core::grid::{Grid, Point};
use griffith_core::io::{
    import_snapshot, ledger_csv, write_atomic, write_field_csv, write_json, write_table, write_vtk,
};
use griffith_core::solve::alternate_minimize;
use griffith_core::stability::{
    blowup_diagnose, check_load_scaling, check_scaling_identity, energy_release_rate,
    extract_sif, griffith_verdict, slit_forward_angle, Verdict,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{set_key, ConfigError, RunConfig};
use crate::manifest::{now, RunManifest, MANIFEST};
use crate::{CliError, Command};

/// Environment variable holding the number of concurrent sweep runs.
pub const WORKERS_ENV: &str = "GRIFFITH_WORKERS";

/// Runs `command` into `cfg.output.directory` and writes its manifest, also on failure.
pub fn run(command: Command, cfg: &RunConfig, parent: Option<&Path>) -> Result<Value, CliError> {
    let started = now();
    check_requirements(command, cfg)?;
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|source| griffith_core::io::IoError::Io {
        path: dir.clone(),
        source,
    })?;
    let grid_desc = cfg.grid().ok().map(|g| g.descriptor());
    let result = dispatch(command, cfg, &dir);
    let (status, summary, error) = match &result {
        Ok(s) => ("ok", s.clone(), None),
        Err(e) => ("error", Value::Null, Some(e.record())),
    };
    if let Some(rec) = &error {
        write_json(&dir.join("error.json"), rec)?;
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started,
        finished: now(),
        status: status.to_string(),
        config: cfg.to_toml(),
        grid: grid_desc,
        summary,
        error,
        parent: parent.map(Path::to_path_buf),
    };
    manifest.write(&dir)?;
    result
}

fn check_requirements(command: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::DemoLoadCollapse => {
            cfg.demo()?;
        }
        Command::Sweep => {
            let sw = cfg.sweep.as_ref().ok_or_else(|| ConfigError::Missing("sweep".into()))?;
            let child = Command::from_name(&sw.command).expect("validated");
            check_requirements(child, cfg)?;
        }
        _ => {
            cfg.grid()?;
        }
    }
    if matches!(command, Command::Static | Command::Quasistatic) && cfg.snapshot.is_some() {
        return Err(crate::config::invalid("snapshot", "not used by this command").into());
    }
    Ok(())
}

fn dispatch(command: Command, cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    match command {
        Command::Static => run_static(cfg, dir),
        Command::Quasistatic => run_quasistatic(cfg, dir),
        Command::Blowup => run_blowup(cfg, dir),
        Command::Sif => run_sif(cfg, dir),
        Command::Stability => run_stability(cfg, dir),
        Command::IdentityCheck => run_identity(cfg, dir),
        Command::DemoLoadCollapse => run_demo(cfg, dir),
        Command::Sweep => run_sweep(cfg, dir),
    }
}

fn write_fields(dir: &Path, grid: &Grid, u: &[f64], v: Option<&[f64]>, vtk: bool) -> Result<(), CliError> {
    write_field_csv(&dir.join("u.csv"), u, grid)?;
    if let Some(v) = v {
        write_field_csv(&dir.join("v.csv"), v, grid)?;
    }
    if vtk {
        let mut fields = vec![("u", u)];
        if let Some(v) = v {
            fields.push(("v", v));
        }
        write_vtk(&dir.join("fields.vtk"), grid, &fields)?;
    }
    Ok(())
}

fn run_static(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let grid = cfg.grid()?;
    let t = *cfg.times()?.last().expect("nonempty times");
    let loads = cfg.loads_at(&grid, t);
    let v0 = PhaseField::intact(grid.clone());
    let res = alternate_minimize(&grid, &cfg.material.params(), &loads, &v0, &cfg.solver, cfg.material.split)
        .map_err(|e| CliError::numerical("solve", e))?;
    write_fields(dir, &grid, res.u.values(), Some(res.v.values()), cfg.output.vtk)?;
    write_atomic(&dir.join("energies.csv"), ledger_csv(&[(0, t, res.ledger)])?.as_bytes())?;
    let summary = json!({
        "time": t,
        "ledger": res.ledger,
        "iterations": res.iterations,
        "converged": res.converged,
        "fixed_point_residual": res.fixed_point_residual,
        "min_v": res.v.min(),
    });
    if !res.converged {
        return Err(CliError::Numerical {
            kind: "not-converged",
            msg: format!(
                "staggered solve stopped after {} cycles (residual {:e})",
                res.iterations, res.fixed_point_residual
            ),
        });
    }
    Ok(summary)
}

fn run_quasistatic(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let grid = cfg.grid()?;
    let program = cfg.program(&grid)?;
    let options = RunOptions {
        v_init: None,
        freeze_damage: cfg.evolution.freeze_damage,
        audit: cfg.stability.audit_steps.then(|| cfg.stability.audit()),
        energy_tol: cfg.evolution.energy_tol,
    };
    let traj = quasistatic_run(&grid, &cfg.material.params(), &program, &cfg.solver, cfg.material.split, &options)
        .map_err(|e| CliError::numerical("evolution", e))?;
    traj.write(dir, cfg.output.vtk)?;
    let last = traj.steps.last().map(|s| s.ledger);
    let failure = traj.events.iter().find(|e| e.kind == EventKind::SolverFailure);
    if let Some(f) = failure {
        return Err(CliError::Numerical {
            kind: "solver-failure",
            msg: format!("step {}: {}", f.step, f.detail),
        });
    }
    Ok(json!({
        "steps": traj.steps.len(),
        "final_ledger": last,
        "damage_monotone": traj.damage_monotone(),
        "max_relative_increase": traj.max_relative_increase(),
        "events": traj.events.len(),
    }))
}

struct State {
    grid: Arc<Grid>,
    u: ScalarField,
    v: Option<PhaseField>,
    source: &'static str,
}

/// The imported snapshot, or the static solution at the last load time.
fn state(cfg: &RunConfig) -> Result<State, CliError> {
    let grid = cfg.grid()?;
    if let Some(s) = &cfg.snapshot {
        let snap = import_snapshot(&grid.descriptor(), &s.u, s.v.as_deref())?;
        return Ok(State {
            grid: snap.grid,
            u: snap.u,
            v: snap.v,
            source: "snapshot",
        });
    }
    let t = *cfg.times()?.last().expect("nonempty times");
    let loads = cfg.loads_at(&grid, t);
    let v0 = PhaseField::intact(grid.clone());
    let res = alternate_minimize(&grid, &cfg.material.params(), &loads, &v0, &cfg.solver, cfg.material.split)
        .map_err(|e| CliError::numerical("solve", e))?;
    Ok(State {
        grid,
        u: res.u,
        v: Some(res.v),
        source: "static-solve",
    })
}

/// Configured center, else the first listed tip, else the slit tip.
fn center(cfg: &RunConfig, grid: &Grid, key: &str) -> Result<Point, CliError> {
    let s = &cfg.stability;
    s.center
        .or_else(|| s.tips.as_ref().and_then(|t| t.first().copied()))
        .or_else(|| grid.slit().and_then(|k| k.tip))
        .ok_or_else(|| ConfigError::Missing(key.to_string()).into())
}

#[derive(Serialize)]
struct BlowupRow {
    eps: f64,
    cauchy: Option<f64>,
}

fn run_blowup(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let st = state(cfg)?;
    let x0 = center(cfg, &st.grid, "stability.center")?;
    let s = &cfg.stability;
    let d = blowup_diagnose(&st.u, st.v.as_ref(), x0, &s.eps_list, s.r)
        .map_err(|e| CliError::numerical("blowup", e))?;
    let rows: Vec<BlowupRow> = d
        .eps
        .iter()
        .enumerate()
        .map(|(k, &eps)| BlowupRow {
            eps,
            cauchy: k.checked_sub(1).map(|j| d.cauchy[j]),
        })
        .collect();
    write_table(&dir.join("blowup.csv"), &rows)?;
    let fin = &d.finest;
    write_field_csv(&dir.join("u_eps.csv"), fin.u.values(), fin.grid())?;
    if let Some(v) = &fin.v {
        write_field_csv(&dir.join("v_eps.csv"), v.values(), fin.grid())?;
    }
    Ok(json!({
        "source": st.source,
        "center": x0,
        "eps": d.eps,
        "cauchy": d.cauchy,
        "rate": d.rate,
    }))
}

#[derive(Serialize)]
struct SifReport {
    tip: Point,
    annulus: [f64; 2],
    forward: f64,
    k: f64,
    residual: f64,
    samples: usize,
    err: f64,
    g_c: f64,
    verdict: Verdict,
}

fn run_sif(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let st = state(cfg)?;
    let tip = center(cfg, &st.grid, "stability.tips")?;
    let audit = cfg.stability.audit();
    let annulus = audit.annulus_at(&st.grid, tip);
    let forward = slit_forward_angle(&st.grid, tip);
    let fit = extract_sif(&st.u, tip, annulus[0], annulus[1], forward)
        .map_err(|e| CliError::numerical("sif", e))?;
    let g_c = cfg.material.g_c;
    let report = SifReport {
        tip,
        annulus,
        forward: fit.forward,
        k: fit.k,
        residual: fit.residual,
        samples: fit.samples,
        err: energy_release_rate(fit.k),
        g_c,
        verdict: griffith_verdict(fit.k, g_c, cfg.stability.tol_band),
    };
    write_json(&dir.join("sif.json"), &report)?;
    Ok(serde_json::to_value(&report).expect("report serializes"))
}

fn run_stability(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let st = state(cfg)?;
    let reports = stability_audit(&st.u, st.v.as_ref(), &cfg.material.params(), &cfg.stability.audit(), &cfg.solver)
        .map_err(|e| CliError::numerical("stability", e))?;
    write_json(&dir.join("stability.json"), &reports)?;
    Ok(json!({
        "source": st.source,
        "reports": reports.len(),
        "verdicts": reports.iter().map(|r| r.verdict).collect::<Vec<_>>(),
        "k_fit": reports.iter().map(|r| r.k_fit).collect::<Vec<_>>(),
    }))
}

#[derive(Serialize)]
struct IdentityRow {
    eps: f64,
    term: String,
    lhs: f64,
    rhs: f64,
    rel_diff: f64,
}

fn run_identity(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let st = state(cfg)?;
    let grid = &st.grid;
    let x0 = match center(cfg, grid, "stability.center") {
        Ok(p) => p,
        Err(_) => grid.node_position(grid.node_at(grid.nx() / 2, grid.ny() / 2)),
    };
    let params = cfg.material.params();
    let v = st.v.clone().unwrap_or_else(|| PhaseField::intact(grid.clone()));
    let t = *cfg.times()?.last().expect("nonempty times");
    let body = cfg
        .loads
        .body
        .as_ref()
        .map(|f| ScalarField::from_fn(grid.clone(), |p| f.eval(p[0], p[1], t)));
    let r = cfg.stability.r;
    let mut rows = Vec::new();
    let mut eta_small = true;
    for &eps in &cfg.stability.eps_list {
        let c = check_scaling_identity(&st.u, &v, &params, x0, eps, r)
            .map_err(|e| CliError::numerical("identity", e))?;
        eta_small &= c.eta_small;
        rows.extend(c.terms.into_iter().map(|t| IdentityRow {
            eps,
            term: t.term,
            lhs: t.lhs,
            rhs: t.rhs,
            rel_diff: t.rel_diff,
        }));
        if let Some(f) = &body {
            let l = check_load_scaling(&st.u, f, x0, eps, r).map_err(|e| CliError::numerical("identity", e))?;
            rows.push(IdentityRow {
                eps,
                term: "load".to_string(),
                lhs: l.lhs,
                rhs: l.rhs,
                rel_diff: l.rel_diff,
            });
        }
    }
    write_table(&dir.join("identity.csv"), &rows)?;
    let worst = rows.iter().map(|r| r.rel_diff).fold(0.0, f64::max);
    Ok(json!({
        "source": st.source,
        "center": x0,
        "rows": rows.len(),
        "max_rel_diff": worst,
        "eta_small": eta_small,
    }))
}

fn run_demo(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let demo = cfg.demo()?;
    let problem = demo
        .strip
        .build()
        .map_err(|e| crate::config::invalid("demo.strip", e.to_string()))?;
    let table = demo_load_collapse(&problem, &cfg.material.params(), &demo.amplitudes)
        .map_err(|e| CliError::numerical("demo", e))?;
    write_table(&dir.join("collapse.csv"), &table.rows)?;
    if cfg.output.vtk {
        write_vtk(
            &dir.join("fields.vtk"),
            &problem.grid,
            &[("v", problem.v.values()), ("phi", problem.phi.values())],
        )?;
    }
    Ok(json!({
        "amplitudes": demo.amplitudes.len(),
        "slope": table.slope,
        "expected_slope": table.expected_slope,
        "strictly_decreasing": table.strictly_decreasing,
    }))
}

/// Cartesian product of the sweep values, in key order with the last key varying fastest.
fn combinations(values: &[(String, Vec<toml::Value>)]) -> Vec<Vec<(String, toml::Value)>> {
    let mut out: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for (key, vals) in values {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect();
    }
    out
}

fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

#[derive(Serialize)]
struct SweepRow {
    run: usize,
    directory: String,
    status: String,
    settings: String,
}

fn run_sweep(cfg: &RunConfig, dir: &Path) -> Result<Value, CliError> {
    let sweep = cfg.sweep.as_ref().expect("checked");
    let command = Command::from_name(&sweep.command).expect("validated");
    let values: Vec<(String, Vec<toml::Value>)> = sweep.values.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    let combos = combinations(&values);

    // every child config is parsed before any child starts
    let base: toml::Table = toml::from_str(&cfg.to_toml()).expect("echo reparses");
    let mut children = Vec::with_capacity(combos.len());
    for (k, combo) in combos.iter().enumerate() {
        let mut table = base.clone();
        table.remove("sweep");
        for (key, value) in combo {
            set_key(&mut table, key, value.clone())?;
        }
        let child_dir = dir.join(format!("run_{k:04}"));
        set_key(
            &mut table,
            "output.directory",
            toml::Value::String(child_dir.to_string_lossy().into_owned()),
        )?;
        let text = toml::to_string(&table).expect("table serializes");
        let child = RunConfig::from_text(&text, &[], Path::new(&format!("sweep.values[{k}]")))?;
        children.push((k, child_dir, child));
    }

    let parent: PathBuf = dir.join(MANIFEST);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers())
        .build()
        .map_err(|e| CliError::numerical("sweep", e))?;
    let results: Vec<(usize, PathBuf, Result<Value, CliError>)> = pool.install(|| {
        children
            .par_iter()
            .map(|(k, d, c)| (*k, d.clone(), run(command, c, Some(&parent))))
            .collect()
    });

    let rows: Vec<SweepRow> = results
        .iter()
        .map(|(k, d, r)| SweepRow {
            run: *k,
            directory: d.to_string_lossy().into_owned(),
            status: if r.is_ok() { "ok".into() } else { "error".into() },
            settings: combos[*k]
                .iter()
                .map(|(key, v)| format!("{key}={v}"))
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect();
    write_table(&dir.join("sweep.csv"), &rows)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        return Err(CliError::Numerical {
            kind: "sweep",
            msg: format!("{failed} of {} runs failed", rows.len()),
        });
    }
    Ok(json!({
        "command": command.name(),
        "runs": rows.len(),
        "failed": failed,
    }))
}

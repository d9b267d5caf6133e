//! File formats: field CSV, legacy VTK, energy ledgers, generic tables and
//! JSON, all written atomically.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::energy::EnergyLedger;
use crate::fields::{FieldError, PhaseField, ScalarField};
use crate::grid::{Grid, GridDescriptor, GridError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("{path}: field grid does not match the expected grid")]
    GridMismatch { path: PathBuf },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// Field dump: `# grid nx ny hx hy ox oy`, a `x,y,value` header, then one row
/// per physical node in node order (lattice nodes row-major, then slit copies).
pub fn field_csv(values: &[f64], grid: &Grid) -> Result<String, IoError> {
    let o = grid.origin();
    let mut out = format!(
        "# grid {} {} {} {} {} {}\n",
        grid.nx(),
        grid.ny(),
        grid.hx(),
        grid.hy(),
        o[0],
        o[1]
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "value"])?;
    for (p, v) in values.iter().enumerate() {
        let x = grid.node_position(p);
        w.write_record([x[0].to_string(), x[1].to_string(), v.to_string()])?;
    }
    let body = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    out.push_str(&String::from_utf8(body).expect("ascii output"));
    Ok(out)
}

pub fn write_field_csv(path: &Path, values: &[f64], grid: &Grid) -> Result<(), IoError> {
    write_atomic(path, field_csv(values, grid)?.as_bytes())
}

/// Reads a field dump and checks it against `grid`.
pub fn read_field_csv(path: &Path, grid: &Grid) -> Result<Vec<f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_field_csv(&text, grid, path)
}

fn parse_field_csv(text: &str, grid: &Grid, path: &Path) -> Result<Vec<f64>, IoError> {
    let fmt = |line: usize, msg: &str| IoError::Format {
        path: path.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let (head, rest) = text.split_once('\n').ok_or_else(|| fmt(1, "missing grid header"))?;
    let parts: Vec<&str> = head.split_whitespace().collect();
    if parts.len() != 8 || parts[0] != "#" || parts[1] != "grid" {
        return Err(fmt(1, "expected `# grid nx ny hx hy ox oy`"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| fmt(1, "bad number in grid header"));
    let (nx, ny) = (num(parts[2])?, num(parts[3])?);
    let (hx, hy, ox, oy) = (num(parts[4])?, num(parts[5])?, num(parts[6])?, num(parts[7])?);
    let o = grid.origin();
    if nx != grid.nx() as f64 || ny != grid.ny() as f64 || hx != grid.hx() || hy != grid.hy() || ox != o[0] || oy != o[1] {
        return Err(IoError::GridMismatch {
            path: path.to_path_buf(),
        });
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["x", "y", "value"] {
        return Err(fmt(2, "expected column header `x,y,value`"));
    }
    let mut values = Vec::with_capacity(grid.num_nodes());
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 3;
        let rec = rec.map_err(|e| fmt(line, &e.to_string()))?;
        if rec.len() != 3 {
            return Err(fmt(line, "expected three columns"));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| fmt(line, "bad number"));
        let (x, y, v) = (parse(&rec[0])?, parse(&rec[1])?, parse(&rec[2])?);
        let p = values.len();
        if p >= grid.num_nodes() {
            return Err(fmt(line, "more rows than grid nodes"));
        }
        let pos = grid.node_position(p);
        let tol = 1e-9 * grid.hx().max(grid.hy());
        if (pos[0] - x).abs() > tol || (pos[1] - y).abs() > tol {
            return Err(fmt(line, "node position does not match the grid"));
        }
        values.push(v);
    }
    if values.len() != grid.num_nodes() {
        return Err(fmt(
            values.len() + 3,
            &format!("expected {} rows, found {}", grid.num_nodes(), values.len()),
        ));
    }
    Ok(values)
}

/// Legacy-VTK ASCII structured-points dump. Slit copies collapse onto their
/// lattice node (the primary copy's value is written); the `copies` array
/// counts physical copies per lattice node.
pub fn vtk_string(grid: &Grid, fields: &[(&str, &[f64])]) -> String {
    use std::fmt::Write as _;
    let o = grid.origin();
    let n = grid.num_lattice_nodes();
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "antiplane fracture fields");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(s, "DIMENSIONS {} {} 1", grid.nx() + 1, grid.ny() + 1);
    let _ = writeln!(s, "ORIGIN {} {} 0", o[0], o[1]);
    let _ = writeln!(s, "SPACING {} {} 1", grid.hx(), grid.hy());
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, values) in fields {
        let _ = writeln!(s, "SCALARS {name} double 1");
        let _ = writeln!(s, "LOOKUP_TABLE default");
        for v in &values[..n] {
            let _ = writeln!(s, "{v}");
        }
    }
    let mut copies = vec![1u32; n];
    for p in n..grid.num_nodes() {
        let (i, j) = grid.lattice_ij(p);
        copies[grid.node_at(i, j)] += 1;
    }
    let _ = writeln!(s, "SCALARS copies int 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for c in copies {
        let _ = writeln!(s, "{c}");
    }
    s
}

pub fn write_vtk(path: &Path, grid: &Grid, fields: &[(&str, &[f64])]) -> Result<(), IoError> {
    write_atomic(path, vtk_string(grid, fields).as_bytes())
}

pub const LEDGER_HEADER: [&str; 9] = [
    "step",
    "time",
    "elastic",
    "surface",
    "body_load",
    "boundary_load",
    "work",
    "merged_objective",
    "total",
];

/// Energy ledger rows `(step, time, ledger)` as CSV.
pub fn ledger_csv(rows: &[(usize, f64, EnergyLedger)]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LEDGER_HEADER)?;
    for (step, time, l) in rows {
        w.write_record([
            step.to_string(),
            time.to_string(),
            l.elastic.to_string(),
            l.surface.to_string(),
            l.body_load_potential.to_string(),
            l.boundary_load_potential.to_string(),
            l.work_cumulative.to_string(),
            l.merged_objective.to_string(),
            l.total.to_string(),
        ])?;
    }
    let body = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(body).expect("ascii output"))
}

/// Serializes records with a header row derived from the field names.
pub fn table_csv<T: Serialize>(rows: &[T]) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let body = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(body).expect("utf-8 output"))
}

pub fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    write_atomic(path, table_csv(rows)?.as_bytes())
}

/// A state read from disk.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub grid: Arc<Grid>,
    pub u: ScalarField,
    pub v: Option<PhaseField>,
}

/// Loads `u` (and optionally `v`) dumps written on the grid described by `descriptor`.
pub fn import_snapshot(
    descriptor: &GridDescriptor,
    u_path: &Path,
    v_path: Option<&Path>,
) -> Result<Snapshot, IoError> {
    let grid = Arc::new(Grid::from_descriptor(descriptor)?);
    let u = ScalarField::new(grid.clone(), read_field_csv(u_path, &grid)?)?;
    let v = match v_path {
        Some(p) => Some(PhaseField::new(grid.clone(), read_field_csv(p, &grid)?)?),
        None => None,
    };
    Ok(Snapshot { grid, u, v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Rect, SlitSpec};

    fn slit_grid() -> Grid {
        Grid::build(Rect::unit(), [8, 8], Some(SlitSpec::straight([0.0, 0.5], [0.5, 0.5]))).unwrap()
    }

    #[test]
    fn field_round_trip_is_bit_exact() {
        let g = slit_grid();
        let values: Vec<f64> = (0..g.num_nodes()).map(|p| (p as f64 * 0.37).sin() / 3.0).collect();
        let text = field_csv(&values, &g).unwrap();
        let back = parse_field_csv(&text, &g, Path::new("mem")).unwrap();
        assert_eq!(back, values);
    }

    #[test]
    fn truncated_dump_is_rejected() {
        let g = slit_grid();
        let values = vec![1.0; g.num_nodes()];
        let text = field_csv(&values, &g).unwrap();
        let cut = &text[..text.len() / 2];
        let cut = &cut[..cut.rfind('\n').unwrap() + 1];
        assert!(matches!(
            parse_field_csv(cut, &g, Path::new("mem")),
            Err(IoError::Format { .. })
        ));
        assert!(matches!(
            parse_field_csv("1,2,3\n", &g, Path::new("mem")),
            Err(IoError::Format { .. })
        ));
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let g = slit_grid();
        let other = Grid::build(Rect::unit(), [4, 4], None).unwrap();
        let text = field_csv(&vec![0.0; g.num_nodes()], &g).unwrap();
        assert!(matches!(
            parse_field_csv(&text, &other, Path::new("mem")),
            Err(IoError::GridMismatch { .. })
        ));
    }

    #[test]
    fn vtk_layout() {
        let g = slit_grid();
        let values = vec![0.5; g.num_nodes()];
        let s = vtk_string(&g, &[("u", &values)]);
        assert!(s.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(s.contains("DIMENSIONS 9 9 1\n"));
        assert!(s.contains("POINT_DATA 81\nSCALARS u double 1\nLOOKUP_TABLE default\n"));
        let dup = s.lines().skip_while(|l| !l.starts_with("SCALARS copies")).skip(2).filter(|l| *l == "2").count();
        assert_eq!(dup, g.num_duplicates());
    }

    #[test]
    fn ledger_header() {
        let s = ledger_csv(&[(0, 0.0, EnergyLedger::default())]).unwrap();
        assert!(s.starts_with("step,time,elastic,surface,body_load,boundary_load,work,merged_objective,total\n"));
    }

    #[test]
    fn atomic_write_and_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let g = slit_grid();
        let u: Vec<f64> = (0..g.num_nodes()).map(|p| p as f64).collect();
        let v = vec![1.0; g.num_nodes()];
        write_field_csv(&dir.path().join("a/u.csv"), &u, &g).unwrap();
        write_field_csv(&dir.path().join("a/v.csv"), &v, &g).unwrap();
        let snap = import_snapshot(&g.descriptor(), &dir.path().join("a/u.csv"), Some(&dir.path().join("a/v.csv"))).unwrap();
        assert_eq!(snap.u.values(), &u[..]);
        assert_eq!(snap.v.unwrap().values(), &v[..]);
        let left: Vec<_> = fs::read_dir(dir.path().join("a")).unwrap().collect();
        assert_eq!(left.len(), 2);
    }
}

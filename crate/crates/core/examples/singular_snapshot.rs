//! Writes `u = K r^{1/2} sin(theta/2)` on `[-1, 1]^2` with a slit from
//! `(-1, 0)` to the origin as a field CSV.
//!
//! Usage: `cargo run --example singular_snapshot -- <out.csv> [cells] [K]`

use std::path::PathBuf;
use std::sync::Arc;

use griffith_core::grid::{Grid, Rect, SlitSpec};
use griffith_core::io::write_field_csv;
use griffith_core::stability::singular_field;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().ok_or("missing output path")?);
    let n: usize = args.next().map_or(Ok(64), |s| s.parse())?;
    let k: f64 = args.next().map_or(Ok(1.0), |s| s.parse())?;
    let grid = Arc::new(Grid::build(
        Rect::new(-1.0, -1.0, 1.0, 1.0),
        [n, n],
        Some(SlitSpec::straight([-1.0, 0.0], [0.0, 0.0])),
    )?);
    let u = singular_field(grid.clone(), k, [0.0, 0.0], 0.0);
    write_field_csv(&out, u.values(), &grid)?;
    Ok(())
}

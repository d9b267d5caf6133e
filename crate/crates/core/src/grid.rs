//! Structured rectangular grids with optional slit cracks.
//!
//! Nodes live on a regular lattice of `(nx + 1) x (ny + 1)` points. A slit is a
//! chain of lattice edges; every lattice node on the slit whose surrounding
//! cells are split into several groups by slit edges gets one extra physical
//! copy per additional group. Cells reference physical nodes, so bilinear
//! stencils never straddle the slit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in the plane.
pub type Point = [f64; 2];

/// Relative tolerance (in units of the grid spacing) for snapping coordinates
/// onto lattice nodes.
const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("resolution must be at least 2x2 cells, got {nx}x{ny}")]
    ResolutionTooSmall { nx: usize, ny: usize },
    #[error("rectangle must have positive extent")]
    DegenerateRect,
    #[error("slit segment {index} is not aligned with grid edges")]
    SlitOffLattice { index: usize },
    #[error("slit touches the domain boundary: {0}")]
    SlitTouchesBoundary(String),
    #[error("slit segments do not form a single simple chain")]
    SlitNotChain,
    #[error("designated tip {tip:?} is not an endpoint of the slit chain")]
    TipNotEndpoint { tip: Point },
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        ((self.b[0] - self.a[0]).powi(2) + (self.b[1] - self.a[1]).powi(2)).sqrt()
    }

    /// Length of the part of the segment inside the closed disk `B(center, r)`.
    pub fn length_in_ball(&self, center: Point, r: f64) -> f64 {
        let d = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let f = [self.a[0] - center[0], self.a[1] - center[1]];
        let aa = d[0] * d[0] + d[1] * d[1];
        if aa == 0.0 {
            return 0.0;
        }
        let bb = 2.0 * (f[0] * d[0] + f[1] * d[1]);
        let cc = f[0] * f[0] + f[1] * f[1] - r * r;
        let disc = bb * bb - 4.0 * aa * cc;
        if disc <= 0.0 {
            return 0.0;
        }
        let sq = disc.sqrt();
        let t0 = ((-bb - sq) / (2.0 * aa)).max(0.0);
        let t1 = ((-bb + sq) / (2.0 * aa)).min(1.0);
        if t1 <= t0 {
            0.0
        } else {
            (t1 - t0) * aa.sqrt()
        }
    }
}

/// A crack represented as a chain of axis-aligned segments on grid lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlitSpec {
    pub segments: Vec<Segment>,
    /// Designated crack tip; must be a free end of the chain.
    pub tip: Option<Point>,
}

impl SlitSpec {
    pub fn new(segments: Vec<Segment>, tip: Option<Point>) -> Self {
        Self { segments, tip }
    }

    /// A single straight segment from `from` to the tip `tip`.
    pub fn straight(from: Point, tip: Point) -> Self {
        Self::new(vec![Segment::new(from, tip)], Some(tip))
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    /// `H^1(K ∩ B(center, r))` for the segment chain.
    pub fn length_in_ball(&self, center: Point, r: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| s.length_in_ball(center, r))
            .sum()
    }

    /// Pure dilation `y -> (y - x0) / eps` of every segment endpoint and the tip.
    pub fn dilate(&self, x0: Point, eps: f64) -> SlitSpec {
        let map = |p: Point| [(p[0] - x0[0]) / eps, (p[1] - x0[1]) / eps];
        SlitSpec {
            segments: self
                .segments
                .iter()
                .map(|s| Segment::new(map(s.a), map(s.b)))
                .collect(),
            tip: self.tip.map(map),
        }
    }
}

/// Which side of the rectangle a boundary edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];
}

/// An edge of the outer boundary together with the physical node copies used
/// by the adjacent cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub side: Side,
    pub cell: usize,
    pub nodes: [usize; 2],
    pub length: f64,
}

/// Serializable summary of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub origin: Point,
    pub slit: Option<SlitSpec>,
}

/// Structured quad grid with bilinear cells.
#[derive(Debug, Clone)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    origin: Point,
    slit: Option<SlitSpec>,
    /// Horizontal lattice edges `(i, j) -> (i + 1, j)` that carry the slit.
    h_slit: Vec<bool>,
    /// Vertical lattice edges `(i, j) -> (i, j + 1)` that carry the slit.
    v_slit: Vec<bool>,
    /// Physical nodes per cell in the order SW, SE, NE, NW.
    cell_nodes: Vec<[usize; 4]>,
    /// Lattice index of every physical node.
    node_lattice: Vec<usize>,
    /// First cell (in cell order) that references each physical node.
    node_first_cell: Vec<usize>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.hx == other.hx
            && self.hy == other.hy
            && self.origin == other.origin
            && self.h_slit == other.h_slit
            && self.v_slit == other.v_slit
    }
}

impl Grid {
    /// Builds a grid over `rect` with `resolution = [nx, ny]` cells and an
    /// optional slit.
    pub fn build(
        rect: Rect,
        resolution: [usize; 2],
        slit: Option<SlitSpec>,
    ) -> Result<Grid, GridError> {
        let [nx, ny] = resolution;
        if nx < 2 || ny < 2 {
            return Err(GridError::ResolutionTooSmall { nx, ny });
        }
        if !(rect.width() > 0.0 && rect.height() > 0.0) {
            return Err(GridError::DegenerateRect);
        }
        let hx = rect.width() / nx as f64;
        let hy = rect.height() / ny as f64;
        let origin = [rect.x0, rect.y0];
        let mut h_slit = vec![false; nx * (ny + 1)];
        let mut v_slit = vec![false; (nx + 1) * ny];
        if let Some(spec) = &slit {
            let snap = |p: Point, index: usize| -> Result<(usize, usize), GridError> {
                let fi = (p[0] - origin[0]) / hx;
                let fj = (p[1] - origin[1]) / hy;
                let (ri, rj) = (fi.round(), fj.round());
                if (fi - ri).abs() > LATTICE_TOL
                    || (fj - rj).abs() > LATTICE_TOL
                    || ri < 0.0
                    || rj < 0.0
                    || ri > nx as f64
                    || rj > ny as f64
                {
                    return Err(GridError::SlitOffLattice { index });
                }
                Ok((ri as usize, rj as usize))
            };
            for (index, seg) in spec.segments.iter().enumerate() {
                let (ia, ja) = snap(seg.a, index)?;
                let (ib, jb) = snap(seg.b, index)?;
                if ia == ib && ja != jb {
                    if ia == 0 || ia == nx {
                        return Err(GridError::SlitTouchesBoundary(format!(
                            "segment {index} runs along the boundary"
                        )));
                    }
                    for j in ja.min(jb)..ja.max(jb) {
                        v_slit[j * (nx + 1) + ia] = true;
                    }
                } else if ja == jb && ia != ib {
                    if ja == 0 || ja == ny {
                        return Err(GridError::SlitTouchesBoundary(format!(
                            "segment {index} runs along the boundary"
                        )));
                    }
                    for i in ia.min(ib)..ia.max(ib) {
                        h_slit[ja * nx + i] = true;
                    }
                } else {
                    return Err(GridError::SlitOffLattice { index });
                }
            }
            let ends = chain_endpoints(nx, ny, &h_slit, &v_slit)?;
            if let Some(tip) = spec.tip {
                let (ti, tj) = snap(tip, usize::MAX).map_err(|_| GridError::TipNotEndpoint { tip })?;
                let lat = tj * (nx + 1) + ti;
                if !ends.contains(&lat) {
                    return Err(GridError::TipNotEndpoint { tip });
                }
                if ti == 0 || tj == 0 || ti == nx || tj == ny {
                    return Err(GridError::SlitTouchesBoundary(
                        "the crack tip lies on the boundary".into(),
                    ));
                }
            }
        }
        Ok(Self::from_edges(nx, ny, hx, hy, origin, h_slit, v_slit, slit))
    }

    /// Builds a grid from lattice edge flags without chain validation. Used for
    /// windows cut out of an existing grid.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_edges(
        nx: usize,
        ny: usize,
        hx: f64,
        hy: f64,
        origin: Point,
        h_slit: Vec<bool>,
        v_slit: Vec<bool>,
        slit: Option<SlitSpec>,
    ) -> Grid {
        let n_lattice = (nx + 1) * (ny + 1);
        let cell_at = |i: isize, j: isize| -> Option<usize> {
            if i < 0 || j < 0 || i >= nx as isize || j >= ny as isize {
                None
            } else {
                Some(j as usize * nx + i as usize)
            }
        };
        let mut cell_nodes = vec![[usize::MAX; 4]; nx * ny];
        let mut node_lattice: Vec<usize> = (0..n_lattice).collect();
        for j in 0..=ny {
            for i in 0..=nx {
                let lat = j * (nx + 1) + i;
                let (ii, jj) = (i as isize, j as isize);
                // SW, SE, NE, NW around the node; local corner index of the node
                // inside each of them is NE(2), NW(3), SW(0), SE(1).
                let around = [
                    (cell_at(ii - 1, jj - 1), 2usize),
                    (cell_at(ii, jj - 1), 3),
                    (cell_at(ii, jj), 0),
                    (cell_at(ii - 1, jj), 1),
                ];
                // links between consecutive cells around the node, and the edge they cross
                let h_edge = |i: usize, j: usize| h_slit[j * nx + i];
                let v_edge = |i: usize, j: usize| v_slit[j * (nx + 1) + i];
                let open = [
                    // SW-SE across the vertical edge below the node
                    j > 0 && !v_edge(i, j - 1),
                    // SE-NE across the horizontal edge right of the node
                    i < nx && !h_edge(i, j),
                    // NE-NW across the vertical edge above the node
                    j < ny && !v_edge(i, j),
                    // NW-SW across the horizontal edge left of the node
                    i > 0 && !h_edge(i - 1, j),
                ];
                let mut label = [usize::MAX; 4];
                let mut next = 0;
                for k in 0..4 {
                    if around[k].0.is_none() || label[k] != usize::MAX {
                        continue;
                    }
                    // flood around the ring in both directions
                    let mut stack = vec![k];
                    label[k] = next;
                    while let Some(a) = stack.pop() {
                        let fwd = (a + 1) % 4;
                        if open[a] && around[fwd].0.is_some() && label[fwd] == usize::MAX {
                            label[fwd] = next;
                            stack.push(fwd);
                        }
                        let back = (a + 3) % 4;
                        if open[back] && around[back].0.is_some() && label[back] == usize::MAX {
                            label[back] = next;
                            stack.push(back);
                        }
                    }
                    next += 1;
                }
                let mut copy_of_label = vec![lat; next];
                for copy in copy_of_label.iter_mut().skip(1) {
                    *copy = node_lattice.len();
                    node_lattice.push(lat);
                }
                for k in 0..4 {
                    if let (Some(c), corner) = around[k] {
                        cell_nodes[c][corner] = copy_of_label[label[k]];
                    }
                }
            }
        }
        let mut node_first_cell = vec![usize::MAX; node_lattice.len()];
        for (c, nodes) in cell_nodes.iter().enumerate() {
            for &p in nodes {
                if node_first_cell[p] == usize::MAX {
                    node_first_cell[p] = c;
                }
            }
        }
        Grid {
            nx,
            ny,
            hx,
            hy,
            origin,
            slit,
            h_slit,
            v_slit,
            cell_nodes,
            node_lattice,
            node_first_cell,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn slit(&self) -> Option<&SlitSpec> {
        self.slit.as_ref()
    }

    pub fn rect(&self) -> Rect {
        Rect::new(
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.nx as f64 * self.hx,
            self.origin[1] + self.ny as f64 * self.hy,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_lattice_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Physical node count, including slit duplicates.
    pub fn num_nodes(&self) -> usize {
        self.node_lattice.len()
    }

    pub fn num_duplicates(&self) -> usize {
        self.num_nodes() - self.num_lattice_nodes()
    }

    pub fn cell_nodes(&self, cell: usize) -> [usize; 4] {
        self.cell_nodes[cell]
    }

    pub fn cells(&self) -> &[[usize; 4]] {
        &self.cell_nodes
    }

    pub fn cell_ij(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx, cell / self.nx)
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let (i, j) = self.cell_ij(cell);
        [
            self.origin[0] + (i as f64 + 0.5) * self.hx,
            self.origin[1] + (j as f64 + 0.5) * self.hy,
        ]
    }

    pub fn lattice_ij(&self, node: usize) -> (usize, usize) {
        let lat = self.node_lattice[node];
        (lat % (self.nx + 1), lat / (self.nx + 1))
    }

    pub fn node_position(&self, node: usize) -> Point {
        let (i, j) = self.lattice_ij(node);
        [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
        ]
    }

    /// Whether the node is an extra copy created by slit duplication.
    pub fn is_duplicate(&self, node: usize) -> bool {
        node >= self.num_lattice_nodes()
    }

    /// Center of the first cell that uses `node`. Analytic fields that are
    /// discontinuous across the slit use it to pick the correct side.
    pub fn node_probe(&self, node: usize) -> Point {
        self.cell_center(self.node_first_cell[node])
    }

    /// The primary physical node at lattice position `(i, j)`.
    pub fn node_at(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    /// Fractional lattice coordinates of a point.
    pub fn lattice_coords(&self, p: Point) -> [f64; 2] {
        [
            (p[0] - self.origin[0]) / self.hx,
            (p[1] - self.origin[1]) / self.hy,
        ]
    }

    /// Lattice indices of `p` if it coincides with a lattice node.
    pub fn snap_to_node(&self, p: Point) -> Option<(usize, usize)> {
        let [fi, fj] = self.lattice_coords(p);
        let (ri, rj) = (fi.round(), fj.round());
        if (fi - ri).abs() > LATTICE_TOL || (fj - rj).abs() > LATTICE_TOL {
            return None;
        }
        if ri < 0.0 || rj < 0.0 || ri > self.nx as f64 || rj > self.ny as f64 {
            return None;
        }
        Some((ri as usize, rj as usize))
    }

    /// All physical copies of lattice node `(i, j)`, primary first.
    pub fn copies_at(&self, i: usize, j: usize) -> Vec<usize> {
        let lat = self.node_at(i, j);
        let mut out = vec![lat];
        out.extend(
            (self.num_lattice_nodes()..self.num_nodes()).filter(|&p| self.node_lattice[p] == lat),
        );
        out
    }

    pub fn is_slit_h_edge(&self, i: usize, j: usize) -> bool {
        self.h_slit[j * self.nx + i]
    }

    pub fn is_slit_v_edge(&self, i: usize, j: usize) -> bool {
        self.v_slit[j * (self.nx + 1) + i]
    }

    /// Outer boundary edges in the order bottom (left to right), right (bottom
    /// to top), top (left to right), left (bottom to top).
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = Vec::with_capacity(2 * (nx + ny));
        for i in 0..nx {
            let c = i;
            let n = self.cell_nodes[c];
            out.push(BoundaryEdge { side: Side::Bottom, cell: c, nodes: [n[0], n[1]], length: self.hx });
        }
        for j in 0..ny {
            let c = j * nx + nx - 1;
            let n = self.cell_nodes[c];
            out.push(BoundaryEdge { side: Side::Right, cell: c, nodes: [n[1], n[2]], length: self.hy });
        }
        for i in 0..nx {
            let c = (ny - 1) * nx + i;
            let n = self.cell_nodes[c];
            out.push(BoundaryEdge { side: Side::Top, cell: c, nodes: [n[3], n[2]], length: self.hx });
        }
        for j in 0..ny {
            let c = j * nx;
            let n = self.cell_nodes[c];
            out.push(BoundaryEdge { side: Side::Left, cell: c, nodes: [n[0], n[3]], length: self.hy });
        }
        out
    }

    /// Physical nodes lying on the outer boundary.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut flag = vec![false; self.num_nodes()];
        for e in self.boundary_edges() {
            flag[e.nodes[0]] = true;
            flag[e.nodes[1]] = true;
        }
        (0..self.num_nodes()).filter(|&p| flag[p]).collect()
    }

    pub fn descriptor(&self) -> GridDescriptor {
        GridDescriptor {
            nx: self.nx,
            ny: self.ny,
            hx: self.hx,
            hy: self.hy,
            origin: self.origin,
            slit: self.slit.clone(),
        }
    }

    /// Rebuilds a grid from its descriptor.
    pub fn from_descriptor(d: &GridDescriptor) -> Result<Grid, GridError> {
        let rect = Rect::new(
            d.origin[0],
            d.origin[1],
            d.origin[0] + d.nx as f64 * d.hx,
            d.origin[1] + d.ny as f64 * d.hy,
        );
        Grid::build(rect, [d.nx, d.ny], d.slit.clone())
    }

    /// Cuts out the cells `[i0, i1) x [j0, j1)` and maps them affinely by
    /// `x -> (x - x0) / eps`. Returns the window grid and, for each of its
    /// physical nodes, the source physical node.
    pub(crate) fn window(
        &self,
        i0: usize,
        i1: usize,
        j0: usize,
        j1: usize,
        x0: Point,
        eps: f64,
    ) -> (Grid, Vec<usize>) {
        let (wnx, wny) = (i1 - i0, j1 - j0);
        let mut h_slit = vec![false; wnx * (wny + 1)];
        let mut v_slit = vec![false; (wnx + 1) * wny];
        // edges on the window border are dropped: cells beyond them are gone
        for j in 1..wny {
            for i in 0..wnx {
                h_slit[j * wnx + i] = self.is_slit_h_edge(i0 + i, j0 + j);
            }
        }
        for j in 0..wny {
            for i in 1..wnx {
                v_slit[j * (wnx + 1) + i] = self.is_slit_v_edge(i0 + i, j0 + j);
            }
        }
        let hx = self.hx / eps;
        let hy = self.hy / eps;
        let origin = [
            (i0 as f64 * self.hx + self.origin[0] - x0[0]) / eps,
            (j0 as f64 * self.hy + self.origin[1] - x0[1]) / eps,
        ];
        let segments = edge_runs(wnx, wny, hx, hy, origin, &h_slit, &v_slit);
        let slit = if segments.is_empty() {
            None
        } else {
            let tip = self.slit.as_ref().and_then(|s| s.tip).and_then(|t| {
                let (ti, tj) = self.snap_to_node(t)?;
                if ti > i0 && ti < i1 && tj > j0 && tj < j1 {
                    Some([(t[0] - x0[0]) / eps, (t[1] - x0[1]) / eps])
                } else {
                    None
                }
            });
            Some(SlitSpec::new(segments, tip))
        };
        let win = Grid::from_edges(wnx, wny, hx, hy, origin, h_slit, v_slit, slit);
        let mut map = vec![usize::MAX; win.num_nodes()];
        for b in 0..wny {
            for a in 0..wnx {
                let wc = b * wnx + a;
                let sc = (j0 + b) * self.nx + (i0 + a);
                for k in 0..4 {
                    let wn = win.cell_nodes[wc][k];
                    let sn = self.cell_nodes[sc][k];
                    debug_assert!(map[wn] == usize::MAX || map[wn] == sn);
                    map[wn] = sn;
                }
            }
        }
        (win, map)
    }
}

impl Grid {
    /// Extends the slit by `cells` lattice edges from node `(i, j)` in the axis
    /// direction `dir`. Returns the new grid and, for each of its physical
    /// nodes, a physical node of `self` at the same lattice position and on
    /// the same side of the old slit. `None` if the extension leaves the
    /// interior or reuses a slit edge.
    pub(crate) fn with_extension(
        &self,
        from: (usize, usize),
        dir: (isize, isize),
        cells: usize,
    ) -> Option<(Grid, Vec<usize>)> {
        let (nx, ny) = (self.nx, self.ny);
        let mut h_slit = self.h_slit.clone();
        let mut v_slit = self.v_slit.clone();
        let (mut i, mut j) = (from.0 as isize, from.1 as isize);
        for _ in 0..cells {
            let (ni, nj) = (i + dir.0, j + dir.1);
            if ni <= 0 || nj <= 0 || ni >= nx as isize || nj >= ny as isize {
                return None;
            }
            let flag = if dir.1 == 0 {
                &mut h_slit[j as usize * nx + i.min(ni) as usize]
            } else {
                &mut v_slit[j.min(nj) as usize * (nx + 1) + i as usize]
            };
            if *flag {
                return None;
            }
            *flag = true;
            (i, j) = (ni, nj);
        }
        let segments = edge_runs(nx, ny, self.hx, self.hy, self.origin, &h_slit, &v_slit);
        let tip = [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
        ];
        let slit = Some(SlitSpec::new(segments, Some(tip)));
        let g = Grid::from_edges(nx, ny, self.hx, self.hy, self.origin, h_slit, v_slit, slit);
        let mut map = vec![usize::MAX; g.num_nodes()];
        for (c, nodes) in g.cell_nodes.iter().enumerate() {
            for k in 0..4 {
                map[nodes[k]] = self.cell_nodes[c][k];
            }
        }
        Some((g, map))
    }
}

/// Free ends of the slit edge graph; errors unless it is one simple chain.
fn chain_endpoints(
    nx: usize,
    ny: usize,
    h_slit: &[bool],
    v_slit: &[bool],
) -> Result<Vec<usize>, GridError> {
    let n = (nx + 1) * (ny + 1);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::new();
    for j in 0..=ny {
        for i in 0..nx {
            if h_slit[j * nx + i] {
                let a = j * (nx + 1) + i;
                edges.push((a, a + 1));
            }
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            if v_slit[j * (nx + 1) + i] {
                let a = j * (nx + 1) + i;
                edges.push((a, a + nx + 1));
            }
        }
    }
    if edges.is_empty() {
        return Err(GridError::SlitNotChain);
    }
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    if degree.iter().any(|&d| d > 2) {
        return Err(GridError::SlitNotChain);
    }
    // connectivity via union-find
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(a, b) in &edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            // cycle
            return Err(GridError::SlitNotChain);
        }
        parent[ra] = rb;
    }
    let root = find(&mut parent, edges[0].0);
    for &(a, _) in &edges {
        if find(&mut parent, a) != root {
            return Err(GridError::SlitNotChain);
        }
    }
    Ok((0..n).filter(|&p| degree[p] == 1).collect())
}

/// Maximal straight runs of flagged edges, as segments in physical coordinates.
fn edge_runs(
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    origin: Point,
    h_slit: &[bool],
    v_slit: &[bool],
) -> Vec<Segment> {
    let pos = |i: usize, j: usize| [origin[0] + i as f64 * hx, origin[1] + j as f64 * hy];
    let mut out = Vec::new();
    for j in 0..=ny {
        let mut i = 0;
        while i < nx {
            if h_slit[j * nx + i] {
                let start = i;
                while i < nx && h_slit[j * nx + i] {
                    i += 1;
                }
                out.push(Segment::new(pos(start, j), pos(i, j)));
            } else {
                i += 1;
            }
        }
    }
    for i in 0..=nx {
        let mut j = 0;
        while j < ny {
            if v_slit[j * (nx + 1) + i] {
                let start = j;
                while j < ny && v_slit[j * (nx + 1) + i] {
                    j += 1;
                }
                out.push(Segment::new(pos(i, start), pos(i, j)));
            } else {
                j += 1;
            }
        }
    }
    out
}

/// Quadrature weights restricting integrals to a disk.
#[derive(Debug, Clone, PartialEq)]
pub struct BallMask {
    pub center: Point,
    pub radius: f64,
    /// Per-cell weight in `[0, cell area]`.
    pub cell_weights: Vec<f64>,
    /// Set when the disk is not contained in the grid rectangle.
    pub truncated: bool,
}

impl BallMask {
    pub fn total_weight(&self) -> f64 {
        self.cell_weights.iter().sum()
    }

    /// Weight of `cell` as a fraction of the cell area.
    pub fn fraction(&self, grid: &Grid, cell: usize) -> f64 {
        self.cell_weights[cell] / grid.cell_area()
    }
}

/// Subcells per direction used to weight cells cut by the circle.
const BALL_SUBCELLS: usize = 4;

/// Builds the disk mask. Geometry is evaluated in lattice units relative to the
/// center, so masks on dyadically rescaled grids agree bit for bit.
pub fn ball_mask(grid: &Grid, center: Point, radius: f64) -> BallMask {
    assert!(radius > 0.0, "ball radius must be positive");
    let snap = |f: f64| if (f - f.round()).abs() < LATTICE_TOL { f.round() } else { f };
    let [ci, cj] = grid.lattice_coords(center);
    let (ci, cj) = (snap(ci), snap(cj));
    let qx = grid.hx / radius;
    let qy = grid.hy / radius;
    let area = grid.cell_area();
    let mut weights = vec![0.0; grid.num_cells()];
    for c in 0..grid.num_cells() {
        let (i, j) = grid.cell_ij(c);
        let lo_x = (i as f64 - ci) * qx;
        let hi_x = (i as f64 + 1.0 - ci) * qx;
        let lo_y = (j as f64 - cj) * qy;
        let hi_y = (j as f64 + 1.0 - cj) * qy;
        let near_x = if lo_x > 0.0 { lo_x } else if hi_x < 0.0 { hi_x } else { 0.0 };
        let near_y = if lo_y > 0.0 { lo_y } else if hi_y < 0.0 { hi_y } else { 0.0 };
        if near_x * near_x + near_y * near_y > 1.0 {
            continue;
        }
        let far_x = lo_x.abs().max(hi_x.abs());
        let far_y = lo_y.abs().max(hi_y.abs());
        if far_x * far_x + far_y * far_y <= 1.0 {
            weights[c] = area;
            continue;
        }
        let mut inside = 0usize;
        for sj in 0..BALL_SUBCELLS {
            let y = (j as f64 + (sj as f64 + 0.5) / BALL_SUBCELLS as f64 - cj) * qy;
            for si in 0..BALL_SUBCELLS {
                let x = (i as f64 + (si as f64 + 0.5) / BALL_SUBCELLS as f64 - ci) * qx;
                if x * x + y * y <= 1.0 {
                    inside += 1;
                }
            }
        }
        weights[c] = area * inside as f64 / (BALL_SUBCELLS * BALL_SUBCELLS) as f64;
    }
    let rect = grid.rect();
    let truncated = center[0] - radius < rect.x0
        || center[0] + radius > rect.x1
        || center[1] - radius < rect.y0
        || center[1] + radius > rect.y1;
    BallMask {
        center,
        radius,
        cell_weights: weights,
        truncated,
    }
}

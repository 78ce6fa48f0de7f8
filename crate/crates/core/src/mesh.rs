//! Structured meshes of a domain split by a straight membrane.
//!
//! Each subdomain carries its own tensor-product grid. Nodes on the membrane
//! are duplicated: the node at `x = gamma` exists once in subdomain one and
//! once in subdomain two, and the two copies are independent unknowns linked
//! only through the permeability term.

use std::fmt;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subdomain {
    One,
    Two,
}

impl Subdomain {
    pub const BOTH: [Subdomain; 2] = [Subdomain::One, Subdomain::Two];

    pub fn index(self) -> usize {
        match self {
            Subdomain::One => 0,
            Subdomain::Two => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Subdomain::One),
            1 => Some(Subdomain::Two),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Subdomain::One => Subdomain::Two,
            Subdomain::Two => Subdomain::One,
        }
    }

    fn outer_tag(self) -> BoundaryTag {
        match self {
            Subdomain::One => BoundaryTag::GammaOuter1,
            Subdomain::Two => BoundaryTag::GammaOuter2,
        }
    }
}

impl fmt::Display for Subdomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

/// Axis-aligned interval (1D, `y` components ignored) or rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox {
    pub lo: Point,
    pub hi: Point,
}

impl AxisBox {
    pub fn interval(lo: f64, hi: f64) -> Self {
        AxisBox {
            lo: [lo, 0.0],
            hi: [hi, 0.0],
        }
    }

    pub fn rect(x: (f64, f64), y: (f64, f64)) -> Self {
        AxisBox {
            lo: [x.0, y.0],
            hi: [x.1, y.1],
        }
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Largest extent over the active axes.
    pub fn diameter(&self, dim: usize) -> f64 {
        (0..dim)
            .map(|a| self.width(a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains_open(&self, p: &Point, dim: usize) -> bool {
        (0..dim).all(|a| {
            let tol = GEOM_EPS * (1.0 + self.width(a).abs());
            p[a] > self.lo[a] + tol && p[a] < self.hi[a] - tol
        })
    }

    pub fn contains_closed(&self, p: &Point, dim: usize) -> bool {
        (0..dim).all(|a| {
            let tol = GEOM_EPS * (1.0 + self.width(a).abs());
            p[a] >= self.lo[a] - tol && p[a] <= self.hi[a] + tol
        })
    }

    /// Shrinks every side inward by `fraction` of the box width along that axis.
    pub fn shrink(&self, fraction: f64, dim: usize) -> Self {
        let mut out = *self;
        for a in 0..dim {
            let d = fraction * self.width(a);
            out.lo[a] += d;
            out.hi[a] -= d;
        }
        out
    }

    /// Euclidean distance from `p` to the closed box.
    pub fn distance(&self, p: &Point, dim: usize) -> f64 {
        (0..dim)
            .map(|a| {
                let d = (self.lo[a] - p[a]).max(p[a] - self.hi[a]).max(0.0);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Interval {
        x_lo: f64,
        x_hi: f64,
        gamma: f64,
    },
    Rectangle {
        x_lo: f64,
        x_hi: f64,
        y_lo: f64,
        y_hi: f64,
        gamma: f64,
    },
}

impl Geometry {
    pub fn dimension(&self) -> usize {
        match self {
            Geometry::Interval { .. } => 1,
            Geometry::Rectangle { .. } => 2,
        }
    }

    pub fn interface_pos(&self) -> f64 {
        match *self {
            Geometry::Interval { gamma, .. } | Geometry::Rectangle { gamma, .. } => gamma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (x_lo, x_hi, gamma) = match *self {
            Geometry::Interval { x_lo, x_hi, gamma } => (x_lo, x_hi, gamma),
            Geometry::Rectangle {
                x_lo,
                x_hi,
                y_lo,
                y_hi,
                gamma,
            } => {
                if !(y_lo < y_hi) {
                    return Err(Error::InvalidGeometry(format!(
                        "empty y-range ({y_lo}, {y_hi})"
                    )));
                }
                (x_lo, x_hi, gamma)
            }
        };
        if !(x_lo < gamma && gamma < x_hi) {
            return Err(Error::InvalidGeometry(format!(
                "interface {gamma} must lie strictly inside ({x_lo}, {x_hi})"
            )));
        }
        Ok(())
    }

    pub fn subdomain_box(&self, sub: Subdomain) -> AxisBox {
        match (*self, sub) {
            (Geometry::Interval { x_lo, gamma, .. }, Subdomain::One) => {
                AxisBox::interval(x_lo, gamma)
            }
            (Geometry::Interval { x_hi, gamma, .. }, Subdomain::Two) => {
                AxisBox::interval(gamma, x_hi)
            }
            (
                Geometry::Rectangle {
                    x_lo, y_lo, y_hi, gamma, ..
                },
                Subdomain::One,
            ) => AxisBox::rect((x_lo, gamma), (y_lo, y_hi)),
            (
                Geometry::Rectangle {
                    x_hi, y_lo, y_hi, gamma, ..
                },
                Subdomain::Two,
            ) => AxisBox::rect((gamma, x_hi), (y_lo, y_hi)),
        }
    }

    /// Measure of the membrane: 1 for the point interface, the segment length in 2D.
    pub fn interface_measure(&self) -> f64 {
        match *self {
            Geometry::Interval { .. } => 1.0,
            Geometry::Rectangle { y_lo, y_hi, .. } => y_hi - y_lo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    Interior,
    GammaOuter1,
    GammaOuter2,
    GammaInterface,
}

impl BoundaryTag {
    pub fn is_dirichlet(self) -> bool {
        matches!(self, BoundaryTag::GammaOuter1 | BoundaryTag::GammaOuter2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Segment([usize; 2]),
    /// Counter-clockwise: (i,j), (i+1,j), (i+1,j+1), (i,j+1).
    Quad([usize; 4]),
}

impl Cell {
    pub fn nodes(&self) -> &[usize] {
        match self {
            Cell::Segment(n) => n,
            Cell::Quad(n) => n,
        }
    }
}

/// Tensor-product grid; `cells[1] == 0` in 1D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub origin: Point,
    pub spacing: Point,
    pub cells: [usize; 2],
}

impl Grid {
    pub fn dimension(&self) -> usize {
        if self.cells[1] == 0 {
            1
        } else {
            2
        }
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i * (self.cells[1] + 1) + j
    }

    pub fn node_count(&self) -> usize {
        (self.cells[0] + 1) * (self.cells[1] + 1)
    }

    pub fn ij(&self, k: usize) -> (usize, usize) {
        let stride = self.cells[1] + 1;
        (k / stride, k % stride)
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
        ]
    }

    pub fn nearest_node(&self, p: &Point) -> usize {
        let clamp = |v: f64, n: usize| v.round().clamp(0.0, n as f64) as usize;
        let i = clamp((p[0] - self.origin[0]) / self.spacing[0], self.cells[0]);
        let j = if self.cells[1] == 0 {
            0
        } else {
            clamp((p[1] - self.origin[1]) / self.spacing[1], self.cells[1])
        };
        self.node_index(i, j)
    }
}

/// One subdomain's grid together with its per-node tags.
#[derive(Debug, Clone, PartialEq)]
pub struct SubMesh {
    pub grid: Grid,
    pub nodes: Vec<Point>,
    pub cells: Vec<Cell>,
    pub tags: Vec<BoundaryTag>,
    pub refuge: Vec<bool>,
}

impl SubMesh {
    fn structured(grid: Grid) -> Self {
        let [nx, ny] = grid.cells;
        let mut nodes = Vec::with_capacity(grid.node_count());
        for i in 0..=nx {
            for j in 0..=ny {
                nodes.push(grid.point(i, j));
            }
        }
        let mut cells = Vec::new();
        if ny == 0 {
            for i in 0..nx {
                cells.push(Cell::Segment([i, i + 1]));
            }
        } else {
            for i in 0..nx {
                for j in 0..ny {
                    cells.push(Cell::Quad([
                        grid.node_index(i, j),
                        grid.node_index(i + 1, j),
                        grid.node_index(i + 1, j + 1),
                        grid.node_index(i, j + 1),
                    ]));
                }
            }
        }
        let n = nodes.len();
        SubMesh {
            grid,
            nodes,
            cells,
            tags: vec![BoundaryTag::Interior; n],
            refuge: vec![false; n],
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn dimension(&self) -> usize {
        self.grid.dimension()
    }

    /// Area (length in 1D) of one cell.
    pub fn cell_measure(&self) -> f64 {
        match self.dimension() {
            1 => self.grid.spacing[0],
            _ => self.grid.spacing[0] * self.grid.spacing[1],
        }
    }

    pub fn refuge_count(&self) -> usize {
        self.refuge.iter().filter(|&&r| r).count()
    }
}

/// Two-subdomain mesh with duplicated membrane nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneMesh {
    pub geometry: Geometry,
    pub parts: [SubMesh; 2],
    /// `(node in subdomain one, node in subdomain two)` at the same location on the membrane.
    pub interface_pairs: Vec<(usize, usize)>,
    /// Trapezoidal trace weights, one per pair; they sum to the membrane measure.
    pub interface_weights: Vec<f64>,
    pub refuges: Vec<RefugeRegion>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefugeRegion {
    pub subdomain: Subdomain,
    pub bounds: AxisBox,
}

impl RefugeRegion {
    pub fn new(subdomain: Subdomain, bounds: AxisBox) -> Self {
        RefugeRegion { subdomain, bounds }
    }
}

pub fn build_interval_mesh(x_lo: f64, x_hi: f64, gamma: f64, n_per_side: usize) -> Result<MembraneMesh> {
    let geometry = Geometry::Interval { x_lo, x_hi, gamma };
    geometry.validate()?;
    if n_per_side < 2 {
        return Err(Error::TooCoarse {
            what: "n_per_side",
            value: n_per_side,
        });
    }
    build_split(geometry, n_per_side, 0)
}

pub fn build_rect_mesh(bounds: AxisBox, gamma: f64, nx_per_side: usize, ny: usize) -> Result<MembraneMesh> {
    let geometry = Geometry::Rectangle {
        x_lo: bounds.lo[0],
        x_hi: bounds.hi[0],
        y_lo: bounds.lo[1],
        y_hi: bounds.hi[1],
        gamma,
    };
    geometry.validate()?;
    if nx_per_side < 2 {
        return Err(Error::TooCoarse {
            what: "nx_per_side",
            value: nx_per_side,
        });
    }
    if ny < 2 {
        return Err(Error::TooCoarse { what: "ny", value: ny });
    }
    build_split(geometry, nx_per_side, ny)
}

/// Builds the mesh for any geometry; `ny` is ignored for intervals.
pub fn build_mesh(geometry: Geometry, n_per_side: usize, ny: usize) -> Result<MembraneMesh> {
    match geometry {
        Geometry::Interval { x_lo, x_hi, gamma } => build_interval_mesh(x_lo, x_hi, gamma, n_per_side),
        Geometry::Rectangle {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
            gamma,
        } => build_rect_mesh(AxisBox::rect((x_lo, x_hi), (y_lo, y_hi)), gamma, n_per_side, ny),
    }
}

fn build_split(geometry: Geometry, nx: usize, ny: usize) -> Result<MembraneMesh> {
    let parts = Subdomain::BOTH.map(|sub| {
        let b = geometry.subdomain_box(sub);
        let hy = if ny == 0 { 0.0 } else { b.width(1) / ny as f64 };
        let grid = Grid {
            origin: b.lo,
            spacing: [b.width(0) / nx as f64, hy],
            cells: [nx, ny],
        };
        let mut part = SubMesh::structured(grid);
        // membrane column: i = nx in subdomain one, i = 0 in subdomain two
        let membrane_i = match sub {
            Subdomain::One => nx,
            Subdomain::Two => 0,
        };
        for k in 0..part.node_count() {
            let (i, j) = grid.ij(k);
            let on_y_edge = ny > 0 && (j == 0 || j == ny);
            part.tags[k] = if i == membrane_i && !on_y_edge {
                BoundaryTag::GammaInterface
            } else if i == 0 || i == nx || on_y_edge {
                sub.outer_tag()
            } else {
                BoundaryTag::Interior
            };
        }
        part
    });

    let (interface_pairs, interface_weights) = if ny == 0 {
        (vec![(nx, 0)], vec![1.0])
    } else {
        let hy = parts[0].grid.spacing[1];
        (0..=ny)
            .map(|j| {
                let w = if j == 0 || j == ny { 0.5 * hy } else { hy };
                ((parts[0].grid.node_index(nx, j), parts[1].grid.node_index(0, j)), w)
            })
            .unzip()
    };

    Ok(MembraneMesh {
        geometry,
        parts,
        interface_pairs,
        interface_weights,
        refuges: Vec::new(),
    })
}

impl MembraneMesh {
    pub fn dimension(&self) -> usize {
        self.geometry.dimension()
    }

    pub fn part(&self, sub: Subdomain) -> &SubMesh {
        &self.parts[sub.index()]
    }

    /// Per-side spacing `(hx, hy)`; `hy == 0` in 1D.
    pub fn spacing(&self, sub: Subdomain) -> Point {
        self.part(sub).grid.spacing
    }

    /// Largest spacing over both subdomains and axes.
    pub fn h(&self) -> f64 {
        self.parts
            .iter()
            .flat_map(|p| p.grid.spacing)
            .fold(0.0, f64::max)
    }

    pub fn node_counts(&self) -> [usize; 2] {
        [self.parts[0].node_count(), self.parts[1].node_count()]
    }

    /// Total unknowns: subdomain one first, then subdomain two.
    pub fn dof_count(&self) -> usize {
        self.parts[0].node_count() + self.parts[1].node_count()
    }

    pub fn global_index(&self, sub: Subdomain, node: usize) -> usize {
        match sub {
            Subdomain::One => node,
            Subdomain::Two => self.parts[0].node_count() + node,
        }
    }

    pub fn locate(&self, dof: usize) -> (Subdomain, usize) {
        let n1 = self.parts[0].node_count();
        if dof < n1 {
            (Subdomain::One, dof)
        } else {
            (Subdomain::Two, dof - n1)
        }
    }

    pub fn dirichlet_mask(&self) -> Vec<bool> {
        self.parts
            .iter()
            .flat_map(|p| p.tags.iter().map(|t| t.is_dirichlet()))
            .collect()
    }

    pub fn refuge_mask(&self) -> Vec<bool> {
        self.parts.iter().flat_map(|p| p.refuge.iter().copied()).collect()
    }

    pub fn refuge(&self, sub: Subdomain) -> Option<&RefugeRegion> {
        self.refuges.iter().find(|r| r.subdomain == sub)
    }

    pub fn is_degenerate(&self) -> bool {
        self.parts.iter().any(|p| p.refuge.iter().any(|&r| r))
    }

    /// Global dofs of free (non-Dirichlet) nodes lying in the closed box.
    pub fn nodes_in(&self, sub: Subdomain, bounds: &AxisBox) -> Vec<usize> {
        let dim = self.dimension();
        let part = self.part(sub);
        (0..part.node_count())
            .filter(|&k| bounds.contains_closed(&part.nodes[k], dim))
            .map(|k| self.global_index(sub, k))
            .collect()
    }

    /// Structural self-check: tags, pair coordinates, connectivity, refuge placement.
    pub fn check_consistency(&self) -> Result<()> {
        for part in &self.parts {
            let n = part.node_count();
            if part.tags.len() != n || part.refuge.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: part.tags.len().min(part.refuge.len()),
                });
            }
            let mut used = vec![false; n];
            for c in &part.cells {
                for &v in c.nodes() {
                    if v >= n {
                        return Err(Error::InvalidGeometry(format!("cell references node {v} >= {n}")));
                    }
                    used[v] = true;
                }
            }
            if used.iter().any(|u| !u) {
                return Err(Error::InvalidGeometry("orphan node".into()));
            }
            for (k, &r) in part.refuge.iter().enumerate() {
                if r && part.tags[k] != BoundaryTag::Interior {
                    return Err(Error::InvalidGeometry(format!("refuge node {k} lies on a boundary")));
                }
            }
        }
        for &(a, b) in &self.interface_pairs {
            let (pa, pb) = (self.parts[0].nodes[a], self.parts[1].nodes[b]);
            if pa != pb {
                return Err(Error::InvalidGeometry(format!("interface pair {a}/{b} not co-located")));
            }
        }
        Ok(())
    }
}

/// Marks refuge nodes: those strictly inside each region's box.
///
/// Every region must keep at least one mesh cell between its closure and the
/// membrane or the outer boundary of its subdomain. At most one region per
/// subdomain.
pub fn tag_refuges(mesh: &MembraneMesh, regions: &[RefugeRegion]) -> Result<MembraneMesh> {
    let mut out = mesh.clone();
    for part in &mut out.parts {
        part.refuge.iter_mut().for_each(|r| *r = false);
    }
    out.refuges.clear();
    let dim = mesh.dimension();
    for region in regions {
        if out.refuge(region.subdomain).is_some() {
            return Err(Error::DuplicateRefuge(region.subdomain));
        }
        let sub_box = mesh.geometry.subdomain_box(region.subdomain);
        let spacing = mesh.spacing(region.subdomain);
        let b = region.bounds;
        let touches = (0..dim).any(|a| {
            let slack = GEOM_EPS * spacing[a];
            !(b.lo[a] < b.hi[a])
                || b.lo[a] - sub_box.lo[a] < spacing[a] - slack
                || sub_box.hi[a] - b.hi[a] < spacing[a] - slack
        });
        if touches {
            return Err(Error::RefugeTouchesBoundary {
                subdomain: region.subdomain,
                lo: b.lo,
                hi: b.hi,
            });
        }
        let part = &mut out.parts[region.subdomain.index()];
        for k in 0..part.nodes.len() {
            if b.contains_open(&part.nodes[k], dim) {
                part.refuge[k] = true;
            }
        }
        out.refuges.push(*region);
    }
    out.refuges.sort_by_key(|r| r.subdomain);
    Ok(out)
}

/// Standalone Dirichlet mesh over one refuge box.
#[derive(Debug, Clone, PartialEq)]
pub struct RefugeMesh {
    pub subdomain: Subdomain,
    pub bounds: AxisBox,
    pub mesh: SubMesh,
}

impl RefugeMesh {
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        self.mesh.tags.iter().map(|t| t.is_dirichlet()).collect()
    }
}

/// Refuge mesh at the parent mesh's spacing (cell counts rounded to the box size).
pub fn restrict_to_refuge(mesh: &MembraneMesh, which: Subdomain) -> Result<RefugeMesh> {
    let region = mesh.refuge(which).ok_or(Error::EmptyRefuge(which))?;
    if mesh.part(which).refuge_count() == 0 {
        return Err(Error::EmptyRefuge(which));
    }
    let spacing = mesh.spacing(which);
    let dim = mesh.dimension();
    let mut cells = [0usize; 2];
    for a in 0..dim {
        cells[a] = ((region.bounds.width(a) / spacing[a]).round() as usize).max(2);
    }
    refuge_mesh(region, cells, dim)
}

/// Refuge mesh with explicit cell counts (for refinement studies on the refuge alone).
pub fn restrict_to_refuge_with_cells(mesh: &MembraneMesh, which: Subdomain, cells: [usize; 2]) -> Result<RefugeMesh> {
    let region = mesh.refuge(which).ok_or(Error::EmptyRefuge(which))?;
    let dim = mesh.dimension();
    if cells[0] < 2 || (dim == 2 && cells[1] < 2) {
        return Err(Error::TooCoarse {
            what: "refuge cells",
            value: cells[0].min(if dim == 2 { cells[1] } else { cells[0] }),
        });
    }
    refuge_mesh(region, cells, dim)
}

fn refuge_mesh(region: &RefugeRegion, cells: [usize; 2], dim: usize) -> Result<RefugeMesh> {
    let b = region.bounds;
    let grid = Grid {
        origin: b.lo,
        spacing: [
            b.width(0) / cells[0] as f64,
            if dim == 2 { b.width(1) / cells[1] as f64 } else { 0.0 },
        ],
        cells: if dim == 2 { cells } else { [cells[0], 0] },
    };
    let mut mesh = SubMesh::structured(grid);
    let tag = region.subdomain.outer_tag();
    for k in 0..mesh.node_count() {
        let (i, j) = grid.ij(k);
        let edge = i == 0 || i == grid.cells[0] || (dim == 2 && (j == 0 || j == grid.cells[1]));
        if edge {
            mesh.tags[k] = tag;
        }
    }
    Ok(RefugeMesh {
        subdomain: region.subdomain,
        bounds: b,
        mesh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_counts_and_tags() {
        let m = build_interval_mesh(0.0, 1.0, 0.5, 4).unwrap();
        assert_eq!(m.node_counts(), [5, 5]);
        assert_eq!(m.interface_pairs, vec![(4, 0)]);
        assert_eq!(m.h(), 0.125);
        assert_eq!(m.parts[0].tags[0], BoundaryTag::GammaOuter1);
        assert_eq!(m.parts[1].tags[4], BoundaryTag::GammaOuter2);
        assert_eq!(m.parts[0].tags[4], BoundaryTag::GammaInterface);
        assert_eq!(m.parts[1].tags[0], BoundaryTag::GammaInterface);
        m.check_consistency().unwrap();
    }

    #[test]
    fn interval_rejects_degenerate_split() {
        assert!(matches!(
            build_interval_mesh(0.0, 1.0, 0.0, 4),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            build_interval_mesh(0.0, 1.0, 0.5, 1),
            Err(Error::TooCoarse { .. })
        ));
    }

    #[test]
    fn interval_per_side_spacing() {
        let m = build_interval_mesh(0.0, 1.0, 1.0 / 3.0, 8).unwrap();
        assert!((m.spacing(Subdomain::One)[0] - 1.0 / 24.0).abs() < 1e-15);
        assert!((m.spacing(Subdomain::Two)[0] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn rectangle_counts() {
        let m = build_rect_mesh(AxisBox::rect((0.0, 1.0), (0.0, 1.0)), 0.5, 4, 4).unwrap();
        assert_eq!(m.node_counts(), [25, 25]);
        assert_eq!(m.interface_pairs.len(), 5);
        let total: f64 = m.interface_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        m.check_consistency().unwrap();
        // membrane end points belong to the outer boundary as well
        let (a, _) = m.interface_pairs[0];
        assert!(m.parts[0].tags[a].is_dirichlet());
        let (a, b) = m.interface_pairs[2];
        assert_eq!(m.parts[0].tags[a], BoundaryTag::GammaInterface);
        assert_eq!(m.parts[1].tags[b], BoundaryTag::GammaInterface);
    }

    #[test]
    fn rectangle_too_coarse() {
        let r = build_rect_mesh(AxisBox::rect((0.0, 1.0), (0.0, 1.0)), 0.5, 1, 4);
        assert!(matches!(r, Err(Error::TooCoarse { .. })));
    }

    #[test]
    fn rectangle_cell_size() {
        let m = build_rect_mesh(AxisBox::rect((0.0, 2.0), (0.0, 1.0)), 1.0, 8, 4).unwrap();
        assert_eq!(m.spacing(Subdomain::One), [0.125, 0.25]);
        assert_eq!(m.spacing(Subdomain::Two), [0.125, 0.25]);
    }

    #[test]
    fn refuge_tagging_counts_open_box_nodes() {
        let m = build_interval_mesh(0.0, 1.0, 0.5, 64).unwrap();
        let t = tag_refuges(&m, &[RefugeRegion::new(Subdomain::One, AxisBox::interval(0.2, 0.3))]).unwrap();
        // h = 1/128: nodes k/128 with 25.6 < k < 38.4
        assert_eq!(t.parts[0].refuge_count(), 13);
        assert_eq!(t.parts[1].refuge_count(), 0);
        t.check_consistency().unwrap();
    }

    #[test]
    fn refuge_straddling_membrane_is_refused() {
        let m = build_interval_mesh(0.0, 1.0, 0.5, 64).unwrap();
        let r = tag_refuges(&m, &[RefugeRegion::new(Subdomain::One, AxisBox::interval(0.45, 0.55))]);
        assert!(matches!(r, Err(Error::RefugeTouchesBoundary { .. })));
        // within one cell of the membrane
        let r = tag_refuges(&m, &[RefugeRegion::new(Subdomain::One, AxisBox::interval(0.3, 0.4999))]);
        assert!(matches!(r, Err(Error::RefugeTouchesBoundary { .. })));
    }

    #[test]
    fn no_refuges_leaves_masks_clear() {
        let m = build_interval_mesh(0.0, 1.0, 0.5, 16).unwrap();
        let t = tag_refuges(&m, &[]).unwrap();
        assert!(t.refuge_mask().iter().all(|&r| !r));
        assert!(!t.is_degenerate());
    }

    #[test]
    fn refuge_submesh_interval() {
        let m = build_interval_mesh(0.0, 1.0, 0.5, 128).unwrap();
        let t = tag_refuges(&m, &[RefugeRegion::new(Subdomain::One, AxisBox::interval(0.2, 0.3))]).unwrap();
        let r = restrict_to_refuge(&t, Subdomain::One).unwrap();
        assert_eq!(r.mesh.grid.cells[0], 26);
        let len = r.mesh.nodes.last().unwrap()[0] - r.mesh.nodes[0][0];
        assert!((len - 0.1).abs() < 1e-14);
        let mask = r.dirichlet_mask();
        assert!(mask[0] && *mask.last().unwrap());
        assert_eq!(mask.iter().filter(|&&d| d).count(), 2);
        assert!(matches!(
            restrict_to_refuge(&t, Subdomain::Two),
            Err(Error::EmptyRefuge(Subdomain::Two))
        ));
    }

    #[test]
    fn refuge_submesh_rectangle_has_dirichlet_frame() {
        let m = build_rect_mesh(AxisBox::rect((0.0, 1.0), (0.0, 1.0)), 0.5, 20, 40).unwrap();
        let t = tag_refuges(
            &m,
            &[RefugeRegion::new(Subdomain::One, AxisBox::rect((0.2, 0.3), (0.4, 0.6)))],
        )
        .unwrap();
        let r = restrict_to_refuge(&t, Subdomain::One).unwrap();
        assert_eq!(r.mesh.grid.cells, [4, 8]);
        let boundary = r.dirichlet_mask().iter().filter(|&&d| d).count();
        assert_eq!(boundary, 2 * (4 + 8));
    }

    #[test]
    fn refinement_nests_nodes() {
        let coarse = build_rect_mesh(AxisBox::rect((0.0, 1.0), (0.0, 1.0)), 0.5, 4, 4).unwrap();
        let fine = build_rect_mesh(AxisBox::rect((0.0, 1.0), (0.0, 1.0)), 0.5, 8, 8).unwrap();
        for sub in Subdomain::BOTH {
            let fp = fine.part(sub);
            for p in &coarse.part(sub).nodes {
                let k = fp.grid.nearest_node(p);
                assert_eq!(fp.nodes[k], *p);
            }
        }
    }
}
